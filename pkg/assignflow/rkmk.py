"""
Runge-Kutta-Munthe-Kaas integration of the assignment flow.

Every step restarts from the current state ``W0`` and integrates the tangent equation
``V' = project_t0(S(exp_map(W0, V)))`` from ``V = 0``. The group is abelian, so the stages need no
correction of the differential and the step reduces to a classical Runge-Kutta step in the tangent
space, pushed back with :func:`assignflow.geometry.exp_map`.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from tqdm import tqdm

from .errors import ConvergenceError, StiffnessError, UnknownSchemeError
from .flow import LabelingGraph, tangent_rhs
from .geometry import barycenter, check_assignment, d_inf, entropy_avg, exp_map
from .traces import FlowTrace

logger = logging.getLogger(__name__)

F = Fraction


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients of an ``s``-stage Runge-Kutta scheme, kept as exact fractions.

    ``b_hat`` is the secondary weight row of an embedded pair, used only to estimate the local error.
    """
    name: str
    a: tuple
    b: tuple
    c: tuple
    order: int
    b_hat: Optional[tuple] = None
    order_hat: Optional[int] = None

    def __post_init__(self) -> None:
        s = len(self.b)
        if len(self.c) != s or len(self.a) != s or any(len(row) != s for row in self.a):
            raise ValueError("tableau %r has inconsistent stage counts" % self.name)
        for i, row in enumerate(self.a):
            if sum(row) != self.c[i]:
                raise ValueError("tableau %r violates c_i = sum_j a_ij at stage %d" % (self.name, i))
        if sum(self.b) != 1:
            raise ValueError("tableau %r weights do not sum to 1" % self.name)
        if self.b_hat is not None and (len(self.b_hat) != s or sum(self.b_hat) != 1):
            raise ValueError("tableau %r secondary weights are invalid" % self.name)

    @property
    def stages(self) -> int:
        return len(self.b)

    @property
    def is_explicit(self) -> bool:
        return all(self.a[i][j] == 0 for i in range(self.stages) for j in range(i, self.stages))

    @property
    def is_embedded(self) -> bool:
        return self.b_hat is not None

    @cached_property
    def arrays(self) -> tuple:
        """``(a, b, b_hat)`` as float arrays, ``b_hat`` is None for plain schemes.
        """
        a = np.array([[float(x) for x in row] for row in self.a])
        b = np.array([float(x) for x in self.b])
        b_hat = None if self.b_hat is None else np.array([float(x) for x in self.b_hat])
        return a, b, b_hat


TABLEAUS = {
    "fe": ButcherTableau("fe", a=((F(0),),), b=(F(1),), c=(F(0),), order=1),
    "h2": ButcherTableau(
        "h2", a=((F(0), F(0)), (F(1), F(0))), b=(F(1, 2), F(1, 2)), c=(F(0), F(1)), order=2),
    "h3": ButcherTableau(
        "h3",
        a=((F(0), F(0), F(0)), (F(1, 3), F(0), F(0)), (F(0), F(2, 3), F(0))),
        b=(F(1, 4), F(0), F(3, 4)), c=(F(0), F(1, 3), F(2, 3)), order=3),
    "rk4": ButcherTableau(
        "rk4",
        a=(
            (F(0), F(0), F(0), F(0)),
            (F(1, 2), F(0), F(0), F(0)),
            (F(0), F(1, 2), F(0), F(0)),
            (F(0), F(0), F(1), F(0)),
        ),
        b=(F(1, 6), F(1, 3), F(1, 3), F(1, 6)), c=(F(0), F(1, 2), F(1, 2), F(1)), order=4),
    "be": ButcherTableau("be", a=((F(1),),), b=(F(1),), c=(F(1),), order=1),
    "rkmk12": ButcherTableau(
        "rkmk12", a=((F(0), F(0)), (F(1), F(0))), b=(F(1), F(0)), c=(F(0), F(1)), order=1,
        b_hat=(F(1, 2), F(1, 2)), order_hat=2),
    "rkmk32": ButcherTableau(
        "rkmk32",
        a=((F(0), F(0), F(0)), (F(1, 3), F(0), F(0)), (F(0), F(2, 3), F(0))),
        b=(F(1, 4), F(0), F(3, 4)), c=(F(0), F(1, 3), F(2, 3)), order=3,
        b_hat=(F(1, 3), F(2, 3), F(0)), order_hat=2),
}


def get_tableau(name: str) -> ButcherTableau:
    """Looks up a registered tableau by name.

    :raises UnknownSchemeError: if **name** is not registered.
    """
    try:
        return TABLEAUS[name]
    except KeyError:
        raise UnknownSchemeError(name, TABLEAUS) from None


@dataclass
class StepControl:
    """Parameters of the embedded step-size rule.

    A step is accepted and the step size grown when the error estimate is below ``tau / n_tau``,
    accepted as is when below ``tau``, and redone with a halved step otherwise.
    """
    tau: float = 0.01
    n_tau: int = 20
    h0: float = 0.01
    grow_factor: float = 1.25
    shrink_factor: float = 0.5
    h_min: float = 1e-12

    def __post_init__(self) -> None:
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1), got %r" % self.tau)
        if self.n_tau < 1:
            raise ValueError("n_tau must be at least 1, got %r" % self.n_tau)
        if not self.h0 > 0:
            raise ValueError("h0 must be positive, got %r" % self.h0)
        if not self.grow_factor >= 1 or not 0 < self.shrink_factor < 1:
            raise ValueError("grow_factor must be >= 1 and shrink_factor in (0, 1)")


def rkmk_step(
    tableau: ButcherTableau, W0: np.ndarray, g: LabelingGraph, h: float,
    counter: Optional[Callable[[], None]] = None
) -> tuple:
    """Performs one explicit RKMK step from **W0**.

    :param tableau: Explicit tableau.
    :type tableau: :class:`ButcherTableau`

    :param W0: Current state, also the base point of the step.
    :type W0: :class:`numpy.ndarray`

    :param g: The labeling problem.
    :type g: :class:`assignflow.flow.LabelingGraph`

    :param h: Step size.
    :type h: :obj:`float`

    :param counter: Called once per vector field evaluation.
    :type counter: callable, optional

    :return: ``(W_new, V, V_hat)``, ``V_hat`` is None unless the tableau is embedded.
    :rtype: :obj:`tuple`
    """
    if not tableau.is_explicit:
        raise ValueError("rkmk_step needs an explicit tableau, %r is implicit" % tableau.name)
    if not h > 0:
        raise ValueError("step size must be positive, got %r" % h)
    a, b, b_hat = tableau.arrays
    stages = []
    for i in range(tableau.stages):
        U = np.zeros_like(W0)
        for j in range(i):
            if a[i, j] != 0:
                U += h * a[i, j] * stages[j]
        stages.append(tangent_rhs(U, W0, g))
        if counter is not None:
            counter()
    V = h * sum(bj * Uj for bj, Uj in zip(b, stages))
    V_hat = None
    if b_hat is not None:
        V_hat = h * sum(bj * Uj for bj, Uj in zip(b_hat, stages))
    return exp_map(W0, V), V, V_hat


def solve_implicit_stage(
    W0: np.ndarray, g: LabelingGraph, h: float, V0: Optional[np.ndarray] = None,
    tol: float = 1e-8, max_inner: int = 10000
) -> tuple:
    """Solves ``V = h * tangent_rhs(V, W0)`` by fixed-point iteration.

    :return: ``(V, iterations)``.
    :raises ConvergenceError: if **max_inner** iterations do not reach **tol**.
    """
    if not h > 0:
        raise ValueError("step size must be positive, got %r" % h)
    V = np.zeros_like(W0) if V0 is None else V0
    residual = np.inf
    for it in range(1, max_inner + 1):
        V_new = h * tangent_rhs(V, W0, g)
        residual = d_inf(V_new, V)
        V = V_new
        if residual <= tol:
            return V, it
    raise ConvergenceError("implicit Euler stage did not converge", residual, max_inner)


def implicit_euler_step(
    W0: np.ndarray, g: LabelingGraph, h: float, V0: Optional[np.ndarray] = None,
    tol: float = 1e-8, max_inner: int = 10000
) -> np.ndarray:
    """Geometric implicit Euler step. **V0** warm-starts the inner iteration.
    """
    V, _ = solve_implicit_stage(W0, g, h, V0, tol, max_inner)
    return exp_map(W0, V)


def integrate(
    scheme: Union[str, ButcherTableau], g: LabelingGraph, W_init: Optional[np.ndarray] = None,
    control: Optional[StepControl] = None, h: Optional[float] = None, threshold: float = 1e-3,
    max_steps: int = 100000, tol: float = 1e-8, max_inner: int = 10000,
    record_states: bool = False, show_progress: bool = False
) -> FlowTrace:
    """Integrates the assignment flow until the average entropy drops below **threshold**.

    Embedded tableaus run adaptively when **control** is given; every other combination needs a
    fixed step **h**. The ``"be"`` scheme runs the geometric implicit Euler method.

    :param scheme: Tableau or registered tableau name.
    :type scheme: :obj:`str` or :class:`ButcherTableau`

    :param g: The labeling problem.
    :type g: :class:`assignflow.flow.LabelingGraph`

    :param W_init: Initial state, defaults to the barycenter.
    :type W_init: :class:`numpy.ndarray`, optional

    :param control: Step-size rule for embedded tableaus.
    :type control: :class:`StepControl`, optional

    :param h: Fixed step size.
    :type h: :obj:`float`, optional

    :param threshold: Average entropy below which the run terminates, defaults to 1e-3.
    :type threshold: :obj:`float`

    :param max_steps: Cap on accepted steps. Reaching it is reported through ``FlowTrace.terminated``.
    :type max_steps: :obj:`int`

    :param record_states: Keeps a copy of the state after every step in ``FlowTrace.states``.
    :type record_states: :obj:`bool`

    :param show_progress: Prints a `tqdm <https://github.com/tqdm/tqdm>`_ progress bar, defaults to False.
    :type show_progress: :obj:`bool`, optional

    :rtype: :class:`assignflow.traces.FlowTrace`
    """
    tableau = get_tableau(scheme) if isinstance(scheme, str) else scheme
    adaptive = control is not None
    if adaptive and not tableau.is_embedded:
        raise ValueError("adaptive step control needs an embedded tableau, got %r" % tableau.name)
    if not adaptive and (h is None or not h > 0):
        raise ValueError("scheme %r needs a positive fixed step size" % tableau.name)
    implicit = not tableau.is_explicit
    if implicit and tableau.stages != 1:
        raise ValueError("only the one-stage implicit Euler scheme is supported")

    W = barycenter(g.node_count, g.label_count) if W_init is None else np.array(W_init, dtype=float)
    if W.shape != g.D.shape:
        raise ValueError("initial state has shape %s, expected %s" % (W.shape, g.D.shape))
    check_assignment(W, tol=1e-10)
    trace = FlowTrace(W=W, states=[W.copy()] if record_states else None)
    ent = entropy_avg(W)
    if ent < threshold:
        trace.terminated = True
        return trace

    step_size = control.h0 if adaptive else h
    t = 0.0
    V_warm = None
    steps = range(max_steps)
    if show_progress:
        steps = tqdm(steps, desc="integrating %s" % tableau.name)
    for k in steps:
        err = None
        if implicit:
            V_warm, inner = solve_implicit_stage(W, g, step_size, V_warm, tol, max_inner)
            W_new = exp_map(W, V_warm)
            used = step_size
            logger.debug("step %d: %d inner iterations", k, inner)
        elif adaptive:
            while True:
                W_new, V, V_hat = rkmk_step(tableau, W, g, step_size)
                err = d_inf(V, V_hat)
                used = step_size
                if err < control.tau / control.n_tau:
                    step_size = step_size * control.grow_factor
                    break
                if err < control.tau:
                    break
                step_size = step_size * control.shrink_factor
                logger.warning("rejected step at t=%g, decreasing step size to %g", t, step_size)
                if step_size < control.h_min:
                    raise StiffnessError(step_size, t)
        else:
            W_new, _, _ = rkmk_step(tableau, W, g, step_size)
            used = step_size
        t += used
        W = W_new
        ent = entropy_avg(W)
        trace.append(t, used, ent, err)
        if record_states:
            trace.states.append(W.copy())
        logger.debug("step %d: t=%g h=%g entropy=%.3e", k, t, used, ent)
        if ent < threshold:
            trace.terminated = True
            break
    trace.W = W
    if trace.terminated:
        logger.info("%s terminated after %d steps at t=%g", tableau.name, trace.iterations, t)
    else:
        logger.warning("%s reached max_steps=%d with entropy %.3e", tableau.name, max_steps, ent)
    return trace
