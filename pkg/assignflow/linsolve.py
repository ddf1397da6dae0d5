"""
Integrators for the linear tangent ODE ``V' = a + A V``.

Three families live here: Taylor-truncated Runge-Kutta steps whose step size comes from a
provable local error bound, a Euclidean implicit Euler method used as reference, and a
Krylov-subspace exponential integrator that evaluates the closed-form solution
``V(T) = T phi1(T A) a`` directly.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import expm
from scipy.sparse.linalg import aslinearoperator, gmres
from scipy.special import gammainc
from tqdm import tqdm

from .errors import ConvergenceError, KrylovOverflowError
from .geometry import entropy_avg
from .linearflow import LinearFlowOperator, RelinearizationControl, TangentOperator, relinearize
from .traces import FlowTrace

logger = logging.getLogger(__name__)

BREAKDOWN_TOL = 1e-12
# The power-iteration norm is a lower estimate; the bound stays valid for any upper bound.
NORM_INFLATION = 1.01


def rk_tangent_step(q: int, op: TangentOperator, V: np.ndarray, h: float) -> np.ndarray:
    """One explicit Runge-Kutta step of order **q** on the linear ODE, in Horner form.

    On a linear ODE every classical scheme of order ``q <= 4`` reduces to the Taylor polynomial
    ``V + h sum_{i<q} (hA)^i (a + AV) / (i+1)!``, evaluated here with ``q`` operator applications.

    :param q: Order, one of 1, 2, 3, 4.
    :type q: :obj:`int`

    :param op: The operator.
    :type op: :class:`assignflow.linearflow.TangentOperator`

    :param V: Flattened tangent field.
    :type V: :class:`numpy.ndarray`

    :param h: Step size.
    :type h: :obj:`float`

    :rtype: :class:`numpy.ndarray`
    """
    if q not in (1, 2, 3, 4):
        raise ValueError("order must be 1, 2, 3 or 4, got %r" % q)
    r = op.rhs(V)
    acc = r
    for i in range(q - 1, 0, -1):
        acc = r + (h / (i + 1)) * op.matvec(acc)
    return V + h * acc


def incomplete_gamma_int(q: int, t: float) -> float:
    """Upper incomplete Gamma function ``Gamma(1 + q, t)`` for integer **q**, as a finite sum.

    :rtype: :obj:`float`
    """
    if q < 0 or int(q) != q:
        raise ValueError("q must be a nonnegative integer, got %r" % q)
    if t < 0:
        raise ValueError("t must be nonnegative, got %r" % t)
    q = int(q)
    # sum_{i=0}^q q!/i! t^i evaluated from the highest power down
    acc = 1.0
    for i in range(q, 0, -1):
        acc = acc * t + math.factorial(q) / math.factorial(i - 1)
    return acc * math.exp(-t)


@dataclass
class ErrorBoundInputs:
    """Quantities entering the local error bound of an order-``q`` step.
    """
    q: int
    h: float
    norm_A: float
    norm_a: float
    norm_V: float

    def __post_init__(self) -> None:
        if self.q not in (1, 2, 3, 4):
            raise ValueError("order must be 1, 2, 3 or 4, got %r" % self.q)
        if min(self.h, self.norm_A, self.norm_a, self.norm_V) < 0:
            raise ValueError("error bound inputs must be nonnegative")


def bound_factors(x, q: int) -> tuple:
    """Returns the tight factor ``e^x (1 - Gamma(1+q, x)/q!)`` and the loose ``e^x (1 - e^-x)^(1+q)``.

    The tight factor is computed from the regularized lower incomplete Gamma function in the log domain.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        tight = np.exp(x + np.log(gammainc(q + 1, x)))
        loose = np.exp(x + (q + 1) * np.log(-np.expm1(-x)))
    return tight, loose


def local_error_bound(inp: ErrorBoundInputs, tight: bool = True) -> float:
    """Upper bound on ``||V(t + h) - V_next||`` for one order-``q`` step.

    :param inp: Step inputs.
    :type inp: :class:`ErrorBoundInputs`

    :param tight: Selects the incomplete-Gamma form, otherwise the looser closed form.
    :type tight: :obj:`bool`

    :rtype: :obj:`float`
    """
    if inp.norm_A == 0 or inp.h == 0:
        return 0.0
    factor = bound_factors(inp.h * inp.norm_A, inp.q)[0 if tight else 1]
    return float(factor * (inp.norm_a / inp.norm_A + inp.norm_V))


def select_step(
    q: int, norm_A: float, norm_a: float, norm_V: float, tau: float,
    h_max: Optional[float] = None, resolution: float = 1e-3
) -> float:
    """Largest step whose tight error bound stays within **tau**, found by bisection.

    :param h_max: Upper cap on the step, defaults to ``1e3 / norm_A``.
    :type h_max: :obj:`float`, optional

    :rtype: :obj:`float`
    """
    if not tau > 0:
        raise ValueError("tau must be positive, got %r" % tau)
    if h_max is None:
        h_max = 1e3 / norm_A if norm_A > 0 else 1e3

    def bound(h: float) -> float:
        return local_error_bound(ErrorBoundInputs(q, h, norm_A, norm_a, norm_V))

    if bound(h_max) <= tau:
        return h_max
    hi = h_max
    lo = h_max / 2
    while bound(lo) > tau:
        hi = lo
        lo /= 2
    while hi - lo > resolution * lo:
        mid = 0.5 * (lo + hi)
        if bound(mid) <= tau:
            lo = mid
        else:
            hi = mid
    return lo


def integrate_linear_adaptive(
    op: TangentOperator, q: int, tau: float = 0.01, threshold: float = 1e-3,
    max_steps: int = 100000, h_max: Optional[float] = None, record_states: bool = False,
    show_progress: bool = False
) -> FlowTrace:
    """Integrates the linear flow with step sizes chosen from the local error bound.

    The tolerance is per node: the flattened error is allowed to reach ``tau * sqrt(|I|)``.

    :rtype: :class:`assignflow.traces.FlowTrace`
    """
    shape = op.field_shape
    tau_abs = tau * math.sqrt(shape[0])
    norm_A = NORM_INFLATION * op.norm
    norm_a = float(np.linalg.norm(op.a))
    V = np.zeros(op.size)
    W = op.state(V)
    trace = FlowTrace(W=W, V=V, states=[W.copy()] if record_states else None)
    ent = entropy_avg(W)
    t = 0.0
    steps = range(max_steps)
    if show_progress:
        steps = tqdm(steps, desc="linear rk%d" % q)
    for k in steps:
        if ent < threshold:
            trace.terminated = True
            break
        norm_V = float(np.linalg.norm(V))
        h = select_step(q, norm_A, norm_a, norm_V, tau_abs, h_max)
        err = local_error_bound(ErrorBoundInputs(q, h, norm_A, norm_a, norm_V))
        V = rk_tangent_step(q, op, V, h)
        t += h
        W = op.state(V)
        ent = entropy_avg(W)
        trace.append(t, h, ent, err / math.sqrt(shape[0]))
        if record_states:
            trace.states.append(W)
        logger.debug("step %d: t=%g h=%g entropy=%.3e", k, t, h, ent)
    else:
        trace.terminated = ent < threshold
    trace.W, trace.V = W, V
    if not trace.terminated:
        logger.warning("linear rk%d reached max_steps=%d with entropy %.3e", q, max_steps, ent)
    return trace


def integrate_linear_fixed(op: TangentOperator, q: int, h: float, T: float) -> np.ndarray:
    """Runs ``round(T / h)`` fixed steps of :func:`rk_tangent_step` from ``V = 0``.
    """
    n = int(round(T / h))
    if n < 1:
        raise ValueError("T=%r is shorter than one step of h=%r" % (T, h))
    V = np.zeros(op.size)
    for _ in range(n):
        V = rk_tangent_step(q, op, V, h)
    return V


def linear_implicit_euler_step(
    op: TangentOperator, V: np.ndarray, h: float, tol: float = 1e-8, max_inner: int = 200
) -> np.ndarray:
    """Euclidean implicit Euler step: solves ``(I - hA) V_new = V + h a`` with restarted GMRES.

    The step is taken whole for every **h**; the solve starts from **V**.

    :param tol: Bound on the 2-norm of the residual of the linear system.
    :type tol: :obj:`float`

    :param max_inner: Maximal number of GMRES restart cycles.
    :type max_inner: :obj:`int`

    :raises ConvergenceError: if GMRES stops before reaching **tol**.
    """
    if not h > 0:
        raise ValueError("step size must be positive, got %r" % h)
    n = op.size
    system = aslinearoperator(sparse.identity(n)) - h * op.as_linear_operator()
    rhs = V + h * op.a
    X, info = gmres(system, rhs, x0=V, rtol=0.0, atol=tol, restart=min(n, 50), maxiter=max_inner)
    if info != 0:
        residual = float(np.linalg.norm(rhs - system.matvec(X)))
        raise ConvergenceError("linear implicit Euler did not converge", residual, max(info, 0))
    return X


def integrate_linear_implicit(
    op: LinearFlowOperator, h: float = 0.5, threshold: float = 1e-3,
    control: Optional[RelinearizationControl] = None, tol: float = 1e-8,
    max_inner: int = 200, max_steps: int = 100000, record_states: bool = False,
    show_progress: bool = False
) -> FlowTrace:
    """Integrates the linear flow with the implicit Euler method until the entropy threshold.

    With a :class:`assignflow.linearflow.RelinearizationControl` the operator is rebuilt along the way;
    ``FlowTrace.linearizations`` counts every operator used, the initial one included.

    :rtype: :class:`assignflow.traces.FlowTrace`
    """
    V = np.zeros(op.size)
    W = op.state(V)
    trace = FlowTrace(W=W, V=V, linearizations=1, states=[W.copy()] if record_states else None)
    ent = entropy_avg(W)
    t = 0.0
    steps = range(max_steps)
    if show_progress:
        steps = tqdm(steps, desc="linear implicit euler")
    for k in steps:
        if ent < threshold:
            trace.terminated = True
            break
        V = linear_implicit_euler_step(op, V, h, tol, max_inner)
        if control is not None:
            new_op, V = relinearize(op, V, control)
            if new_op is not op:
                op = new_op
                trace.linearizations += 1
        t += h
        W = op.state(V)
        ent = entropy_avg(W)
        trace.append(t, h, ent)
        if record_states:
            trace.states.append(W)
        logger.debug("step %d: t=%g entropy=%.3e", k, t, ent)
    else:
        trace.terminated = ent < threshold
    trace.W, trace.V = W, V
    if not trace.terminated:
        logger.warning("linear implicit Euler reached max_steps=%d with entropy %.3e", max_steps, ent)
    return trace


@dataclass
class KrylovBasis:
    """Orthonormal basis ``V`` of the Krylov space of ``(A, a)`` and the projection ``H = V^T A V``.

    ``exact`` is set when the iteration broke down, i.e. the space is invariant under ``A``.
    """
    V: np.ndarray
    H: np.ndarray
    beta: float
    exact: bool = False

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def arnoldi(op: TangentOperator, m: int, a: Optional[np.ndarray] = None) -> KrylovBasis:
    """Arnoldi iteration with modified Gram-Schmidt and one reorthogonalization pass.

    :param op: The operator.
    :type op: :class:`assignflow.linearflow.TangentOperator`

    :param m: Maximum dimension of the basis.
    :type m: :obj:`int`

    :param a: Start vector, defaults to ``op.a``.
    :type a: :class:`numpy.ndarray`, optional

    :rtype: :class:`KrylovBasis`
    """
    if m < 1:
        raise ValueError("Krylov dimension must be at least 1, got %r" % m)
    a = op.a if a is None else np.asarray(a, dtype=float)
    beta = float(np.linalg.norm(a))
    if beta == 0:
        raise ValueError("Arnoldi start vector is zero")
    n = a.shape[0]
    V = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    V[:, 0] = a / beta
    for j in range(m):
        w = op.matvec(V[:, j])
        for _ in range(2):
            for i in range(j + 1):
                hij = V[:, i] @ w
                H[i, j] += hij
                w = w - hij * V[:, i]
        h_next = np.linalg.norm(w)
        if h_next < BREAKDOWN_TOL:
            logger.info("Arnoldi breakdown at dimension %d", j + 1)
            return KrylovBasis(V[:, :j + 1], H[:j + 1, :j + 1], beta, exact=True)
        H[j + 1, j] = h_next
        V[:, j + 1] = w / h_next
    return KrylovBasis(V[:, :m], H[:m, :m], beta)


def phi1_times_e1(H: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Returns ``phi1(t H) e1`` with ``phi1(z) = (e^z - 1) / z``.

    Read off the last column of the exponential of the extended matrix ``[[tH, e1], [0, 0]]``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    m = H.shape[0]
    ext = np.zeros((m + 1, m + 1))
    ext[:m, :m] = t * H
    ext[0, m] = 1.0
    return expm(ext)[:m, m]


def krylov_duhamel(op: TangentOperator, T: float, m: int) -> np.ndarray:
    """Approximates ``V(T) = T phi1(T A) a`` in a Krylov space of dimension at most **m**.

    :raises KrylovOverflowError: if the result is not finite.
    """
    if not T > 0:
        raise ValueError("final time must be positive, got %r" % T)
    if not np.any(op.a):
        return np.zeros(op.size)
    basis = arnoldi(op, m)
    try:
        with np.errstate(over="raise", invalid="raise"):
            V = T * basis.beta * (basis.V @ phi1_times_e1(basis.H, T))
    except FloatingPointError:
        raise KrylovOverflowError(T) from None
    if not np.all(np.isfinite(V)):
        raise KrylovOverflowError(T)
    return V


def exponential_integrator(op: TangentOperator, T: float, m: int) -> tuple:
    """Evaluates the linear flow at time **T** with the Krylov exponential integrator.

    :return: ``(V_T, W_T)``, the tangent field as ``|I| x |J|`` matrix and the assignment state.
    :rtype: :obj:`tuple`
    """
    V = krylov_duhamel(op, T, m)
    return V.reshape(op.field_shape), op.state(V)


def exponential_integrator_until(
    op: TangentOperator, m: int, threshold: float = 1e-3, T0: float = 1.0, T_max: float = 1e4,
    rtol: float = 1e-2
) -> tuple:
    """Finds the first time ``T`` at which the average entropy of ``W_T`` falls below **threshold**.

    ``T`` is doubled from **T0** until the threshold is met, then the last bracket is bisected until
    its width is within **rtol** of its lower end. The upper end is returned, so the labeling is
    not carried past the crossing where the linear flow keeps drifting.

    :return: ``(T, V_T, W_T)``.
    :raises ConvergenceError: if **T_max** is passed first.
    """
    if not T0 > 0 or not rtol > 0:
        raise ValueError("T0 and rtol must be positive")
    k = 0

    def run(T):
        nonlocal k
        V, W = exponential_integrator(op, T, m)
        ent = entropy_avg(W)
        k += 1
        logger.debug("T=%g entropy=%.3e", T, ent)
        return V, W, ent

    lo, hi = None, T0
    V, W, ent = run(hi)
    while ent >= threshold:
        lo, hi = hi, 2 * hi
        if hi > T_max:
            raise ConvergenceError("entropy stayed above %g up to T=%g" % (threshold, T_max), ent, k)
        V, W, ent = run(hi)
    if lo is not None:
        while hi - lo > rtol * lo:
            mid = 0.5 * (lo + hi)
            V_mid, W_mid, ent_mid = run(mid)
            if ent_mid < threshold:
                hi, V, W, ent = mid, V_mid, W_mid, ent_mid
            else:
                lo = mid
    logger.info("exponential integrator reached entropy %.3e at T=%g after %d solves", ent, hi, k)
    return hi, V, W
