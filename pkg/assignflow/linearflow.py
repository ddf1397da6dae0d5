"""
The linear assignment flow.

Linearizing the similarity map at ``W0`` gives the tangent ODE ``V' = a + A V`` with
``a = Pi_W0 s0`` and ``A = Pi_W0 S0``, where ``s0 = S(W0)`` and ``S0`` is the Jacobian of the
similarity map. The state is recovered as ``W = big_exp(W0, V)``.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from .flow import LabelingGraph, similarity, similarity_log
from .geometry import big_exp, check_assignment, check_tangent, log_exp_map, pi_p

logger = logging.getLogger(__name__)


def spectral_norm(op: "TangentOperator", max_iter: int = 200, tol: float = 1e-8, seed: int = 0) -> float:
    """Estimates ``||A||_2`` by power iteration on ``A^T A``.

    :param op: The operator.
    :type op: :class:`TangentOperator`

    :param max_iter: Iteration cap, defaults to 200.
    :type max_iter: :obj:`int`

    :param tol: Stops once the eigenvalue estimate changes by less than this relative amount.
    :type tol: :obj:`float`

    :param seed: Seed of the random start vector.
    :type seed: :obj:`int`

    :rtype: :obj:`float`
    """
    x = np.random.default_rng(seed).standard_normal(op.size)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = op.rmatvec(op.matvec(x))
        lam_new = np.linalg.norm(y)
        if lam_new == 0:
            return 0.0
        x = y / lam_new
        converged = abs(lam_new - lam) <= tol * lam_new
        lam = lam_new
        if converged:
            break
    return float(np.sqrt(lam))


class TangentOperator(ABC):
    """Affine vector field ``V -> a + A V`` on flattened tangent fields.

    Sub-class should implement :meth:`matvec`, :meth:`rmatvec` and :attr:`a`.
    """

    W0: Optional[np.ndarray] = None

    @property
    @abstractmethod
    def a(self) -> np.ndarray:
        """The constant term, flattened.
        """
        raise NotImplementedError()

    @abstractmethod
    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Returns ``A x`` for a flattened field **x**.
        """
        raise NotImplementedError()

    @abstractmethod
    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """Returns ``A^T y``.
        """
        raise NotImplementedError()

    @property
    def size(self) -> int:
        return self.a.shape[0]

    @property
    def field_shape(self) -> tuple:
        """Shape of the unflattened field, ``(|I|, |J|)`` when a base point is known.
        """
        if self.W0 is not None:
            return self.W0.shape
        return (self.size, 1)

    @cached_property
    def norm(self) -> float:
        """Spectral norm of ``A``, computed once by :func:`spectral_norm`.
        """
        return spectral_norm(self)

    def rhs(self, x: np.ndarray) -> np.ndarray:
        return self.a + self.matvec(x)

    def state(self, V: np.ndarray) -> np.ndarray:
        """Maps a (flattened) tangent field to the assignment state ``big_exp(W0, V)``.
        """
        if self.W0 is None:
            raise ValueError("operator has no base point to map tangent fields to states")
        return big_exp(self.W0, np.reshape(V, self.W0.shape))

    def as_linear_operator(self) -> LinearOperator:
        """Wraps ``A`` as a :class:`scipy.sparse.linalg.LinearOperator`.
        """
        n = self.size
        return LinearOperator((n, n), matvec=self.matvec, rmatvec=self.rmatvec, dtype=float)


class DenseTangentOperator(TangentOperator):
    """A tangent operator given by an explicit matrix.
    """

    def __init__(self, A: np.ndarray, a: np.ndarray, W0: Optional[np.ndarray] = None) -> None:
        """
        :param A: Square matrix.
        :type A: :class:`numpy.ndarray`

        :param a: Constant term with as many entries as **A** has rows.
        :type a: :class:`numpy.ndarray`

        :param W0: Base point for :meth:`state`, optional.
        :type W0: :class:`numpy.ndarray`
        """
        self.A = np.asarray(A, dtype=float)
        self._a = np.asarray(a, dtype=float).ravel()
        if self.A.shape != (self._a.shape[0], self._a.shape[0]):
            raise ValueError("A has shape %s but a has %d entries" % (self.A.shape, self._a.shape[0]))
        if W0 is not None:
            W0 = np.asarray(W0, dtype=float)
            if W0.size != self._a.shape[0]:
                raise ValueError("base point does not match the operator size")
        self.W0 = W0

    @property
    def a(self) -> np.ndarray:
        return self._a

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.A.T @ y


class SimilarityJacobian(object):
    """Jacobian ``S0`` of the similarity map at ``W0``, applied to tangent fields.

    Block ``(i, k)`` acts as ``w_ik Pi_{s0_i}(V_k / W0_k)`` and vanishes unless ``k`` is a neighbor of ``i``.
    """

    def __init__(self, W0: np.ndarray, g: LabelingGraph, s0: Optional[np.ndarray] = None) -> None:
        self.W0 = W0
        self.g = g
        self.s0 = similarity(W0, g) if s0 is None else s0

    def apply(self, V: np.ndarray) -> np.ndarray:
        """Returns ``S0 V`` for an ``|I| x |J|`` field.
        """
        return pi_p(self.s0, self.g.weight_matrix @ (V / self.W0))

    def apply_transpose(self, U: np.ndarray) -> np.ndarray:
        return (self.g.weight_matrix.T @ pi_p(self.s0, U)) / self.W0

    def blocks(self) -> Iterator[tuple]:
        """Yields ``(i, k, block)`` for every neighbor pair from the entrywise formula.
        """
        g = self.g
        for i in range(g.node_count):
            s = self.s0[i]
            jac = np.diag(s) - np.outer(s, s)
            for k, w in zip(g.neighbors(i), g.neighbor_weights(i)):
                yield i, k, w * jac / self.W0[k]

    def to_sparse(self) -> sparse.bsr_matrix:
        """Assembles ``S0`` entrywise as a block-sparse matrix with the graph's pattern.
        """
        g = self.g
        J = g.label_count
        data = np.array([block for _, _, block in self.blocks()]).reshape(-1, J, J)
        n = g.node_count * J
        return sparse.bsr_matrix((data, g.indices, g.indptr), shape=(n, n))


def similarity_jacobian(W0: np.ndarray, g: LabelingGraph) -> SimilarityJacobian:
    """Returns the Jacobian of the similarity map at **W0**.
    """
    return SimilarityJacobian(W0, g)


class LinearFlowOperator(TangentOperator):
    """The pair ``(a, A)`` of the linear assignment flow linearized at ``W0``.

    ``A`` is applied matrix-free through the block action of :class:`SimilarityJacobian`.
    """

    def __init__(self, W0: np.ndarray, g: LabelingGraph) -> None:
        """
        :param W0: Linearization point.
        :type W0: :class:`numpy.ndarray`

        :param g: The labeling problem.
        :type g: :class:`assignflow.flow.LabelingGraph`
        """
        W0 = np.asarray(W0, dtype=float)
        if W0.shape != g.D.shape:
            raise ValueError("linearization point has shape %s, expected %s" % (W0.shape, g.D.shape))
        check_assignment(W0, tol=1e-10)
        self.W0 = W0
        self.g = g
        self.jacobian = similarity_jacobian(W0, g)
        a = pi_p(W0, self.jacobian.s0)
        check_tangent(a, tol=1e-10)
        self._a = a.ravel()

    @property
    def s0(self) -> np.ndarray:
        return self.jacobian.s0

    @property
    def a(self) -> np.ndarray:
        return self._a

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return pi_p(self.W0, self.jacobian.apply(np.reshape(x, self.W0.shape))).ravel()

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.jacobian.apply_transpose(pi_p(self.W0, np.reshape(y, self.W0.shape))).ravel()

    def to_dense(self) -> np.ndarray:
        """Assembles ``A`` as a dense matrix from the entrywise Jacobian.
        """
        I, J = self.W0.shape
        proj = sparse.block_diag([np.diag(w) - np.outer(w, w) for w in self.W0])
        return (proj @ self.jacobian.to_sparse()).toarray().reshape(I * J, I * J)


def build_operator(W0: np.ndarray, g: LabelingGraph) -> LinearFlowOperator:
    """Linearizes the flow at **W0**. ``||A||`` is cached on first use of ``norm``.
    """
    return LinearFlowOperator(W0, g)


def linear_flow_state(op: TangentOperator, V: np.ndarray) -> np.ndarray:
    """Returns the assignment state ``big_exp(W0, V)`` represented by **V**.
    """
    return op.state(V)


def nonlinear_tangent_field(op: LinearFlowOperator, V: np.ndarray) -> np.ndarray:
    """The exact flow in the coordinates of the linear flow: ``Pi_W0 S(big_exp(W0, V))``.

    Its deviation from ``a + A V`` is the linearization error.
    """
    V = np.reshape(V, op.W0.shape)
    return pi_p(op.W0, similarity_log(log_exp_map(op.W0, V / op.W0), op.g)).ravel()


@dataclass
class RelinearizationControl:
    """When and where to move the linearization point.

    The operator is rebuilt once the largest row norm of ``V`` exceeds ``V_max / c``. Only rows
    whose entries all exceed ``interior_floor`` move to the current state; the others keep their
    linearization point and their tangent coordinates.
    """
    c: float = 1.0
    V_max: Optional[float] = None
    interior_floor: float = 0.01

    def __post_init__(self) -> None:
        if not self.c >= 1:
            raise ValueError("c must be at least 1, got %r" % self.c)
        if not 0 <= self.interior_floor < 1:
            raise ValueError("interior_floor must lie in [0, 1)")


def row_norm_max(V: np.ndarray, shape: tuple) -> float:
    return float(np.max(np.linalg.norm(np.reshape(V, shape), axis=1)))


def relinearize(op: LinearFlowOperator, V: np.ndarray, ctrl: RelinearizationControl) -> tuple:
    """Moves the linearization point to the current state where the threshold rule fires.

    :return: ``(op, V)``, the same objects when nothing changed.
    :rtype: :obj:`tuple`
    """
    if ctrl.V_max is None:
        raise ValueError("relinearization needs V_max from a pilot run")
    shape = op.W0.shape
    if row_norm_max(V, shape) <= ctrl.V_max / ctrl.c:
        return op, V
    W = op.state(V)
    eligible = np.min(W, axis=1) > ctrl.interior_floor
    if not np.any(eligible):
        logger.debug("no row eligible for relinearization")
        return op, V
    W0 = op.W0.copy()
    W0[eligible] = W[eligible]
    new_op = LinearFlowOperator(W0, op.g)
    # rows moved to the current state sit at the origin of their new tangent space
    V_new = np.reshape(V, shape).copy()
    V_new[eligible] = 0.0
    logger.info("relinearized %d of %d rows", int(eligible.sum()), shape[0])
    return new_op, V_new.ravel()
