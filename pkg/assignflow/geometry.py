"""
Maps on the open probability simplex and on the assignment manifold.

Every function works on the last axis, so a single simplex point of shape ``(J,)`` and a whole
assignment state of shape ``(I, J)`` go through the same code. Componentwise exponentials
subtract the row maximum first, which leaves the result unchanged because the maps ignore
constant components.
"""

import numpy as np
from scipy.special import entr, logsumexp


def _rowsum(x: np.ndarray) -> np.ndarray:
    return np.sum(x, axis=-1, keepdims=True)


def barycenter(n_nodes: int, n_labels: int) -> np.ndarray:
    """Returns the assignment state whose rows are all the uniform distribution.

    :param n_nodes: Number of rows.
    :type n_nodes: :obj:`int`

    :param n_labels: Number of labels.
    :type n_labels: :obj:`int`

    :rtype: :class:`numpy.ndarray`
    """
    if n_nodes < 1 or n_labels < 1:
        raise ValueError("barycenter needs at least one node and one label")
    return np.full((n_nodes, n_labels), 1.0 / n_labels)


def project_t0(z: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the zero-sum subspace: subtracts the mean of each row.

    :param z: Vector or matrix with finite entries.
    :type z: :class:`numpy.ndarray`

    :rtype: :class:`numpy.ndarray`
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("project_t0 received non-finite entries")
    return z - np.mean(z, axis=-1, keepdims=True)


def pi_p(p: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Applies the replicator map ``Diag(p) z - p <p, z>`` row-wise.

    :param p: Simplex point or assignment state.
    :type p: :class:`numpy.ndarray`

    :param z: Vector or matrix broadcasting against **p**, e.g. several rows against one base point.
    :type z: :class:`numpy.ndarray`

    :rtype: :class:`numpy.ndarray`
    """
    p = np.asarray(p, dtype=float)
    z = np.asarray(z, dtype=float)
    try:
        np.broadcast_shapes(p.shape, z.shape)
    except ValueError:
        raise ValueError("pi_p shape mismatch: %s vs %s" % (p.shape, z.shape)) from None
    if p.shape[-1:] != z.shape[-1:]:
        raise ValueError("pi_p shape mismatch: %s vs %s" % (p.shape, z.shape))
    pz = p * z
    return pz - p * _rowsum(pz)


def exp_map(p: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Lifting map ``p e^z / <p, e^z>``.

    :param p: Simplex point or assignment state.
    :type p: :class:`numpy.ndarray`

    :param z: Finite vector or matrix, same shape as **p**.
    :type z: :class:`numpy.ndarray`

    :rtype: :class:`numpy.ndarray`
    """
    z = np.asarray(z, dtype=float)
    q = p * np.exp(z - np.max(z, axis=-1, keepdims=True))
    return q / _rowsum(q)


def log_exp_map(p: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Logarithm of :func:`exp_map`, accurate when the result is close to a vertex.
    """
    s = np.log(p) + z
    return s - logsumexp(s, axis=-1, keepdims=True)


def exp_map_inv(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp_map` in its first argument: ``project_t0(log(q / p))``.
    """
    return project_t0(np.log(q) - np.log(p))


def big_exp(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Exponential map of the e-connection, ``p e^{v/p} / <p, e^{v/p}>``.

    :param p: Simplex point or assignment state.
    :type p: :class:`numpy.ndarray`

    :param v: Tangent vector or field, same shape as **p**.
    :type v: :class:`numpy.ndarray`

    :rtype: :class:`numpy.ndarray`
    """
    return exp_map(p, np.asarray(v, dtype=float) / p)


def big_exp_inv(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Inverse of :func:`big_exp`: ``pi_p(p, log(q / p))``.
    """
    return pi_p(p, np.log(q) - np.log(p))


def geometric_mean(base: np.ndarray, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted geometric mean of simplex points, expressed relative to **base**.

    :param base: Simplex point the mean is lifted from.
    :type base: :class:`numpy.ndarray`

    :param points: One simplex point per row.
    :type points: :class:`numpy.ndarray`

    :param weights: Positive weights summing to 1, one per point.
    :type weights: :class:`numpy.ndarray`

    :rtype: :class:`numpy.ndarray`
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (points.shape[0],):
        raise ValueError("geometric_mean expects one weight per point")
    if np.any(weights <= 0):
        raise ValueError("geometric_mean weights must be positive")
    if abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError("geometric_mean weights sum to %r, not 1" % weights.sum())
    return exp_map(base, weights @ np.log(points) - np.log(base))


def d_inf(V: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Largest row distance ``max_i ||V_i - U_i||`` scaled by ``1 / |J|``.

    This is the stopping distance of every inner iteration and the error estimate of the embedded schemes.
    """
    diff = np.atleast_2d(np.asarray(V, dtype=float) - np.asarray(U, dtype=float))
    return float(np.max(np.linalg.norm(diff, axis=-1)) / diff.shape[-1])


def entropy_avg(W: np.ndarray) -> float:
    """Average entropy ``-(1/(|I||J|)) sum W log W`` with natural log.

    :rtype: :obj:`float`
    """
    W = np.asarray(W, dtype=float)
    return float(np.sum(entr(W)) / W.size)


def check_assignment(W: np.ndarray, tol: float = 1e-12) -> None:
    """Raises :class:`ValueError` if **W** has a non-positive entry or a row not summing to 1.
    """
    W = np.asarray(W, dtype=float)
    if not np.all(W > 0):
        raise ValueError("assignment state has non-positive entries")
    err = np.max(np.abs(np.sum(W, axis=-1) - 1.0))
    if err > tol:
        raise ValueError("assignment rows deviate from 1 by %.3e" % err)


def check_tangent(V: np.ndarray, tol: float = 1e-12) -> None:
    """Raises :class:`ValueError` if a row of **V** does not sum to 0.
    """
    err = np.max(np.abs(np.sum(V, axis=-1)))
    if err > tol:
        raise ValueError("tangent rows deviate from 0 by %.3e" % err)
