"""
Graph, data term and the assignment-flow vector field.

A :class:`LabelingGraph` bundles everything the flow needs besides the state: the neighborhoods
with their weights (stored CSR-style), the distance matrix and the scale ``rho``.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist
from scipy.special import softmax

from .geometry import exp_map, log_exp_map, pi_p, project_t0


METRICS = ("euclidean", "sqeuclidean", "discrete", "absolute")


def _as_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x.reshape(-1, 1)
    if x.ndim != 2:
        raise ValueError("expected a vector or a matrix of feature rows, got %d dims" % x.ndim)
    return x


@dataclass
class LabelSet:
    """The label prototypes and the metric used to compare them with features.

    Scalar labels may be given as a flat sequence.
    """
    labels: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self) -> None:
        self.labels = _as_rows(self.labels)
        if self.metric not in METRICS:
            raise ValueError("unknown metric %r, expected one of %s" % (self.metric, METRICS))
        if self.labels.shape[0] < 1:
            raise ValueError("a label set needs at least one label")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.labels.shape[1]


def build_distances(features, labels: LabelSet) -> np.ndarray:
    """Computes the distance matrix ``D[i, j] = d(f_i, g_j)``.

    :param features: One feature vector per node. Scalar features may be given as a flat sequence.
    :type features: :class:`numpy.ndarray`

    :param labels: Labels and metric.
    :type labels: :class:`LabelSet`

    :return: ``|I| x |J|`` matrix.
    :rtype: :class:`numpy.ndarray`
    """
    features = _as_rows(features)
    if features.shape[1] != labels.dim:
        raise ValueError("features have dimension %d but labels have %d" % (
            features.shape[1], labels.dim))
    if labels.metric == "discrete":
        return (cdist(features, labels.labels, "cityblock") > 0).astype(float)
    if labels.metric == "sqeuclidean":
        return cdist(features, labels.labels, "sqeuclidean")
    return cdist(features, labels.labels, "euclidean")


class LabelingGraph(object):
    """Neighborhoods, weights, distances and scale of a labeling problem.

    Neighborhoods are stored as ``indptr``/``indices``: the neighbors of node ``i`` are
    ``indices[indptr[i]:indptr[i+1]]`` with weights at the same positions of ``weights``.
    Instances are not meant to be modified after construction.
    """

    def __init__(self, indptr, indices, weights, D, rho: float) -> None:
        """
        :param indptr: Offsets into **indices**, length ``|I| + 1``.
        :type indptr: :class:`numpy.ndarray`

        :param indices: Concatenated neighbor indices. Every node must be its own neighbor.
        :type indices: :class:`numpy.ndarray`

        :param weights: Positive weight per neighbor entry, summing to 1 within each neighborhood.
        :type weights: :class:`numpy.ndarray`

        :param D: ``|I| x |J|`` matrix of nonnegative distances.
        :type D: :class:`numpy.ndarray`

        :param rho: Scale of the data term.
        :type rho: :obj:`float`
        """
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=float)
        self.D = np.asarray(D, dtype=float)
        self.rho = float(rho)
        self._validate()

    def _validate(self) -> None:
        if self.D.ndim != 2:
            raise ValueError("distance matrix must be two-dimensional")
        n, J = self.D.shape
        if J < 2:
            raise ValueError("a labeling graph needs at least 2 labels, got %d" % J)
        if not np.all(np.isfinite(self.D)) or np.any(self.D < 0):
            raise ValueError("distances must be finite and nonnegative")
        if not self.rho > 0:
            raise ValueError("rho must be positive, got %r" % self.rho)
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 1):
            raise ValueError("indptr does not describe %d non-empty neighborhoods" % n)
        if self.indices.shape != self.weights.shape or self.indices.shape[0] != self.indptr[-1]:
            raise ValueError("indices and weights must have indptr[-1] entries")
        if np.any(self.indices < 0) or np.any(self.indices >= n):
            raise ValueError("neighbor index out of range")
        if np.any(self.weights <= 0):
            raise ValueError("neighborhood weights must be positive")
        sums = np.add.reduceat(self.weights, self.indptr[:-1])
        if np.max(np.abs(sums - 1.0)) > 1e-10:
            raise ValueError("neighborhood weights must sum to 1")
        owner = np.repeat(np.arange(n), np.diff(self.indptr))
        has_self = np.zeros(n, dtype=bool)
        has_self[owner[self.indices == owner]] = True
        if not np.all(has_self):
            raise ValueError("node %d is missing from its own neighborhood" % np.argmin(has_self))

    @classmethod
    def from_neighborhoods(
        cls, neighborhoods: Sequence[Sequence[int]], D, rho: float,
        weights: Optional[Sequence[Sequence[float]]] = None
    ) -> "LabelingGraph":
        """Builds a graph from explicit neighbor lists. Weights default to uniform.
        """
        sizes = [len(nb) for nb in neighborhoods]
        indptr = np.concatenate([[0], np.cumsum(sizes)])
        indices = np.concatenate([np.asarray(nb, dtype=np.int64) for nb in neighborhoods])
        if weights is None:
            w = np.concatenate([np.full(s, 1.0 / s) for s in sizes])
        else:
            w = np.concatenate([np.asarray(x, dtype=float) for x in weights])
        return cls(indptr, indices, w, D, rho)

    @classmethod
    def grid(cls, width: int, height: int, window: int, D, rho: float) -> "LabelingGraph":
        """Builds a row-major image grid where each pixel sees a ``window x window`` patch around it.

        Patches are truncated at the border and the uniform weights renormalized over what remains.
        A one-pixel-high grid is a chain.

        :param width: Image width.
        :type width: :obj:`int`

        :param height: Image height.
        :type height: :obj:`int`

        :param window: Odd edge length of the patch.
        :type window: :obj:`int`
        """
        if width < 1 or height < 1:
            raise ValueError("grid dimensions must be positive")
        if window < 1 or window % 2 == 0:
            raise ValueError("window must be an odd positive integer, got %r" % window)
        r = window // 2
        ys, xs = np.divmod(np.arange(width * height), width)
        rows, cols = [], []
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                ny, nx = ys + dy, xs + dx
                ok = (ny >= 0) & (ny < height) & (nx >= 0) & (nx < width)
                rows.append(np.flatnonzero(ok))
                cols.append(ny[ok] * width + nx[ok])
        rows = np.concatenate(rows)
        adj = sparse.csr_matrix(
            (np.ones(rows.shape[0]), (rows, np.concatenate(cols))),
            shape=(width * height, width * height))
        adj.sort_indices()
        counts = np.diff(adj.indptr)
        return cls(adj.indptr, adj.indices, np.repeat(1.0 / counts, counts), D, rho)

    @property
    def node_count(self) -> int:
        return self.D.shape[0]

    @property
    def label_count(self) -> int:
        return self.D.shape[1]

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def neighbor_weights(self, i: int) -> np.ndarray:
        return self.weights[self.indptr[i]:self.indptr[i + 1]]

    @cached_property
    def weight_matrix(self) -> sparse.csr_matrix:
        """``|I| x |I|`` sparse matrix holding ``w_ik`` at ``(i, k)``.
        """
        n = self.node_count
        return sparse.csr_matrix((self.weights, self.indices, self.indptr), shape=(n, n))

    @cached_property
    def scaled_distances(self) -> np.ndarray:
        return self.D / self.rho


def likelihood(W: np.ndarray, g: LabelingGraph) -> np.ndarray:
    """Likelihood vectors ``W_i e^{-D_i/rho}`` normalized per row.
    """
    return exp_map(W, -g.scaled_distances)


def similarity(W: np.ndarray, g: LabelingGraph) -> np.ndarray:
    """Similarity vectors: weighted geometric means of the neighbors' likelihoods.

    Evaluated through the closed form ``softmax(sum_k w_ik (log W_k - D_k / rho))``.
    """
    return similarity_log(np.log(W), g)


def similarity_log(log_W: np.ndarray, g: LabelingGraph) -> np.ndarray:
    """Similarity vectors from the entrywise logarithm of the state.

    States near a vertex underflow to 0 in some entries; their logarithms stay finite.
    """
    return softmax(g.weight_matrix @ (log_W - g.scaled_distances), axis=1)


def vector_field(W: np.ndarray, g: LabelingGraph) -> np.ndarray:
    """Right-hand side of the assignment flow, ``Pi_W S(W)``.
    """
    return pi_p(W, similarity(W, g))


def tangent_rhs(V: np.ndarray, W0: np.ndarray, g: LabelingGraph) -> np.ndarray:
    """The flow pulled back to the tangent space at **W0**: ``project_t0(S(exp_map(W0, V)))``.
    """
    return project_t0(similarity_log(log_exp_map(W0, V), g))


def local_rounding(g: LabelingGraph) -> np.ndarray:
    """Labels chosen from the data term alone, without spatial regularization.
    """
    return np.argmin(g.D, axis=1)
