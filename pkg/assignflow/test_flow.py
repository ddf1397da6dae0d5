import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from assignflow.flow import (
    LabelSet, LabelingGraph, build_distances, likelihood, similarity, similarity_log, vector_field, tangent_rhs,
    local_rounding
)
from assignflow.geometry import barycenter, exp_map, geometric_mean, pi_p, project_t0


def random_graph(rng, n_nodes, n_labels, rho=1.0):
    """Random neighborhoods that always contain the node itself, with random weights."""
    neighborhoods, weights = [], []
    for i in range(n_nodes):
        others = [k for k in range(n_nodes) if k != i]
        size = rng.integers(0, min(4, n_nodes - 1) + 1)
        nb = [i] + list(rng.choice(others, size=size, replace=False))
        neighborhoods.append(nb)
        weights.append(rng.dirichlet(np.ones(len(nb))))
    D = rng.uniform(0, 2, size=(n_nodes, n_labels))
    return LabelingGraph.from_neighborhoods(neighborhoods, D, rho, weights)


class TestBuildDistances(unittest.TestCase):
    def test_metrics(self):
        labels = LabelSet([[0.0, 0.0], [3.0, 4.0]])
        D = build_distances([[0.0, 0.0], [3.0, 0.0]], labels)
        assert_allclose(D, [[0.0, 5.0], [3.0, 4.0]])
        D = build_distances([[3.0, 0.0]], LabelSet(labels.labels, metric="sqeuclidean"))
        assert_allclose(D, [[9.0, 16.0]])
        D = build_distances([[3.0, 4.0], [1.0, 1.0]], LabelSet(labels.labels, metric="discrete"))
        assert_array_equal(D, [[1.0, 0.0], [1.0, 1.0]])

    def test_unit_vectors(self):
        labels = LabelSet(np.eye(31))
        D = build_distances(np.eye(31)[[4, 7]], labels)
        self.assertEqual(D[0, 4], 0)
        assert_allclose(np.delete(D[0], 4), np.sqrt(2))
        noisy = np.eye(31)[4] + 0.1
        assert_allclose(build_distances([noisy], labels)[0], np.linalg.norm(np.eye(31) - noisy, axis=1))

    def test_scalar_features(self):
        D = build_distances([0.1, 0.9], LabelSet([0.0, 0.5, 1.0], metric="absolute"))
        assert_allclose(D, [[0.1, 0.4, 0.9], [0.9, 0.4, 0.1]])

    def test_invalid(self):
        self.assertRaisesRegex(
            ValueError, "dimension", lambda: build_distances([[1.0, 2.0, 3.0]], LabelSet([[0.0, 0.0]])))
        self.assertRaisesRegex(ValueError, "unknown metric", lambda: LabelSet([0.0, 1.0], metric="cosine"))


class TestLabelingGraph(unittest.TestCase):
    def test_grid_truncation(self):
        g = LabelingGraph.grid(4, 3, 3, np.zeros((12, 2)), 1.0)
        assert_array_equal(g.neighbors(0), [0, 1, 4, 5])
        assert_allclose(g.neighbor_weights(0), 0.25)
        self.assertEqual(len(g.neighbors(5)), 9)
        assert_array_equal(g.neighbors(5), [0, 1, 2, 4, 5, 6, 8, 9, 10])
        assert_allclose(np.asarray(g.weight_matrix.sum(axis=1)).ravel(), 1.0)

    def test_chain(self):
        g = LabelingGraph.grid(6, 1, 5, np.zeros((6, 3)), 0.1)
        assert_array_equal(g.neighbors(0), [0, 1, 2])
        assert_array_equal(g.neighbors(3), [1, 2, 3, 4, 5])

    def test_window_one(self):
        g = LabelingGraph.grid(3, 3, 1, np.zeros((9, 2)), 1.0)
        assert_array_equal(g.indices, np.arange(9))

    def test_invalid(self):
        D = np.zeros((2, 2))
        self.assertRaisesRegex(ValueError, "odd", lambda: LabelingGraph.grid(2, 1, 2, D, 1.0))
        self.assertRaisesRegex(ValueError, "rho", lambda: LabelingGraph.grid(2, 1, 1, D, 0.0))
        self.assertRaisesRegex(ValueError, "at least 2 labels", lambda: LabelingGraph.grid(2, 1, 1, np.zeros((2, 1)), 1.0))
        self.assertRaisesRegex(ValueError, "nonnegative", lambda: LabelingGraph.grid(2, 1, 1, -np.ones((2, 2)), 1.0))
        self.assertRaisesRegex(
            ValueError, "own neighborhood", lambda: LabelingGraph.from_neighborhoods([[1], [0]], D, 1.0))
        self.assertRaisesRegex(
            ValueError, "sum to 1",
            lambda: LabelingGraph.from_neighborhoods([[0, 1], [1]], D, 1.0, [[0.5, 0.6], [1.0]]))


class TestLikelihood(unittest.TestCase):
    def test_uniform_distances(self):
        rng = np.random.default_rng(0)
        W = rng.dirichlet(np.ones(3), size=4)
        g = LabelingGraph.grid(4, 1, 1, np.full((4, 3), 0.7), 0.3)
        assert_allclose(likelihood(W, g), W, atol=1e-15)

    def test_two_labels(self):
        g = LabelingGraph.grid(1, 1, 1, np.array([[0.0, np.log(2)]]), 1.0)
        assert_allclose(likelihood(barycenter(1, 2), g), [[2 / 3, 1 / 3]])

    def test_large_rho(self):
        rng = np.random.default_rng(1)
        W = rng.dirichlet(np.ones(4), size=5)
        g = LabelingGraph.grid(5, 1, 3, rng.uniform(0, 1, (5, 4)), 1e6)
        assert_allclose(likelihood(W, g), W, atol=1e-6)


class TestSimilarity(unittest.TestCase):
    def test_no_smoothing(self):
        rng = np.random.default_rng(2)
        W = rng.dirichlet(np.ones(3), size=3)
        g = LabelingGraph.grid(3, 1, 1, np.ones((3, 3)), 1.0)
        assert_allclose(similarity(W, g), W, atol=1e-15)
        g = LabelingGraph.grid(3, 1, 3, np.ones((3, 3)), 1.0)
        assert_allclose(similarity(barycenter(3, 3), g), barycenter(3, 3), atol=1e-15)

    def test_closed_form_matches_geometric_mean(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(100):
            n, J = rng.integers(1, 17), rng.integers(2, 9)
            g = random_graph(rng, n, J, rho=rng.uniform(0.1, 2))
            W = rng.dirichlet(np.ones(J), size=n)
            L = likelihood(W, g)
            S = similarity(W, g)
            for i in range(n):
                expected = geometric_mean(W[i], L[g.neighbors(i)], g.neighbor_weights(i))
                worst = max(worst, np.max(np.abs(S[i] - expected)))
        self.assertLess(worst, 1e-12)

    def test_stays_on_simplex(self):
        rng = np.random.default_rng(4)
        g = random_graph(rng, 10, 5, rho=0.1)
        S = similarity(rng.dirichlet(np.ones(5), size=10), g)
        self.assertTrue(np.all(S > 0))
        assert_allclose(S.sum(axis=1), 1.0, atol=1e-12)


class TestVectorField(unittest.TestCase):
    def test_rows_sum_to_zero(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 8, 4)
        F = vector_field(rng.dirichlet(np.ones(4), size=8), g)
        assert_allclose(F.sum(axis=1), 0.0, atol=1e-12)

    def test_fixed_point_structure(self):
        rng = np.random.default_rng(6)
        W = rng.dirichlet(np.ones(3), size=4)
        g = LabelingGraph.grid(4, 1, 1, np.full((4, 3), 0.5), 1.0)
        assert_allclose(vector_field(W, g), W * W - W * np.sum(W * W, axis=1, keepdims=True), atol=1e-15)

    def test_barycenter_is_stationary(self):
        g = LabelingGraph.grid(3, 3, 3, np.ones((9, 4)), 0.5)
        assert_allclose(vector_field(barycenter(9, 4), g), 0.0, atol=1e-16)

    def test_two_labels(self):
        g = LabelingGraph.grid(1, 1, 1, np.array([[0.0, np.log(2)]]), 1.0)
        # S = (2/3, 1/3) at the barycenter, Pi_p S = (1/3 - 1/4, 1/6 - 1/4)
        assert_allclose(vector_field(barycenter(1, 2), g), [[1 / 12, -1 / 12]], atol=1e-15)


class TestTangentRhs(unittest.TestCase):
    def test_zero(self):
        rng = np.random.default_rng(7)
        g = random_graph(rng, 5, 3)
        W0 = rng.dirichlet(np.ones(3), size=5)
        assert_allclose(tangent_rhs(np.zeros((5, 3)), W0, g), project_t0(similarity(W0, g)))

    def test_consistent_with_vector_field(self):
        rng = np.random.default_rng(8)
        g = random_graph(rng, 6, 4)
        W0 = rng.dirichlet(np.ones(4), size=6)
        V = project_t0(rng.standard_normal((6, 4)))
        W = exp_map(W0, V)
        F = tangent_rhs(V, W0, g)
        assert_allclose(F.sum(axis=1), 0.0, atol=1e-12)
        assert_allclose(pi_p(W, F), vector_field(W, g), atol=1e-12)

    def test_far_from_base(self):
        rng = np.random.default_rng(9)
        g = random_graph(rng, 5, 3)
        W0 = rng.dirichlet(np.ones(3), size=5)
        V = project_t0(rng.standard_normal((5, 3)))
        V[0] = [2000.0, -1000.0, -1000.0]
        self.assertEqual(exp_map(W0, V)[0, 1], 0.0)
        F = tangent_rhs(V, W0, g)
        self.assertTrue(np.all(np.isfinite(F)))
        assert_allclose(F.sum(axis=1), 0.0, atol=1e-12)
        assert_allclose(similarity_log(np.log(W0), g), similarity(W0, g))


class TestLocalRounding(unittest.TestCase):
    def test_argmin(self):
        g = LabelingGraph.grid(2, 1, 3, np.array([[0.3, 0.1], [0.0, 0.5]]), 1.0)
        assert_array_equal(local_rounding(g), [1, 0])
