import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from scipy.spatial.distance import cdist

from assignflow.flow import build_distances, local_rounding
from assignflow.geometry import barycenter, entropy_avg
from assignflow.harness import (
    ColorQuantScenario, FeatureScenario, LabelingResult, Signal1DScenario, Vertex31Scenario,
    gen_colorquant, gen_signal1d, gen_vertex31, ground_truth_linear, ground_truth_nonlinear,
    kmeans_labels, label_agreement, linear_flow_table, make_scenario, synthetic_color_image
)
from assignflow.linearflow import build_operator
from assignflow.linsolve import exponential_integrator, exponential_integrator_until, integrate_linear_adaptive


class TestSignal1D(unittest.TestCase):
    def test_deterministic(self):
        f1, _, t1 = gen_signal1d(seed=3)
        f2, _, t2 = gen_signal1d(seed=3)
        assert_array_equal(f1, f2)
        assert_array_equal(t1, t2)
        self.assertFalse(np.array_equal(f1, gen_signal1d(seed=4)[0]))

    def test_noise_free(self):
        features, labels, truth = gen_signal1d(noise=0.0)
        self.assertEqual(features.shape, (192,))
        assert_array_equal(np.unique(truth), [0, 1, 2])
        assert_allclose(features, np.asarray(labels.labels).ravel()[truth])
        self.assertEqual(labels.metric, "absolute")

    def test_local_rounding_error_rate(self):
        rates = []
        for seed in range(10):
            scenario = Signal1DScenario(seed=seed)
            rates.append(np.mean(local_rounding(scenario.graph()) != scenario.truth))
        self.assertTrue(0.10 <= np.mean(rates) <= 0.25, np.mean(rates))

    def test_invalid(self):
        self.assertRaises(ValueError, lambda: gen_signal1d(length=4))
        self.assertRaises(ValueError, lambda: gen_signal1d(noise=-1.0))


class TestVertex31(unittest.TestCase):
    def test_noise_free(self):
        features, labels, truth = gen_vertex31(width=16, height=12, noise=0.0)
        self.assertEqual(features.shape, (192, 31))
        assert_array_equal(np.argmax(features, axis=1), truth)
        self.assertEqual(len(labels), 31)

    def test_label_distances(self):
        features, labels, _ = gen_vertex31(width=16, height=16)
        D = build_distances(features, labels)
        self.assertTrue(np.all(np.isclose(D, 0) | np.isclose(D, np.sqrt(2))))
        assert_array_equal(np.sum(np.isclose(D, 0), axis=1), 1)

    def test_noise_rate(self):
        features, _, truth = gen_vertex31(seed=1, noise=0.5)
        flipped = np.mean(np.argmax(features, axis=1) != truth)
        self.assertAlmostEqual(flipped, 0.5, delta=0.03)

    def test_invalid(self):
        self.assertRaises(ValueError, lambda: gen_vertex31(noise=1.5))
        self.assertRaises(ValueError, lambda: gen_vertex31(n_labels=1))


class TestColorQuant(unittest.TestCase):
    def test_image(self):
        img = synthetic_color_image(width=20, height=10)
        self.assertEqual(img.shape, (10, 20, 3))
        self.assertTrue(np.all((img >= 0) & (img <= 1)))
        assert_array_equal(img, synthetic_color_image(width=20, height=10))

    def test_single_label_is_mean(self):
        img = synthetic_color_image(width=12, height=8)
        features, labels = gen_colorquant(img, k=1)
        assert_allclose(labels.labels[0], features.mean(axis=0), atol=1e-8)

    def test_labels_sorted_and_nearest(self):
        scenario = ColorQuantScenario(width=24, height=16)
        labels = scenario.labels.labels
        self.assertEqual(labels.shape, (4, 3))
        assert_array_equal(np.lexsort(labels.T[::-1]), np.arange(4))
        nearest = np.argmin(cdist(scenario.features, labels), axis=1)
        assert_array_equal(local_rounding(scenario.graph()), nearest)

    def test_given_image(self):
        scenario = ColorQuantScenario(image=synthetic_color_image(width=9, height=5), n_labels=3)
        self.assertEqual((scenario.width, scenario.height), (9, 5))
        self.assertEqual(scenario.graph().node_count, 45)
        self.assertIsNone(scenario.truth)

    def test_invalid(self):
        self.assertRaises(ValueError, lambda: gen_colorquant(np.zeros((4, 4))))
        self.assertRaises(ValueError, lambda: kmeans_labels(np.zeros((3, 2)), 4))


class TestScenarios(unittest.TestCase):
    def test_make_scenario(self):
        scenario = make_scenario("signal1d", seed=2, window=None, noise=0.1)
        self.assertIsInstance(scenario, Signal1DScenario)
        self.assertEqual((scenario.seed, scenario.window, scenario.noise), (2, 5, 0.1))
        self.assertEqual((scenario.width, scenario.height), (192, 1))
        self.assertIsInstance(make_scenario("vertex31"), Vertex31Scenario)

    def test_make_scenario_invalid(self):
        self.assertRaisesRegex(ValueError, "unknown scenario", lambda: make_scenario("nope"))
        self.assertRaisesRegex(ValueError, "does not take", lambda: make_scenario("signal1d", n_sites=3))

    def test_feature_scenario(self):
        _, labels, _ = gen_signal1d()
        scenario = FeatureScenario(features_=np.linspace(0, 1, 10), labels_=labels, width=5, height=2)
        g = scenario.graph()
        self.assertEqual((g.node_count, g.label_count), (10, 3))
        self.assertRaises(ValueError, lambda: FeatureScenario().features)


class TestLabeling(unittest.TestCase):
    def test_from_state(self):
        W = np.array([[0.1, 0.9], [0.7, 0.3]])
        result = LabelingResult.from_state(W, iterations=3)
        assert_array_equal(result.labels, [1, 0])
        assert_allclose(result.confidence, [0.9, 0.7])
        self.assertEqual(result.iterations, 3)

    def test_label_agreement(self):
        self.assertEqual(label_agreement(np.array([0, 1, 2, 3]), np.array([0, 1, 0, 0])), (2, 0.5))
        x = LabelingResult(np.array([1, 1]))
        self.assertEqual(label_agreement(x, x), (0, 0.0))
        self.assertRaises(ValueError, lambda: label_agreement(np.zeros(3), np.zeros(4)))

    def test_entropy(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            W = rng.dirichlet(np.ones(5), size=7)
            self.assertTrue(0 <= entropy_avg(W) <= np.log(5) / 5 + 1e-12)
        self.assertAlmostEqual(entropy_avg(barycenter(3, 5)), np.log(5) / 5)


class TestReferenceRuns(unittest.TestCase):
    def test_nonlinear_reference(self):
        scenario = Signal1DScenario()
        first = ground_truth_nonlinear(scenario)
        assert_array_equal(first.labels, ground_truth_nonlinear(scenario).labels)
        # spatial regularization beats rounding the data term alone
        rounded = np.mean(local_rounding(scenario.graph()) != scenario.truth)
        self.assertLess(label_agreement(first, scenario.truth)[1], rounded)
        _, fraction = label_agreement(first, ground_truth_nonlinear(scenario, h=0.25))
        self.assertLessEqual(fraction, 0.01)

    def test_linear_flow_table(self):
        scenario = Signal1DScenario()
        reference = ground_truth_nonlinear(scenario)
        linearizations, differing = linear_flow_table(scenario, 1, reference=reference)
        self.assertEqual(linearizations, 1)
        self.assertLessEqual(differing, 4)
        narrow = Signal1DScenario(window=3)
        self.assertLessEqual(linear_flow_table(narrow, 1)[1], 6)

    def test_relinearized_table(self):
        linearizations, differing = linear_flow_table(Signal1DScenario(window=3), 4)
        self.assertGreater(linearizations, 1)
        self.assertLessEqual(differing, 6)


class LinearFlowScenarioChecks:
    """Agreement of the linear-flow solvers with the implicit Euler labeling on one scenario."""
    scenario = None

    @classmethod
    def setUpClass(cls):
        cls.oracle = ground_truth_linear(cls.scenario)
        g = cls.scenario.graph()
        cls.op = build_operator(barycenter(g.node_count, g.label_count), g)
        cls.T, _, cls.W = exponential_integrator_until(cls.op, 5)

    def test_adaptive(self):
        for q in (1, 4):
            trace = integrate_linear_adaptive(self.op, q, tau=0.01)
            _, fraction = label_agreement(LabelingResult.from_state(trace.W), self.oracle)
            self.assertLessEqual(fraction, 0.01)

    def test_exponential_integrator(self):
        self.assertLess(entropy_avg(self.W), 1e-3)
        _, fraction = label_agreement(LabelingResult.from_state(self.W), self.oracle)
        self.assertLessEqual(fraction, 0.01)

    def test_entropy_decreases(self):
        _, W_early = exponential_integrator(self.op, self.T / 4, 5)
        self.assertLess(entropy_avg(self.W), entropy_avg(W_early))

    def test_labels_stable_in_m(self):
        labels = [np.argmax(exponential_integrator(self.op, self.T, m)[1], axis=1) for m in (6, 7, 8, 9)]
        for before, after in zip(labels, labels[1:]):
            self.assertEqual(label_agreement(before, after)[0], 0)


class TestColorQuantLinearFlow(LinearFlowScenarioChecks, unittest.TestCase):
    scenario = ColorQuantScenario(width=24, height=24)


class TestVertex31LinearFlow(LinearFlowScenarioChecks, unittest.TestCase):
    scenario = Vertex31Scenario(width=32, height=32)
