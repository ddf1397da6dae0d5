"""
Synthetic labeling scenarios, labeling metrics and the reference solutions runs are compared against.

Three scenarios are available: a noisy piecewise-constant 1D signal, an image of 31 labels encoded
as unit vectors with uniform label noise, and color quantization of an RGB image. All of them are
pure functions of their parameters and seed.
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import cdist

from .flow import LabelSet, LabelingGraph, build_distances
from .geometry import barycenter, entropy_avg
from .linearflow import RelinearizationControl, build_operator, row_norm_max
from .linsolve import integrate_linear_implicit
from .rkmk import integrate

logger = logging.getLogger(__name__)

SIGNAL_LEVELS = (0.0, 0.5, 1.0)
SIGNAL_SEGMENTS = (0, 1, 2, 0, 2, 1)

def gen_signal1d(seed: int = 0, noise: float = 0.22, length: int = 192) -> tuple:
    """Piecewise-constant signal over three levels with additive Gaussian noise.

    The signal has six segments and every level covers two of them. At the default noise roughly
    one sample in six is closer to a wrong level than to its own.

    :return: ``(features, labels, truth)``.
    :rtype: :obj:`tuple`
    """
    if length < len(SIGNAL_SEGMENTS):
        raise ValueError("signal needs at least %d samples" % len(SIGNAL_SEGMENTS))
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    truth = np.concatenate([
        np.full(len(part), level)
        for part, level in zip(np.array_split(np.arange(length), len(SIGNAL_SEGMENTS)), SIGNAL_SEGMENTS)
    ])
    features = np.asarray(SIGNAL_LEVELS)[truth] + noise * rng.standard_normal(length)
    return features, LabelSet(SIGNAL_LEVELS, metric="absolute"), truth


def gen_vertex31(
    seed: int = 0, width: int = 64, height: int = 64, noise: float = 0.5,
    n_labels: int = 31, n_sites: int = 20
) -> tuple:
    """Label image of Voronoi cells with features encoded as unit vectors.

    Every pixel keeps the unit vector of its true label with probability ``1 - noise`` and gets a
    uniformly drawn other unit vector otherwise. All distinct labels are at the same distance.

    :return: ``(features, labels, truth)``.
    :rtype: :obj:`tuple`
    """
    if not 0 <= noise <= 1:
        raise ValueError("noise must be a probability, got %r" % noise)
    if n_labels < 2 or n_sites < 1:
        raise ValueError("need at least 2 labels and 1 site")
    rng = np.random.default_rng(seed)
    sites = rng.uniform((0, 0), (width, height), size=(n_sites, 2))
    site_labels = rng.choice(n_labels, size=n_sites, replace=n_sites > n_labels)
    ys, xs = np.divmod(np.arange(width * height), width)
    pixels = np.column_stack([xs + 0.5, ys + 0.5])
    truth = site_labels[np.argmin(cdist(pixels, sites), axis=1)]
    flip = rng.random(truth.shape[0]) < noise
    other = (truth + rng.integers(1, n_labels, size=truth.shape[0])) % n_labels
    observed = np.where(flip, other, truth)
    vertices = np.eye(n_labels)
    return vertices[observed], LabelSet(vertices), truth


def synthetic_color_image(seed: int = 0, width: int = 64, height: int = 64) -> np.ndarray:
    """Deterministic RGB image in ``[0, 1]`` with smooth regions, flat shapes and a striped patch.

    :return: ``height x width x 3`` array.
    :rtype: :class:`numpy.ndarray`
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    u, v = xx / max(width - 1, 1), yy / max(height - 1, 1)
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
    img = c0 * (1 - u)[..., None] + c1 * u[..., None]
    for _ in range(4):
        cx, cy = rng.uniform(0, 1, 2)
        r = rng.uniform(0.1, 0.25)
        color = rng.uniform(0, 1, 3)
        img[(u - cx) ** 2 + (v - cy) ** 2 < r * r] = color
    x0, y0 = rng.uniform(0.1, 0.5, 2)
    patch = (u > x0) & (u < x0 + 0.35) & (v > y0) & (v < y0 + 0.35)
    stripes = np.sin(2 * np.pi * xx / 3.0) > 0
    dark, light = rng.uniform(0, 1, size=(2, 3))
    img[patch & stripes] = dark
    img[patch & ~stripes] = light
    img = img + 0.03 * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def kmeans_labels(features: np.ndarray, k: int, seed: int = 0) -> LabelSet:
    """Picks **k** representative feature vectors with seeded k-means, ordered lexicographically.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    if k < 1 or k > features.shape[0]:
        raise ValueError("cannot pick %r labels from %d features" % (k, features.shape[0]))
    centroids, _ = kmeans2(features, k, minit="++", seed=seed)
    order = np.lexsort(centroids.T[::-1])
    return LabelSet(centroids[order], metric="euclidean")


def gen_colorquant(image: np.ndarray, k: int = 4, seed: int = 0) -> tuple:
    """Color quantization problem: raw RGB features and **k** k-means colors as labels.

    :param image: ``height x width x 3`` RGB array.
    :type image: :class:`numpy.ndarray`

    :return: ``(features, labels)``.
    :rtype: :obj:`tuple`
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an RGB image of shape (height, width, 3), got %s" % (image.shape,))
    features = image.reshape(-1, 3)
    return features, kmeans_labels(features, k, seed)


@dataclass
class Scenario(ABC):
    """A labeling problem on a grid: features, labels and the parameters of the graph.

    Sub-class should implement :meth:`generate` and provide ``width`` and ``height``.
    """
    seed: int = 0
    rho: float = 0.1
    window: int = 3

    kind = "abstract"

    @abstractmethod
    def generate(self) -> tuple:
        """Returns ``(features, labels, truth)``, truth may be None.
        """
        raise NotImplementedError()

    @cached_property
    def data(self) -> tuple:
        return self.generate()

    @property
    def features(self) -> np.ndarray:
        return self.data[0]

    @property
    def labels(self) -> LabelSet:
        return self.data[1]

    @property
    def truth(self) -> Optional[np.ndarray]:
        return self.data[2]

    def graph(self) -> LabelingGraph:
        """Builds the grid graph with the scenario's window, distances and scale.
        """
        D = build_distances(self.features, self.labels)
        return LabelingGraph.grid(self.width, self.height, self.window, D, self.rho)


@dataclass
class Signal1DScenario(Scenario):
    """Noisy 1D signal on a chain, three labels."""
    rho: float = 0.1
    window: int = 5
    length: int = 192
    noise: float = 0.22

    kind = "signal1d"

    @property
    def width(self) -> int:
        return self.length

    @property
    def height(self) -> int:
        return 1

    def generate(self) -> tuple:
        return gen_signal1d(self.seed, self.noise, self.length)


@dataclass
class Vertex31Scenario(Scenario):
    """Unit-vector labels with uniform label noise."""
    rho: float = 0.1
    window: int = 7
    width: int = 64
    height: int = 64
    noise: float = 0.5
    n_labels: int = 31
    n_sites: int = 20

    kind = "vertex31"

    def generate(self) -> tuple:
        return gen_vertex31(self.seed, self.width, self.height, self.noise, self.n_labels, self.n_sites)


@dataclass
class ColorQuantScenario(Scenario):
    """Color quantization of :func:`synthetic_color_image` or of a given image."""
    rho: float = 0.5
    window: int = 3
    width: int = 64
    height: int = 64
    n_labels: int = 4
    image: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    kind = "colorquant"

    def __post_init__(self) -> None:
        if self.image is not None:
            self.height, self.width = self.image.shape[:2]

    def generate(self) -> tuple:
        image = self.image
        if image is None:
            image = synthetic_color_image(self.seed, self.width, self.height)
        features, labels = gen_colorquant(image, self.n_labels, self.seed)
        return features, labels, None


@dataclass
class FeatureScenario(Scenario):
    """Scenario wrapping features and labels that come from elsewhere, e.g. files."""
    features_: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    labels_: Optional[LabelSet] = field(default=None, repr=False, compare=False)
    width: int = 1
    height: int = 1

    kind = "input"

    def generate(self) -> tuple:
        if self.features_ is None or self.labels_ is None:
            raise ValueError("FeatureScenario needs features and labels")
        return self.features_, self.labels_, None


SCENARIOS = {
    cls.kind: cls for cls in (Signal1DScenario, Vertex31Scenario, ColorQuantScenario)
}


def make_scenario(kind: str, **params) -> Scenario:
    """Instantiates a registered scenario. Parameters given as None keep their defaults.
    """
    try:
        cls = SCENARIOS[kind]
    except KeyError:
        raise ValueError("unknown scenario %r, expected one of: %s" % (
            kind, ", ".join(sorted(SCENARIOS)))) from None
    params = {k: v for k, v in params.items() if v is not None}
    unknown = set(params) - set(cls.__dataclass_fields__)
    if unknown:
        raise ValueError("scenario %r does not take: %s" % (kind, ", ".join(sorted(unknown))))
    return cls(**params)


@dataclass
class LabelingResult:
    """Per-node labels and their assignment confidences.
    """
    labels: np.ndarray
    confidence: Optional[np.ndarray] = None
    iterations: int = 0
    wall_time: float = 0.0

    @classmethod
    def from_state(cls, W: np.ndarray, iterations: int = 0, wall_time: float = 0.0) -> "LabelingResult":
        """Rounds an assignment state to labels by row-wise argmax.
        """
        return cls(np.argmax(W, axis=1), np.max(W, axis=1), iterations, wall_time)


def label_agreement(
    x: Union[LabelingResult, np.ndarray], y: Union[LabelingResult, np.ndarray]
) -> tuple:
    """Counts nodes whose labels differ.

    :return: ``(differing, fraction)``.
    :rtype: :obj:`tuple`
    """
    a = np.asarray(getattr(x, "labels", x)).ravel()
    b = np.asarray(getattr(y, "labels", y)).ravel()
    if a.shape != b.shape:
        raise ValueError("label maps differ in size: %d vs %d" % (a.shape[0], b.shape[0]))
    differing = int(np.count_nonzero(a != b))
    return differing, differing / a.shape[0]


def ground_truth_nonlinear(scenario: Scenario, h: float = 0.5, show_progress: bool = False) -> LabelingResult:
    """Labels the scenario with the geometric implicit Euler scheme.
    """
    start = time.perf_counter()
    trace = integrate("be", scenario.graph(), h=h, show_progress=show_progress)
    logger.info("nonlinear reference: %d steps, entropy %.3e", trace.iterations, entropy_avg(trace.W))
    return LabelingResult.from_state(trace.W, trace.iterations, time.perf_counter() - start)


def ground_truth_linear(scenario: Scenario, h: float = 0.5, show_progress: bool = False) -> LabelingResult:
    """Labels the scenario with the linear flow linearized once at the barycenter, implicit Euler.
    """
    start = time.perf_counter()
    g = scenario.graph()
    op = build_operator(barycenter(g.node_count, g.label_count), g)
    trace = integrate_linear_implicit(op, h, show_progress=show_progress)
    return LabelingResult.from_state(trace.W, trace.iterations, time.perf_counter() - start)


def linear_flow_table(
    scenario: Scenario, c: float, h: float = 0.5, reference: Optional[LabelingResult] = None
) -> tuple:
    """Compares the linear flow under relinearization control **c** with the nonlinear flow.

    A pilot run linearized once at the barycenter fixes ``V_max``. For ``c > 1`` the run is
    repeated with :class:`assignflow.linearflow.RelinearizationControl`.

    :return: ``(linearizations, differing)``.
    :rtype: :obj:`tuple`
    """
    if reference is None:
        reference = ground_truth_nonlinear(scenario, h)
    g = scenario.graph()
    op = build_operator(barycenter(g.node_count, g.label_count), g)
    trace = integrate_linear_implicit(op, h)
    if c > 1:
        ctrl = RelinearizationControl(c=c, V_max=row_norm_max(trace.V, op.field_shape))
        trace = integrate_linear_implicit(op, h, control=ctrl)
    differing, _ = label_agreement(LabelingResult.from_state(trace.W), reference)
    logger.info("c=%g: %d linearizations, %d of %d labels differ",
                c, trace.linearizations, differing, g.node_count)
    return trace.linearizations, differing
