"""
Command-line front end.

``assignflow run`` labels a synthetic scenario or an input file with one of the integrators and
writes the label map, the step trace and a JSON summary into the output directory.
``assignflow compare`` counts the nodes on which two label CSVs disagree.
"""

import argparse
import configparser
import contextlib
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from typing import Optional

from threadpoolctl import threadpool_limits

from . import export
from .errors import AssignmentFlowError, UnknownSchemeError
from .geometry import barycenter, entropy_avg
from .harness import FeatureScenario, LabelingResult, Scenario, kmeans_labels, label_agreement, make_scenario
from .flow import LabelSet
from .linearflow import RelinearizationControl, build_operator, row_norm_max
from .linsolve import (
    exponential_integrator, exponential_integrator_until, integrate_linear_adaptive, integrate_linear_implicit
)
from .rkmk import StepControl, integrate
from .traces import FlowTrace

logger = logging.getLogger(__name__)

INTEGRATORS = ("be", "fe", "h2", "h3", "rk4", "rkmk12", "rkmk32", "linear-be", "linear-rk1", "linear-rk4", "expint")
FIXED_STEP_DEFAULTS = {"be": 0.5, "fe": 0.1, "h2": 0.1, "h3": 0.1, "rk4": 0.1}
THREADS_ENV = "ASSIGNFLOW_THREADS"


@dataclass
class RunConfig:
    """Everything a ``run`` needs. None means the scenario or integrator default.
    """
    scenario: str = "vertex31"
    input: Optional[str] = None
    labels: Optional[str] = None
    rho: Optional[float] = None
    window: Optional[int] = None
    width: Optional[int] = None
    height: Optional[int] = None
    noise: Optional[float] = None
    integrator: str = "rkmk12"
    tau: float = 0.01
    n_tau: int = 20
    h0: Optional[float] = None
    c: float = 1.0
    m: int = 5
    T: Optional[float] = None
    seed: int = 0
    out: str = "out"
    oracle: Optional[str] = None
    max_steps: int = 100000
    progress: bool = False

    def validate(self) -> None:
        if self.integrator not in INTEGRATORS:
            raise UnknownSchemeError(self.integrator, INTEGRATORS)
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.window is not None and (self.window < 1 or self.window % 2 == 0):
            raise ValueError("window must be an odd positive integer")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.n_tau < 1:
            raise ValueError("n-tau must be at least 1")
        if self.h0 is not None and not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if not self.c >= 1:
            raise ValueError("c must be at least 1")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be positive")
        for name in ("width", "height"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError("%s must be positive" % name)
        if self.max_steps < 1:
            raise ValueError("max-steps must be positive")


def load_scenario(config: RunConfig) -> Scenario:
    """Builds the scenario named in **config**, or a :class:`FeatureScenario` from ``--input``.
    """
    if config.input is None:
        params = dict(seed=config.seed, rho=config.rho, window=config.window, noise=config.noise)
        if config.scenario == "signal1d":
            params["length"] = config.width
        else:
            params.update(width=config.width, height=config.height)
        return make_scenario(config.scenario, **params)
    if config.input.lower().endswith(".ppm"):
        image = export.read_ppm(config.input)
        height, width = image.shape[:2]
        features = image.reshape(-1, 3)
    else:
        features = export.read_matrix_csv(config.input)
        width, height = features.shape[0], 1
    spec = config.labels or "4"
    if spec.isdigit():
        labels = kmeans_labels(features, int(spec), config.seed)
    else:
        labels = LabelSet(export.read_matrix_csv(spec))
    return FeatureScenario(
        seed=config.seed, rho=config.rho or 0.5, window=config.window or 3,
        features_=features, labels_=labels, width=width, height=height)


def integrate_config(config: RunConfig, scenario: Scenario) -> tuple:
    """Runs the configured integrator.

    :return: ``(trace, extra)`` where **extra** holds integrator-specific summary entries.
    """
    g = scenario.graph()
    name = config.integrator
    record = g.label_count == 3 and scenario.height == 1
    extra = {}
    if name in ("rkmk12", "rkmk32"):
        control = StepControl(tau=config.tau, n_tau=config.n_tau, h0=config.h0 or 0.01)
        trace = integrate(name, g, control=control, max_steps=config.max_steps,
                          record_states=record, show_progress=config.progress)
    elif name in FIXED_STEP_DEFAULTS:
        trace = integrate(name, g, h=config.h0 or FIXED_STEP_DEFAULTS[name], max_steps=config.max_steps,
                          record_states=record, show_progress=config.progress)
    else:
        op = build_operator(barycenter(g.node_count, g.label_count), g)
        if name == "linear-be":
            h = config.h0 or 0.5
            trace = integrate_linear_implicit(
                op, h, max_steps=config.max_steps, record_states=record, show_progress=config.progress)
            if config.c > 1:
                ctrl = RelinearizationControl(c=config.c, V_max=row_norm_max(trace.V, op.field_shape))
                trace = integrate_linear_implicit(
                    op, h, control=ctrl, max_steps=config.max_steps, record_states=record,
                    show_progress=config.progress)
            extra["linearizations"] = trace.linearizations
        elif name in ("linear-rk1", "linear-rk4"):
            trace = integrate_linear_adaptive(
                op, int(name[-1]), config.tau, max_steps=config.max_steps, record_states=record,
                show_progress=config.progress)
        else:
            if config.T is None:
                T, V, W = exponential_integrator_until(op, config.m)
            else:
                T = config.T
                V, W = exponential_integrator(op, T, config.m)
            trace = FlowTrace(W=W, V=V, terminated=entropy_avg(W) < 1e-3)
            trace.append(T, T, entropy_avg(W))
            extra["T"] = T
    return trace, extra


def run(config: RunConfig) -> int:
    """Executes one run and writes its artifacts into ``config.out``.

    :return: Exit status, 0 on success.
    :rtype: :obj:`int`
    """
    config.validate()
    start = time.perf_counter()
    scenario = load_scenario(config)
    logger.info("running %s on %s (%dx%d)", config.integrator, scenario.kind, scenario.width, scenario.height)
    trace, extra = integrate_config(config, scenario)
    wall_time = time.perf_counter() - start
    result = LabelingResult.from_state(trace.W, trace.iterations, wall_time)

    os.makedirs(config.out, exist_ok=True)
    out = lambda name: os.path.join(config.out, name)  # noqa: E731
    width, height = scenario.width, scenario.height
    export.write_labels_csv(out("labels.csv"), result.labels, width)
    export.write_ppm(out("labels.ppm"), export.label_image(
        result.labels, width, height, export.palette(len(scenario.labels))))
    export.write_trace_csv(out("trace.csv"), trace)
    if trace.states is not None:
        export.write_trajectories_csv(out("trajectories.csv"), trace)

    summary = {
        "integrator": config.integrator,
        "scenario": scenario.kind,
        "config": asdict(config),
        "iterations": trace.iterations,
        "terminated": trace.terminated,
        "final_time": trace.t,
        "final_entropy": entropy_avg(trace.W),
        "wall_time": wall_time,
    }
    summary.update(extra)
    if scenario.truth is not None:
        differing, fraction = label_agreement(result.labels, scenario.truth)
        summary["truth_agreement"] = {"differing": differing, "fraction": fraction}
    if config.oracle is not None:
        oracle, _, _ = export.read_labels_csv(config.oracle)
        differing, fraction = label_agreement(result.labels, oracle)
        summary["agreement"] = {"differing": differing, "fraction": fraction}
        export.write_ppm(out("diff.ppm"), export.difference_mask(result.labels, oracle, width, height))
    export.write_summary(out("summary.json"), summary)
    logger.info("%d steps in %.2fs, results in %s", trace.iterations, wall_time, config.out)
    return 0


def compare(path_a: str, path_b: str, mask: Optional[str] = None) -> int:
    """Prints how many labels differ between two label CSVs and optionally writes a difference mask.
    """
    a, width, height = export.read_labels_csv(path_a)
    b, width_b, height_b = export.read_labels_csv(path_b)
    if (width, height) != (width_b, height_b):
        raise ValueError("label maps have different sizes: %dx%d vs %dx%d" % (width, height, width_b, height_b))
    differing, fraction = label_agreement(a, b)
    print("differing: %d" % differing)
    print("fraction: %.6f" % fraction)
    if mask is not None:
        export.write_ppm(mask, export.difference_mask(a, b, width, height))
    return 0


def _add_run_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file, flags given on the command line take precedence")
    p.add_argument("--scenario", choices=["signal1d", "vertex31", "colorquant"])
    p.add_argument("--input", help="PPM image or CSV of feature rows")
    p.add_argument("--labels", help="number of k-means labels or CSV of label vectors")
    p.add_argument("--rho", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--integrator", help="one of: %s" % ", ".join(INTEGRATORS))
    p.add_argument("--tau", type=float)
    p.add_argument("--n-tau", dest="n_tau", type=int)
    p.add_argument("--h0", type=float, help="initial step of adaptive schemes, step of fixed ones")
    p.add_argument("--c", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--T", dest="T", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--oracle", help="labels.csv of a reference run")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--progress", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="assignflow", description="Assignment flow labeling.")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("-v", "--verbose", action="store_true", help="same as --log-level INFO")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_arguments(sub.add_parser("run", help="label a scenario or an input file",
                                      argument_default=argparse.SUPPRESS))
    p = sub.add_parser("compare", help="count differing labels between two label CSVs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", help="write a difference mask PPM here")
    return parser


def read_config_file(path: str) -> list:
    """Turns a config file into run flags. A bare ``key=value`` file is read as section ``[run]``.
    """
    with open(path) as f:
        text = f.read()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError:
        parser.read_string("[run]\n" + text)
    if not parser.has_section("run"):
        raise ValueError("config file %s has no [run] section" % path)
    argv = []
    for key, value in parser.items("run"):
        flag = "--" + key.replace("_", "-")
        if flag == "--progress":
            if parser.getboolean("run", key):
                argv.append(flag)
        elif flag == "--config":
            raise ValueError("config files cannot include other config files")
        else:
            argv += [flag, value]
    return argv


def config_from_args(args: argparse.Namespace, parser: argparse.ArgumentParser) -> RunConfig:
    given = dict(vars(args))
    for key in ("command", "log_level", "verbose"):
        given.pop(key, None)
    values = {}
    path = given.pop("config", None)
    if path is not None:
        file_args = parser.parse_args(["run"] + read_config_file(path))
        values.update({k: v for k, v in vars(file_args).items() if k in RunConfig.__dataclass_fields__})
    values.update(given)
    return RunConfig(**values)


@contextlib.contextmanager
def thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        yield
        return
    if not value.isdigit() or int(value) < 1:
        raise ValueError("%s must be a positive integer, got %r" % (THREADS_ENV, value))
    with threadpool_limits(limits=int(value)):
        yield


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = "INFO" if args.verbose and args.log_level == "WARNING" else args.log_level
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        with thread_limit():
            if args.command == "compare":
                return compare(args.a, args.b, args.out)
            return run(config_from_args(args, parser))
    except (UnknownSchemeError, ValueError, OSError, configparser.Error) as e:
        logger.error("%s", e)
        print("error: %s" % e, file=sys.stderr)
        return 2
    except AssignmentFlowError as e:
        logger.error("%s", e)
        print("error: %s" % e, file=sys.stderr)
        return 1
