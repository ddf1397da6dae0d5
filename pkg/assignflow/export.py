"""
Reading and writing run artifacts: PPM images, label and feature CSVs, traces and summaries.

CSV files are written with ``,`` separators and LF line endings so that identical runs give
identical bytes.
"""

import json
from typing import Optional

import cv2
import numpy as np
import pandas as pd

from .traces import FlowTrace


def palette(n_labels: int, seed: int = 0) -> np.ndarray:
    """Fixed pseudo-random color per label, ``n_labels x 3`` of ``uint8``.
    """
    return np.random.default_rng(seed).integers(0, 256, size=(n_labels, 3), dtype=np.uint8)


def label_image(labels: np.ndarray, width: int, height: int, colors: Optional[np.ndarray] = None) -> np.ndarray:
    """Paints a label map with **colors**, defaulting to :func:`palette`.
    """
    labels = np.asarray(labels).ravel()
    if labels.shape[0] != width * height:
        raise ValueError("%d labels do not fill a %dx%d image" % (labels.shape[0], width, height))
    if colors is None:
        colors = palette(int(labels.max()) + 1)
    return colors[labels].reshape(height, width, 3)


def difference_mask(labels_a: np.ndarray, labels_b: np.ndarray, width: int, height: int) -> np.ndarray:
    """White where two label maps differ, black elsewhere.
    """
    diff = np.asarray(labels_a).ravel() != np.asarray(labels_b).ravel()
    colors = np.array([[0, 0, 0], [255, 255, 255]], dtype=np.uint8)
    return label_image(diff.astype(int), width, height, colors)


def write_ppm(path: str, image: np.ndarray) -> None:
    """Writes a ``height x width x 3`` ``uint8`` RGB array as binary PPM.
    """
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an RGB image of shape (height, width, 3)")
    if not cv2.imwrite(path, cv2.cvtColor(image, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_PXM_BINARY, 1]):
        raise OSError("could not write %s" % path)


def read_ppm(path: str) -> np.ndarray:
    """Reads a PPM into a ``height x width x 3`` RGB float array scaled to ``[0, 1]``.

    8 and 16 bit samples are accepted.
    """
    image = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise ValueError("%s is not a readable PPM image" % path)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("%s is not an RGB image" % path)
    scale = float(np.iinfo(image.dtype).max)
    return cv2.cvtColor(image, cv2.COLOR_BGR2RGB).astype(float) / scale


def write_labels_csv(path: str, labels: np.ndarray, width: int) -> None:
    """Writes a label map as an integer grid, one image row per line.
    """
    labels = np.asarray(labels, dtype=int).ravel()
    pd.DataFrame(labels.reshape(-1, width)).to_csv(path, header=False, index=False, lineterminator="\n")


def read_labels_csv(path: str) -> tuple:
    """Reads a label grid written by :func:`write_labels_csv`.

    :return: ``(labels, width, height)``.
    """
    grid = pd.read_csv(path, header=None).to_numpy(dtype=int)
    return grid.ravel(), grid.shape[1], grid.shape[0]


def read_matrix_csv(path: str) -> np.ndarray:
    """Reads a headerless CSV of numbers, one vector per line.
    """
    return pd.read_csv(path, header=None).to_numpy(dtype=float)


def write_trace_csv(path: str, trace: FlowTrace) -> None:
    trace.to_frame().to_csv(path, index=False, lineterminator="\n")


def write_trajectories_csv(path: str, trace: FlowTrace) -> None:
    """Writes per-node trajectories ``node, t, w1, ..., wJ`` from the recorded states.
    """
    if trace.states is None:
        raise ValueError("trace has no recorded states")
    times = np.concatenate([[0.0], trace.times])
    n_nodes, n_labels = trace.states[0].shape
    frames = []
    for t, W in zip(times, trace.states):
        frame = pd.DataFrame(W, columns=["w%d" % (j + 1) for j in range(n_labels)])
        frame.insert(0, "t", t)
        frame.insert(0, "node", np.arange(n_nodes))
        frames.append(frame)
    out = pd.concat(frames, ignore_index=True).sort_values(["node", "t"], kind="stable")
    out.to_csv(path, index=False, lineterminator="\n")


def write_summary(path: str, summary: dict) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
