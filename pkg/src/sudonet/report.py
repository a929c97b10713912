"""Rasters and CSV summaries: decision surfaces, reconstructions, histograms, fit curves."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import datasets as ds
from . import netpbm
from .experiments import Histogram

RED = (255, 0, 0)
BLACK = (0, 0, 0)


def _predictor(model) -> Callable[[np.ndarray], np.ndarray]:
    """Accept a Network (anything with ``predict``) or a plain callable."""
    return model.predict if hasattr(model, "predict") else model


def render_decision_surface(model, resolution: int = 500) -> np.ndarray:
    """Color a ``resolution`` square over [-1, 1]^2: red where output > 0, black elsewhere.

    Row 0 is the top of the image (y = +1).
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    g = np.linspace(-1.0, 1.0, resolution)
    yy, xx = np.meshgrid(g[::-1], g, indexing="ij")
    out = np.asarray(_predictor(model)(np.column_stack([xx.ravel(), yy.ravel()])))
    if out.ndim == 2 and out.shape[1] != 1:
        raise ValueError("decision surfaces need a single-output model")
    positive = out.reshape(resolution, resolution) > 0.0
    img = np.empty((resolution, resolution, 3), dtype=np.uint8)
    img[positive] = RED
    img[~positive] = BLACK
    return img


def render_reconstruction(model, image_dims: tuple[int, int]) -> np.ndarray:
    """Query every pixel coordinate and map outputs in [-1, 1] to 0..255 intensities."""
    h, w = image_dims
    out = np.asarray(_predictor(model)(ds.pixel_coordinates(h, w)))
    return ds.image_from_targets(out.ravel(), (h, w))


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    netpbm.write(path, img)


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    netpbm.write(path, img)


def emit_histogram_csv(hist: Histogram, path: str | Path) -> None:
    with Path(path).open("w", newline="") as f:
        f.write("# columns: bucket, value, count (value is the exact level, or the bin center)\n")
        w = csv.writer(f)
        w.writerow(["bucket", "value", "count"])
        if hist.levels is not None:
            values = hist.levels
        else:
            values = (hist.edges[:-1] + hist.edges[1:]) / 2.0
        for label, v, c in zip(hist.labels, values, hist.counts):
            w.writerow([label, repr(float(v)), int(c)])


def read_histogram_csv(path: str | Path) -> list[tuple[str, float, int]]:
    with Path(path).open(newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [(r["bucket"], float(r["value"]), int(r["count"])) for r in rows]


def emit_fit_curve_csv(
    x: np.ndarray, target: np.ndarray, dumps: Mapping[int, np.ndarray], path: str | Path
) -> None:
    """Long-format fit curves: one row per (epoch, x)."""
    with Path(path).open("w", newline="") as f:
        f.write("# columns: epoch, x, target, prediction\n")
        w = csv.writer(f)
        w.writerow(["epoch", "x", "target", "prediction"])
        for epoch in sorted(dumps):
            for xi, ti, pi in zip(x, target, dumps[epoch]):
                w.writerow([epoch, repr(float(xi)), repr(float(ti)), repr(float(pi))])
