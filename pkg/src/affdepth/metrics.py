"""Depth evaluation metrics: RMSE, MAE, median relative error, and the
ratio-threshold percentages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .images import DepthImage


@dataclass(frozen=True)
class DepthMetrics:
    rmse: float
    mae: float
    rel: float  # median of |pred - gt| / gt
    delta_105: float  # percent of pixels with max ratio <= 1.05
    delta_110: float
    delta_125: float
    n_pixels: int
    n_excluded: int = 0  # masked pixels dropped for missing validity

    def row(self) -> tuple:
        return (self.rmse, self.rel, self.mae,
                self.delta_105, self.delta_110, self.delta_125)


def evaluate_depth(pred: DepthImage, gt: DepthImage, mask: np.ndarray) -> DepthMetrics:
    """Metrics of ``pred`` against ``gt`` over the masked pixels.

    Only pixels valid in both maps are scored; their count and the number
    excluded are reported alongside. An empty evaluable set is an error.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape or mask.shape != gt.shape:
        raise InvalidInputError("mask and depth shapes are inconsistent")
    if not mask.any():
        raise InvalidInputError("evaluation mask is empty")
    usable = mask & pred.valid & gt.valid
    n_excluded = int(mask.sum() - usable.sum())
    if not usable.any():
        raise InvalidInputError("no masked pixel is valid in both depth maps")

    p = pred.values[usable]
    g = gt.values[usable]
    if np.any(g <= 0):
        raise InvalidInputError("ground-truth depths must be positive")
    diff = p - g
    rmse = float(np.sqrt(np.mean(diff ** 2)))
    mae = float(np.mean(np.abs(diff)))
    rmse = max(rmse, mae)  # true rmse >= mae; sqrt rounding can lose 1 ulp
    rel = float(np.median(np.abs(diff) / g))
    ratio = np.maximum(p / g, g / p)
    deltas = [float(100.0 * np.mean(ratio <= t)) for t in (1.05, 1.10, 1.25)]
    return DepthMetrics(rmse, mae, rel, *deltas, n_pixels=int(usable.sum()),
                        n_excluded=n_excluded)
