"""Affordance score fusion, segmentation losses, and the weighted F-measure.

Affordance volumes are (C, H, W) arrays with channel 0 = background and
channels 1..N the foreground classes in the fixed order (contain,
wrap-grasp, support). Classification scores are length-N vectors aligned
with channels 1..N.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .images import NUM_CLASSES

PROB_EPS = 1e-7


def fuse_affordance(volume: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Scale each foreground channel of ``volume`` by its class score.

    The background channel passes through unchanged; channel c (c >= 1) is
    multiplied by ``scores[c - 1]``. This is the channel-broadcast
    element-wise product of (1, scores) with the volume.
    """
    volume = np.asarray(volume, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if volume.ndim != 3 or volume.shape[0] != scores.shape[0] + 1:
        raise InvalidInputError(
            f"volume has {volume.shape[0] if volume.ndim == 3 else '?'} channels, "
            f"expected {scores.shape[0] + 1}")
    factors = np.concatenate([[1.0], scores])
    return volume * factors[:, None, None]


def softmax_mask(volume: np.ndarray):
    """Per-pixel channel softmax and its argmax mask.

    Ties resolve to the lowest channel index, so an all-equal pixel maps to
    background. Returns ``(normalized_volume, mask)``.
    """
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim != 3:
        raise InvalidInputError("affordance volume must be (C, H, W)")
    shifted = volume - volume.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    normalized = e / e.sum(axis=0, keepdims=True)
    mask = np.argmax(normalized, axis=0).astype(np.uint8)
    return normalized, mask


def classification_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross entropy of per-class presence scores.

    Scores are clamped to [PROB_EPS, 1 - PROB_EPS]; labels must be 0/1.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise InvalidInputError("scores and labels must have equal length")
    if not np.all(np.isin(labels, (0, 1))):
        raise InvalidInputError("labels must be binary")
    labels = labels.astype(np.float64)
    s = np.clip(scores, PROB_EPS, 1.0 - PROB_EPS)
    terms = labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s)
    return float(-terms.mean())


def map_loss(normalized_volume: np.ndarray, gt_mask: np.ndarray, roi: np.ndarray) -> float:
    """Mean negative log-likelihood of the true label inside ``roi``.

    ``normalized_volume`` must already sum to 1 across channels; ``roi`` is
    a boolean pixel mask. Probabilities are clamped below at PROB_EPS.
    """
    vol = np.asarray(normalized_volume, dtype=np.float64)
    gt = np.asarray(gt_mask)
    roi = np.asarray(roi, dtype=bool)
    if vol.ndim != 3 or vol.shape[1:] != gt.shape or gt.shape != roi.shape:
        raise InvalidInputError("volume, mask, and roi shapes are inconsistent")
    if gt.min() < 0 or gt.max() >= vol.shape[0]:
        raise InvalidInputError("ground-truth labels out of channel range")
    if not roi.any():
        raise InvalidInputError("roi must contain at least one pixel")
    vv, uu = np.nonzero(roi)
    p = vol[gt[vv, uu], vv, uu]
    return float(-np.log(np.maximum(p, PROB_EPS)).mean())


# ---------------------------------------------------------------------------
# weighted F-measure

_WFM_SIGMA2 = 5.0  # variance of the dependency-weighting Gaussian
_WFM_KSIZE = 7
_WFM_ALPHA = np.log(0.5) / 5.0


def _gaussian_kernel(size: int = _WFM_KSIZE, sigma2: float = _WFM_SIGMA2) -> np.ndarray:
    half = (size - 1) / 2
    y, x = np.ogrid[-half:half + 1, -half:half + 1]
    k = np.exp(-(x * x + y * y) / (2.0 * sigma2))
    return k / k.sum()


def _min_error_at_nearest(err: np.ndarray, gt: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """For each background pixel take the minimum error over its exactly
    nearest foreground pixels (Euclidean; the min over ties keeps the value
    invariant under image isometries)."""
    h, w = gt.shape
    out = err.copy()
    bg = ~gt
    d2 = np.rint(dist * dist).astype(np.int64)  # exact integers on a grid
    ys, xs = np.nonzero(bg)
    vals = np.full(len(ys), np.inf)
    pix_d2 = d2[ys, xs]
    for v in np.unique(pix_d2):
        sel = pix_d2 == v
        sy, sx = ys[sel], xs[sel]
        best = np.full(len(sy), np.inf)
        r = int(np.floor(np.sqrt(v))) + 1
        for dy in range(-r, r + 1):
            rem = v - dy * dy
            if rem < 0:
                continue
            dx = int(np.rint(np.sqrt(rem)))
            if dx * dx != rem:
                continue
            for sdx in ((dx,) if dx == 0 else (-dx, dx)):
                ny, nx = sy + dy, sx + sdx
                ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
                ok[ok] &= gt[ny[ok], nx[ok]]
                np.minimum.at(best, np.nonzero(ok)[0], err[ny[ok], nx[ok]])
        vals[sel] = best
    out[ys, xs] = vals
    return out


def weighted_f_measure(pred_mask: np.ndarray, gt_mask: np.ndarray,
                       class_id: int, beta: float = 1.0) -> float:
    """Dependency-weighted F-measure of one class, one-vs-rest.

    Errors on background pixels are replaced by the error at their nearest
    foreground pixel (min over exact ties), smoothed with a 7x7 Gaussian of
    variance 5, and down-weighted away from the foreground with decay
    ln(0.5)/5. Returns (1 + beta^2) Pr Rc / (beta^2 Pr + Rc), or 0 when the
    denominator vanishes.
    """
    pred_mask = np.asarray(pred_mask)
    gt_mask = np.asarray(gt_mask)
    if pred_mask.shape != gt_mask.shape:
        raise InvalidInputError("prediction and ground truth must share a shape")
    pred = pred_mask == class_id
    gt = gt_mask == class_id
    if not gt.any():
        if pred.any():
            warnings.warn("empty ground-truth foreground with non-empty prediction",
                          stacklevel=2)
            return 0.0
        return 1.0
    if not pred.any():
        return 0.0

    err = np.abs(pred.astype(np.float64) - gt.astype(np.float64))
    dist = ndimage.distance_transform_edt(~gt)
    et = _min_error_at_nearest(err, gt, dist)
    ea = ndimage.convolve(et, _gaussian_kernel(), mode="constant", cval=0.0)
    min_e_ea = np.where(gt & (ea < err), ea, err)
    importance = np.where(gt, 1.0, 2.0 - np.exp(_WFM_ALPHA * dist))
    ew = min_e_ea * importance

    tp_w = gt.sum() - ew[gt].sum()
    fp_w = ew[~gt].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tp_w / (tp_w + fp_w) if (tp_w + fp_w) > 0 else 0.0
    den = beta * beta * precision + recall
    if den <= 0:
        return 0.0
    return float((1.0 + beta * beta) * precision * recall / den)


def mean_weighted_f_measure(pred_mask: np.ndarray, gt_mask: np.ndarray,
                            beta: float = 1.0) -> dict:
    """Per-class weighted F-measure plus the mean over foreground classes."""
    out = {}
    for cid in range(1, NUM_CLASSES + 1):
        out[cid] = weighted_f_measure(pred_mask, gt_mask, cid, beta)
    out["mean"] = float(np.mean([out[c] for c in range(1, NUM_CLASSES + 1)]))
    return out
