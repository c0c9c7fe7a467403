"""Total-least-squares plane fitting, RANSAC variants, and rim depth.

The RANSAC loops switch to exhaustive candidate enumeration whenever there
are no more candidates than requested iterations, which makes the small-
input behavior deterministic and exactly optimal rather than sampled.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .errors import DegenerateInputError
from .geometry import CameraIntrinsics, Plane, ray_plane_depths

DEFAULT_INLIER_THRESHOLD = 0.005  # meters
DEFAULT_ITERATIONS = 500

_RANK_TOL = 1e-12


def fit_plane_svd(points: np.ndarray) -> Plane:
    """Total-least-squares plane through >= 3 non-collinear points.

    The normal is the singular vector of the smallest singular value of the
    centered point matrix; the result is in canonical sign form.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateInputError("plane fitting needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] <= _RANK_TOL * max(1.0, s[0]):
        raise DegenerateInputError("points are collinear or coincident")
    n = vt[-1]
    return Plane.from_normal_offset(n, float(n @ centroid))


def _inliers(points: np.ndarray, plane: Plane, threshold: float) -> np.ndarray:
    return np.abs(plane.signed_distance(points)) <= threshold


def ransac_plane(points: np.ndarray, inlier_threshold: float = DEFAULT_INLIER_THRESHOLD,
                 iterations: int = DEFAULT_ITERATIONS, seed: int = 0):
    """RANSAC plane fit: 3-point SVD candidates, best inlier count wins.

    Ties keep the earliest candidate. The best candidate's inlier set is
    refit with :func:`fit_plane_svd`; if the refit plane scores fewer
    inliers than the candidate, the candidate is kept. Returns
    ``(plane, inlier_mask)`` with the mask consistent with the returned
    plane and threshold.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n_pts = len(pts)
    if n_pts < 3:
        raise DegenerateInputError("RANSAC needs at least 3 points")
    if iterations < 1:
        raise DegenerateInputError("iterations must be >= 1")

    n_subsets = n_pts * (n_pts - 1) * (n_pts - 2) // 6
    if n_subsets <= iterations:
        samples = combinations(range(n_pts), 3)
    else:
        rng = np.random.default_rng(seed)
        samples = (rng.choice(n_pts, size=3, replace=False) for _ in range(iterations))

    best_plane = None
    best_count = -1
    for sample in samples:
        try:
            cand = fit_plane_svd(pts[list(sample)])
        except DegenerateInputError:
            continue
        count = int(_inliers(pts, cand, inlier_threshold).sum())
        if count > best_count:
            best_count = count
            best_plane = cand
    if best_plane is None:
        raise DegenerateInputError("all sampled candidates were degenerate")

    best_mask = _inliers(pts, best_plane, inlier_threshold)
    try:
        refit = fit_plane_svd(pts[best_mask])
        refit_mask = _inliers(pts, refit, inlier_threshold)
        if refit_mask.sum() >= best_mask.sum():
            return refit, refit_mask
    except DegenerateInputError:
        pass
    return best_plane, best_mask


def ransac_plane_parallel(points: np.ndarray, table_normal: np.ndarray,
                          inlier_threshold: float = DEFAULT_INLIER_THRESHOLD,
                          iterations: int = DEFAULT_ITERATIONS, seed: int = 0):
    """RANSAC with the normal fixed parallel to the table.

    Only the offset is free, so candidates are single points; the final
    offset is the median of the projections of the best inlier set. The
    input normal is canonicalized (its sign may flip together with d).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n_pts = len(pts)
    if n_pts < 3:
        raise DegenerateInputError("constrained RANSAC needs at least 3 points")
    if iterations < 1:
        raise DegenerateInputError("iterations must be >= 1")
    base = Plane.from_normal_offset(table_normal, 0.0)
    normal = base.n

    proj = pts @ normal
    if n_pts <= iterations:
        candidates = range(n_pts)
    else:
        rng = np.random.default_rng(seed)
        candidates = rng.integers(0, n_pts, size=iterations)

    best_d = None
    best_count = -1
    for idx in candidates:
        d = proj[int(idx)]
        count = int((np.abs(proj - d) <= inlier_threshold).sum())
        if count > best_count:
            best_count = count
            best_d = d
    mask = np.abs(proj - best_d) <= inlier_threshold
    final_d = float(np.median(proj[mask]))
    final_mask = np.abs(proj - final_d) <= inlier_threshold
    return Plane(normal, final_d), final_mask


def rim_depth(pixels: np.ndarray, plane: Plane, k: CameraIntrinsics):
    """Depths of ``pixels`` (rows, cols) on ``plane`` along their rays.

    Pixels whose ray misses the plane in front of the camera are marked
    invalid rather than fabricated. Returns ``(values, valid)``.
    """
    pixels = np.asarray(pixels).reshape(-1, 2)
    depths, valid = ray_plane_depths(pixels[:, 1], pixels[:, 0], k, plane)
    return depths, valid
