"""Pinhole camera math, plane geometry, and image connected components.

Conventions used throughout the package:

* camera frame: z forward, x right, y down (metric, meters);
* pixel coordinates: ``u`` along image columns, ``v`` along rows, so an
  image array is indexed ``img[v, u]``;
* planes are stored as a unit normal ``n`` and offset ``d`` with the plane
  defined by ``n . x = d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BehindCameraError, InvalidInputError, RayParallelError

_PLANE_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError("principal point must lie inside the image")

    def shifted(self, du: float, dv: float, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics of a crop whose origin is at (du, dv) of this image."""
        return CameraIntrinsics(self.fx, self.fy, self.cx - du, self.cy - dv, width, height)

    def ray_grid(self) -> np.ndarray:
        """(H, W, 3) array of un-normalized viewing rays ((u-cx)/fx, (v-cy)/fy, 1)."""
        us = np.arange(self.width, dtype=np.float64)
        vs = np.arange(self.height, dtype=np.float64)
        rx = (us[None, :] - self.cx) / self.fx
        ry = (vs[:, None] - self.cy) / self.fy
        rays = np.empty((self.height, self.width, 3))
        rays[..., 0] = rx
        rays[..., 1] = ry
        rays[..., 2] = 1.0
        return rays


@dataclass(frozen=True)
class Plane:
    """Plane ``n . x = d`` with unit normal and canonical sign.

    Canonical sign: ``n_z >= 0``, and if ``n_z == 0`` the first nonzero
    component of ``n`` is positive. Use :meth:`from_normal_offset` to
    normalize and canonicalize arbitrary inputs.
    """

    n: np.ndarray
    d: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.float64)
        if n.shape != (3,) or not np.all(np.isfinite(n)):
            raise InvalidInputError("plane normal must be a finite 3-vector")
        if abs(np.linalg.norm(n) - 1.0) > _PLANE_TOL:
            raise InvalidInputError("plane normal must be unit length")
        n = n.copy()
        n.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d", float(self.d))

    @staticmethod
    def from_normal_offset(n, d) -> "Plane":
        """Normalize ``n`` and flip signs into canonical form."""
        n = np.asarray(n, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm < _PLANE_TOL:
            raise InvalidInputError("plane normal must be a nonzero 3-vector")
        d = float(d)
        if abs(norm - 1.0) > 1e-12:  # keep canonicalization exactly idempotent
            n = n / norm
            d = d / norm
        if n[2] < 0:
            n, d = -n, -d
        elif n[2] == 0:
            for c in n:
                if c != 0:
                    if c < 0:
                        n, d = -n, -d
                    break
        return Plane(n, d)

    def canonical(self) -> "Plane":
        return Plane.from_normal_offset(self.n, self.d)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed point-plane distances, ``points`` of shape (..., 3)."""
        return np.asarray(points, dtype=np.float64) @ self.n - self.d


def backproject(u, v, depth, k: CameraIntrinsics) -> np.ndarray:
    """Back-project pixel coordinates at the given metric depth.

    Broadcasts over array inputs; returns points of shape (..., 3) in the
    camera frame.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise InvalidInputError("depth must be finite and positive")
    x = (u - k.cx) / k.fx * depth
    y = (v - k.cy) / k.fy * depth
    return np.stack(np.broadcast_arrays(x, y, depth), axis=-1)


def project(points, k: CameraIntrinsics):
    """Project camera-frame points to rounded pixel coordinates.

    Returns ``(u, v, in_bounds)`` as integer/boolean arrays so callers can
    tell out-of-image projections apart from in-image ones. Points with
    ``z <= 0`` raise :class:`BehindCameraError`.
    """
    pts = np.asarray(points, dtype=np.float64)
    z = pts[..., 2]
    if np.any(z <= 0) or not np.all(np.isfinite(pts)):
        raise BehindCameraError("point at or behind the camera")
    u = np.rint(k.fx * pts[..., 0] / z + k.cx).astype(np.int64)
    v = np.rint(k.fy * pts[..., 1] / z + k.cy).astype(np.int64)
    in_bounds = (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
    return u, v, in_bounds


def pixel_rays(u, v, k: CameraIntrinsics) -> np.ndarray:
    """Un-normalized viewing rays ((u-cx)/fx, (v-cy)/fy, 1), shape (..., 3)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    rx = (u - k.cx) / k.fx
    ry = (v - k.cy) / k.fy
    return np.stack(np.broadcast_arrays(rx, ry, np.ones_like(rx)), axis=-1)


def ray_plane_depths(u, v, k: CameraIntrinsics, plane: Plane):
    """Depths where the rays of pixels (u, v) meet ``plane``.

    Vectorized, non-raising variant: returns ``(depths, valid)`` where
    ``valid`` is False for near-parallel rays or non-positive intersections.
    """
    rays = pixel_rays(u, v, k)
    denom = rays @ plane.n
    valid = np.abs(denom) >= 1e-9
    depths = np.full(np.shape(denom), np.nan)
    np.divide(plane.d, denom, out=depths, where=valid)
    valid = valid & (depths > 0)
    depths = np.where(valid, depths, 0.0)
    return depths, valid


def ray_plane_depth(u, v, k: CameraIntrinsics, plane: Plane) -> float:
    """Depth along the pixel ray to ``plane`` (scalar, raising form)."""
    ray = pixel_rays(u, v, k).reshape(3)
    denom = float(ray @ plane.n)
    if abs(denom) < 1e-9:
        raise RayParallelError("viewing ray parallel to plane")
    depth = plane.d / denom
    if depth <= 0:
        raise BehindCameraError("plane intersection behind the camera")
    return depth


def connected_components(mask: np.ndarray, connectivity: int = 4):
    """Connected same-label components of a non-negative label image.

    Label 0 is background. Returns a list of ``(label, pixels)`` tuples
    where ``pixels`` is an (K, 2) int array of (row, col) coordinates;
    components are ordered by the raster position of their first pixel and
    pixels within a component are in raster order.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InvalidInputError("label image must be 2-D")
    if connectivity not in (4, 8):
        raise InvalidInputError("connectivity must be 4 or 8")
    if mask.size and mask.min() < 0:
        raise InvalidInputError("labels must be non-negative")
    comp, count = kernels.label_components(mask.astype(np.int32, copy=False), connectivity)
    out = []
    if count == 0:
        return out
    flat = comp.ravel()
    order = np.argsort(flat, kind="stable")
    order = order[flat[order] > 0]
    coords = np.column_stack(np.unravel_index(order, comp.shape)).astype(np.int64)
    starts = np.searchsorted(flat[order], np.arange(1, count + 1))
    ends = np.append(starts[1:], len(order))
    labels = mask.ravel()
    for cid in range(count):
        pix = coords[starts[cid]:ends[cid]]
        out.append((int(labels[order[starts[cid]]]), pix))
    return out
