"""SE(3) proposals for pouring, picking, and stacking.

All constructions share two point-level primitives: a rim pose (mean of
boundary points, z-axis from the fitted rim plane) and a patch pose (mean
of region points, z-axis from the surface normal at the region center).
The image-level functions back-project region pixels and delegate, so the
geometric properties (translation equivariance, orthonormality) live in
the point-level functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InsufficientDataError
from .geometry import CameraIntrinsics, backproject
from .images import CLASS_NAMES, CONTAIN, SUPPORT, DepthImage, NormalMap
from .planefit import fit_plane_svd
from .regions import Region

_CAMERA_FORWARD = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Pose:
    """Rigid pose in the camera frame; columns of ``rotation`` are the tool
    x, y, z axes."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise DegenerateInputError("rotation must be 3x3")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1) > 1e-9:
            raise DegenerateInputError("rotation must be orthonormal with det +1")
        r = r.copy()
        r.setflags(write=False)
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def z_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def y_axis(self) -> np.ndarray:
        return self.rotation[:, 1]


@dataclass(frozen=True)
class ProposalConfig:
    """World-up direction (camera frame), the pour container offset, and
    the tool-y convention (down the vertical plane by default; the
    alternative reading points it up)."""

    up: np.ndarray = None
    container_length_offset: float = 0.0
    y_toward_up: bool = False

    def __post_init__(self):
        up = self.up if self.up is not None else np.array([0.0, -1.0, 0.0])
        up = np.asarray(up, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(up)
        if abs(norm - 1.0) > 1e-6:
            raise DegenerateInputError("up vector must be unit length")
        up = up.copy()
        up.setflags(write=False)
        object.__setattr__(self, "up", up)


def frame_from_z(z_axis: np.ndarray, up: np.ndarray,
                 y_toward_up: bool = False) -> np.ndarray:
    """Right-handed orthonormal frame with the given z-axis.

    The y-axis lies in the plane spanned by z and ``up``, by default with
    y . up <= 0 (the tool y points down the vertical plane; pass
    ``y_toward_up`` for the opposite convention); x = y x z.
    """
    z = np.asarray(z_axis, dtype=np.float64).reshape(3)
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64).reshape(3)
    if abs(float(z @ up)) >= 1.0 - 1e-9:
        raise DegenerateInputError("z-axis parallel to the up reference")
    y = up - (up @ z) * z
    if not y_toward_up:
        y = -y
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    return np.column_stack((x, y, z))


def _frame_with_fallback(z_axis, cfg: ProposalConfig) -> np.ndarray:
    """frame_from_z with a perpendicular fallback reference when z || up."""
    try:
        return frame_from_z(z_axis, cfg.up, cfg.y_toward_up)
    except DegenerateInputError:
        z = np.asarray(z_axis, dtype=np.float64).reshape(3)
        fallback = np.array([1.0, 0.0, 0.0])
        if abs(float(z @ fallback)) >= 1.0 - 1e-9:
            fallback = np.array([0.0, 1.0, 0.0])
        return frame_from_z(z_axis, fallback, cfg.y_toward_up)


def _toward_camera(n: np.ndarray) -> np.ndarray:
    """Flip ``n`` so it points back at the camera (negative z component)."""
    return -n if float(n @ _CAMERA_FORWARD) > 0 else n


def pour_pose_from_points(boundary_points: np.ndarray,
                          cfg: ProposalConfig | None = None) -> Pose:
    """Pose over a container opening given its boundary points.

    Translation: mean of the points, shifted by the container-length offset
    along the tool y-axis. Rotation: z-axis normal to the total-least-
    squares rim plane, oriented toward the camera.
    """
    cfg = cfg or ProposalConfig()
    pts = np.asarray(boundary_points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise InsufficientDataError("need at least 3 boundary points")
    plane = fit_plane_svd(pts)
    z = _toward_camera(plane.n)
    rot = _frame_with_fallback(z, cfg)
    t = pts.mean(axis=0) + cfg.container_length_offset * rot[:, 1]
    return Pose(rot, t)


def patch_pose_from_points(points: np.ndarray, center_normal: np.ndarray,
                           cfg: ProposalConfig | None = None) -> Pose:
    """Pose onto a surface patch: translation at the point mean, z-axis
    along the center-pixel normal oriented toward the camera."""
    cfg = cfg or ProposalConfig()
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise InsufficientDataError("empty point set")
    z = _toward_camera(np.asarray(center_normal, dtype=np.float64).reshape(3))
    rot = _frame_with_fallback(z, cfg)
    return Pose(rot, pts.mean(axis=0))


def _region_points(pixels: np.ndarray, depth: DepthImage, k: CameraIntrinsics,
                   minimum: int, what: str) -> np.ndarray:
    ok = depth.valid[pixels[:, 0], pixels[:, 1]]
    pix = pixels[ok]
    if len(pix) < minimum:
        raise InsufficientDataError(
            f"only {len(pix)} of {len(pixels)} {what} pixels have valid depth")
    return backproject(pix[:, 1], pix[:, 0], depth.values[pix[:, 0], pix[:, 1]], k)


def _center_pixel_normal(region: Region, depth: DepthImage,
                         normals: NormalMap) -> np.ndarray:
    """Normal at the region's center pixel: the usable pixel nearest the
    pixel centroid."""
    usable = (depth.valid[region.pixels[:, 0], region.pixels[:, 1]]
              & normals.valid[region.pixels[:, 0], region.pixels[:, 1]])
    pix = region.pixels[usable]
    if len(pix) == 0:
        raise InsufficientDataError("no region pixel has both depth and a normal")
    centroid = region.pixels.mean(axis=0)
    center = pix[np.argmin(((pix - centroid) ** 2).sum(axis=1))]
    return normals.vectors[center[0], center[1]]


def pour_proposal(contain_region: Region, depth: DepthImage, k: CameraIntrinsics,
                  cfg: ProposalConfig | None = None) -> Pose:
    """Pouring pose from the boundary of a contain region."""
    pts = _region_points(contain_region.boundary, depth, k, 3, "boundary")
    return pour_pose_from_points(pts, cfg)


def pick_proposal(wrap_region: Region, depth: DepthImage, normals: NormalMap,
                  k: CameraIntrinsics, cfg: ProposalConfig | None = None) -> Pose:
    """Picking pose from a wrap-grasp region."""
    pts = _region_points(wrap_region.pixels, depth, k, 1, "region")
    normal = _center_pixel_normal(wrap_region, depth, normals)
    return patch_pose_from_points(pts, normal, cfg)


def stack_proposal(source_role: str, regions: list, depth: DepthImage,
                   normals: NormalMap, k: CameraIntrinsics,
                   cfg: ProposalConfig | None = None) -> Pose:
    """Stacking pose for the object providing 'contain' (pour construction,
    zero offset) or 'support' (pick construction on the support region)."""
    cfg = cfg or ProposalConfig()
    if source_role == "has_contain":
        region = _largest_of_class(regions, CONTAIN)
        return pour_pose_from_points(
            _region_points(region.boundary, depth, k, 3, "boundary"),
            ProposalConfig(cfg.up, 0.0, cfg.y_toward_up))
    if source_role == "has_support":
        region = _largest_of_class(regions, SUPPORT)
        pts = _region_points(region.pixels, depth, k, 1, "region")
        normal = _center_pixel_normal(region, depth, normals)
        return patch_pose_from_points(pts, normal, cfg)
    raise InsufficientDataError("source_role must be 'has_contain' or 'has_support'")


def _largest_of_class(regions: list, class_id: int) -> Region:
    cands = [r for r in regions if r.class_id == class_id]
    if not cands:
        raise InsufficientDataError(f"no {CLASS_NAMES[class_id]} region present")
    return max(cands, key=lambda r: r.area)
