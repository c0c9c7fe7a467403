"""Synthetic cup-on-table scenes with analytic ground truth.

An open cylindrical cup (outer wall, inner cavity wall, inner bottom, rim
annulus, outer bottom) stands on an infinite table plane. Every pixel ray
is intersected against these surfaces in closed form, which yields exact
depth, per-surface affordance labels, analytic normals, and boundary maps.
Transparency is simulated afterwards by dropping a seeded fraction of the
object depth and adding Gaussian noise to the survivors.

World frame: z up, table at ``z = table_height``; the camera is placed by
eye/target points with a horizontal-free look-at (camera y points down).
Surface labels follow the cup anatomy: inner wall and inner bottom are
``contain``, outer wall and rim annulus are ``wrap-grasp``, and the outer
bottom (visible only when the cup tips toward the camera) is ``support``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import CameraIntrinsics
from .images import BACKGROUND, CONTAIN, SUPPORT, WRAP_GRASP, BoundaryMap, DepthImage, NormalMap
from .sceneio import Scene, SceneInstanceInfo

OCCLUSION_JUMP = 0.01  # meters of depth difference that makes a boundary

# surface ids used while ray casting
_TABLE = 1
_OUTER_WALL = 2
_INNER_WALL = 3
_INNER_BOTTOM = 4
_RIM = 5
_OUTER_BOTTOM = 6

_SURFACE_LABEL = {
    _TABLE: BACKGROUND,
    _OUTER_WALL: WRAP_GRASP,
    _INNER_WALL: CONTAIN,
    _INNER_BOTTOM: CONTAIN,
    _RIM: WRAP_GRASP,
    _OUTER_BOTTOM: SUPPORT,
}


@dataclass(frozen=True)
class SynthCupSpec:
    """Cup geometry, pose, camera, and corruption parameters (meters)."""

    outer_radius: float = 0.045
    inner_radius: float = 0.037
    height: float = 0.09
    bottom_thickness: float = 0.008
    position: tuple = (0.0, 0.0)  # cup base center on the table (x, y)
    tilt_deg: float = 0.0  # tilt of the cup axis away from vertical
    tilt_azimuth_deg: float = 0.0  # world direction the cup tips toward
    camera_eye: tuple = (0.0, -0.26, 0.42)
    camera_target: tuple = (0.0, 0.0, 0.05)
    table_height: float = 0.0
    drop_fraction: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not (0 < self.inner_radius < self.outer_radius):
            raise InvalidInputError("need 0 < inner radius < outer radius")
        if self.height <= 0 or not (0 < self.bottom_thickness < self.height):
            raise InvalidInputError("need 0 < bottom thickness < height")
        if not (0.0 <= self.drop_fraction <= 1.0):
            raise InvalidInputError("drop fraction must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise sigma must be non-negative")


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Camera-to-world rotation: columns are camera x (right), y (down),
    z (forward) in world coordinates."""
    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm < 1e-9:
        raise InvalidInputError("camera eye and target coincide")
    z = fwd / norm
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(z @ up)) > 1.0 - 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack((x, y, z))


def _axis_rotation(tilt_deg: float, azimuth_deg: float) -> np.ndarray:
    """World-to-cup-frame alignment: cup z-axis tilted from world up by
    ``tilt_deg`` toward the azimuth direction."""
    t = np.deg2rad(tilt_deg)
    a = np.deg2rad(azimuth_deg)
    axis = np.array([np.sin(t) * np.cos(a), np.sin(t) * np.sin(a), np.cos(t)])
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 1.0 - 1e-12 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, axis)
    if np.linalg.norm(x) < 1e-12:
        x = np.array([1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(axis, x)
    return np.column_stack((x, y, axis))  # cup frame axes in world coords


def _candidate(t, cond):
    return np.where(cond & (t > 1e-9), t, np.inf)


def gen_synthetic(spec: SynthCupSpec, k: CameraIntrinsics, seed: int = 0) -> Scene:
    """Render a scene and corrupt the raw depth; deterministic given
    ``(spec, seed)``."""
    eye = np.asarray(spec.camera_eye, dtype=np.float64)
    target = np.asarray(spec.camera_target, dtype=np.float64)
    r_wc = _look_at(eye, target)

    cup_rot = _axis_rotation(spec.tilt_deg, spec.tilt_azimuth_deg)  # (3,3)
    axis = cup_rot[:, 2]
    # base center raised so a tilted rim still touches the table
    base_center = np.array([spec.position[0], spec.position[1],
                            spec.table_height + spec.outer_radius * abs(np.sin(np.deg2rad(spec.tilt_deg)))])

    # reject cameras inside the scene geometry
    if eye[2] <= spec.table_height:
        raise InvalidInputError("camera at or below the table plane")
    eye_k = cup_rot.T @ (eye - base_center)
    if np.hypot(eye_k[0], eye_k[1]) <= spec.outer_radius and not eye_k[2] > spec.height:
        raise InvalidInputError("camera inside the cup geometry")

    rays_c = k.ray_grid()  # (H, W, 3) camera frame
    d_w = rays_c @ r_wc.T  # world-frame directions
    h, w = k.height, k.width

    # everything below works in the cup frame
    o = cup_rot.T @ (eye - base_center)
    d = d_w @ cup_rot  # (H, W, 3)

    ox, oy, oz = o
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]

    height = spec.height
    base_t = spec.bottom_thickness
    r_out = spec.outer_radius
    r_in = spec.inner_radius

    with np.errstate(divide="ignore", invalid="ignore"):
        # table plane (world frame: z = table_height)
        t_table = (spec.table_height - eye[2]) / d_w[..., 2]
        t_table = _candidate(t_table, np.isfinite(t_table))

        # lateral cylinders
        a = dx * dx + dy * dy
        b = 2.0 * (ox * dx + oy * dy)

        def cylinder_roots(radius):
            c = ox * ox + oy * oy - radius * radius
            disc = b * b - 4.0 * a * c
            ok = (disc >= 0) & (a > 0)
            sq = np.sqrt(np.where(ok, disc, 0.0))
            t1 = (-b - sq) / (2.0 * a)
            t2 = (-b + sq) / (2.0 * a)
            return ok, t1, t2

        ok_out, t1_out, _ = cylinder_roots(r_out)
        z1_out = oz + t1_out * dz
        t_outer = _candidate(t1_out, ok_out & (z1_out >= 0.0) & (z1_out <= height))

        ok_in, _, t2_in = cylinder_roots(r_in)
        z2_in = oz + t2_in * dz
        t_inner = _candidate(t2_in, ok_in & (z2_in >= base_t) & (z2_in <= height))

        def disk(z_plane, r_min, r_max):
            t = (z_plane - oz) / dz
            xx = ox + t * dx
            yy = oy + t * dy
            rho2 = xx * xx + yy * yy
            cond = np.isfinite(t) & (rho2 >= r_min * r_min) & (rho2 <= r_max * r_max)
            return _candidate(t, cond)

        t_rim = disk(height, r_in, r_out)
        t_ibot = disk(base_t, 0.0, r_in)
        t_obot = disk(0.0, 0.0, r_out)

    cands = np.stack([t_table, t_outer, t_inner, t_ibot, t_rim, t_obot])
    surf_ids = np.array([_TABLE, _OUTER_WALL, _INNER_WALL, _INNER_BOTTOM, _RIM, _OUTER_BOTTOM])
    choice = np.argmin(cands, axis=0)
    t_hit = np.take_along_axis(cands, choice[None], axis=0)[0]
    visible = np.isfinite(t_hit)
    surface = np.where(visible, surf_ids[choice], 0)

    depth_gt_values = np.where(visible, t_hit, 0.0)
    mask = np.zeros((h, w), dtype=np.uint8)
    for sid, label in _SURFACE_LABEL.items():
        mask[surface == sid] = label

    # analytic normals (cup frame), oriented toward the camera
    t_fin = np.where(visible, t_hit, 0.0)
    hit_k = o[None, None, :] + t_fin[..., None] * d
    rho = np.hypot(hit_k[..., 0], hit_k[..., 1])
    rho = np.where(rho > 0, rho, 1.0)
    radial = np.zeros_like(hit_k)
    radial[..., 0] = hit_k[..., 0] / rho
    radial[..., 1] = hit_k[..., 1] / rho
    axial = np.zeros_like(hit_k)
    axial[..., 2] = 1.0

    normals_k = np.zeros_like(hit_k)
    normals_k[surface == _OUTER_WALL] = radial[surface == _OUTER_WALL]
    normals_k[surface == _INNER_WALL] = -radial[surface == _INNER_WALL]
    for sid in (_INNER_BOTTOM, _RIM, _OUTER_BOTTOM):
        normals_k[surface == sid] = axial[surface == sid]
    normals_w = normals_k @ cup_rot.T
    normals_w[surface == _TABLE] = np.array([0.0, 0.0, 1.0])
    normals_c = normals_w @ r_wc  # world -> camera
    # orient against the viewing ray
    flip = np.einsum("ijk,ijk->ij", normals_c, rays_c) > 0
    normals_c[flip] *= -1.0
    norms = np.linalg.norm(normals_c, axis=-1)
    nvalid = visible & (norms > 1e-9)
    normals_c = np.divide(normals_c, np.where(norms > 0, norms, 1.0)[..., None])
    normals_c[~nvalid] = 0.0
    normal_map = NormalMap(normals_c, nvalid)

    # boundary maps from the ground-truth depth
    occ = _depth_jumps(depth_gt_values, visible)
    contact = _contact_edges(depth_gt_values, mask != 0, surface == _TABLE)
    probs = np.zeros((h, w, 3))
    probs[..., 1] = occ
    probs[..., 2] = contact
    probs[..., 0] = 1.0 - np.maximum(occ, contact)
    boundary = BoundaryMap(probs)

    depth_gt = DepthImage(depth_gt_values, visible)

    # corruption: seeded drop of object depth plus Gaussian noise
    rng = np.random.default_rng(seed)
    raw_values = depth_gt_values.copy()
    raw_valid = visible.copy()
    obj = mask != 0
    ov, ou = np.nonzero(obj)
    dropped = rng.random(len(ov)) < spec.drop_fraction
    raw_valid[ov[dropped], ou[dropped]] = False
    keep = ~dropped
    if spec.noise_sigma > 0 and keep.any():
        noise = rng.normal(0.0, spec.noise_sigma, size=int(keep.sum()))
        raw_values[ov[keep], ou[keep]] += noise
    raw_values[~raw_valid] = 0.0
    depth_raw = DepthImage(raw_values, raw_valid)

    # one-hot affordance volume and per-class presence scores
    volume = np.zeros((4, h, w))
    for c in range(4):
        volume[c][mask == c] = 1.0
    scores = np.array([float((mask == c).sum() > 0) for c in (1, 2, 3)])

    if obj.any():
        vs, us = np.nonzero(obj)
        bbox = (int(us.min()), int(vs.min()), int(us.max()) + 1, int(vs.max()) + 1)
        instances = [SceneInstanceInfo(bbox, scores)]
    else:
        instances = []

    return Scene(k, depth_raw, mask, normal_map, boundary, instances,
                 depth_gt=depth_gt, volume=volume)


def _depth_jumps(depth: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """1.0 where any 4-neighbor ground-truth depth differs by more than
    OCCLUSION_JUMP (both sides of a jump are marked)."""
    occ = np.zeros(depth.shape, dtype=bool)
    for sl_a, sl_b in ((np.s_[:, :-1], np.s_[:, 1:]), (np.s_[:-1, :], np.s_[1:, :])):
        both = valid[sl_a] & valid[sl_b]
        jump = both & (np.abs(depth[sl_a] - depth[sl_b]) > OCCLUSION_JUMP)
        occ[sl_a] |= jump
        occ[sl_b] |= jump
        # a valid pixel next to a sky pixel is also an occlusion boundary
        edge_a = valid[sl_a] & ~valid[sl_b]
        edge_b = valid[sl_b] & ~valid[sl_a]
        occ[sl_a] |= edge_a
        occ[sl_b] |= edge_b
    return occ.astype(np.float64)


def _contact_edges(depth: np.ndarray, obj: np.ndarray, table: np.ndarray) -> np.ndarray:
    """1.0 on object pixels 4-adjacent to a table pixel with continuous
    depth (the silhouette against far table stays an occlusion edge)."""
    contact = np.zeros(depth.shape, dtype=bool)
    for sl_a, sl_b in ((np.s_[:, :-1], np.s_[:, 1:]), (np.s_[:-1, :], np.s_[1:, :])):
        close = np.abs(depth[sl_a] - depth[sl_b]) <= OCCLUSION_JUMP
        contact[sl_a] |= obj[sl_a] & table[sl_b] & close
        contact[sl_b] |= obj[sl_b] & table[sl_a] & close
    return contact.astype(np.float64)
