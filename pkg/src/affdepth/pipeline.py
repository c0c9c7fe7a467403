"""Per-instance multi-step depth reconstruction.

For one detected instance: crop all layers, drop the unreliable object
depth, split the affordance mask into regions, build the region graph, and
reconstruct region by region. Regions touching the table (contact edges)
are solved first by global optimization anchored on reliable background
depth; a region reached across a depth-continuous edge is solved with its
neighbor's result as anchors; across a depth-discontinuous edge, a plane is
first fitted by RANSAC to the reconstructed side of the shared boundary and
the crossing pixels are seeded with ray-plane depths before solving. The
single-step baseline instead solves every object pixel in one system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .depthopt import EnergyWeights, SolveInfo, assemble_system, energy, solve
from .errors import InvalidInputError
from .geometry import CameraIntrinsics, Plane, backproject
from .images import BoundaryMap, DepthImage, NormalMap
from .planefit import (DEFAULT_INLIER_THRESHOLD, DEFAULT_ITERATIONS,
                       ransac_plane, ransac_plane_parallel, rim_depth)
from .regions import (CONTINUOUS, DEFAULT_MIN_AREA, DEFAULT_MIN_CONTACT_PIXELS,
                      RegionGraph, build_region_graph, extract_regions)

GLOBAL_OPT = "global-opt"
PLANE_THEN_GLOBAL = "plane-fit-then-global-opt"


@dataclass
class SceneInstance:
    """All layers of one instance crop plus crop-adjusted intrinsics."""

    bbox: tuple  # (u0, v0, u1, v1) in full-image pixels, exclusive max
    depth_raw: DepthImage
    mask: np.ndarray
    normals: NormalMap
    boundary: BoundaryMap
    intrinsics: CameraIntrinsics
    scores: np.ndarray | None = None
    volume: np.ndarray | None = None

    def __post_init__(self):
        shape = self.depth_raw.shape
        if (self.mask.shape != shape or self.normals.shape != shape
                or self.boundary.shape != shape):
            raise InvalidInputError("instance layers must share the crop size")


@dataclass
class ReconStep:
    region_ids: tuple
    method: str
    anchor_edges: tuple = ()  # (from_region, to_region) pairs driving this step
    flagged: bool = False  # unreachable from any contact-edge region


@dataclass
class ReconPlan:
    steps: list

    def covered_regions(self) -> list:
        out = []
        for s in self.steps:
            out.extend(s.region_ids)
        return out


@dataclass
class ReconConfig:
    weights: EnergyWeights = field(default_factory=EnergyWeights)
    tol: float = 1e-6
    max_iter: int | None = None
    pad: int = 8
    min_area: int = DEFAULT_MIN_AREA
    min_contact_pixels: int = DEFAULT_MIN_CONTACT_PIXELS
    contact_threshold: float = 0.5
    continuity_policy: str = "lookup"
    connectivity: int = 4
    ransac_iterations: int = DEFAULT_ITERATIONS
    inlier_threshold: float = DEFAULT_INLIER_THRESHOLD
    ransac_seed: int = 0
    table_normal: np.ndarray | None = None  # camera frame; estimated if None
    b_placement: str = "pixel"
    rim_occlusion_limit: float = 0.5  # rim seeds skipped at occluded pixels
    anchor_occlusion_limit: float = 0.5  # observed anchors used only below this


@dataclass
class StepDiagnostics:
    step: int
    region_ids: tuple
    method: str
    flagged: bool
    solver: SolveInfo | None = None
    plane: Plane | None = None
    plane_inliers: int = 0
    rim_seeds: int = 0
    n_rows: int = 0
    final_energy: float = 0.0
    notes: list = field(default_factory=list)


@dataclass
class InstanceDiagnostics:
    steps: list = field(default_factory=list)
    n_failed_pixels: int = 0
    notes: list = field(default_factory=list)


def crop_instance(depth_raw: DepthImage, mask: np.ndarray, normals: NormalMap,
                  boundary: BoundaryMap, k: CameraIntrinsics, bbox, pad: int = 8,
                  scores=None, volume=None) -> SceneInstance:
    """Crop all layers to ``bbox`` expanded by ``pad`` and clipped to the
    image; the principal point shifts by the crop origin."""
    u0, v0, u1, v1 = bbox
    u0, v0 = max(0, u0 - pad), max(0, v0 - pad)
    u1, v1 = min(k.width, u1 + pad), min(k.height, v1 + pad)
    if u0 >= u1 or v0 >= v1:
        raise InvalidInputError("bbox does not intersect the image")
    sl = np.s_[v0:v1, u0:u1]
    kc = k.shifted(u0, v0, u1 - u0, v1 - v0)
    vol = volume[:, v0:v1, u0:u1].copy() if volume is not None else None
    return SceneInstance(
        bbox=(u0, v0, u1, v1),
        depth_raw=DepthImage(depth_raw.values[sl].copy(), depth_raw.valid[sl].copy()),
        mask=mask[sl].copy(),
        normals=NormalMap(normals.vectors[sl].copy(), normals.valid[sl].copy()),
        boundary=BoundaryMap(boundary.probs[sl].copy()),
        intrinsics=kc,
        scores=scores,
        volume=vol,
    )


def mask_unreliable_depth(inst: SceneInstance) -> DepthImage:
    """Raw depth with validity cleared on every non-background pixel."""
    out = inst.depth_raw.copy()
    obj = inst.mask != 0
    out.valid[obj] = False
    out.values[~out.valid] = 0.0
    return out


def plan_steps(graph: RegionGraph) -> ReconPlan:
    """Breadth-first reconstruction order over the region graph.

    Step 1 jointly solves all regions with contact edges. Each region
    reached later becomes its own step whose method depends on the edge it
    was discovered across; regions unreachable from any contact-edge region
    are appended as flagged global-opt steps.
    """
    n = len(graph.nodes)
    steps = []
    visited = set()
    frontier = sorted(i for i in range(n) if graph.has_contact_edge[i])
    if frontier:
        steps.append(ReconStep(tuple(frontier), GLOBAL_OPT))
        visited.update(frontier)

    while frontier:
        discovered = {}
        for node in frontier:
            for other, edge in graph.neighbors(node):
                if other in visited or other in discovered:
                    continue
                discovered[other] = (node, edge)
        for other in sorted(discovered):
            node, edge = discovered[other]
            method = GLOBAL_OPT if edge.continuity == CONTINUOUS else PLANE_THEN_GLOBAL
            steps.append(ReconStep((other,), method, ((node, other),)))
            visited.add(other)
        frontier = sorted(discovered)

    for i in range(n):
        if i not in visited:
            steps.append(ReconStep((i,), GLOBAL_OPT, flagged=True))
    return ReconPlan(steps)


def _estimate_table_normal(inst: SceneInstance, working: DepthImage,
                           cfg: ReconConfig) -> np.ndarray | None:
    """Table normal from valid depth at contact-edge pixels, if any."""
    sel = (inst.boundary.contact >= cfg.contact_threshold) & working.valid
    vv, uu = np.nonzero(sel)
    if len(vv) < 3:
        return None
    pts = backproject(uu, vv, working.values[vv, uu], inst.intrinsics)
    try:
        plane, _ = ransac_plane(pts, cfg.inlier_threshold,
                                cfg.ransac_iterations, cfg.ransac_seed)
    except Exception:
        return None
    return plane.n


def _fit_rim_plane(inst: SceneInstance, working: DepthImage, step: ReconStep,
                   graph: RegionGraph, cfg: ReconConfig, diag: StepDiagnostics):
    """Fit the crossing plane for a discontinuous edge and seed the target
    side of the shared boundary with ray-plane depths."""
    k = inst.intrinsics
    src_pix = []
    dst_pix = []
    for from_id, to_id in step.anchor_edges:
        for edge in graph.edges:
            if {edge.i, edge.j} == {from_id, to_id}:
                src_pix.append(edge.side(from_id))
                dst_pix.append(edge.side(to_id))
    if not src_pix:
        diag.notes.append("no shared boundary found; falling back to global-opt")
        return None
    src = np.unique(np.concatenate(src_pix), axis=0)
    dst = np.unique(np.concatenate(dst_pix), axis=0)

    ok = working.valid[src[:, 0], src[:, 1]]
    src = src[ok]
    if len(src) < 3:
        diag.notes.append("fewer than 3 reconstructed boundary pixels; no plane")
        return None
    pts = backproject(src[:, 1], src[:, 0], working.values[src[:, 0], src[:, 1]], k)

    table_n = cfg.table_normal
    if table_n is None:
        table_n = _estimate_table_normal(inst, working, cfg)
    try:
        if table_n is not None:
            plane, inl = ransac_plane_parallel(pts, table_n, cfg.inlier_threshold,
                                               cfg.ransac_iterations, cfg.ransac_seed)
        else:
            plane, inl = ransac_plane(pts, cfg.inlier_threshold,
                                      cfg.ransac_iterations, cfg.ransac_seed)
    except Exception as exc:
        diag.notes.append(f"plane fit failed ({exc}); falling back to global-opt")
        return None
    diag.plane = plane
    diag.plane_inliers = int(inl.sum())

    # seed target-side pixels away from occlusion boundaries, only where
    # depth is actually missing
    occ = inst.boundary.occlusion[dst[:, 0], dst[:, 1]]
    dst = dst[(occ < cfg.rim_occlusion_limit)
              & ~working.valid[dst[:, 0], dst[:, 1]]]
    if len(dst) == 0:
        diag.notes.append("plane kept but no seeds (rim pixels occluded or "
                          "already observed)")
        return plane
    depths, valid = rim_depth(dst, plane, k)
    dst = dst[valid]
    depths = depths[valid]
    working.values[dst[:, 0], dst[:, 1]] = depths
    working.valid[dst[:, 0], dst[:, 1]] = True
    diag.rim_seeds = int(len(dst))
    return plane


def _solve_step(inst: SceneInstance, working: DepthImage, solve_mask: np.ndarray,
                cfg: ReconConfig, diag: StepDiagnostics):
    # observed depth on an occlusion boundary stays valid evidence for its
    # own pixel (data row) but is not a reliable anchor for its neighbors:
    # outside the solve mask such pixels are hidden from this step's system
    # (they stay valid in the output)
    reliable = working.valid & (
        solve_mask | (inst.boundary.occlusion < cfg.anchor_occlusion_limit))
    step_view = DepthImage(np.where(reliable, working.values, 0.0), reliable)
    system = assemble_system(step_view, solve_mask, inst.normals, inst.boundary,
                             inst.intrinsics, cfg.weights, cfg.b_placement)
    init = step_view.copy()
    fill = np.median(step_view.values[reliable]) if reliable.any() else 0.5
    init.values[solve_mask & ~reliable] = fill
    solved, info = solve(system, init, cfg.tol, cfg.max_iter)
    diag.solver = info
    diag.n_rows = system.n_rows
    diag.final_energy = energy(system, solved)

    # sanitize: solved pixels must be finite and positive
    out_v = solved.values[solve_mask]
    bad = ~np.isfinite(out_v) | (out_v <= 0)
    if bad.any():
        sel = np.zeros_like(solve_mask)
        sel[solve_mask] = bad
        solved.values[sel] = 0.0
        solved.valid[sel] = False
        diag.notes.append(f"{int(bad.sum())} solved pixels non-positive; flagged invalid")
    working.values[solve_mask] = solved.values[solve_mask]
    working.valid[solve_mask] = solved.valid[solve_mask]


def reconstruct_instance(inst: SceneInstance, cfg: ReconConfig | None = None):
    """Multi-step reconstruction of one instance crop.

    The instance's depth validity is taken at face value: callers feeding
    raw captures of transparent objects strip the object depth first with
    :func:`mask_unreliable_depth` (the scene-level driver does). Valid
    object depth acts as data anchors, so re-running on an already
    reconstructed instance reproduces it.

    Returns ``(DepthImage, ReconPlan, InstanceDiagnostics)``. Background
    pixels keep their raw depth; object pixels end up reconstructed or,
    where the solve failed to produce a positive depth, flagged invalid.
    """
    cfg = cfg or ReconConfig()
    working = inst.depth_raw.copy()
    regions = extract_regions(inst.mask, cfg.min_area, cfg.connectivity)
    graph = build_region_graph(regions, inst.boundary, cfg.contact_threshold,
                               cfg.continuity_policy, cfg.min_contact_pixels)
    plan = plan_steps(graph)
    diagnostics = InstanceDiagnostics()

    for step_idx, step in enumerate(plan.steps):
        diag = StepDiagnostics(step_idx, step.region_ids, step.method, step.flagged)
        diagnostics.steps.append(diag)
        solve_mask = np.zeros(inst.mask.shape, dtype=bool)
        for rid in step.region_ids:
            solve_mask |= graph.nodes[rid].mask
        if step.method == PLANE_THEN_GLOBAL:
            _fit_rim_plane(inst, working, step, graph, cfg, diag)
        try:
            _solve_step(inst, working, solve_mask, cfg, diag)
        except InvalidInputError as exc:
            diag.notes.append(f"solve skipped ({exc})")

    obj = inst.mask != 0
    diagnostics.n_failed_pixels = int((obj & ~working.valid).sum())
    return working, plan, diagnostics


def crop_from_scene(scene, info, pad: int = 8) -> SceneInstance:
    """Crop one manifest instance out of a loaded scene."""
    return crop_instance(scene.depth_raw, scene.mask, scene.normals, scene.boundary,
                         scene.intrinsics, info.bbox, pad=pad,
                         scores=info.scores, volume=scene.volume)


def reconstruct_scene(scene, cfg: ReconConfig | None = None, baseline: bool = False,
                      strip_object_depth: bool = True):
    """Reconstruct every manifest instance and merge into a full-size map.

    Raw depth on object pixels is unreliable for transparent objects and is
    stripped per instance before solving (disable for already-completed
    depth). Instances are processed in manifest order; on overlapping
    crops, later instances overwrite earlier ones on their object pixels.
    Returns ``(DepthImage, [(plan | None, InstanceDiagnostics), ...])``.
    """
    cfg = cfg or ReconConfig()
    merged = scene.depth_raw.copy()
    results = []
    for info in scene.instances:
        inst = crop_from_scene(scene, info, cfg.pad)
        if strip_object_depth:
            inst.depth_raw = mask_unreliable_depth(inst)
        if baseline:
            depth, diagnostics = single_step_baseline(inst, cfg)
            plan = None
        else:
            depth, plan, diagnostics = reconstruct_instance(inst, cfg)
        u0, v0, u1, v1 = inst.bbox
        obj = inst.mask != 0
        win_v, win_u = np.nonzero(obj)
        merged.values[v0 + win_v, u0 + win_u] = depth.values[win_v, win_u]
        merged.valid[v0 + win_v, u0 + win_u] = depth.valid[win_v, win_u]
        results.append((plan, diagnostics))
    return merged, results


def single_step_baseline(inst: SceneInstance, cfg: ReconConfig | None = None):
    """One global-optimization solve over all object pixels: no region
    ordering and no plane fitting. Depth validity is taken at face value,
    as in :func:`reconstruct_instance`. Returns ``(DepthImage, diagnostics)``."""
    cfg = cfg or ReconConfig()
    working = inst.depth_raw.copy()
    diagnostics = InstanceDiagnostics()
    diag = StepDiagnostics(0, (), GLOBAL_OPT, False)
    diagnostics.steps.append(diag)
    solve_mask = inst.mask != 0
    if solve_mask.any():
        try:
            _solve_step(inst, working, solve_mask, cfg, diag)
        except InvalidInputError as exc:
            diag.notes.append(f"solve skipped ({exc})")
    obj = inst.mask != 0
    diagnostics.n_failed_pixels = int((obj & ~working.valid).sum())
    return working, diagnostics
