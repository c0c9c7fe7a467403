"""Command line interface.

Subcommands: gen-synth, reconstruct, evaluate, compare-baseline, fuse, and
propose. Exit code 0 on success, 1 on a diagnosed failure, 2 on usage
errors.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .affordance import fuse_affordance, softmax_mask
from .depthopt import EnergyWeights
from .errors import AffdepthError
from .geometry import CameraIntrinsics
from .images import CLASS_NAMES, CONTAIN, WRAP_GRASP, DepthImage
from .metrics import DepthMetrics, evaluate_depth
from .pipeline import ReconConfig, reconstruct_scene
from .proposals import (ProposalConfig, pick_proposal, pour_proposal, stack_proposal)
from .regions import extract_regions
from .sceneio import (Scene, encode_volume, load_scene, read_depth_png,
                      save_scene, write_depth_png, _save_png)
from .synth import SynthCupSpec, gen_synthetic

_METRIC_HEADER = f"{'region':<12}{'RMSE':>9}{'Rel':>9}{'MAE':>9}" \
                 f"{'d1.05':>9}{'d1.10':>9}{'d1.25':>9}{'px':>8}"


def _metrics_line(name: str, m: DepthMetrics) -> str:
    return (f"{name:<12}{m.rmse:>9.3f}{m.rel:>9.3f}{m.mae:>9.3f}"
            f"{m.delta_105:>9.2f}{m.delta_110:>9.2f}{m.delta_125:>9.2f}"
            f"{m.n_pixels:>8d}")


def _region_metrics(pred: DepthImage, scene: Scene):
    """Metrics over all object pixels and per affordance region."""
    rows = []
    obj = scene.mask != 0
    if obj.any():
        rows.append(("all", evaluate_depth(pred, scene.depth_gt, obj)))
    for cid in (1, 2, 3):
        sel = scene.mask == cid
        if sel.any():
            rows.append((CLASS_NAMES[cid], evaluate_depth(pred, scene.depth_gt, sel)))
    return rows


def _print_metrics(rows, out=None):
    lines = [_METRIC_HEADER]
    lines += [_metrics_line(name, m) for name, m in rows]
    lines.append("# Rel is the median relative error")
    text = "\n".join(lines)
    click.echo(text)
    if out is not None:
        Path(out).write_text(text + "\n")


def _recon_config(lambda_d, lambda_s, lambda_n, ransac_iters, inlier_mm,
                  continuity, connectivity, seed) -> ReconConfig:
    return ReconConfig(
        weights=EnergyWeights(lambda_d, lambda_s, lambda_n),
        ransac_iterations=ransac_iters,
        inlier_threshold=inlier_mm / 1000.0,
        continuity_policy=continuity,
        connectivity=connectivity,
        ransac_seed=seed,
    )


def _render_report(results) -> str:
    lines = []
    for idx, (plan, diag) in enumerate(results):
        lines.append(f"instance {idx}")
        for step in diag.steps:
            lines.append(f"  step {step.step}: regions={list(step.region_ids)} "
                         f"method={step.method}"
                         + (" flagged" if step.flagged else ""))
            if step.plane is not None:
                n = step.plane.n
                lines.append(f"    plane: n=({n[0]:.6f}, {n[1]:.6f}, {n[2]:.6f}) "
                             f"d={step.plane.d:.6f} inliers={step.plane_inliers} "
                             f"rim_seeds={step.rim_seeds}")
            if step.solver is not None:
                s = step.solver
                lines.append(f"    solver: iters={s.iterations} "
                             f"relres={s.relative_residual:.3e} "
                             f"converged={s.converged} "
                             f"unconstrained={s.n_unconstrained}")
                lines.append(f"    rows={step.n_rows} energy={step.final_energy:.6e}")
            for note in step.notes:
                lines.append(f"    note: {note}")
        lines.append(f"  failed_pixels={diag.n_failed_pixels}")
    return "\n".join(lines) + "\n"


def _pose_lines(name: str, pose) -> list:
    r = pose.rotation.reshape(-1)
    t = pose.translation
    return [f"{name} rotation: " + " ".join(f"{v:.9f}" for v in r),
            f"{name} translation: " + " ".join(f"{v:.9f}" for v in t)]


class _Group(click.Group):
    """Click group that turns package errors into clean exit-1 diagnostics."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except AffdepthError as exc:
            raise click.ClickException(str(exc)) from exc


@click.group(cls=_Group)
def main():
    """Affordance-guided depth reconstruction for transparent objects."""


@main.command("gen-synth")
@click.option("--out", required=True, type=click.Path(), help="output scene directory")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--drop", default=1.0, type=float, show_default=True,
              help="fraction of object depth dropped")
@click.option("--noise", default=0.0, type=float, show_default=True,
              help="sigma of depth noise on surviving object pixels [m]")
@click.option("--tilt", default=0.0, type=float, show_default=True,
              help="cup tilt in degrees")
@click.option("--width", default=160, type=int, show_default=True)
@click.option("--height", default=120, type=int, show_default=True)
def gen_synth_cmd(out, seed, drop, noise, tilt, width, height):
    """Generate a synthetic cup scene with analytic ground truth."""
    k = default_intrinsics(width, height)
    spec = SynthCupSpec(drop_fraction=drop, noise_sigma=noise, tilt_deg=tilt)
    scene = gen_synthetic(spec, k, seed)
    manifest = save_scene(scene, Path(out) / "scene.json")
    click.echo(f"wrote {manifest}")


def default_intrinsics(width: int = 160, height: int = 120) -> CameraIntrinsics:
    f = 170.0 * width / 160.0
    return CameraIntrinsics(f, f, width / 2.0, height / 2.0, width, height)


_COMMON = [
    click.option("--lambda-d", default=1000.0, type=float, show_default=True),
    click.option("--lambda-s", default=0.001, type=float, show_default=True),
    click.option("--lambda-n", default=1.0, type=float, show_default=True),
    click.option("--ransac-iters", default=500, type=int, show_default=True),
    click.option("--inlier-mm", default=5.0, type=float, show_default=True),
    click.option("--continuity", default="lookup", show_default=True,
                 type=click.Choice(["lookup", "boundary"])),
    click.option("--connectivity", default=4, show_default=True,
                 type=click.Choice(["4", "8"]), callback=lambda c, p, v: int(v)),
    click.option("--seed", default=0, type=int, show_default=True),
]


def _with_common(f):
    for opt in reversed(_COMMON):
        f = opt(f)
    return f


@main.command("reconstruct")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--baseline", is_flag=True, help="single-step reconstruction")
@_with_common
def reconstruct_cmd(scene_path, out, baseline, lambda_d, lambda_s, lambda_n,
                    ransac_iters, inlier_mm, continuity, connectivity, seed):
    """Reconstruct object depth for every instance of a scene."""
    scene = load_scene(scene_path)
    cfg = _recon_config(lambda_d, lambda_s, lambda_n, ransac_iters, inlier_mm,
                        continuity, connectivity, seed)
    merged, results = reconstruct_scene(scene, cfg, baseline=baseline)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_depth_png(out_dir / "depth_pred.png", merged)
    (out_dir / "report.txt").write_text(_render_report(results))
    click.echo(f"wrote {out_dir / 'depth_pred.png'}")


@main.command("evaluate")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--pred", required=True, type=click.Path(),
              help="predicted depth PNG (16-bit millimeters)")
@click.option("--out", default=None, type=click.Path(), help="also write the table here")
def evaluate_cmd(scene_path, pred, out):
    """Depth metrics per affordance region and overall."""
    scene = load_scene(scene_path)
    if scene.depth_gt is None:
        raise AffdepthError("scene has no ground-truth depth layer")
    pred_depth = read_depth_png(Path(pred))
    if pred_depth.shape != scene.shape:
        raise AffdepthError("prediction size does not match the scene")
    _print_metrics(_region_metrics(pred_depth, scene), out)


@main.command("compare-baseline")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--out", default=None, type=click.Path())
@_with_common
def compare_baseline_cmd(scene_path, out, lambda_d, lambda_s, lambda_n,
                         ransac_iters, inlier_mm, continuity, connectivity, seed):
    """Run multi-step and single-step modes and print per-region deltas."""
    scene = load_scene(scene_path)
    if scene.depth_gt is None:
        raise AffdepthError("scene has no ground-truth depth layer")
    cfg = _recon_config(lambda_d, lambda_s, lambda_n, ransac_iters, inlier_mm,
                        continuity, connectivity, seed)
    multi, _ = reconstruct_scene(scene, cfg, baseline=False)
    single, _ = reconstruct_scene(scene, cfg, baseline=True)
    rows_m = dict(_region_metrics(multi, scene))
    rows_s = dict(_region_metrics(single, scene))
    lines = [f"{'region':<12}{'RMSE multi':>12}{'RMSE single':>12}{'delta':>10}"]
    for name in rows_m:
        m, s = rows_m[name].rmse, rows_s[name].rmse
        lines.append(f"{name:<12}{m:>12.3f}{s:>12.3f}{m - s:>10.3f}")
    text = "\n".join(lines)
    click.echo(text)
    if out is not None:
        Path(out).write_text(text + "\n")


@main.command("fuse")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def fuse_cmd(scene_path, out):
    """Fuse classification scores into the affordance volume and write the
    fused volume and its argmax mask."""
    scene = load_scene(scene_path)
    if scene.volume is None:
        raise AffdepthError("scene has no affordance volume layer")
    fused = scene.volume.copy()
    for info in scene.instances:
        u0, v0, u1, v1 = info.bbox
        fused[:, v0:v1, u0:u1] = fuse_affordance(fused[:, v0:v1, u0:u1], info.scores)
    _, mask = softmax_mask(fused)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.save(out_dir / "volume_fused.npy", encode_volume(fused))
    _save_png(out_dir / "mask_fused.png", mask)
    click.echo(f"wrote {out_dir / 'mask_fused.png'}")


@main.command("propose")
@click.argument("task", type=click.Choice(["pick", "pour", "stack"]))
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--depth", "depth_path", default=None, type=click.Path(),
              help="reconstructed depth PNG; defaults to the raw scene depth")
@click.option("--role", default="has_contain",
              type=click.Choice(["has_contain", "has_support"]),
              help="which affordance the stacked object provides")
@click.option("--offset", default=0.0, type=float, show_default=True,
              help="container length offset for pouring [m]")
@click.option("--out", default=None, type=click.Path())
def propose_cmd(task, scene_path, depth_path, role, offset, out):
    """Print an SE(3) proposal for the requested task."""
    scene = load_scene(scene_path)
    depth = scene.depth_raw
    if depth_path is not None:
        depth = read_depth_png(Path(depth_path))
        if depth.shape != scene.shape:
            raise AffdepthError("depth size does not match the scene")
    regions = extract_regions(scene.mask)
    cfg = ProposalConfig(container_length_offset=offset)
    if task == "pour":
        region = _require_region(regions, CONTAIN)
        pose = pour_proposal(region, depth, scene.intrinsics, cfg)
    elif task == "pick":
        region = _require_region(regions, WRAP_GRASP)
        pose = pick_proposal(region, depth, scene.normals, scene.intrinsics, cfg)
    else:
        pose = stack_proposal(role, regions, depth, scene.normals,
                              scene.intrinsics, cfg)
    lines = _pose_lines(task, pose)
    for line in lines:
        click.echo(line)
    if out is not None:
        Path(out).write_text("\n".join(lines) + "\n")


def _require_region(regions, class_id):
    cands = [r for r in regions if r.class_id == class_id]
    if not cands:
        raise AffdepthError(f"no {CLASS_NAMES[class_id]} region in the scene")
    return max(cands, key=lambda r: r.area)


if __name__ == "__main__":
    sys.exit(main())
