"""Benchmark the compiled kernels against the numpy fallbacks.

Runs the conjugate-gradient completion solve on a synthetic cup system and
multi-label component labeling on random masks, timing both backends in
the same process. Usage::

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from affdepth import kernels
from affdepth.cli import default_intrinsics
from affdepth.depthopt import EnergyWeights, assemble_system
from affdepth.pipeline import ReconConfig, crop_from_scene, mask_unreliable_depth
from affdepth.synth import SynthCupSpec, gen_synthetic


def _time(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_cg():
    scene = gen_synthetic(SynthCupSpec(), default_intrinsics(320, 240), seed=0)
    cfg = ReconConfig()
    inst = crop_from_scene(scene, scene.instances[0], cfg.pad)
    inst.depth_raw = mask_unreliable_depth(inst)
    system = assemble_system(inst.depth_raw, inst.mask != 0, inst.normals,
                             inst.boundary, inst.intrinsics, cfg.weights)
    a = system.matrix
    x0 = np.full(system.n_unknowns, 0.5)
    args = (a.indptr, a.indices, a.data, system.weights, system.b, x0, 1e-6,
            10 * system.n_unknowns)
    rows = []
    t_py, r_py = _time(lambda: kernels._py_cg_normal(*args))
    rows.append(("cg_normal (pure)", t_py, f"{r_py[1]} iters"))
    if kernels.NATIVE_AVAILABLE:
        t_nat, r_nat = _time(lambda: kernels._native.cg_normal(*args))
        rows.append(("cg_normal (native)", t_nat, f"{r_nat[1]} iters"))
        rows.append(("cg speedup", t_py / t_nat, "x"))
    print(f"system: {system.n_rows} rows, {system.n_unknowns} unknowns")
    return rows


def bench_labeling():
    rng = np.random.default_rng(0)
    mask = rng.integers(0, 4, size=(480, 640)).astype(np.int32)
    rows = []
    t_py, (comp_py, n_py) = _time(lambda: kernels._py_label_components(mask, 4))
    rows.append(("label_components (pure)", t_py, f"{n_py} components"))
    if kernels.NATIVE_AVAILABLE:
        t_nat, (comp_nat, n_nat) = _time(
            lambda: kernels._native.label_components(mask, 4))
        assert n_nat == n_py and (comp_nat == comp_py).all()
        rows.append(("label_components (native)", t_nat, f"{n_nat} components"))
        rows.append(("labeling speedup", t_py / t_nat, "x"))
    return rows


def main():
    print(f"active backend: {kernels.backend_name()} "
          f"(native available: {kernels.NATIVE_AVAILABLE})")
    rows = bench_cg() + bench_labeling()
    print(f"{'benchmark':<28}{'time [s] / factor':>20}  note")
    for name, value, note in rows:
        print(f"{name:<28}{value:>20.4f}  {note}")


if __name__ == "__main__":
    main()
