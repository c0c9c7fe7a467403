import numpy as np
import pytest

from affdepth.cli import default_intrinsics
from affdepth.synth import SynthCupSpec, gen_synthetic


@pytest.fixture(scope="session")
def upright_scene():
    """Default upright cup, 100% object depth dropped, oracle layers."""
    return gen_synthetic(SynthCupSpec(), default_intrinsics(), seed=0)


@pytest.fixture(scope="session")
def tilted_scene():
    """Cup tipped away from a low camera: support visible, cavity hidden."""
    spec = SynthCupSpec(tilt_deg=60.0, tilt_azimuth_deg=90.0, height=0.08,
                        camera_eye=(0.0, -0.30, 0.18), camera_target=(0.0, 0.0, 0.05))
    return gen_synthetic(spec, default_intrinsics(), seed=0)


def varied_cup_spec(rng: np.random.Generator) -> SynthCupSpec:
    """Randomized upright cup used by the multi-scene comparisons."""
    r_out = rng.uniform(0.038, 0.052)
    return SynthCupSpec(
        outer_radius=r_out,
        inner_radius=r_out - rng.uniform(0.007, 0.009),
        height=rng.uniform(0.07, 0.11),
        camera_eye=(rng.uniform(-0.03, 0.03), rng.uniform(-0.31, -0.23),
                    rng.uniform(0.36, 0.46)),
        camera_target=(0.0, 0.0, rng.uniform(0.03, 0.06)),
    )
