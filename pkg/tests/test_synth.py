import numpy as np
import pytest

from affdepth.errors import InvalidInputError
from affdepth.geometry import CameraIntrinsics, backproject
from affdepth.images import BACKGROUND, CONTAIN, SUPPORT, WRAP_GRASP
from affdepth.synth import SynthCupSpec, gen_synthetic
from affdepth.cli import default_intrinsics


class TestSpecValidation:
    def test_radius_ordering(self):
        with pytest.raises(InvalidInputError):
            SynthCupSpec(outer_radius=0.03, inner_radius=0.04)

    def test_drop_fraction_range(self):
        with pytest.raises(InvalidInputError):
            SynthCupSpec(drop_fraction=1.5)

    def test_camera_below_table(self):
        spec = SynthCupSpec(camera_eye=(0.0, -0.2, -0.1))
        with pytest.raises(InvalidInputError):
            gen_synthetic(spec, default_intrinsics(), 0)

    def test_camera_inside_cup(self):
        spec = SynthCupSpec(camera_eye=(0.0, 0.0, 0.05))
        with pytest.raises(InvalidInputError):
            gen_synthetic(spec, default_intrinsics(), 0)


class TestRendering:
    def test_normals_unit_length(self, upright_scene):
        n = upright_scene.normals
        norms = np.linalg.norm(n.vectors[n.valid], axis=-1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_fronto_axial_center_depth(self):
        # camera straight above the cup axis: the center ray hits the inner
        # bottom at eye height minus bottom thickness
        spec = SynthCupSpec(camera_eye=(0.0, 0.0, 0.4), camera_target=(0.0, 0.0, 0.0),
                            tilt_deg=0.0)
        k = default_intrinsics()
        scene = gen_synthetic(spec, k, 0)
        v, u = int(round(k.cy)), int(round(k.cx))
        expected = 0.4 - spec.bottom_thickness
        assert scene.depth_gt.values[v, u] == pytest.approx(expected, abs=1e-9)
        assert scene.mask[v, u] == CONTAIN

    def test_finite_difference_normals_match(self, upright_scene):
        scene = upright_scene
        k = scene.intrinsics
        gt = scene.depth_gt
        occ = scene.boundary.occlusion > 0
        # keep pixels whose 4-neighborhood is interior and jump-free
        safe = gt.valid & ~occ & (scene.mask != 0)
        vv, uu = np.nonzero(safe)
        checked = 0
        worst = 0.0
        for v, u in zip(vv, uu):
            if v < 1 or u < 1 or v >= gt.shape[0] - 1 or u >= gt.shape[1] - 1:
                continue
            nbhd = [(v - 1, u), (v + 1, u), (v, u - 1), (v, u + 1)]
            if not all(gt.valid[p] and not occ[p] and scene.mask[p] == scene.mask[v, u]
                       for p in nbhd):
                continue
            # skip creases between smooth pieces (wall/rim/bottom junctions)
            n0 = scene.normals.vectors[v, u]
            if any(scene.normals.vectors[p] @ n0 < np.cos(np.radians(5.0))
                   for p in nbhd):
                continue
            px = backproject(u + 1, v, gt.values[v, u + 1], k)
            mx = backproject(u - 1, v, gt.values[v, u - 1], k)
            py = backproject(u, v + 1, gt.values[v + 1, u], k)
            my = backproject(u, v - 1, gt.values[v - 1, u], k)
            n_fd = np.cross(px - mx, py - my)
            norm = np.linalg.norm(n_fd)
            if norm < 1e-12:
                continue
            n_fd /= norm
            if n_fd @ np.array([0.0, 0.0, 1.0]) > 0:
                n_fd = -n_fd
            ang = np.degrees(np.arccos(np.clip(
                abs(n_fd @ scene.normals.vectors[v, u]), 0, 1)))
            worst = max(worst, ang)
            checked += 1
        assert checked > 100
        assert worst <= 2.0

    def test_labels_match_cup_anatomy(self, upright_scene, tilted_scene):
        up = upright_scene.mask
        assert (up == CONTAIN).sum() > 0
        assert (up == WRAP_GRASP).sum() > 0
        assert (up == SUPPORT).sum() == 0  # bottom hidden when upright
        tl = tilted_scene.mask
        assert (tl == SUPPORT).sum() > 0
        assert (tl == WRAP_GRASP).sum() > 0

    def test_deterministic_given_seed(self):
        k = default_intrinsics()
        a = gen_synthetic(SynthCupSpec(drop_fraction=0.4, noise_sigma=0.002), k, 11)
        b = gen_synthetic(SynthCupSpec(drop_fraction=0.4, noise_sigma=0.002), k, 11)
        np.testing.assert_array_equal(a.depth_raw.values, b.depth_raw.values)
        np.testing.assert_array_equal(a.depth_raw.valid, b.depth_raw.valid)

    def test_corruption_varies_with_seed(self):
        k = default_intrinsics()
        a = gen_synthetic(SynthCupSpec(drop_fraction=0.4), k, 1)
        b = gen_synthetic(SynthCupSpec(drop_fraction=0.4), k, 2)
        assert (a.depth_raw.valid != b.depth_raw.valid).any()

    def test_full_drop_removes_all_object_depth(self, upright_scene):
        obj = upright_scene.mask != 0
        assert not upright_scene.depth_raw.valid[obj].any()
        bg = (upright_scene.mask == 0) & upright_scene.depth_gt.valid
        assert upright_scene.depth_raw.valid[bg].all()


class TestBoundaryMaps:
    def test_contact_only_on_object_next_to_table(self, upright_scene):
        scene = upright_scene
        contact = scene.boundary.contact > 0.5
        obj = scene.mask != 0
        assert contact.sum() >= 5
        assert (contact & ~obj).sum() == 0
        table = (scene.mask == 0) & scene.depth_gt.valid
        vs, us = np.nonzero(contact)
        h, w = scene.mask.shape
        for v, u in zip(vs, us):
            nbhd = [(v + dv, u + du) for dv, du in ((0, 1), (0, -1), (1, 0), (-1, 0))
                    if 0 <= v + dv < h and 0 <= u + du < w]
            assert any(table[p] for p in nbhd)

    def test_discontinuous_pairs_flagged(self, upright_scene):
        scene = upright_scene
        gt = scene.depth_gt
        occ = scene.boundary.occlusion > 0.5
        # every horizontally adjacent valid pair with a >1cm jump is flagged
        both = gt.valid[:, :-1] & gt.valid[:, 1:]
        jump = both & (np.abs(gt.values[:, :-1] - gt.values[:, 1:]) > 0.01)
        assert (jump & ~(occ[:, :-1] | occ[:, 1:])).sum() == 0
        assert occ.sum() > 0

    def test_rim_edge_overlaps_occlusion(self, upright_scene):
        # the contain/wrap shared boundary of an upright cup crosses depth
        # jumps: its pixels must intersect the occlusion map
        scene = upright_scene
        m = scene.mask
        occ = scene.boundary.occlusion > 0.5
        shared = np.zeros_like(occ)
        for sl_a, sl_b in ((np.s_[:, :-1], np.s_[:, 1:]), (np.s_[:-1, :], np.s_[1:, :])):
            pair = ((m[sl_a] == CONTAIN) & (m[sl_b] == WRAP_GRASP)) | \
                   ((m[sl_a] == WRAP_GRASP) & (m[sl_b] == CONTAIN))
            shared[sl_a] |= pair
            shared[sl_b] |= pair
        assert (shared & occ).sum() > 0
