import numpy as np
import pytest

from affdepth.errors import DegenerateInputError, InsufficientDataError
from affdepth.geometry import CameraIntrinsics, backproject
from affdepth.images import CONTAIN, DepthImage, NormalMap, SUPPORT, WRAP_GRASP
from affdepth.proposals import (Pose, ProposalConfig, frame_from_z,
                                patch_pose_from_points, pick_proposal,
                                pour_pose_from_points, pour_proposal,
                                stack_proposal)
from affdepth.regions import extract_regions


def _assert_rotation(r):
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)


class TestFrameFromZ:
    def test_hand_case(self):
        r = frame_from_z(np.array([0.0, 0.0, 1.0]), np.array([0.0, -1.0, 0.0]))
        np.testing.assert_allclose(r[:, 2], [0, 0, 1], atol=1e-12)
        np.testing.assert_allclose(r[:, 1], [0, 1, 0], atol=1e-12)
        np.testing.assert_allclose(r[:, 0], [1, 0, 0], atol=1e-12)
        _assert_rotation(r)

    def test_random_inputs_orthonormal(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            z = rng.standard_normal(3)
            z /= np.linalg.norm(z)
            up = rng.standard_normal(3)
            up /= np.linalg.norm(up)
            if abs(z @ up) >= 1 - 1e-6:
                continue
            r = frame_from_z(z, up)
            _assert_rotation(r)
            np.testing.assert_allclose(r[:, 2], z, atol=1e-12)
            assert r[:, 1] @ up <= 1e-12  # y points down the vertical plane

    def test_parallel_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            frame_from_z(np.array([0.0, -1.0, 0.0]), np.array([0.0, -1.0, 0.0]))


def _rim_points(radius=0.05, center=(0.0, 0.0, 0.5), n=64, normal=None):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    ring = np.column_stack([radius * np.cos(t), radius * np.sin(t), np.zeros(n)])
    if normal is not None:
        normal = normal / np.linalg.norm(normal)
        third = np.array([0.0, 0.0, 1.0])
        axis = np.cross(third, normal)
        if np.linalg.norm(axis) > 1e-12:
            axis /= np.linalg.norm(axis)
            ang = np.arccos(np.clip(third @ normal, -1, 1))
            kx = np.array([[0, -axis[2], axis[1]],
                           [axis[2], 0, -axis[0]],
                           [-axis[1], axis[0], 0]])
            rot = np.eye(3) + np.sin(ang) * kx + (1 - np.cos(ang)) * kx @ kx
            ring = ring @ rot.T
    return ring + np.asarray(center)


class TestPourPose:
    def test_symmetric_rim_center(self):
        pose = pour_pose_from_points(_rim_points())
        np.testing.assert_allclose(pose.translation, [0, 0, 0.5], atol=1e-9)
        _assert_rotation(pose.rotation)

    def test_z_axis_normal_to_rim_plane(self):
        pose = pour_pose_from_points(_rim_points())
        assert abs(pose.z_axis @ np.array([0, 0, 1.0])) == pytest.approx(1.0, abs=1e-9)
        assert pose.z_axis[2] < 0  # oriented toward the camera

    def test_offset_shifts_along_y(self):
        base = pour_pose_from_points(_rim_points())
        off = pour_pose_from_points(_rim_points(),
                                    ProposalConfig(container_length_offset=0.1))
        np.testing.assert_allclose(off.translation - base.translation,
                                   0.1 * base.y_axis, atol=1e-12)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(1)
        pts = _rim_points(normal=np.array([0.2, -0.3, 1.0]))
        for _ in range(20):
            t = rng.uniform(-0.5, 0.5, 3)
            a = pour_pose_from_points(pts)
            b = pour_pose_from_points(pts + t)
            np.testing.assert_allclose(b.translation - a.translation, t, atol=1e-9)
            np.testing.assert_allclose(a.rotation, b.rotation, atol=1e-9)

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            pour_pose_from_points(np.zeros((2, 3)))


class TestPatchPose:
    def test_fronto_parallel_patch(self):
        pts = np.column_stack([np.linspace(-0.02, 0.02, 9),
                               np.zeros(9), np.full(9, 0.6)])
        pose = patch_pose_from_points(pts, np.array([0.0, 0.0, -1.0]))
        np.testing.assert_allclose(pose.z_axis, [0, 0, -1], atol=1e-12)
        np.testing.assert_allclose(pose.translation, pts.mean(axis=0), atol=1e-12)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-0.1, 0.1, (30, 3)) + [0, 0, 0.5]
        n = np.array([0.3, 0.2, -0.9])
        for _ in range(20):
            t = rng.uniform(-0.3, 0.3, 3)
            a = patch_pose_from_points(pts, n)
            b = patch_pose_from_points(pts + t, n)
            np.testing.assert_allclose(b.translation - a.translation, t, atol=1e-9)
            np.testing.assert_allclose(a.rotation, b.rotation, atol=1e-9)


def _scene_with_regions():
    """20x20 image: contain disk inside a wrap ring, support strip below."""
    k = CameraIntrinsics(150.0, 150.0, 10.0, 10.0, 20, 20)
    mask = np.zeros((20, 20), dtype=np.uint8)
    mask[4:15, 4:15] = WRAP_GRASP
    mask[6:13, 6:13] = CONTAIN
    mask[16:19, 4:15] = SUPPORT
    depth = DepthImage(np.full((20, 20), 0.5), np.ones((20, 20), bool))
    normals = NormalMap(np.broadcast_to([0.0, 0.0, -1.0], (20, 20, 3)).copy(),
                        np.ones((20, 20), bool))
    return k, mask, depth, normals


class TestImageLevelProposals:
    def test_pour_on_flat_disk(self):
        k, mask, depth, normals = _scene_with_regions()
        regions = extract_regions(mask, min_area=5)
        contain = next(r for r in regions if r.class_id == CONTAIN)
        pose = pour_proposal(contain, depth, k)
        _assert_rotation(pose.rotation)
        assert abs(pose.z_axis @ np.array([0, 0, 1.0])) == pytest.approx(1.0, abs=1e-6)

    def test_pick_mean_and_normal(self):
        k, mask, depth, normals = _scene_with_regions()
        regions = extract_regions(mask, min_area=5)
        wrap = next(r for r in regions if r.class_id == WRAP_GRASP)
        pose = pick_proposal(wrap, depth, normals, k)
        pts = backproject(wrap.pixels[:, 1], wrap.pixels[:, 0],
                          np.full(len(wrap.pixels), 0.5), k)
        np.testing.assert_allclose(pose.translation, pts.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(pose.z_axis, [0, 0, -1], atol=1e-9)

    def test_pick_cylinder_band_centered(self):
        # symmetric band around the optical axis on a cylinder of radius r
        # (cx at 15.5 so the 32 columns mirror exactly)
        k = CameraIntrinsics(200.0, 200.0, 15.5, 12.0, 32, 24)
        h, w = 24, 32
        mask = np.zeros((h, w), dtype=np.uint8)
        depth = np.zeros((h, w))
        normals = np.zeros((h, w, 3))
        r, z0 = 0.05, 0.5  # cylinder axis vertical through (0, *, z0 + r)
        for v in range(8, 16):
            for u in range(w):
                x_dir = (u - k.cx) / k.fx
                # ray (x_dir, y, 1): intersect x^2 + (z - z0 - r)^2 = r^2
                a = x_dir ** 2 + 1
                b = -2 * (z0 + r)
                c = (z0 + r) ** 2 - r ** 2
                disc = b * b - 4 * a * c
                if disc <= 0:
                    continue
                t = (-b - np.sqrt(disc)) / (2 * a)
                mask[v, u] = WRAP_GRASP
                depth[v, u] = t
                p = np.array([x_dir * t, 0.0, t])
                n = (p - [0, 0, z0 + r]) / r
                normals[v, u] = n
        depth_img = DepthImage(depth, depth > 0)
        nmap = NormalMap(normals, depth > 0)
        regions = extract_regions(mask, min_area=5)
        pose = pick_proposal(regions[0], depth_img, nmap, k)
        assert abs(pose.translation[0]) <= 1e-3  # on the axis by symmetry
        _assert_rotation(pose.rotation)

    def test_stack_contain_matches_pour_zero_offset(self):
        k, mask, depth, normals = _scene_with_regions()
        regions = extract_regions(mask, min_area=5)
        contain = next(r for r in regions if r.class_id == CONTAIN)
        pour = pour_proposal(contain, depth, k, ProposalConfig(container_length_offset=0.0))
        stack = stack_proposal("has_contain", regions, depth, normals, k,
                               ProposalConfig(container_length_offset=0.25))
        np.testing.assert_allclose(stack.translation, pour.translation, atol=1e-12)
        np.testing.assert_allclose(stack.rotation, pour.rotation, atol=1e-12)

    def test_stack_support_is_patch_pose(self):
        k, mask, depth, normals = _scene_with_regions()
        regions = extract_regions(mask, min_area=5)
        pose = stack_proposal("has_support", regions, depth, normals, k)
        support = next(r for r in regions if r.class_id == SUPPORT)
        pts = backproject(support.pixels[:, 1], support.pixels[:, 0],
                          np.full(len(support.pixels), 0.5), k)
        np.testing.assert_allclose(pose.translation, pts.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(pose.z_axis, [0, 0, -1], atol=1e-9)

    def test_missing_affordance(self):
        k, mask, depth, normals = _scene_with_regions()
        regions = [r for r in extract_regions(mask, min_area=5)
                   if r.class_id != SUPPORT]
        with pytest.raises(InsufficientDataError):
            stack_proposal("has_support", regions, depth, normals, k)

    def test_pour_requires_valid_boundary_depth(self):
        k, mask, depth, normals = _scene_with_regions()
        regions = extract_regions(mask, min_area=5)
        contain = next(r for r in regions if r.class_id == CONTAIN)
        invalid = DepthImage(np.zeros((20, 20)), np.zeros((20, 20), bool))
        with pytest.raises(InsufficientDataError):
            pour_proposal(contain, invalid, k)
