import math

import numpy as np
import pytest

from surgipose.errors import BehindCamera, InvalidParam, OutOfRange
from surgipose.geometry import (AxisAngle, CameraModel, Pose, axis_angle,
                                compose, interpolate_pose, invert,
                                pose_from_list, pose_to_list, rotation_from,
                                rotation_x, rotation_y, rotation_z)

from helpers import default_camera, random_pose, random_rotation


def trans(x, y, z):
    return Pose(np.eye(3), [x, y, z])


class TestPose:
    def test_invariants_enforced(self):
        with pytest.raises(InvalidParam):
            Pose(np.ones((3, 3)), np.zeros(3))
        with pytest.raises(InvalidParam):
            Pose(-np.eye(3), np.zeros(3))  # det = -1

    def test_mild_drift_snapped(self):
        r = rotation_z(0.3) + 1e-7
        p = Pose(r, np.zeros(3))
        assert np.max(np.abs(p.rotation.T @ p.rotation - np.eye(3))) < 1e-12

    def test_arrays_read_only(self):
        p = Pose.identity()
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 2.0


class TestCompose:
    def test_identity(self):
        p = Pose(rotation_z(0.7), [1.0, 2.0, 3.0])
        assert compose(Pose.identity(), p).allclose(p, 0.0)
        assert compose(p, Pose.identity()).allclose(p, 0.0)

    def test_inverse_gives_identity(self):
        p = Pose(rotation_x(1.1), [4.0, -2.0, 0.5])
        assert compose(p, invert(p)).allclose(Pose.identity(), 1e-9)

    def test_translations_add(self):
        assert compose(trans(1, 0, 0), trans(0, 2, 0)).allclose(trans(1, 2, 0), 0.0)

    def test_random_inverse_property(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            p = random_pose(rng)
            assert compose(invert(p), p).allclose(Pose.identity(), 1e-9)


class TestInvert:
    def test_identity(self):
        assert invert(Pose.identity()).allclose(Pose.identity(), 0.0)

    def test_involution(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = random_pose(rng)
            assert invert(invert(p)).allclose(p, 1e-12)

    def test_hand_computed_rz90(self):
        # R = Rz(90 deg), t = (1, 0, 0): inverse has R = Rz(-90 deg), t = -R^T t = (0, 1, 0)
        p = Pose(rotation_z(math.pi / 2), [1.0, 0.0, 0.0])
        q = invert(p)
        assert np.allclose(q.rotation, rotation_z(-math.pi / 2), atol=1e-12)
        assert np.allclose(q.translation, [0.0, 1.0, 0.0], atol=1e-12)


class TestProject:
    def test_principal_point(self):
        cam = default_camera()
        assert cam.project([0.0, 0.0, 100.0]) == (320.0, 240.0)

    def test_offset_point(self):
        cam = default_camera()
        u, v = cam.project([10.0, 0.0, 100.0])
        assert (u, v) == pytest.approx((420.0, 240.0), abs=1e-12)

    def test_near_clip(self):
        cam = default_camera()
        with pytest.raises(BehindCamera):
            cam.project([0.0, 0.0, 0.5])

    def test_scale_invariance_along_rays(self):
        cam = default_camera()
        rng = np.random.default_rng(5)
        for _ in range(200):
            p = np.array([rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(10, 100)])
            lam = rng.uniform(0.5, 20.0)
            u0, v0 = cam.project(p)
            u1, v1 = cam.project(lam * p)
            assert abs(u0 - u1) < 1e-9 and abs(v0 - v1) < 1e-9

    def test_validation(self):
        with pytest.raises(InvalidParam):
            CameraModel(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
        with pytest.raises(InvalidParam):
            CameraModel(fx=1, fy=1, cx=0, cy=0, width=0, height=10)
        with pytest.raises(InvalidParam):
            CameraModel(fx=1, fy=1, cx=0, cy=0, width=10, height=10, near_clip=0.0)


class TestAxisAngle:
    def test_identity_angle_zero(self):
        aa = axis_angle(np.eye(3))
        assert aa.angle == 0.0
        assert abs(np.linalg.norm(aa.axis) - 1.0) < 1e-12

    def test_rz30(self):
        aa = axis_angle(rotation_z(math.radians(30)))
        assert aa.angle == pytest.approx(math.radians(30), abs=1e-12)
        assert np.allclose(aa.axis, [0, 0, 1], atol=1e-12)

    def test_pi_boundary_either_axis_sign(self):
        aa = axis_angle(rotation_x(math.pi))
        assert aa.angle == pytest.approx(math.pi, abs=1e-9)
        assert np.allclose(np.abs(aa.axis), [1, 0, 0], atol=1e-9)
        # either sign must reconstruct the rotation
        assert np.allclose(rotation_from(aa.axis, aa.angle), rotation_x(math.pi), atol=1e-9)

    def test_round_trip_random(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            r = random_rotation(rng)
            aa = axis_angle(r)
            assert 0.0 <= aa.angle <= math.pi
            assert np.allclose(rotation_from(aa.axis, aa.angle), r, atol=1e-9)

    def test_round_trip_near_pi(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = math.pi - 10 ** rng.uniform(-12, -2)
            r = rotation_from(axis, angle)
            aa = axis_angle(r)
            assert np.allclose(rotation_from(aa.axis, aa.angle), r, atol=1e-9)

    def test_angle_symmetry(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            r1, r2 = random_rotation(rng), random_rotation(rng)
            a = axis_angle(r1 @ r2.T).angle
            b = axis_angle(r2 @ r1.T).angle
            assert abs(a - b) < 1e-9

    def test_axis_angle_validation(self):
        with pytest.raises(InvalidParam):
            AxisAngle(np.array([1.0, 1.0, 0.0]), 0.5)
        with pytest.raises(InvalidParam):
            AxisAngle(np.array([1.0, 0.0, 0.0]), -0.1)


class TestInterpolatePose:
    def test_endpoints_exact(self):
        rng = np.random.default_rng(31)
        a, b = random_pose(rng), random_pose(rng)
        assert interpolate_pose(a, b, 0.0) is a
        assert interpolate_pose(a, b, 1.0) is b

    def test_geodesic_midpoint(self):
        a = Pose.identity()
        b = Pose(rotation_z(math.pi / 2), np.zeros(3))
        mid = interpolate_pose(a, b, 0.5)
        assert np.allclose(mid.rotation, rotation_z(math.pi / 4), atol=1e-12)

    def test_linear_translation(self):
        a = trans(0, 0, 0)
        b = trans(10, 0, 0)
        assert np.allclose(interpolate_pose(a, b, 0.3).translation, [3, 0, 0], atol=1e-12)

    def test_out_of_range(self):
        a, b = Pose.identity(), Pose.identity()
        for s in (-0.1, 1.1):
            with pytest.raises(OutOfRange):
                interpolate_pose(a, b, s)

    def test_output_is_valid_pose(self):
        rng = np.random.default_rng(37)
        for _ in range(1000):
            a, b = random_pose(rng), random_pose(rng)
            s = rng.uniform(0, 1)
            p = interpolate_pose(a, b, s)
            assert np.max(np.abs(p.rotation.T @ p.rotation - np.eye(3))) < 1e-9
            assert abs(np.linalg.det(p.rotation) - 1.0) < 1e-9

    def test_constant_speed(self):
        rng = np.random.default_rng(41)
        a, b = random_pose(rng), random_pose(rng)
        total = axis_angle(a.rotation.T @ b.rotation).angle
        for s in (0.25, 0.5, 0.75):
            p = interpolate_pose(a, b, s)
            part = axis_angle(a.rotation.T @ p.rotation).angle
            assert part == pytest.approx(s * total, abs=1e-9)


class TestPoseList:
    def test_round_trip(self):
        rng = np.random.default_rng(43)
        p = random_pose(rng)
        q = pose_from_list(pose_to_list(p))
        assert q.allclose(p, 0.0)

    def test_bad_length(self):
        with pytest.raises(InvalidParam):
            pose_from_list([1.0] * 11)


def test_rotation_helpers_match_rodrigues():
    for angle in (0.0, 0.4, -1.2, math.pi / 2):
        assert np.allclose(rotation_x(angle), rotation_from([1, 0, 0], angle), atol=1e-15)
        assert np.allclose(rotation_y(angle), rotation_from([0, 1, 0], angle), atol=1e-15)
        assert np.allclose(rotation_z(angle), rotation_from([0, 0, 1], angle), atol=1e-15)
