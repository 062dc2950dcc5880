"""
Tests for skill_tools.se3_core: angle wrapping, Euler conversions, rigid
transforms and the pinhole camera helpers.
"""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from skill_tools.errors import NonFiniteInput, NonOrthonormalInput, NonPositiveDepth
from skill_tools.se3_core import (CameraFrame, Pose6D, RigidTransform, axis_rotation, check_rotation, compose,
                                  euler_to_matrix, frame_from_z, invert, lift_pixel, look_at, matrix_to_euler,
                                  pose_error, project_point, relative_pose, rotation_angle, rotation_angles,
                                  wrap_angle)

from conftest import INTRINSICS, random_pose, random_transform


class TestWrapAngle:
    def test_in_range_values_are_unchanged(self):
        for value in (0.0, 0.5, -3.0, -math.pi, math.pi - 1e-12):
            assert wrap_angle(value) == value

    def test_pi_maps_to_minus_pi(self):
        assert wrap_angle(math.pi) == -math.pi

    def test_out_of_range_values_wrap_into_half_open_interval(self, rng):
        for value in rng.uniform(-50.0, 50.0, size=500):
            wrapped = wrap_angle(float(value))
            assert -math.pi <= wrapped < math.pi
            assert math.isclose(math.cos(wrapped), math.cos(value), abs_tol=1e-9)
            assert math.isclose(math.sin(wrapped), math.sin(value), abs_tol=1e-9)

    def test_two_pi_offset(self):
        assert wrap_angle(2.0 * math.pi + 0.5) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("bad", [float('nan'), float('inf'), -float('inf')])
    def test_non_finite_raises(self, bad):
        with pytest.raises(NonFiniteInput):
            wrap_angle(bad)


class TestEulerConversions:
    def test_matches_intrinsic_zyx_convention(self, rng):
        for _ in range(100):
            angles = (rng.uniform(-math.pi, math.pi), rng.uniform(-1.5, 1.5), rng.uniform(-math.pi, math.pi))
            expected = Rotation.from_euler('ZYX', angles).as_matrix()
            np.testing.assert_allclose(euler_to_matrix(angles), expected, atol=1e-12)

    def test_round_trip_away_from_gimbal_lock(self, rng):
        for _ in range(500):
            angles = (rng.uniform(-math.pi, math.pi), rng.uniform(-1.5, 1.5), rng.uniform(-math.pi, math.pi))
            recovered = matrix_to_euler(euler_to_matrix(angles))
            for a, b in zip(angles, recovered):
                assert abs(wrap_angle(a - b)) < 1e-9

    @pytest.mark.parametrize("beta", [math.pi / 2.0, -math.pi / 2.0])
    def test_gimbal_lock_sets_gamma_to_zero_and_keeps_the_matrix(self, beta):
        matrix = euler_to_matrix((0.7, beta, 0.3))
        alpha, recovered_beta, gamma = matrix_to_euler(matrix)
        assert gamma == 0.0
        assert recovered_beta == pytest.approx(beta, abs=1e-9)
        np.testing.assert_allclose(euler_to_matrix((alpha, recovered_beta, gamma)), matrix, atol=1e-9)

    def test_returned_angles_are_wrapped(self, rng):
        for _ in range(100):
            for angle in matrix_to_euler(Rotation.random(random_state=int(rng.integers(1 << 30))).as_matrix()):
                assert -math.pi <= angle < math.pi


class TestCheckRotation:
    def test_accepts_rotation(self):
        check_rotation(axis_rotation((1.0, 2.0, 3.0), 0.4))

    @pytest.mark.parametrize("matrix", [
        2.0 * np.eye(3),
        np.diag([1.0, 1.0, -1.0]),
        np.ones((3, 3)),
        np.eye(4),
    ])
    def test_rejects_non_rotations(self, matrix):
        with pytest.raises(NonOrthonormalInput):
            check_rotation(matrix)

    def test_matrix_to_euler_rejects_non_rotation(self):
        with pytest.raises(NonOrthonormalInput):
            matrix_to_euler(np.diag([1.0, -1.0, 1.0]))


class TestRigidTransforms:
    def test_compose_with_inverse_is_identity(self, rng):
        for _ in range(50):
            p = random_transform(rng)
            assert compose(p, invert(p)).allclose(RigidTransform.identity(), atol=1e-12)
            assert compose(invert(p), p).allclose(RigidTransform.identity(), atol=1e-12)

    def test_compose_is_associative(self, rng):
        a, b, c = (random_transform(rng) for _ in range(3))
        assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=1e-12)

    def test_compose_applies_right_operand_first(self, rng):
        a, b = random_transform(rng), random_transform(rng)
        point = rng.uniform(-1.0, 1.0, size=3)
        np.testing.assert_allclose(compose(a, b).apply(point), a.apply(b.apply(point)), atol=1e-12)

    def test_compose_matches_homogeneous_product(self, rng):
        for _ in range(200):
            a, b = random_transform(rng, 2.0), random_transform(rng, 2.0)
            np.testing.assert_allclose(compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)

    def test_invert_matches_matrix_inverse(self, rng):
        for _ in range(200):
            p = random_transform(rng, 2.0)
            np.testing.assert_allclose(invert(p).as_matrix(), np.linalg.inv(p.as_matrix()), atol=1e-9)

    def test_invert_pure_translation(self):
        p = RigidTransform(np.eye(3), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(invert(p).translation, [-1.0, -2.0, -3.0])
        np.testing.assert_array_equal(invert(p).rotation, np.eye(3))

    def test_relative_pose_matches_homogeneous_oracle(self, rng):
        for _ in range(200):
            reference, target = random_transform(rng, 2.0), random_transform(rng, 2.0)
            expected = np.linalg.inv(reference.as_matrix()) @ target.as_matrix()
            np.testing.assert_allclose(relative_pose(reference, target).as_matrix(), expected, atol=1e-9)

    def test_relative_pose_expresses_target_in_reference(self, rng):
        reference, target = random_transform(rng), random_transform(rng)
        assert compose(reference, relative_pose(reference, target)).allclose(target, atol=1e-12)

    def test_matrix_round_trip(self, rng):
        p = random_transform(rng)
        assert RigidTransform.from_matrix(p.as_matrix()).allclose(p, atol=0.0)

    def test_arrays_are_read_only(self):
        p = RigidTransform.identity()
        with pytest.raises(ValueError):
            p.translation[0] = 1.0


class TestPose6D:
    def test_orientation_is_wrapped_on_construction(self):
        pose = Pose6D((0.0, 0.0, 0.0), (4.0, 0.0, -4.0))
        assert pose.orientation[0] == pytest.approx(4.0 - 2.0 * math.pi)
        assert pose.orientation[2] == pytest.approx(2.0 * math.pi - 4.0)

    def test_transform_round_trip(self, rng):
        for _ in range(50):
            pose = random_pose(rng)
            dt, dr = pose_error(pose, Pose6D.from_transform(pose.to_transform()))
            assert dt < 1e-12 and dr < 1e-9

    def test_vector_round_trip_is_exact(self, rng):
        pose = random_pose(rng)
        assert Pose6D.from_vector(pose.as_vector()) == pose

    def test_from_vector_length_checked(self):
        with pytest.raises(ValueError):
            Pose6D.from_vector([0.0] * 5)


class TestCamera:
    def test_principal_point_lifts_onto_optical_axis(self):
        np.testing.assert_allclose(lift_pixel((320.0, 240.0), 2.0, INTRINSICS), [0.0, 0.0, 2.0])

    def test_lift_pixel_formula(self):
        point = lift_pixel((420.0, 90.0), 1.5, INTRINSICS)
        np.testing.assert_allclose(point, [1.5 * 100.0 / 600.0, 1.5 * -150.0 / 600.0, 1.5], atol=1e-15)

    @pytest.mark.parametrize("depth", [0.0, -1.0])
    def test_non_positive_depth_raises(self, depth):
        with pytest.raises(NonPositiveDepth):
            lift_pixel((100.0, 100.0), depth, INTRINSICS)

    def test_project_inverts_lift(self, rng):
        for _ in range(100):
            pixel = rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0)
            u, v = project_point(lift_pixel(pixel, rng.uniform(0.2, 5.0), INTRINSICS), INTRINSICS)
            assert u == pytest.approx(pixel[0], abs=1e-9)
            assert v == pytest.approx(pixel[1], abs=1e-9)

    def test_project_behind_camera_raises(self):
        with pytest.raises(NonPositiveDepth):
            project_point((0.0, 0.0, -1.0), INTRINSICS)

    def test_focal_lengths_must_be_positive(self):
        with pytest.raises(ValueError):
            CameraFrame((0.0, 600.0, 320.0, 240.0), RigidTransform.identity(), 0)

    def test_look_at_puts_target_on_optical_axis(self):
        eye, target = np.array([0.2, -0.8, 1.4]), np.array([0.0, 0.5, 0.9])
        world_to_cam = invert(look_at(eye, target))
        np.testing.assert_allclose(world_to_cam.apply(target), [0.0, 0.0, np.linalg.norm(target - eye)], atol=1e-12)
        check_rotation(world_to_cam.rotation)

    def test_look_at_image_down_points_down_in_world(self):
        cam_to_world = look_at((0.0, -1.0, 1.0), (0.0, 0.0, 1.0))
        assert cam_to_world.rotation[2, 1] < 0.0


class TestRotationHelpers:
    @pytest.mark.parametrize("angle", [0.0, 1e-8, 0.7, 2.0, math.pi - 1e-6, math.pi])
    def test_rotation_angle_of_axis_rotation(self, angle):
        assert rotation_angle(axis_rotation((0.3, -0.5, 0.8), angle)) == pytest.approx(angle, abs=1e-9)

    def test_batched_angles(self, rng):
        angles = rng.uniform(0.0, math.pi, size=20)
        stack = np.stack([axis_rotation(rng.normal(size=3), a) for a in angles])
        np.testing.assert_allclose(rotation_angles(stack), angles, atol=1e-9)

    def test_frame_from_z_has_requested_axis(self, rng):
        for _ in range(20):
            z = rng.normal(size=3)
            frame = frame_from_z(z)
            check_rotation(frame)
            np.testing.assert_allclose(frame[:, 2], z / np.linalg.norm(z), atol=1e-12)

    def test_frame_from_z_parallel_to_hint(self):
        frame = frame_from_z((0.0, 0.0, -1.0))
        check_rotation(frame)
        np.testing.assert_allclose(frame[:, 2], [0.0, 0.0, -1.0])

    def test_pose_error_reports_distance_and_angle(self):
        a = Pose6D((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
        b = Pose6D((0.3, 0.4, 0.0), (0.25, 0.0, 0.0))
        dt, dr = pose_error(a, b)
        assert dt == pytest.approx(0.5)
        assert dr == pytest.approx(0.25)
