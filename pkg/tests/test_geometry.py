import numpy as np
import pytest

from app.geometry import (
    CameraModel,
    Pose6,
    RigidTransform,
    matrix_to_rpy,
    pose_error,
    project_point,
    rpy_to_matrix,
    wrap_angle,
)


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


@pytest.mark.parametrize(
    "angle, expected",
    [(0.5, 0.5), (np.pi, np.pi), (-np.pi, np.pi), (3 * np.pi, np.pi), (2 * np.pi + 0.1, 0.1)],
)
def test_wrap_angle_half_open_interval(angle, expected):
    assert float(wrap_angle(angle)) == pytest.approx(expected, abs=1e-12)


def test_rpy_matrix_is_yaw_pitch_roll_product():
    roll, pitch, yaw = 0.3, -0.4, 1.1
    expected = _rz(yaw) @ _ry(pitch) @ _rx(roll)
    np.testing.assert_allclose(rpy_to_matrix([roll, pitch, yaw]), expected, atol=1e-12)


def test_yaw_quarter_turn_maps_x_to_y():
    R = rpy_to_matrix([0.0, 0.0, np.pi / 2])
    np.testing.assert_allclose(R @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_rpy_round_trip_away_from_gimbal_lock(rng):
    for _ in range(200):
        att = np.array([rng.uniform(-np.pi, np.pi), rng.uniform(-1.4, 1.4), rng.uniform(-np.pi, np.pi)])
        back = matrix_to_rpy(rpy_to_matrix(att))
        np.testing.assert_allclose(wrap_angle(back - att), 0.0, atol=1e-9)


def test_gimbal_lock_pins_roll_and_keeps_rotation():
    R = rpy_to_matrix([0.3, np.pi / 2, 0.5])
    att = matrix_to_rpy(R)
    assert att[0] == 0.0
    assert att[1] == pytest.approx(np.pi / 2, abs=1e-9)
    assert att[2] == pytest.approx(0.2, abs=1e-7)
    np.testing.assert_allclose(rpy_to_matrix(att), R, atol=1e-7)


def test_pose_validates_and_wraps():
    p = Pose6([1.0, 2.0, 3.0], [0.0, 0.0, 3 * np.pi])
    assert p.attitude[2] == pytest.approx(np.pi)
    with pytest.raises(ValueError):
        Pose6([1.0, 2.0], [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        Pose6([np.nan, 0.0, 0.0])


def test_pose_vector_round_trip():
    v = np.array([0.1, -0.2, 0.3, 0.4, -0.5, 0.6])
    np.testing.assert_allclose(Pose6.from_vector(v).as_vector(), v)


def test_pose_error_wraps_attitude():
    a = Pose6([0, 0, 0], [0, 0, 3.1])
    b = Pose6([0, 0, 0], [0, 0, -3.1])
    assert pose_error(a, b)[5] == pytest.approx(6.2 - 2 * np.pi)


def test_rigid_transform_compose_and_inverse(rng):
    T = RigidTransform.from_rpy([0.1, 0.2, 0.3], [0.4, -0.2, 1.0])
    I = T.compose(T.inverse())
    np.testing.assert_allclose(I.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(I.translation, 0.0, atol=1e-12)
    pts = rng.normal(size=(5, 3))
    np.testing.assert_allclose(T.apply_inverse(T.apply(pts)), pts, atol=1e-12)


def test_rigid_transform_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_compose_applies_right_operand_first():
    shift = RigidTransform.from_rpy([1.0, 0.0, 0.0])
    turn = RigidTransform.from_rpy([0.0, 0.0, 0.0], [0.0, 0.0, np.pi / 2])
    p = turn.compose(shift).apply(np.zeros(3))
    np.testing.assert_allclose(p, [0.0, 1.0, 0.0], atol=1e-12)


def test_project_point_on_axis_hits_principal_point():
    cam = CameraModel(100.0, 100.0, 32.0, 24.0, 48, 64)
    proj = project_point(cam, [0.0, 0.0, 2.0])
    assert proj.in_front
    np.testing.assert_allclose(proj.uv, [32.0, 24.0])


def test_project_point_behind_camera():
    cam = CameraModel(100.0, 100.0, 32.0, 24.0, 48, 64)
    proj = project_point(cam, [0.0, 0.0, -1.0])
    assert not proj.in_front
    assert np.all(np.isnan(proj.uv))


def test_look_at_orientation(small_camera):
    cx, cy = small_camera.cx, small_camera.cy
    np.testing.assert_allclose(project_point(small_camera, [0, 0, 0]).uv, [cx, cy], atol=1e-9)
    assert project_point(small_camera, [0.1, 0, 0]).uv[0] > cx
    assert project_point(small_camera, [0, 0, 0.1]).uv[1] < cy
    np.testing.assert_allclose(small_camera.center, [0.0, -1.0, 0.0], atol=1e-12)
    assert small_camera.depth_of([0, 0, 0]) == pytest.approx(1.0)


def test_camera_rejects_bad_intrinsics():
    with pytest.raises(ValueError):
        CameraModel(-1.0, 100.0, 32.0, 24.0, 48, 64)
    with pytest.raises(ValueError):
        CameraModel(100.0, 100.0, 100.0, 24.0, 48, 64)
