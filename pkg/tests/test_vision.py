import numpy as np
import pytest

from app.errors import DimensionMismatchError, EmptyGridError, LostTrackError
from app.geometry import Pose6
from app.harness import camera_facing
from app.render import Mask, render_mask
from app.shapes import ShapePrimitive
from app.vision import (
    brute_force_pose_search,
    estimate_jacobian,
    estimate_pose_vision,
    mask_overlap,
    pose_lattice,
)


BOX = ShapePrimitive.box(0.2, 0.15, 0.12)
SPHERE = ShapePrimitive.sphere(0.1, 256)


def test_overlap_two_by_two():
    m = Mask(np.array([[1, 0], [0, 0]]))
    m_hat = Mask(np.array([[1, 1], [0, 0]]))
    assert mask_overlap(m, m_hat) == pytest.approx(0.5)
    assert mask_overlap(m_hat, m) == mask_overlap(m, m_hat)


def test_overlap_extremes(rng):
    m = Mask((rng.random((12, 16)) < 0.3).astype(np.uint8))
    assert mask_overlap(m, m) == 1.0
    assert mask_overlap(m, m.complement()) == -1.0
    with pytest.raises(DimensionMismatchError):
        mask_overlap(m, Mask.empty(12, 15))


def test_jacobian_is_zero_out_of_view(small_camera):
    far = Pose6([5.0, 0.0, 0.0])
    observed = Mask.empty(small_camera.height, small_camera.width)
    jac = estimate_jacobian(observed, far, SPHERE, small_camera)
    np.testing.assert_array_equal(jac, np.zeros(6))


def test_jacobian_points_toward_the_observed_silhouette(small_camera):
    observed = render_mask(BOX, Pose6([0.03, 0.0, 0.0]), small_camera)
    jac = estimate_jacobian(observed, Pose6(), BOX, small_camera)
    assert jac[0] > 0
    observed = render_mask(BOX, Pose6([0.0, 0.0, -0.03]), small_camera)
    jac = estimate_jacobian(observed, Pose6(), BOX, small_camera)
    assert jac[2] < 0


def test_exact_prior_returns_without_iterating(small_camera):
    truth = Pose6([0.01, 0.0, -0.02], [0.1, 0.2, 0.3])
    observed = render_mask(BOX, truth, small_camera)
    est = estimate_pose_vision(observed, truth, BOX, small_camera)
    assert est.iterations == 0
    assert est.score == 1.0
    assert est.converged


def test_empty_mask_loses_track(small_camera):
    with pytest.raises(LostTrackError) as info:
        estimate_pose_vision(Mask.empty(small_camera.height, small_camera.width), Pose6(), BOX, small_camera)
    assert info.value.score == -1.0


def test_refinement_pulls_toward_truth(small_camera):
    truth = Pose6([0.0, 0.0, 0.0], [0.0, 0.0, 0.2])
    observed = render_mask(BOX, truth, small_camera)
    prior = Pose6([0.02, 0.0, 0.015], [0.0, 0.0, 0.2])
    start = mask_overlap(observed, render_mask(BOX, prior, small_camera))
    est = estimate_pose_vision(observed, prior, BOX, small_camera)
    assert est.score > start
    lateral_before = np.hypot(0.02, 0.015)
    lateral_after = np.hypot(*(est.pose.position[[0, 2]] - truth.position[[0, 2]]))
    assert lateral_after < 0.5 * lateral_before


def test_reported_score_is_the_overlap_of_the_reported_pose(small_camera):
    truth = Pose6([0.0, 0.0, 0.0], [0.0, 0.0, 0.2])
    observed = render_mask(BOX, truth, small_camera)
    prior = Pose6([-0.015, 0.0, 0.01], [0.0, 0.05, 0.1])
    est = estimate_pose_vision(observed, prior, BOX, small_camera)
    assert est.score == mask_overlap(observed, render_mask(BOX, est.pose, small_camera))
    assert est.score >= mask_overlap(observed, render_mask(BOX, prior, small_camera))


def test_side_view_recovers_lateral_and_yaw_offset():
    camera = camera_facing((0.0, 0.0, 0.0), 1.5)
    assert (camera.width, camera.height) == (320, 240)
    truth = Pose6()
    observed = render_mask(BOX, truth, camera)
    prior = Pose6([0.02, 0.0, 0.0], [0.0, 0.0, np.deg2rad(5.0)])
    est = estimate_pose_vision(observed, prior, BOX, camera)
    assert np.linalg.norm(est.pose.position - truth.position) < 0.005
    assert abs(est.pose.attitude[2] - truth.attitude[2]) < np.deg2rad(1.0)


def test_sphere_attitude_is_held(small_camera):
    observed = render_mask(SPHERE, Pose6([0.01, 0.0, 0.0]), small_camera)
    prior = Pose6([0.0, 0.0, 0.0], [0.3, -0.2, 0.1])
    est = estimate_pose_vision(observed, prior, SPHERE, small_camera)
    np.testing.assert_allclose(est.pose.attitude, prior.attitude, atol=1e-12)


def test_pose_lattice_size_and_order():
    center = Pose6([0.1, 0.2, 0.3])
    grid = pose_lattice(center, 0.01, 0.1, points_per_axis=3)
    assert len(grid) == 3**6
    np.testing.assert_allclose(grid[0].as_vector(), [0.09, 0.19, 0.29, -0.1, -0.1, -0.1])
    np.testing.assert_allclose(grid[1].as_vector(), [0.09, 0.19, 0.29, -0.1, -0.1, 0.0])
    (only,) = pose_lattice(center, 0.01, 0.1, points_per_axis=1)
    np.testing.assert_allclose(only.as_vector(), center.as_vector())
    assert pose_lattice(center, 0.01, 0.1, points_per_axis=0) == []


def test_brute_force_finds_truth(small_camera):
    truth = Pose6([0.02, 0.0, 0.0])
    observed = render_mask(SPHERE, truth, small_camera)
    grid = [Pose6([x, 0.0, 0.0]) for x in (-0.02, 0.0, 0.02, 0.04)]
    best, score = brute_force_pose_search(observed, grid, SPHERE, small_camera)
    np.testing.assert_allclose(best.position, truth.position)
    assert score == 1.0


def test_brute_force_keeps_first_of_ties(small_camera):
    observed = render_mask(SPHERE, Pose6(), small_camera)
    first, second = Pose6(), Pose6()
    best, _ = brute_force_pose_search(observed, [first, second], SPHERE, small_camera)
    assert best is first


def test_brute_force_empty_grid(small_camera):
    with pytest.raises(EmptyGridError):
        brute_force_pose_search(Mask.empty(small_camera.height, small_camera.width), [], SPHERE, small_camera)
