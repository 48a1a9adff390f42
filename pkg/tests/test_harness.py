import numpy as np
import pytest

from app.geometry import Pose6
from app.harness import (
    FOREARM_HAPTIC_RANGE_M,
    FrameRecord,
    OcclusionWindow,
    Scenario,
    ScenarioResult,
    SweepGrid,
    Trajectory,
    aggregate,
    camera_facing,
    distance_band,
    forearm_scenario,
    forearm_shape,
    haptic_error_profile,
    observe_frame,
    occlusion_band,
    robot_arm_scenario,
    run_scenario,
    sensor_array_rig,
    sweep,
    vision_error_profile,
)
from app.observer import NoiseConfig


CENTER = Pose6([0.0, 0.0, 0.105])
LIFTED = Pose6([0.0, 0.0, 0.705])


def _static_scenario(model, pose=CENTER, duration=0.2, **kwargs):
    return Scenario(
        name="static",
        trajectory=Trajectory.static(pose, duration),
        target=forearm_shape(128),
        camera=camera_facing(pose.position, 1.5, width_px=96, height_px=72, fx_px=120.0),
        rig=sensor_array_rig(model),
        noise=NoiseConfig(haptic_range_m=FOREARM_HAPTIC_RANGE_M),
        **kwargs,
    )


def _record(distance, occlusion, err_x):
    err = np.array([err_x, 0.0, 0.0, 0.0, 0.0, 0.0])
    return FrameRecord(
        frame=0,
        t=0.0,
        truth=Pose6(),
        estimates={},
        errors={"vision_raw": err, "vision": err, "haptic": None, "fused": err},
        occlusion_fraction=occlusion,
        camera_distance_m=distance,
        haptic_valid=True,
    )


def test_trajectory_hits_knots_with_clamped_ends():
    times = [0.0, 0.5, 1.0]
    poses = [[0, 0, 0, 0, 0, 0], [0.1, 0, 0, 0, 0, 0.2], [0.2, 0, 0, 0, 0, 0]]
    traj = Trajectory(times, poses)
    np.testing.assert_allclose(traj.sample(0.5).as_vector(), poses[1], atol=1e-12)
    assert traj.duration == 1.0
    # zero velocity at both ends
    assert abs(traj.sample(1e-4).position[0]) < 1e-6
    # samples past the end hold the last knot
    np.testing.assert_allclose(traj.sample(2.0).as_vector(), poses[2], atol=1e-12)


def test_trajectory_unwraps_attitude_knots():
    traj = Trajectory([0.0, 1.0], [[0, 0, 0, 0, 0, 3.1], [0, 0, 0, 0, 0, -3.1]])
    assert abs(traj.sample(0.5).attitude[2]) > 3.0


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0.0], [[0.0] * 6])
    with pytest.raises(ValueError):
        Trajectory([0.1, 1.0], [[0.0] * 6] * 2)
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0, 1.0], [[0.0] * 6] * 3)


def test_occlusion_window_needs_exactly_one_cause():
    with pytest.raises(ValueError):
        OcclusionWindow(0.0, 1.0)
    with pytest.raises(ValueError):
        OcclusionWindow(1.0, 0.0, degrade_fraction=0.2)
    with pytest.raises(ValueError):
        OcclusionWindow(0.0, 1.0, degrade_fraction=1.0)
    assert OcclusionWindow(0.0, 1.0, degrade_fraction=0.2).active(1.0)


@pytest.mark.parametrize(
    "distance, band", [(0.0, 0), (2.999, 0), (3.0, 1), (5.99, 1), (6.0, 2), (25.0, 2)]
)
def test_distance_bands(distance, band):
    assert distance_band(distance) == band


@pytest.mark.parametrize("fraction, band", [(0.0, 0), (0.33, 0), (1 / 3, 1), (0.66, 1), (2 / 3, 2), (1.0, 2)])
def test_occlusion_bands(fraction, band):
    assert occlusion_band(fraction) == band


def test_aggregate_single_frame():
    result = ScenarioResult("one", 0, [_record(1.5, 0.5, 0.03)])
    assert result.section == "in_range"
    table = aggregate([result], min_frames=1)
    stats = table.cell("in_range", 0, 1)
    assert stats.n_frames == 1
    assert stats.rmse_m["fused"] == pytest.approx(0.03)
    assert stats.rmse_m["haptic"] is None
    assert table.rmse("out_of_range", 0, 1, "fused") is None


def test_aggregate_pools_frames_and_enforces_minimum():
    result = ScenarioResult("two", 0, [_record(7.0, 0.9, 0.03), _record(8.0, 0.95, 0.04)], "out_of_range")
    table = aggregate([result], min_frames=2)
    assert table.rmse("out_of_range", 2, 2, "vision") == pytest.approx(np.sqrt((0.03**2 + 0.04**2) / 2))
    assert aggregate([result], min_frames=3).rmse("out_of_range", 2, 2, "vision") is None
    doc = table.to_json()
    assert doc["sections"]["in_range"]["Short (0-3m)"]["Light (0-33%)"] is None
    with pytest.raises(ValueError):
        aggregate([])


def test_static_noise_free_scene_is_exact(forearm_model):
    scenario = _static_scenario(forearm_model, sensor_noise=False)
    records = run_scenario(scenario)
    assert len(records) == 7
    for rec in records:
        assert rec.haptic_valid
        assert not rec.lost_track
        assert rec.occlusion_fraction == 0.0
        assert rec.camera_distance_m == pytest.approx(1.5)
        for method in ("vision_raw", "haptic", "fused", "vision"):
            assert rec.position_error(method) < 1e-6
    assert ScenarioResult("static", 0, records).section == "in_range"


def test_runs_are_deterministic(forearm_model):
    scenario = _static_scenario(
        forearm_model,
        duration=0.1,
        pixel_noise=0.01,
        occlusion=(OcclusionWindow(0.0, 0.1, degrade_fraction=0.3),),
        seed=3,
    )
    a = run_scenario(scenario)
    b = run_scenario(scenario)
    for ra, rb in zip(a, b):
        assert ra.occlusion_fraction == rb.occlusion_fraction
        for method in ("vision_raw", "vision", "haptic", "fused"):
            if ra.errors[method] is None:
                assert rb.errors[method] is None
            else:
                np.testing.assert_array_equal(ra.errors[method], rb.errors[method])


def test_degraded_mask_reports_occlusion(forearm_model):
    scenario = _static_scenario(
        forearm_model, duration=0.1, occlusion=(OcclusionWindow(0.0, 0.1, degrade_fraction=0.5),)
    )
    for rec in run_scenario(scenario):
        assert rec.occlusion_fraction == pytest.approx(0.5, abs=0.01)
        if rec.vision_scale is not None:
            assert 0.0 <= rec.vision_scale <= 1.0


def test_out_of_range_fused_equals_vision(forearm_model):
    scenario = _static_scenario(forearm_model, pose=LIFTED, duration=0.1)
    records = run_scenario(scenario)
    assert not any(r.haptic_valid for r in records)
    for rec in records:
        assert rec.errors["haptic"] is None
        np.testing.assert_array_equal(rec.estimates["fused"].as_vector(), rec.estimates["vision"].as_vector())
    assert ScenarioResult("lifted", 0, records).section == "out_of_range"


def test_forearm_scenario_builder(forearm_model):
    inside = forearm_scenario(1.5, 0.5, seed=2, duration_s=1.0, model=forearm_model)
    outside = forearm_scenario(1.5, 0.5, in_range=False, duration_s=1.0, model=forearm_model)
    assert inside.n_frames == 31
    assert inside.seed == 2
    assert outside.trajectory.sample(0.0).position[2] == pytest.approx(inside.trajectory.sample(0.0).position[2] + 0.6)
    assert inside.degrade_at(0.5) == 0.5
    assert forearm_scenario(1.5, 0.0, model=forearm_model).occlusion == ()


def test_tiny_sweep_fills_its_cell():
    grid = SweepGrid(
        distances_m=(1.5,),
        occlusion_levels=(0.5,),
        sections=("out_of_range",),
        seeds=(0,),
        duration_s=0.1,
        width_px=96,
        height_px=72,
        fx_px=120.0,
        tessellation=128,
        min_frames=1,
    )
    result = sweep(grid)
    assert result.failed == 0
    assert len(result.results) == 1
    stats = result.table.cell("out_of_range", 0, 1)
    assert stats is not None and stats.n_frames == 4


def test_haptic_error_grows_with_distance(forearm_model):
    rig = sensor_array_rig(forearm_model)
    near, far = haptic_error_profile([0.02, 0.08], seeds=range(8), rig=rig)
    assert near.n_ok == 8 and far.n_ok == 8
    assert far.rmse_m > near.rmse_m


def test_robot_arm_scenario_pads_and_body_occluder(forearm_model):
    scenario = robot_arm_scenario(
        1.5, duration_s=0.2, width_px=96, height_px=72, fx_px=120.0, tessellation=128, model=forearm_model
    )
    # the base is placed so the posed last link coincides with the world frame
    np.testing.assert_allclose(scenario.rig.positions, sensor_array_rig(forearm_model).positions, atol=1e-9)
    assert scenario.occluders_at(0.1)
    _, fraction = observe_frame(scenario, 0.0)
    assert 0.0 < fraction < 1.0


def test_vision_error_profile_shape():
    points = vision_error_profile(
        [1.5, 2.0], seeds=range(2), shape=forearm_shape(128), width_px=96, height_px=72, fx_px=120.0, pixel_noise=0.0
    )
    assert [p.distance_m for p in points] == [1.5, 2.0]
    for p in points:
        assert p.n_ok == 2
        assert len(p.per_axis_rmse_m) == 3
        assert 0.0 <= p.rmse_m < 0.1
