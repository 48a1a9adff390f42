"""Scenario generation, per-frame pipeline execution and RMSE tables.

A scenario moves one target along a spline in front of a camera and over a
capacitive sensor rig. Every camera frame runs the vision estimator on a
synthetic segmentation mask and the haptic estimator on synthetic sensor
readings; two observers (fused and vision-only) integrate the results at the
observer substep rate.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateError, HapticEstimationError, InfeasibleError, LostTrackError, OccluFuseError
from .geometry import CameraModel, Pose6, RigidTransform, pose_error
from .haptic import (
    KinematicChain,
    Link,
    estimate_pose_haptic,
    forward_kinematics,
    link_frames,
    sensor_grid,
)
from .observability import record_metric, timed
from .observer import (
    LuenbergerObserver,
    MeasurementPair,
    ModalityMeasurement,
    NoiseConfig,
    compute_R_c,
    occlusion_scale,
    vision_covariance,
)
from .render import Mask, Occluder, degrade_mask, occlusion_fraction, render_mask
from .sensor import SensorModel, measure
from .shapes import ShapeKind, ShapePrimitive
from .vision import VisionOptions, estimate_pose_vision


logger = logging.getLogger(__name__)

METHODS = ("vision_raw", "vision", "haptic", "fused")
SECTIONS = ("in_range", "out_of_range")
DISTANCE_BANDS = (("Short (0-3m)", 0.0, 3.0), ("Medium (3-6m)", 3.0, 6.0), ("Long (6-10m)", 6.0, math.inf))
OCCLUSION_BANDS = (
    ("Light (0-33%)", 0.0, 1.0 / 3.0),
    ("Medium (33-66%)", 1.0 / 3.0, 2.0 / 3.0),
    ("Heavy (66-100%)", 2.0 / 3.0, math.inf),
)

FOREARM_RADIUS_M = 0.045
FOREARM_LENGTH_M = 0.30
# centre-to-sensor distance; the surface is one forearm radius closer
FOREARM_HAPTIC_RANGE_M = 0.20

# seed streams
_STREAM_MASK = 0
_STREAM_SENSOR = 1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-cubic pose spline through knots; zero velocity at both ends."""

    times: np.ndarray
    poses: np.ndarray
    _spline: Optional[CubicSpline] = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float).reshape(-1)
        poses = np.asarray(self.poses, dtype=float).reshape(len(times), 6).copy()
        if len(times) == 0:
            raise ValueError("trajectory needs at least one knot")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("knot times must start at 0 and increase strictly")
        if len(times) == 1:
            raise ValueError("trajectory needs a second knot to have a duration")
        poses[:, 3:] = np.unwrap(poses[:, 3:], axis=0)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "_spline", CubicSpline(times, poses, axis=0, bc_type="clamped"))

    @classmethod
    def static(cls, pose: Pose6, duration_s: float) -> "Trajectory":
        v = pose.as_vector()
        return cls(np.array([0.0, duration_s]), np.stack([v, v]))

    @classmethod
    def oscillation(
        cls,
        center: Pose6,
        amplitude: Sequence[float],
        frequency_hz: float,
        duration_s: float,
        knots_per_second: int = 16,
    ) -> "Trajectory":
        """Sinusoidal motion about ``center`` along each pose axis."""
        n = max(2, int(math.ceil(duration_s * knots_per_second)) + 1)
        t = np.linspace(0.0, duration_s, n)
        amp = np.asarray(amplitude, dtype=float).reshape(6)
        poses = center.as_vector() + np.sin(2.0 * np.pi * frequency_hz * t)[:, None] * amp[None, :]
        return cls(t, poses)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def sample(self, t: float) -> Pose6:
        return Pose6.from_vector(self._spline(float(np.clip(t, 0.0, self.duration))))


@dataclass(frozen=True, eq=False)
class OcclusionWindow:
    start_s: float
    end_s: float
    degrade_fraction: Optional[float] = None
    occluder: Optional[Occluder] = None

    def __post_init__(self) -> None:
        if self.end_s < self.start_s:
            raise ValueError("occlusion window ends before it starts")
        if (self.degrade_fraction is None) == (self.occluder is None):
            raise ValueError("occlusion window needs exactly one of degrade_fraction or occluder")
        if self.degrade_fraction is not None and not 0.0 <= self.degrade_fraction < 1.0:
            raise ValueError("degrade_fraction must be in [0, 1)")

    def active(self, t: float) -> bool:
        return self.start_s <= t <= self.end_s


@dataclass(frozen=True, eq=False)
class SensorRig:
    chain: KinematicChain
    joint_angles: np.ndarray
    model: SensorModel
    sensor_poses: Tuple[RigidTransform, ...] = field(default=(), init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sensor_poses", tuple(forward_kinematics(self.chain, self.joint_angles)))
        if not self.sensor_poses:
            raise ValueError("sensor rig has no sensors")

    @property
    def positions(self) -> np.ndarray:
        return np.stack([T.translation for T in self.sensor_poses])


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    trajectory: Trajectory
    target: ShapePrimitive
    camera: CameraModel
    rig: SensorRig
    occlusion: Tuple[OcclusionWindow, ...] = ()
    frame_rate_hz: float = 30.0
    observer_dt_s: float = 1e-3
    pixel_noise: float = 0.0
    sensor_noise: bool = True
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    vision: VisionOptions = field(default_factory=VisionOptions)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "occlusion", tuple(self.occlusion))
        if self.frame_rate_hz <= 0 or self.observer_dt_s <= 0:
            raise ValueError("frame rate and observer step must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not 0.0 <= self.pixel_noise <= 0.1:
            raise ValueError("pixel_noise must be in [0, 0.1]")

    @property
    def n_frames(self) -> int:
        return int(math.floor(self.trajectory.duration * self.frame_rate_hz + 1e-9)) + 1

    def occluders_at(self, t: float) -> List[Occluder]:
        return [w.occluder for w in self.occlusion if w.occluder is not None and w.active(t)]

    def degrade_at(self, t: float) -> float:
        fractions = [w.degrade_fraction for w in self.occlusion if w.degrade_fraction is not None and w.active(t)]
        return max(fractions, default=0.0)


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame: int
    t: float
    truth: Pose6
    estimates: Dict[str, Optional[Pose6]]
    errors: Dict[str, Optional[np.ndarray]]
    occlusion_fraction: float
    camera_distance_m: float
    vision_score: Optional[float] = None
    vision_scale: Optional[float] = None
    lost_track: bool = False
    haptic_valid: bool = False
    haptic_rms_m: Optional[float] = None
    n_haptic: int = 0

    def position_error(self, method: str) -> Optional[float]:
        err = self.errors.get(method)
        return None if err is None else float(np.linalg.norm(err[:3]))

    def attitude_error(self, method: str) -> Optional[float]:
        err = self.errors.get(method)
        return None if err is None else float(np.linalg.norm(err[3:]))


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    name: str
    seed: int
    records: Tuple[FrameRecord, ...]
    section: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        if not self.section:
            in_range = any(r.haptic_valid for r in self.records)
            object.__setattr__(self, "section", SECTIONS[0] if in_range else SECTIONS[1])

    def rmse(self, method: str) -> Optional[float]:
        errs = [e for e in (r.position_error(method) for r in self.records) if e is not None]
        return float(np.sqrt(np.mean(np.square(errs)))) if errs else None


def _frame_seed(seed: int, frame: int, stream: int, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(frame, stream, index))


def _observe(scenario: Scenario, truth: Pose6, t: float, frame: int) -> Tuple[Mask, float]:
    """Segmentation mask handed to the vision estimator, and its true occlusion fraction."""
    full = render_mask(scenario.target, truth, scenario.camera)
    if full.count() == 0:
        return full, 1.0
    visible = render_mask(scenario.target, truth, scenario.camera, scenario.occluders_at(t))
    fraction = scenario.degrade_at(t)
    if visible.count() > 0 and (fraction > 0.0 or scenario.pixel_noise > 0.0):
        try:
            visible = degrade_mask(visible, fraction, scenario.pixel_noise, _frame_seed(scenario.seed, frame, _STREAM_MASK))
        except InfeasibleError:
            pass
    return visible, occlusion_fraction(full, visible)


def observe_frame(scenario: Scenario, t: float) -> Tuple[Mask, float]:
    """The mask and occlusion fraction the pipeline sees at time ``t``."""
    frame = int(round(t * scenario.frame_rate_hz))
    return _observe(scenario, scenario.trajectory.sample(t), t, frame)


def _vision_measurement(
    scenario: Scenario, observed: Mask, prior: Pose6
) -> Tuple[ModalityMeasurement, Optional[Pose6], Optional[float], Optional[float], bool]:
    invalid = ModalityMeasurement.invalid(scenario.noise)
    try:
        est = estimate_pose_vision(observed, prior, scenario.target, scenario.camera, (), scenario.vision)
    except LostTrackError as exc:
        logger.debug("vision lost track: %s", exc)
        return invalid, None, exc.score, None, True
    predicted = render_mask(scenario.target, est.pose, scenario.camera)
    try:
        scale = occlusion_scale(predicted, observed)
    except DegenerateError:
        return invalid, est.pose, est.score, None, False
    return ModalityMeasurement(est.pose, vision_covariance(scale, scenario.noise)), est.pose, est.score, scale, False


def _haptic_measurement(
    scenario: Scenario, model: SensorModel, truth: Pose6, prior: Pose6, frame: int
) -> Tuple[ModalityMeasurement, Optional[Pose6], Optional[float], int]:
    invalid = ModalityMeasurement.invalid(scenario.noise)
    readings = [
        (T, measure(model, T, scenario.target, truth, _frame_seed(scenario.seed, frame, _STREAM_SENSOR, i)))
        for i, T in enumerate(scenario.rig.sensor_poses)
    ]
    n_valid = sum(1 for _, m in readings if m.valid)
    try:
        est = estimate_pose_haptic(readings, scenario.target, prior)
    except HapticEstimationError as exc:
        logger.debug("haptic estimate unavailable: %s", exc)
        return invalid, None, None, n_valid
    R_c = compute_R_c(prior, scenario.rig.positions, scenario.noise, scenario.target.unobservable_axes)
    if R_c[0, 0] >= scenario.noise.sentinel:
        # beyond the sensing range the modality is dropped from fusion
        return invalid, est.pose, est.residual_rms, n_valid
    return ModalityMeasurement(est.pose, R_c), est.pose, est.residual_rms, n_valid


def _error(estimate: Optional[Pose6], truth: Pose6, unobservable: Sequence[int]) -> Optional[np.ndarray]:
    if estimate is None:
        return None
    err = pose_error(estimate, truth)
    err[list(unobservable)] = 0.0
    return err


def _observe_frames(task: Tuple[Scenario, range]) -> List[Tuple[Mask, float]]:
    scenario, frames = task
    frame_dt = 1.0 / scenario.frame_rate_hz
    return [_observe(scenario, scenario.trajectory.sample(k * frame_dt), k * frame_dt, k) for k in frames]


def _observations(scenario: Scenario, jobs: int) -> Optional[List[Tuple[Mask, float]]]:
    """Every frame's observed mask rendered across ``jobs`` processes, or None for jobs <= 1."""
    if jobs <= 1:
        return None
    n = scenario.n_frames
    bounds = np.linspace(0, n, min(jobs, n) + 1).astype(int)
    tasks = [(scenario, range(lo, hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return [obs for chunk in pool.map(_observe_frames, tasks) for obs in chunk]


def run_scenario(scenario: Scenario, jobs: int = 1) -> List[FrameRecord]:
    """Execute every camera frame of ``scenario``; deterministic for a fixed seed.

    Observed masks depend only on the ground truth, so with ``jobs`` > 1 they
    are rendered up front in worker processes; estimation stays sequential and
    the records do not depend on ``jobs``. Estimator failures become flagged
    records; the run is never aborted.
    """
    observations = _observations(scenario, jobs)
    frame_dt = 1.0 / scenario.frame_rate_hz
    substeps = max(1, int(math.ceil(frame_dt / scenario.observer_dt_s - 1e-9)))
    sub_dt = frame_dt / substeps
    model = scenario.rig.model if scenario.sensor_noise else replace(scenario.rig.model, sigma0_m=0.0)
    unobservable = scenario.target.unobservable_axes
    camera_center = scenario.camera.center

    truth0 = scenario.trajectory.sample(0.0)
    fused = LuenbergerObserver(scenario.noise, truth0)
    vision_only = LuenbergerObserver(scenario.noise, truth0)
    no_haptic = ModalityMeasurement.invalid(scenario.noise)

    records: List[FrameRecord] = []
    with timed("scenario_run", {"scenario": scenario.name, "seed": scenario.seed}) as payload:
        for k in range(scenario.n_frames):
            t = k * frame_dt
            truth = scenario.trajectory.sample(t)
            observed, occluded = observations[k] if observations is not None else _observe(scenario, truth, t, k)
            prior = fused.output

            y_v, vision_pose, score, scale, lost = _vision_measurement(scenario, observed, prior)
            y_h, haptic_pose, haptic_rms, n_haptic = _haptic_measurement(scenario, model, truth, prior, k)

            fused.run(MeasurementPair(y_v, y_h), sub_dt, substeps)
            vision_only.run(MeasurementPair(y_v, no_haptic), sub_dt, substeps)

            estimates = {
                "vision_raw": vision_pose if y_v.valid else None,
                "vision": vision_only.output,
                "haptic": haptic_pose if y_h.valid else None,
                "fused": fused.output,
            }
            records.append(
                FrameRecord(
                    frame=k,
                    t=t,
                    truth=truth,
                    estimates=estimates,
                    errors={m: _error(p, truth, unobservable) for m, p in estimates.items()},
                    occlusion_fraction=occluded,
                    camera_distance_m=float(np.linalg.norm(truth.position - camera_center)),
                    vision_score=score,
                    vision_scale=scale,
                    lost_track=lost,
                    haptic_valid=y_h.valid,
                    haptic_rms_m=haptic_rms,
                    n_haptic=n_haptic,
                )
            )
        payload["frames"] = len(records)
        payload["lost_track"] = sum(r.lost_track for r in records)
    return records


def distance_band(distance_m: float) -> int:
    for i, (_, lo, hi) in enumerate(DISTANCE_BANDS):
        if lo <= distance_m < hi:
            return i
    return 0 if distance_m < 0 else len(DISTANCE_BANDS) - 1


def occlusion_band(fraction: float) -> int:
    for i, (_, lo, hi) in enumerate(OCCLUSION_BANDS):
        if lo <= fraction < hi:
            return i
    return 0 if fraction < 0 else len(OCCLUSION_BANDS) - 1


CellKey = Tuple[str, int, int]


@dataclass
class CellStats:
    n_frames: int = 0
    counts: Dict[str, int] = field(default_factory=lambda: {m: 0 for m in METHODS})
    sq_sums: Dict[str, float] = field(default_factory=lambda: {m: 0.0 for m in METHODS})
    rmse_m: Dict[str, Optional[float]] = field(default_factory=lambda: {m: None for m in METHODS})
    failures: int = 0


@dataclass
class ResultTable:
    cells: Dict[CellKey, CellStats]
    min_frames: int = 100

    def cell(self, section: str, distance: int, occlusion: int) -> Optional[CellStats]:
        return self.cells.get((section, distance, occlusion))

    def rmse(self, section: str, distance: int, occlusion: int, method: str) -> Optional[float]:
        stats = self.cell(section, distance, occlusion)
        return None if stats is None else stats.rmse_m[method]

    def to_json(self) -> Dict[str, object]:
        """Nested section -> distance band -> occlusion band, absent cells as null."""
        out: Dict[str, object] = {"min_frames": self.min_frames, "sections": {}}
        for section in SECTIONS:
            rows = {}
            for di, (d_label, _, _) in enumerate(DISTANCE_BANDS):
                row = {}
                for oi, (o_label, _, _) in enumerate(OCCLUSION_BANDS):
                    stats = self.cell(section, di, oi)
                    row[o_label] = None if stats is None else {
                        "frames": stats.n_frames,
                        "failures": stats.failures,
                        "rmse_m": dict(stats.rmse_m),
                    }
                rows[d_label] = row
            out["sections"][section] = rows
        return out

    def plot_rows(self) -> List[Tuple[str, float, float, str, Optional[float]]]:
        """Long format (section, distance band mid, occlusion band mid, method, rmse)."""
        rows = []
        for (section, di, oi), stats in sorted(self.cells.items()):
            d_mid = _band_mid(DISTANCE_BANDS[di], 10.0)
            o_mid = _band_mid(OCCLUSION_BANDS[oi], 1.0)
            for method in METHODS:
                rows.append((section, d_mid, o_mid, method, stats.rmse_m[method]))
        return rows


def _band_mid(band: Tuple[str, float, float], cap: float) -> float:
    _, lo, hi = band
    return 0.5 * (lo + min(hi, cap))


def aggregate(results: Sequence[ScenarioResult], min_frames: int = 100) -> ResultTable:
    """RMSE of the position error per (section, distance band, occlusion band) and method.

    Cells with fewer than ``min_frames`` samples for a method report None for it.
    """
    if not results:
        raise ValueError("nothing to aggregate")
    cells: Dict[CellKey, CellStats] = {}
    for result in results:
        for rec in result.records:
            key = (result.section, distance_band(rec.camera_distance_m), occlusion_band(rec.occlusion_fraction))
            stats = cells.setdefault(key, CellStats())
            stats.n_frames += 1
            for method in METHODS:
                err = rec.position_error(method)
                if err is not None:
                    stats.counts[method] += 1
                    stats.sq_sums[method] += err * err
    for stats in cells.values():
        for method in METHODS:
            n = stats.counts[method]
            stats.rmse_m[method] = float(np.sqrt(stats.sq_sums[method] / n)) if n >= max(min_frames, 1) else None
    return ResultTable(cells, min_frames)


# scenario builders


def forearm_shape(tessellation: int = 384) -> ShapePrimitive:
    return ShapePrimitive.capsule(FOREARM_RADIUS_M, FOREARM_LENGTH_M, tessellation)


def _default_model() -> SensorModel:
    from .tools.calibration import sensor_model_for

    return sensor_model_for("forearm")


def array_mounts(link: int = 5) -> list:
    """2 x 6 pads, 10 cm pitch, reaching past both capsule caps so motion along the axis is observable."""
    return sensor_grid(link, origin=(-0.25, -0.05, 0.0), spacing=0.10, rows=2, cols=6)


def sensor_array_rig(model: Optional[SensorModel] = None) -> SensorRig:
    chain = KinematicChain.fixed(array_mounts())
    return SensorRig(chain, np.zeros(6), model or _default_model())


def robot_arm_rig(
    joint_angles: Sequence[float] = (0.3, -0.4, 0.8, 0.0, -0.4, 0.0),
    model: Optional[SensorModel] = None,
) -> SensorRig:
    """Pads on the last link of a posed 6-joint arm; the base is placed so the pads land on the world xy plane."""
    links = (
        Link(np.array([0.0, 0.0, 1.0])),
        Link(np.array([0.0, 1.0, 0.0]), RigidTransform.from_rpy((0.0, 0.0, 0.30))),
        Link(np.array([0.0, 1.0, 0.0]), RigidTransform.from_rpy((0.0, 0.0, 0.40))),
        Link(np.array([1.0, 0.0, 0.0]), RigidTransform.from_rpy((0.0, 0.0, 0.35))),
        Link(np.array([0.0, 1.0, 0.0]), RigidTransform.from_rpy((0.0, 0.0, 0.10))),
        Link(np.array([0.0, 0.0, 1.0]), RigidTransform.from_rpy((0.0, 0.0, 0.08))),
    )
    theta = np.asarray(joint_angles, dtype=float)
    unplaced = KinematicChain(links, tuple(array_mounts()))
    last = link_frames(unplaced, theta)[-1]
    chain = KinematicChain(links, tuple(array_mounts()), last.inverse())
    return SensorRig(chain, theta, model or _default_model())


def camera_facing(
    target: Sequence[float],
    distance_m: float,
    *,
    width_px: int = 320,
    height_px: int = 240,
    fx_px: float = 400.0,
    elevation_deg: float = 15.0,
) -> CameraModel:
    """Camera ``distance_m`` from ``target`` on the -y side, looking slightly down."""
    el = np.deg2rad(elevation_deg)
    center = np.asarray(target, dtype=float)
    eye = center + distance_m * np.array([0.0, -np.cos(el), np.sin(el)])
    return CameraModel.look_at(eye, center, fx=fx_px, fy=fx_px, width=width_px, height=height_px)


def forearm_scenario(
    camera_distance_m: float,
    occlusion: float,
    *,
    in_range: bool = True,
    seed: int = 0,
    duration_s: float = 4.0,
    width_px: int = 320,
    height_px: int = 240,
    fx_px: float = 400.0,
    tessellation: int = 384,
    pixel_noise: float = 0.0,
    amplitude_m: float = 0.04,
    frequency_hz: float = 0.25,
    model: Optional[SensorModel] = None,
    noise: Optional[NoiseConfig] = None,
) -> Scenario:
    """Forearm moving up and down over the pad array; out of range it moves 0.6 m higher."""
    lift = 0.0 if in_range else 0.6
    center = Pose6([0.0, 0.0, FOREARM_RADIUS_M + 0.06 + lift])
    trajectory = Trajectory.oscillation(center, [0, 0, amplitude_m, 0, 0, 0], frequency_hz, duration_s)
    windows = (OcclusionWindow(0.0, duration_s, degrade_fraction=occlusion),) if occlusion > 0 else ()
    section = "in" if in_range else "out"
    return Scenario(
        name=f"forearm_{section}_d{camera_distance_m:g}_o{occlusion:g}",
        trajectory=trajectory,
        target=forearm_shape(tessellation),
        camera=camera_facing(center.position, camera_distance_m, width_px=width_px, height_px=height_px, fx_px=fx_px),
        rig=sensor_array_rig(model),
        occlusion=windows,
        pixel_noise=pixel_noise,
        noise=noise or NoiseConfig(haptic_range_m=FOREARM_HAPTIC_RANGE_M),
        seed=seed,
    )


def robot_arm_scenario(
    camera_distance_m: float,
    *,
    seed: int = 0,
    duration_s: float = 4.0,
    width_px: int = 320,
    height_px: int = 240,
    fx_px: float = 400.0,
    tessellation: int = 384,
    pixel_noise: float = 0.0,
    model: Optional[SensorModel] = None,
) -> Scenario:
    """Forearm over pads on a robot link while the arm's upper body stands between it and the camera."""
    center = Pose6([0.0, 0.0, FOREARM_RADIUS_M + 0.06])
    trajectory = Trajectory.oscillation(center, [0, 0, 0.04, 0, 0, 0], 0.25, duration_s)
    body = ShapePrimitive.box(0.12, 0.08, 0.50)
    body_pose = Pose6(center.position + np.array([0.05, -0.25, -0.20]))
    return Scenario(
        name=f"robot_arm_d{camera_distance_m:g}",
        trajectory=trajectory,
        target=forearm_shape(tessellation),
        camera=camera_facing(center.position, camera_distance_m, width_px=width_px, height_px=height_px, fx_px=fx_px),
        rig=robot_arm_rig(model=model),
        occlusion=(OcclusionWindow(0.0, duration_s, occluder=(body, body_pose)),),
        pixel_noise=pixel_noise,
        noise=NoiseConfig(haptic_range_m=FOREARM_HAPTIC_RANGE_M),
        seed=seed,
    )


# sweeps


@dataclass(frozen=True)
class SweepJob:
    section: str
    distance_m: float
    occlusion: float
    seed: int

    @property
    def nominal_cell(self) -> CellKey:
        return self.section, distance_band(self.distance_m), occlusion_band(self.occlusion)


@dataclass(frozen=True)
class SweepGrid:
    distances_m: Tuple[float, ...] = (1.5, 4.5, 8.0)
    occlusion_levels: Tuple[float, ...] = (0.15, 0.5, 0.8)
    sections: Tuple[str, ...] = SECTIONS
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    duration_s: float = 4.0
    width_px: int = 320
    height_px: int = 240
    fx_px: float = 400.0
    tessellation: int = 384
    pixel_noise: float = 0.0
    min_frames: int = 100

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValueError("a sweep needs at least one seed")
        unknown = set(self.sections) - set(SECTIONS)
        if unknown:
            raise ValueError(f"unknown sections: {sorted(unknown)}")

    def jobs(self) -> List[SweepJob]:
        return [
            SweepJob(section, d, o, seed)
            for section in self.sections
            for d in self.distances_m
            for o in self.occlusion_levels
            for seed in self.seeds
        ]

    def scenario(self, job: SweepJob) -> Scenario:
        return forearm_scenario(
            job.distance_m,
            job.occlusion,
            in_range=job.section == SECTIONS[0],
            seed=job.seed,
            duration_s=self.duration_s,
            width_px=self.width_px,
            height_px=self.height_px,
            fx_px=self.fx_px,
            tessellation=self.tessellation,
            pixel_noise=self.pixel_noise,
        )


@dataclass
class SweepResult:
    table: ResultTable
    results: List[ScenarioResult]
    failures: Dict[CellKey, int]
    messages: List[str]

    @property
    def failed(self) -> int:
        return sum(self.failures.values())


def _run_job(args: Tuple[SweepGrid, SweepJob]) -> Tuple[SweepJob, Optional[ScenarioResult], Optional[str]]:
    grid, job = args
    try:
        scenario = grid.scenario(job)
        return job, ScenarioResult(scenario.name, job.seed, run_scenario(scenario), job.section), None
    except OccluFuseError as exc:
        return job, None, f"{job.section} d={job.distance_m:g} o={job.occlusion:g} seed={job.seed}: {exc}"


def sweep(grid: SweepGrid, jobs: int = 1) -> SweepResult:
    """Run every (section, distance, occlusion, seed) scenario and aggregate.

    Scenarios run in parallel across ``jobs`` processes; results are collected
    in job order so the output does not depend on scheduling.
    """
    work = [(grid, job) for job in grid.jobs()]
    with timed("sweep", {"scenarios": len(work), "jobs": jobs}) as payload:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(_run_job, work))
        else:
            outcomes = [_run_job(w) for w in work]
        results: List[ScenarioResult] = []
        failures: Dict[CellKey, int] = {}
        messages: List[str] = []
        for job, result, message in outcomes:
            if result is None:
                failures[job.nominal_cell] = failures.get(job.nominal_cell, 0) + 1
                messages.append(message or "")
                logger.warning("sweep scenario failed: %s", message)
            else:
                results.append(result)
        payload["failed"] = len(messages)
    if not results:
        raise OccluFuseError("every sweep scenario failed")
    table = aggregate(results, grid.min_frames)
    for key, count in failures.items():
        table.cells.setdefault(key, CellStats()).failures = count
    return SweepResult(table, results, failures, messages)


# error-versus-distance profiles


@dataclass(frozen=True)
class ProfilePoint:
    distance_m: float
    rmse_m: float
    per_axis_rmse_m: Tuple[float, float, float]
    n_ok: int


def _profile_point(distance: float, errors: List[np.ndarray]) -> ProfilePoint:
    if not errors:
        return ProfilePoint(distance, float("nan"), (float("nan"),) * 3, 0)
    e = np.stack(errors)
    per_axis = tuple(float(v) for v in np.sqrt(np.mean(e**2, axis=0)))
    return ProfilePoint(distance, float(np.sqrt(np.mean(np.sum(e**2, axis=1)))), per_axis, len(errors))


def haptic_error_profile(
    distances_m: Sequence[float],
    seeds: Sequence[int],
    *,
    shape: Optional[ShapePrimitive] = None,
    rig: Optional[SensorRig] = None,
) -> List[ProfilePoint]:
    """Haptic position RMSE versus the gap between the forearm surface and the pad plane."""
    target = shape or forearm_shape()
    sensors = rig or sensor_array_rig()
    lowest = 0.5 * target.dimensions[2] if target.kind is ShapeKind.BOX else target.dimensions[0]
    points = []
    for d in distances_m:
        truth = Pose6([0.0, 0.0, lowest + float(d)])
        errors = []
        for seed in seeds:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
            prior = truth.perturbed(np.concatenate([rng.normal(0.0, 0.005, 3), np.zeros(3)]))
            readings = [
                (T, measure(sensors.model, T, target, truth, np.random.SeedSequence(seed, spawn_key=(1, i))))
                for i, T in enumerate(sensors.sensor_poses)
            ]
            try:
                est = estimate_pose_haptic(readings, target, prior)
            except HapticEstimationError:
                continue
            errors.append(est.pose.position - truth.position)
        points.append(_profile_point(float(d), errors))
    record_metric("haptic_error_profile", {"points": len(points), "seeds": len(seeds)})
    return points


def vision_error_profile(
    distances_m: Sequence[float],
    seeds: Sequence[int],
    *,
    shape: Optional[ShapePrimitive] = None,
    width_px: int = 320,
    height_px: int = 240,
    fx_px: float = 400.0,
    pixel_noise: float = 0.01,
    options: VisionOptions = VisionOptions(),
) -> List[ProfilePoint]:
    """Vision position RMSE versus camera distance; per-axis errors are in the camera frame (z = depth)."""
    target = shape or forearm_shape()
    truth = Pose6([0.0, 0.0, 0.0])
    points = []
    for d in distances_m:
        camera = camera_facing(truth.position, float(d), width_px=width_px, height_px=height_px, fx_px=fx_px)
        clean = render_mask(target, truth, camera)
        errors = []
        for seed in seeds:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
            observed = clean
            if pixel_noise > 0 and clean.count() > 0:
                observed = degrade_mask(clean, 0.0, pixel_noise, np.random.SeedSequence(seed, spawn_key=(1,)))
            offset = np.concatenate([rng.normal(0.0, 0.01, 3), rng.normal(0.0, np.deg2rad(2.0), 3)])
            try:
                est = estimate_pose_vision(observed, truth.perturbed(offset), target, camera, (), options)
            except LostTrackError:
                continue
            errors.append(camera.extrinsic.rotation @ (est.pose.position - truth.position))
        points.append(_profile_point(float(d), errors))
    record_metric("vision_error_profile", {"points": len(points), "seeds": len(seeds)})
    return points
