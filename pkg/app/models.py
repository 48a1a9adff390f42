from __future__ import annotations

from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .geometry import CameraModel, Pose6, RigidTransform
from .haptic import N_JOINTS, KinematicChain, Link, SensorMount, sensor_grid
from .harness import (
    OcclusionWindow,
    Scenario,
    SensorRig,
    SweepGrid,
    Trajectory,
)
from .observer import NoiseConfig
from .sensor import SensorModel
from .shapes import ShapeKind, ShapePrimitive
from .vision import VisionOptions


Vec3 = Tuple[float, float, float]
Vec6 = Tuple[float, float, float, float, float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# calibration


class SensorCalibration(_Strict):
    a1_volts: float = Field(..., gt=0, description="Contact-to-baseline voltage swing")
    a2_per_m2: float = Field(..., gt=0, description="Distance falloff coefficient")
    a3_volts: float = Field(..., ge=0, description="No-object baseline voltage")
    noise_variance_volts2: float = Field(..., ge=0)
    range_m: float = Field(0.15, gt=0)
    sigma0_m: float = Field(2e-4, ge=0, description="Nearest-point noise std at contact")
    noise_growth_per_m2: float = Field(400.0, ge=0)
    synthetic: bool = True
    note: str = ""

    def to_domain(self, mount: Optional[RigidTransform] = None) -> SensorModel:
        return SensorModel(
            a1=self.a1_volts,
            a2=self.a2_per_m2,
            a3=self.a3_volts,
            noise_variance=self.noise_variance_volts2,
            mount=mount or RigidTransform.identity(),
            range_m=self.range_m,
            sigma0_m=self.sigma0_m,
            noise_growth_m2=self.noise_growth_per_m2,
        )


# scene


class PoseConfig(_Strict):
    position_m: Vec3 = (0.0, 0.0, 0.0)
    attitude_rad: Vec3 = (0.0, 0.0, 0.0)

    def to_domain(self) -> Pose6:
        return Pose6(self.position_m, self.attitude_rad)

    def to_transform(self) -> RigidTransform:
        return RigidTransform.from_rpy(self.position_m, self.attitude_rad)


class KnotConfig(PoseConfig):
    time_s: float = Field(..., ge=0)


class OscillationConfig(_Strict):
    center: PoseConfig
    amplitude: Vec6 = Field(..., description="Per-axis amplitude (m, m, m, rad, rad, rad)")
    frequency_hz: float = Field(..., gt=0)


class TrajectoryConfig(_Strict):
    knots: List[KnotConfig] = Field(default_factory=list)
    oscillation: Optional[OscillationConfig] = None

    @model_validator(mode="after")
    def _one_source(self) -> "TrajectoryConfig":
        if bool(self.knots) == (self.oscillation is not None):
            raise ValueError("trajectory needs either knots or an oscillation, not both")
        if self.knots and len(self.knots) < 2:
            raise ValueError("trajectory needs at least two knots")
        return self

    def to_domain(self, duration_s: float) -> Trajectory:
        if self.oscillation is not None:
            osc = self.oscillation
            return Trajectory.oscillation(osc.center.to_domain(), osc.amplitude, osc.frequency_hz, duration_s)
        times = np.array([k.time_s for k in self.knots])
        poses = np.array([list(k.position_m) + list(k.attitude_rad) for k in self.knots])
        return Trajectory(times, poses)


class ShapeConfig(_Strict):
    kind: ShapeKind
    dimensions_m: List[float] = Field(..., min_length=1, max_length=3)
    tessellation: int = Field(384, ge=12)

    def to_domain(self) -> ShapePrimitive:
        if self.kind is ShapeKind.BOX:
            return ShapePrimitive.box(*self.dimensions_m)
        return ShapePrimitive(self.kind, tuple(self.dimensions_m), self.tessellation)


class CameraConfig(_Strict):
    eye_m: Vec3
    target_m: Vec3
    up: Vec3 = (0.0, 0.0, 1.0)
    fx_px: float = Field(400.0, gt=0)
    fy_px: Optional[float] = Field(None, gt=0)
    width_px: int = Field(320, gt=0)
    height_px: int = Field(240, gt=0)

    def to_domain(self) -> CameraModel:
        return CameraModel.look_at(
            self.eye_m,
            self.target_m,
            fx=self.fx_px,
            fy=self.fy_px or self.fx_px,
            width=self.width_px,
            height=self.height_px,
            up=self.up,
        )


class JointConfig(_Strict):
    axis: Vec3 = (0.0, 0.0, 1.0)
    offset: PoseConfig = Field(default_factory=PoseConfig)


class GridConfig(_Strict):
    link: int = Field(N_JOINTS - 1, ge=0, lt=N_JOINTS)
    origin_m: Vec3 = (0.0, 0.0, 0.0)
    spacing_m: float = Field(..., gt=0)
    rows: int = Field(..., ge=1)
    cols: int = Field(..., ge=1)
    attitude_rad: Vec3 = (0.0, 0.0, 0.0)


class MountConfig(_Strict):
    link: int = Field(N_JOINTS - 1, ge=0, lt=N_JOINTS)
    pose: PoseConfig = Field(default_factory=PoseConfig)


class RigConfig(_Strict):
    object_class: str = "forearm"
    base: PoseConfig = Field(default_factory=PoseConfig)
    joints: Optional[List[JointConfig]] = Field(None, description="Six joints; omitted means a static rig")
    joint_angles_rad: Vec6 = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    grids: List[GridConfig] = Field(default_factory=list)
    mounts: List[MountConfig] = Field(default_factory=list)
    sensor_noise: bool = True

    @model_validator(mode="after")
    def _has_sensors(self) -> "RigConfig":
        if not self.grids and not self.mounts:
            raise ValueError("sensor rig needs at least one grid or mount")
        if self.joints is not None and len(self.joints) != N_JOINTS:
            raise ValueError(f"sensor rig needs exactly {N_JOINTS} joints")
        return self

    def to_domain(self) -> SensorRig:
        from .tools.calibration import sensor_model_for

        mounts: List[SensorMount] = []
        for g in self.grids:
            mounts.extend(sensor_grid(g.link, g.origin_m, g.spacing_m, g.rows, g.cols, g.attitude_rad))
        mounts.extend(SensorMount(m.link, m.pose.to_transform()) for m in self.mounts)
        base = self.base.to_transform()
        if self.joints is None:
            chain = KinematicChain.fixed(mounts, base)
        else:
            links = tuple(Link(np.array(j.axis), j.offset.to_transform()) for j in self.joints)
            chain = KinematicChain(links, tuple(mounts), base)
        return SensorRig(chain, np.array(self.joint_angles_rad), sensor_model_for(self.object_class))


class OccluderConfig(_Strict):
    shape: ShapeConfig
    pose: PoseConfig


class OcclusionWindowConfig(_Strict):
    start_s: float = Field(0.0, ge=0)
    end_s: float = Field(..., ge=0)
    degrade_fraction: Optional[float] = Field(None, ge=0, lt=1)
    occluder: Optional[OccluderConfig] = None

    @model_validator(mode="after")
    def _one_kind(self) -> "OcclusionWindowConfig":
        if (self.degrade_fraction is None) == (self.occluder is None):
            raise ValueError("occlusion window needs exactly one of degrade_fraction or occluder")
        if self.end_s < self.start_s:
            raise ValueError("occlusion window ends before it starts")
        return self

    def to_domain(self) -> OcclusionWindow:
        occluder = None
        if self.occluder is not None:
            occluder = (self.occluder.shape.to_domain(), self.occluder.pose.to_domain())
        return OcclusionWindow(self.start_s, self.end_s, self.degrade_fraction, occluder)


_DEFAULT_NOISE = NoiseConfig()


class NoiseSettings(_Strict):
    process_diag: Vec6 = tuple(float(v) for v in np.diag(_DEFAULT_NOISE.process))
    vision_weight_diag: Vec6 = tuple(float(v) for v in np.diag(_DEFAULT_NOISE.vision_weight))
    haptic_sigma2_near: Vec6 = tuple(float(v) for v in _DEFAULT_NOISE.haptic_sigma2_near)
    haptic_growth_exponent: float = Field(_DEFAULT_NOISE.haptic_growth_exponent, gt=0)
    haptic_range_m: float = Field(_DEFAULT_NOISE.haptic_range_m, gt=0)
    omega_n_rad_s: float = Field(_DEFAULT_NOISE.omega_n_rad_s, gt=0)
    zeta: float = Field(float(_DEFAULT_NOISE.zeta), gt=0)
    vision_scale_floor: float = Field(_DEFAULT_NOISE.vision_scale_floor, ge=0, le=1)
    sentinel: float = Field(_DEFAULT_NOISE.sentinel, gt=0)
    initial_covariance_diag: Vec6 = tuple(float(v) for v in np.diag(_DEFAULT_NOISE.initial_covariance))

    def to_domain(self) -> NoiseConfig:
        return NoiseConfig(
            process=np.diag(self.process_diag),
            vision_weight=np.diag(self.vision_weight_diag),
            haptic_sigma2_near=np.array(self.haptic_sigma2_near),
            haptic_growth_exponent=self.haptic_growth_exponent,
            haptic_range_m=self.haptic_range_m,
            omega_n_rad_s=self.omega_n_rad_s,
            zeta=self.zeta,
            vision_scale_floor=self.vision_scale_floor,
            sentinel=self.sentinel,
            initial_covariance=np.diag(self.initial_covariance_diag),
        )


_DEFAULT_VISION = VisionOptions()


class VisionSettings(_Strict):
    max_iterations: int = Field(_DEFAULT_VISION.max_iterations, ge=1)
    improvement_tolerance: float = Field(_DEFAULT_VISION.improvement_tolerance, gt=0)
    rotation_step_deg: float = Field(float(np.rad2deg(_DEFAULT_VISION.rotation_step_rad)), gt=0)
    translation_step_px: float = Field(_DEFAULT_VISION.translation_step_px, gt=0)
    supersample: int = Field(_DEFAULT_VISION.supersample, ge=1, le=4)

    def to_domain(self) -> VisionOptions:
        return VisionOptions(
            max_iterations=self.max_iterations,
            improvement_tolerance=self.improvement_tolerance,
            rotation_step_rad=float(np.deg2rad(self.rotation_step_deg)),
            translation_step_px=self.translation_step_px,
            supersample=self.supersample,
        )


class SceneConfig(_Strict):
    name: str = "scene"
    duration_s: float = Field(..., gt=0)
    frame_rate_hz: float = Field(30.0, gt=0)
    observer_dt_s: float = Field(1e-3, gt=0)
    seed: int = Field(0, ge=0)
    pixel_noise: float = Field(0.0, ge=0, le=0.1)
    target: ShapeConfig
    trajectory: TrajectoryConfig
    camera: CameraConfig
    rig: RigConfig
    occlusion: List[OcclusionWindowConfig] = Field(default_factory=list)
    noise: NoiseSettings = Field(default_factory=NoiseSettings)
    vision: VisionSettings = Field(default_factory=VisionSettings)

    def to_domain(self, seed: Optional[int] = None) -> Scenario:
        return Scenario(
            name=self.name,
            trajectory=self.trajectory.to_domain(self.duration_s),
            target=self.target.to_domain(),
            camera=self.camera.to_domain(),
            rig=self.rig.to_domain(),
            occlusion=tuple(w.to_domain() for w in self.occlusion),
            frame_rate_hz=self.frame_rate_hz,
            observer_dt_s=self.observer_dt_s,
            pixel_noise=self.pixel_noise,
            sensor_noise=self.rig.sensor_noise,
            noise=self.noise.to_domain(),
            vision=self.vision.to_domain(),
            seed=self.seed if seed is None else seed,
        )


class SweepConfig(_Strict):
    distances_m: List[float] = Field([1.5, 4.5, 8.0], min_length=1)
    occlusion_levels: List[float] = Field([0.15, 0.5, 0.8], min_length=1)
    sections: List[Literal["in_range", "out_of_range"]] = Field(["in_range", "out_of_range"], min_length=1)
    seeds: int = Field(5, ge=1)
    first_seed: int = Field(0, ge=0)
    duration_s: float = Field(4.0, gt=0)
    width_px: int = Field(320, gt=0)
    height_px: int = Field(240, gt=0)
    fx_px: float = Field(400.0, gt=0)
    tessellation: int = Field(384, ge=12)
    pixel_noise: float = Field(0.0, ge=0, le=0.1)
    min_frames: int = Field(100, ge=1)

    def to_domain(self) -> SweepGrid:
        return SweepGrid(
            distances_m=tuple(self.distances_m),
            occlusion_levels=tuple(self.occlusion_levels),
            sections=tuple(self.sections),
            seeds=tuple(range(self.first_seed, self.first_seed + self.seeds)),
            duration_s=self.duration_s,
            width_px=self.width_px,
            height_px=self.height_px,
            fx_px=self.fx_px,
            tessellation=self.tessellation,
            pixel_noise=self.pixel_noise,
            min_frames=self.min_frames,
        )


# service payloads


class FitRequest(BaseModel):
    samples: List[Tuple[float, float]] = Field(..., description="(distance m, voltage V) pairs")


class FitResponse(BaseModel):
    a1_volts: float
    a2_per_m2: float
    a3_volts: float
    residual_rms_volts: float
    n_samples: int


class SimulateRequest(BaseModel):
    scene: SceneConfig
    seed: Optional[int] = Field(None, ge=0)


class RunSummary(BaseModel):
    name: str
    seed: int
    section: str
    frames: int
    lost_track: int
    haptic_valid_frames: int
    mean_occlusion: float
    rmse_m: Dict[str, Optional[float]]
    latency_ms: Optional[float] = None
