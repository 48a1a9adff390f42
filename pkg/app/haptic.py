"""Object pose from capacitive nearest-point measurements.

Sensors sit on a 6-joint kinematic chain. The pose is fit with damped
Gauss-Newton so that the shape's nearest surface point to every sensor lands
on the measured point.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DegenerateGeometryError, InsufficientMeasurementsError, NonConvergenceError
from .geometry import COVARIANCE_SENTINEL, Pose6, RigidTransform, axis_angle_matrix
from .sensor import RelativePointMeasurement
from .shapes import ShapePrimitive


logger = logging.getLogger(__name__)

N_JOINTS = 6


@dataclass(frozen=True, eq=False)
class Link:
    axis: np.ndarray
    offset: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self) -> None:
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        norm = float(np.linalg.norm(axis))
        if norm == 0.0:
            raise ValueError("joint axis must be non-zero")
        object.__setattr__(self, "axis", axis / norm)


@dataclass(frozen=True, eq=False)
class SensorMount:
    link: int
    transform: RigidTransform = field(default_factory=RigidTransform.identity)


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Serial chain of revolute joints; link i's frame = previous ∘ offset_i ∘ rot(axis_i, θ_i)."""

    links: Tuple[Link, ...]
    mounts: Tuple[SensorMount, ...]
    base: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self) -> None:
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "mounts", tuple(self.mounts))
        if len(self.links) != N_JOINTS:
            raise ValueError(f"chain must have {N_JOINTS} joints, got {len(self.links)}")
        for m in self.mounts:
            if not 0 <= m.link < len(self.links):
                raise ValueError(f"mount references missing link {m.link}")

    @classmethod
    def fixed(cls, mounts: Sequence[SensorMount], base: RigidTransform | None = None) -> "KinematicChain":
        """A chain whose joints are all about z with identity offsets (a static rig at θ = 0)."""
        links = tuple(Link(np.array([0.0, 0.0, 1.0])) for _ in range(N_JOINTS))
        return cls(links, tuple(mounts), base or RigidTransform.identity())


def sensor_grid(
    link: int,
    origin: Sequence[float],
    spacing: float,
    rows: int,
    cols: int,
    attitude: Sequence[float] = (0.0, 0.0, 0.0),
) -> List[SensorMount]:
    """rows x cols electrode pads in the link's xy plane, row-major from ``origin``."""
    mounts = []
    base = np.asarray(origin, dtype=float)
    for r in range(rows):
        for c in range(cols):
            pos = base + np.array([c * spacing, r * spacing, 0.0])
            mounts.append(SensorMount(link, RigidTransform.from_rpy(pos, attitude)))
    return mounts


def link_frames(chain: KinematicChain, theta: Sequence[float]) -> List[RigidTransform]:
    angles = np.asarray(theta, dtype=float).reshape(-1)
    if angles.shape != (N_JOINTS,) or not np.all(np.isfinite(angles)):
        raise ValueError(f"theta must be {N_JOINTS} finite joint angles")
    frames = []
    current = chain.base
    for link, angle in zip(chain.links, angles):
        joint = RigidTransform(axis_angle_matrix(link.axis, angle), np.zeros(3))
        current = current.compose(link.offset).compose(joint)
        frames.append(current)
    return frames


def forward_kinematics(chain: KinematicChain, theta: Sequence[float]) -> List[RigidTransform]:
    """World pose of every sensor mount, in mount order."""
    frames = link_frames(chain, theta)
    return [frames[m.link].compose(m.transform) for m in chain.mounts]


@dataclass(frozen=True, eq=False)
class HapticPoseEstimate:
    pose: Pose6
    residual_rms: float
    covariance: np.ndarray
    n_measurements: int
    iterations: int = 0
    converged: bool = True


@dataclass(frozen=True)
class GaussNewtonOptions:
    max_iterations: int = 50
    step_tolerance: float = 1e-7
    initial_damping: float = 1e-3
    max_condition: float = 1e12
    fd_step: float = 1e-7


def _residuals(
    shape: ShapePrimitive,
    pose_vec: np.ndarray,
    origins: np.ndarray,
    targets: np.ndarray,
) -> np.ndarray:
    nearest = shape.nearest_surface_point(Pose6.from_vector(pose_vec), origins)
    return (nearest - targets).ravel()


def _jacobian(
    shape: ShapePrimitive,
    pose_vec: np.ndarray,
    free: np.ndarray,
    origins: np.ndarray,
    targets: np.ndarray,
    h: float,
) -> np.ndarray:
    cols = []
    for idx in free:
        step = np.zeros(6)
        step[idx] = h
        plus = _residuals(shape, pose_vec + step, origins, targets)
        minus = _residuals(shape, pose_vec - step, origins, targets)
        cols.append((plus - minus) / (2.0 * h))
    return np.stack(cols, axis=1)


def estimate_pose_haptic(
    measurements: Sequence[Tuple[RigidTransform, RelativePointMeasurement]],
    shape: ShapePrimitive,
    prior: Pose6,
    *,
    position_only: bool = False,
    options: GaussNewtonOptions = GaussNewtonOptions(),
) -> HapticPoseEstimate:
    """Fit the object pose to the valid measurements, starting at ``prior``.

    Attitude axes the shape is symmetric about stay at the prior and carry
    the sentinel variance; with ``position_only`` all three do.
    """
    valid = [(T, m) for T, m in measurements if m.valid]
    need = 1 if position_only else 3
    if len(valid) < need:
        raise InsufficientMeasurementsError(f"{len(valid)} valid measurements, need {need}")

    origins = np.stack([T.translation for T, _ in valid])
    targets = origins + np.stack([m.offset for _, m in valid])
    frozen = set(range(3, 6)) if position_only else set(shape.unobservable_axes)
    free = np.array([i for i in range(6) if i not in frozen])

    x = prior.as_vector()
    r = _residuals(shape, x, origins, targets)
    cost = float(r @ r)
    lam = options.initial_damping
    converged = False
    iterations = 0
    J = _jacobian(shape, x, free, origins, targets, options.fd_step)
    for iterations in range(1, options.max_iterations + 1):
        JtJ = J.T @ J
        g = J.T @ r
        step = np.linalg.solve(JtJ + lam * np.eye(len(free)), -g)
        if np.linalg.norm(step) < options.step_tolerance:
            converged = True
            break
        candidate = x.copy()
        candidate[free] += step
        r_new = _residuals(shape, candidate, origins, targets)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            x, r, cost = candidate, r_new, cost_new
            lam = max(lam / 10.0, 1e-12)
            J = _jacobian(shape, x, free, origins, targets, options.fd_step)
        else:
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left at machine precision
                converged = True
                break
    if not converged:
        raise NonConvergenceError(f"no convergence after {options.max_iterations} iterations")

    JtJ = J.T @ J
    cond = np.linalg.cond(JtJ)
    if not np.isfinite(cond) or cond > options.max_condition:
        raise DegenerateGeometryError(f"measurement geometry is degenerate (condition {cond:.3g})")

    m_rows, n_free = len(r), len(free)
    dof = m_rows - n_free if m_rows > n_free else m_rows
    residual_var = cost / dof
    # floor at the declared measurement noise so noise-free fits still rank geometries
    floor = max(float(np.mean([m.noise_std**2 for _, m in valid])), 1e-12)
    sub_cov = np.linalg.inv(JtJ) * max(residual_var, floor)
    covariance = np.zeros((6, 6))
    covariance[np.ix_(free, free)] = 0.5 * (sub_cov + sub_cov.T)
    for idx in frozen:
        covariance[idx, idx] = COVARIANCE_SENTINEL

    rms = float(np.sqrt(cost / len(valid)))
    logger.debug("haptic fit: %d sensors, %d iterations, rms %.3g m", len(valid), iterations, rms)
    return HapticPoseEstimate(Pose6.from_vector(x), rms, covariance, len(valid), iterations, converged)
