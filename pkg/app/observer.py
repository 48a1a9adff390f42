"""Luenberger-style pose observer fusing vision and haptic estimates.

Both modalities measure the pose directly, so the output matrix is two
stacked identities. The gain follows from a Riccati covariance integrated
with explicit Euler. A modality that has nothing to say is given the
sentinel covariance and a zero innovation, so matrix shapes never change.
The fused output goes through a second-order low-pass filter.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .errors import (
    DegenerateError,
    DimensionMismatchError,
    FilterInstabilityError,
    NoMeasurementError,
    SingularCovarianceError,
    StepInstabilityError,
)
from .geometry import COVARIANCE_SENTINEL, Pose6, wrap_angle
from .render import Mask


logger = logging.getLogger(__name__)

C_STACKED = np.vstack([np.eye(6), np.eye(6)])
_P_LIMIT = 1e9
_PSD_TOL = 1e-9


def _diag6(values: Sequence[float]) -> np.ndarray:
    return np.diag(np.asarray(values, dtype=float).reshape(6))


@dataclass(frozen=True, eq=False)
class NoiseConfig:
    process: np.ndarray = field(default_factory=lambda: 1e3 * np.eye(6))
    vision_weight: np.ndarray = field(
        default_factory=lambda: _diag6([8.0, 8.0, 8.0, 16 * np.pi, 16 * np.pi, 16 * np.pi])
    )
    haptic_sigma2_near: np.ndarray = field(
        default_factory=lambda: np.array([0.005, 0.005, 0.005, 0.05, 0.05, 0.05])
    )
    haptic_growth_exponent: float = 4.0
    haptic_range_m: float = 0.15
    omega_n_rad_s: float = 120 * np.pi
    zeta: float = 1 / np.sqrt(2.0)
    vision_scale_floor: float = 0.01
    sentinel: float = COVARIANCE_SENTINEL
    initial_covariance: np.ndarray = field(default_factory=lambda: 1e-2 * np.eye(6))

    def __post_init__(self) -> None:
        for name in ("process", "vision_weight", "initial_covariance"):
            mat = np.array(getattr(self, name), dtype=float)
            if mat.shape != (6, 6):
                raise DimensionMismatchError(f"{name} must be 6x6, got {mat.shape}")
            if not np.allclose(mat, mat.T) or np.linalg.eigvalsh(mat).min() < -_PSD_TOL:
                raise ValueError(f"{name} must be symmetric positive semi-definite")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        near = np.array(self.haptic_sigma2_near, dtype=float).reshape(6)
        if np.any(near <= 0):
            raise ValueError("haptic near-range variances must be positive")
        near.setflags(write=False)
        object.__setattr__(self, "haptic_sigma2_near", near)
        if self.omega_n_rad_s <= 0 or self.zeta <= 0:
            raise ValueError("omega_n and zeta must be positive")
        if self.haptic_range_m <= 0 or self.haptic_growth_exponent <= 0:
            raise ValueError("haptic range and growth exponent must be positive")
        if not 0.0 <= self.vision_scale_floor <= 1.0:
            raise ValueError("vision_scale_floor must be in [0, 1]")

    def sentinel_block(self) -> np.ndarray:
        return self.sentinel * np.eye(6)


@dataclass(frozen=True, eq=False)
class ObserverState:
    estimate: Pose6
    covariance: np.ndarray
    time: float = 0.0
    lpf_state: Optional[np.ndarray] = None
    lpf_last: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, pose: Pose6, config: NoiseConfig, time: float = 0.0) -> "ObserverState":
        return cls(pose, np.array(config.initial_covariance), time)


@dataclass(frozen=True, eq=False)
class ModalityMeasurement:
    pose: Optional[Pose6]
    covariance: np.ndarray
    valid: bool = True

    @classmethod
    def invalid(cls, config: NoiseConfig) -> "ModalityMeasurement":
        return cls(None, config.sentinel_block(), False)


@dataclass(frozen=True, eq=False)
class MeasurementPair:
    vision: ModalityMeasurement
    haptic: ModalityMeasurement

    @property
    def any_valid(self) -> bool:
        return self.vision.valid or self.haptic.valid

    def noise(self) -> np.ndarray:
        R = np.zeros((12, 12))
        R[:6, :6] = self.vision.covariance
        R[6:, 6:] = self.haptic.covariance
        return R


def _advance(estimate: Pose6, delta: np.ndarray) -> Pose6:
    return Pose6.from_vector(estimate.as_vector() + delta)


def predict(state: ObserverState, u: Sequence[float], dt: float, Q: np.ndarray) -> ObserverState:
    """Random-walk propagation: x += u dt, P += Q dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    velocity = np.asarray(u, dtype=float).reshape(6)
    P = state.covariance + np.asarray(Q) * dt
    return replace(state, estimate=_advance(state.estimate, velocity * dt), covariance=P, time=state.time + dt)


def riccati_step(
    P: np.ndarray,
    A: np.ndarray,
    C: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    dt: float,
) -> np.ndarray:
    """One explicit Euler step of dP/dt = AP + PA' + Q - PC'R^-1CP."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    try:
        R_inv = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("measurement covariance is singular") from exc
    PCt = P @ C.T
    dP = A @ P + P @ A.T + Q - PCt @ R_inv @ PCt.T
    P_next = P + dt * dP
    P_next = 0.5 * (P_next + P_next.T)
    if not np.all(np.isfinite(P_next)) or np.max(np.abs(P_next)) > _P_LIMIT:
        raise StepInstabilityError(f"covariance diverged (dt={dt:g} too large?)")
    eigvals, eigvecs = np.linalg.eigh(P_next)
    if eigvals.min() < 0.0:
        P_next = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
        P_next = 0.5 * (P_next + P_next.T)
    return P_next


def gain(P: np.ndarray, C: np.ndarray, R: np.ndarray) -> np.ndarray:
    """K = P C' R^-1."""
    try:
        R_inv = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("measurement covariance is singular") from exc
    if not np.all(np.isfinite(R_inv)):
        raise SingularCovarianceError("measurement covariance is singular")
    return P @ C.T @ R_inv


def innovation(state: ObserverState, meas: MeasurementPair) -> np.ndarray:
    """Stacked [y_v - x; y_h - x], attitudes wrapped; zero for an invalid modality."""
    x = state.estimate.as_vector()
    z = np.zeros(12)
    for offset, m in ((0, meas.vision), (6, meas.haptic)):
        if m.valid and m.pose is not None:
            d = m.pose.as_vector() - x
            d[3:] = wrap_angle(d[3:])
            z[offset : offset + 6] = d
    return z


def update(
    state: ObserverState,
    meas: MeasurementPair,
    dt: float,
    config: NoiseConfig,
    u: Optional[Sequence[float]] = None,
) -> ObserverState:
    """Correct the estimate with both modalities and advance P by one Riccati step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not meas.any_valid:
        raise NoMeasurementError("neither vision nor haptic produced a valid pose")
    R = meas.noise()
    K = gain(state.covariance, C_STACKED, R)
    z = innovation(state, meas)
    velocity = np.zeros(6) if u is None else np.asarray(u, dtype=float).reshape(6)
    estimate = _advance(state.estimate, dt * (velocity + K @ z))
    P = riccati_step(state.covariance, np.zeros((6, 6)), C_STACKED, config.process, R, dt)
    return replace(state, estimate=estimate, covariance=P, time=state.time + dt)


def occlusion_scale(m_hat: Mask, m: Mask) -> float:
    """(sum m_hat - sum m) / sum m_hat, clipped to [0, 1]."""
    if m_hat.shape != m.shape:
        raise DimensionMismatchError(f"mask sizes differ: {m_hat.shape} vs {m.shape}")
    expected = m_hat.count()
    if expected == 0:
        raise DegenerateError("predicted mask is empty; target is out of view")
    return float(np.clip((expected - m.count()) / expected, 0.0, 1.0))


def compute_R_v(m_hat: Mask, m: Mask, W_v: np.ndarray) -> np.ndarray:
    return occlusion_scale(m_hat, m) * np.asarray(W_v, dtype=float)


def vision_covariance(scale: float, config: NoiseConfig) -> np.ndarray:
    """R_v actually fed to the observer; the floor keeps it invertible when nothing is occluded."""
    return max(scale, config.vision_scale_floor) * config.vision_weight


def compute_R_c(
    estimate: Pose6,
    sensor_positions: np.ndarray,
    config: NoiseConfig,
    unobservable_axes: Sequence[int] = (),
) -> np.ndarray:
    """Haptic covariance from the distance between the estimate and the closest sensor."""
    sensors = np.atleast_2d(np.asarray(sensor_positions, dtype=float))
    if sensors.size == 0:
        raise ValueError("at least one sensor position is required")
    d = float(np.min(np.linalg.norm(sensors - estimate.position, axis=1)))
    if d > config.haptic_range_m:
        return config.sentinel_block()
    variances = config.haptic_sigma2_near * (1.0 + (d / config.haptic_range_m) ** config.haptic_growth_exponent)
    variances = np.array(variances)
    for axis in unobservable_axes:
        variances[axis] = config.sentinel
    return np.diag(variances)


def lowpass_coefficients(omega_n: float, zeta: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear-transform discretisation of omega_n^2 / (s^2 + 2 zeta omega_n s + omega_n^2)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if omega_n * dt >= 1.0:
        raise FilterInstabilityError(f"omega_n*dt = {omega_n * dt:.3g} must stay below 1")
    return signal.bilinear([omega_n**2], [1.0, 2.0 * zeta * omega_n, omega_n**2], fs=1.0 / dt)


def lowpass(
    state: ObserverState,
    raw_pose: Pose6,
    dt: float,
    config: NoiseConfig,
) -> Tuple[Pose6, ObserverState]:
    """Filter one sample of the fused stream; the first sample primes the filter at steady state."""
    b, a = lowpass_coefficients(config.omega_n_rad_s, config.zeta, dt)
    raw = raw_pose.as_vector()
    if state.lpf_state is None or state.lpf_last is None:
        unwrapped = raw
        zi = signal.lfilter_zi(b, a)[:, None] * unwrapped[None, :]
    else:
        unwrapped = raw.copy()
        unwrapped[3:] = state.lpf_last[3:] + wrap_angle(raw[3:] - state.lpf_last[3:])
        zi = state.lpf_state
    out, zf = signal.lfilter(b, a, unwrapped[None, :], axis=0, zi=zi)
    return Pose6.from_vector(out[0]), replace(state, lpf_state=zf, lpf_last=unwrapped)


class LuenbergerObserver:
    """Stateful wrapper advancing one observer at the substep rate."""

    def __init__(self, config: NoiseConfig, initial_pose: Pose6, t0: float = 0.0) -> None:
        self.config = config
        self.state = ObserverState.initial(initial_pose, config, t0)
        self.output = initial_pose

    @property
    def estimate(self) -> Pose6:
        return self.state.estimate

    def step(self, meas: Optional[MeasurementPair], dt: float, u: Optional[Sequence[float]] = None) -> Pose6:
        """Advance by dt; with no valid measurement only the prediction runs."""
        if meas is not None and meas.any_valid:
            self.state = update(self.state, meas, dt, self.config, u)
        else:
            self.state = predict(self.state, np.zeros(6) if u is None else u, dt, self.config.process)
        self.output, self.state = lowpass(self.state, self.state.estimate, dt, self.config)
        return self.output

    def run(self, meas: Optional[MeasurementPair], dt: float, substeps: int) -> Pose6:
        for _ in range(substeps):
            self.step(meas, dt)
        return self.output
