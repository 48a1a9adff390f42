"""Capacitive proximity sensor model.

Voltage response to an object at distance d:

    v(d) = a1 / (1 + a2 d^2) + a3

The analog chain (LC tank, amplifier, ADC, carrier demodulation) is folded
into this curve plus white noise on the output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateError, DomainError, FitConvergenceError, OutOfRangeError, RankDeficiencyError
from .geometry import Pose6, RigidTransform
from .observability import record_metric
from .shapes import ShapePrimitive


DEFAULT_RANGE_M = 0.15
DEFAULT_SIGMA0_M = 2e-4
DEFAULT_NOISE_GROWTH_M2 = 400.0


@dataclass(frozen=True, eq=False)
class SensorModel:
    a1: float
    a2: float
    a3: float
    noise_variance: float
    mount: RigidTransform = field(default_factory=RigidTransform.identity)
    range_m: float = DEFAULT_RANGE_M
    sigma0_m: float = DEFAULT_SIGMA0_M
    noise_growth_m2: float = DEFAULT_NOISE_GROWTH_M2

    def __post_init__(self) -> None:
        if not (self.a1 > 0 and self.a2 > 0 and self.a3 >= 0):
            raise ValueError("sensor parameters need a1 > 0, a2 > 0, a3 >= 0")
        if self.noise_variance < 0 or self.sigma0_m < 0 or self.noise_growth_m2 < 0:
            raise ValueError("noise parameters must be non-negative")
        if self.range_m <= 0:
            raise ValueError("range must be positive")

    @property
    def params(self) -> Tuple[float, float, float]:
        return self.a1, self.a2, self.a3


@dataclass(frozen=True, eq=False)
class RelativePointMeasurement:
    """Offset from sensor origin to the sensed nearest surface point, world frame."""

    offset: np.ndarray
    valid: bool
    noise_std: float
    distance: float = float("nan")


@dataclass(frozen=True)
class FitResult:
    a1: float
    a2: float
    a3: float
    residual_rms: float
    n_samples: int
    evaluations: int


def response(model: SensorModel, d: float | np.ndarray) -> float | np.ndarray:
    dist = np.asarray(d, dtype=float)
    if np.any(dist < 0):
        raise DomainError("distance must be non-negative")
    v = model.a1 / (1.0 + model.a2 * dist**2) + model.a3
    return float(v) if v.ndim == 0 else v


def response_derivative(model: SensorModel, d: float | np.ndarray) -> float | np.ndarray:
    dist = np.asarray(d, dtype=float)
    slope = -2.0 * model.a1 * model.a2 * dist / (1.0 + model.a2 * dist**2) ** 2
    return float(slope) if slope.ndim == 0 else slope


def invert_response(model: SensorModel, v: float) -> float:
    if v <= model.a3:
        raise OutOfRangeError(f"{v:.6g} V is at or below the far-field level {model.a3:.6g} V")
    if v > model.a1 + model.a3:
        raise OutOfRangeError(f"{v:.6g} V exceeds the contact level {model.a1 + model.a3:.6g} V")
    ratio = model.a1 / (v - model.a3) - 1.0
    return float(np.sqrt(max(ratio, 0.0) / model.a2))


def snr(model: SensorModel, trace: Sequence[float]) -> float:
    """Signal-to-noise ratio in dB of a voltage trace against the model's noise."""
    values = np.asarray(trace, dtype=float)
    if values.size == 0:
        raise DegenerateError("trace is empty")
    if model.noise_variance <= 0:
        raise DegenerateError("noise variance must be positive to compute an SNR")
    span = float(values.max() - values.min())
    if span == 0.0:
        raise DegenerateError("trace has zero dynamic range")
    return float(10.0 * np.log10(span**2 / (2.0 * model.noise_variance)))


def snr_at_distance(model: SensorModel, d: float) -> float:
    """SNR of an approach from the no-object baseline down to distance d."""
    return snr(model, [model.a3, response(model, d)])


def detection_range(model: SensorModel, threshold_db: float = 1.0) -> float:
    """Distance at which snr_at_distance falls to ``threshold_db``."""
    if model.noise_variance <= 0:
        raise DegenerateError("noise variance must be positive to compute a detection range")
    span = np.sqrt(2.0 * model.noise_variance * 10.0 ** (threshold_db / 10.0))
    if span >= model.a1:
        return 0.0
    return float(np.sqrt((model.a1 / span - 1.0) / model.a2))


def noise_std(model: SensorModel, d: float) -> float:
    """Per-axis std of the nearest-point offset; grows quadratically with distance."""
    return float(model.sigma0_m * (1.0 + model.noise_growth_m2 * d**2))


def _linear_fit(d: np.ndarray, v: np.ndarray, a2: float) -> Tuple[np.ndarray, float]:
    basis = np.stack([1.0 / (1.0 + a2 * d**2), np.ones_like(d)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
    resid = basis @ coef - v
    return coef, float(resid @ resid)


def fit_params(samples: Sequence[Tuple[float, float]], max_evaluations: int = 2000) -> FitResult:
    """Least-squares fit of (a1, a2, a3) to (distance, voltage) samples.

    a1 and a3 enter linearly, so the start point comes from a log-spaced scan
    over a2 with the linear part solved exactly; a bounded trust-region solve
    then refines all three together.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or len(data) < 4:
        raise FitConvergenceError("need at least 4 (distance, voltage) samples")
    d, v = data[:, 0], data[:, 1]
    if np.any(d < 0) or not np.all(np.isfinite(data)):
        raise DomainError("samples must be finite with non-negative distance")
    if np.ptp(d) == 0.0:
        raise RankDeficiencyError("all samples share one distance; a1, a2, a3 are not identifiable")
    d_min = d.min()
    if d_min > 0 and d.max() / d_min < 2.0:
        raise RankDeficiencyError("distances must span at least a 2:1 ratio")

    scan = np.logspace(-1, 7, 161)
    costs = [_linear_fit(d, v, a2)[1] for a2 in scan]
    a2_0 = float(scan[int(np.argmin(costs))])
    (a1_0, a3_0), _ = _linear_fit(d, v, a2_0)
    x0 = np.array([max(a1_0, 1e-6), a2_0, max(a3_0, 0.0)])

    def residuals(x: np.ndarray) -> np.ndarray:
        return x[0] / (1.0 + x[1] * d**2) + x[2] - v

    result = least_squares(
        residuals,
        x0,
        bounds=([1e-12, 1e-12, 0.0], [np.inf, np.inf, np.inf]),
        x_scale="jac",
        ftol=1e-12,
        xtol=1e-12,
        gtol=1e-12,
        max_nfev=max_evaluations,
        method="trf",
    )
    if not result.success or not np.all(np.isfinite(result.x)):
        raise FitConvergenceError(f"fit did not converge: {result.message}")
    a1, a2, a3 = (float(p) for p in result.x)
    rms = float(np.sqrt(np.mean(result.fun**2)))
    record_metric("sensor_fit", {"n_samples": len(d), "residual_rms": rms, "nfev": int(result.nfev)})
    return FitResult(a1, a2, a3, rms, len(d), int(result.nfev))


def measure(
    model: SensorModel,
    sensor_pose_world: RigidTransform,
    target: ShapePrimitive,
    target_pose: Pose6,
    rng_seed: int | np.random.SeedSequence | None,
) -> RelativePointMeasurement:
    origin = sensor_pose_world.translation
    nearest = target.nearest_surface_point(target_pose, origin.reshape(1, 3))[0]
    true_offset = nearest - origin
    distance = float(np.linalg.norm(true_offset))
    std = noise_std(model, distance)
    rng = np.random.default_rng(rng_seed)
    offset = true_offset + rng.normal(0.0, 1.0, 3) * std
    valid = distance <= model.range_m and float(np.linalg.norm(offset)) <= 2.0 * model.range_m
    offset.setflags(write=False)
    return RelativePointMeasurement(offset, bool(valid), std, distance)
