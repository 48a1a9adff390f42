"""Silhouette-matching pose estimation.

The score of a candidate pose is the overlap between the observed mask and
the mask rendered at that pose. Refinement is gradient ascent started from
the previous pose, with the gradient taken by central finite differences and
a single-axis search for moves the gradient misses.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, EmptyGridError, LostTrackError
from .geometry import CameraModel, Pose6
from .render import Mask, Occluder, render_coverage, render_mask
from .shapes import ShapePrimitive


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class VisionPoseEstimate:
    pose: Pose6
    score: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class VisionOptions:
    max_iterations: int = 100
    improvement_tolerance: float = 1e-5
    rotation_step_rad: float = float(np.deg2rad(0.5))
    translation_step_px: float = 1.0
    supersample: int = 2
    initial_step: float = 8.0
    min_step: float = 0.25


def mask_overlap(m: Mask, m_hat: Mask) -> float:
    """Mean of 4(m - 1/2)(m_hat - 1/2) over all pixels; 1 - 2*hamming/(w*h)."""
    if m.shape != m_hat.shape:
        raise DimensionMismatchError(f"mask sizes differ: {m.shape} vs {m_hat.shape}")
    n = m.labels.size
    hamming = int(np.count_nonzero(m.binary() != m_hat.binary()))
    return (n - 2 * hamming) / n


def _coverage_overlap(observed: np.ndarray, coverage: np.ndarray) -> float:
    return float(np.mean((2.0 * observed - 1.0) * (2.0 * coverage - 1.0)))


def default_steps(pose: Pose6, camera: CameraModel, options: VisionOptions = VisionOptions()) -> np.ndarray:
    """Translation steps that move the silhouette about one pixel, rotation steps of half a degree."""
    z = max(camera.depth_of(pose.position), 1e-3)
    t = options.translation_step_px * z / min(camera.fx, camera.fy)
    r = options.rotation_step_rad
    return np.array([t, t, t, r, r, r])


class _Objective:
    """Score of the observed mask against renders, in step-scaled pose coordinates."""

    def __init__(
        self,
        mask: Mask,
        origin: Pose6,
        steps: np.ndarray,
        shape: ShapePrimitive,
        camera: CameraModel,
        occluders: Sequence[Occluder],
        supersample: int,
    ) -> None:
        self.mask = mask
        self.observed = mask.binary().astype(float)
        self.origin = origin.as_vector()
        self.steps = np.asarray(steps, dtype=float)
        self.shape = shape
        self.camera = camera
        self.occluders = tuple(occluders)
        self.supersample = supersample

    def pose(self, q: np.ndarray) -> Pose6:
        return Pose6.from_vector(self.origin + q * self.steps)

    def __call__(self, q: np.ndarray) -> float:
        coverage = render_coverage(self.shape, self.pose(q), self.camera, self.occluders, self.supersample)
        return _coverage_overlap(self.observed, coverage)

    def binary(self, q: np.ndarray) -> float:
        """mask_overlap against the single-sample render at ``q``."""
        return mask_overlap(self.mask, render_mask(self.shape, self.pose(q), self.camera, self.occluders))

    def gradient(self, q: np.ndarray, axes: Sequence[int]) -> np.ndarray:
        g = np.zeros(6)
        # fixed axis order keeps the reduction deterministic
        for i in axes:
            e = np.zeros(6)
            e[i] = 1.0
            g[i] = 0.5 * (self(q + e) - self(q - e))
        return g


_Step = Optional[Tuple[np.ndarray, float]]


def _gradient_step(
    objective: _Objective, q: np.ndarray, current: float, axes: Sequence[int], options: VisionOptions
) -> _Step:
    """Halving line search along the normalised gradient; None when no trial beats ``current``."""
    g = objective.gradient(q, axes)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return None
    direction = g / norm
    alpha = options.initial_step
    while alpha >= options.min_step:
        candidate = q + alpha * direction
        score = objective(candidate)
        if score > current:
            return candidate, score
        alpha *= 0.5
    return None


def _axis_step(
    objective: _Objective, q: np.ndarray, current: float, axes: Sequence[int], options: VisionOptions
) -> _Step:
    """Best single-axis move at the coarsest step that beats ``current``; steps halve down to min_step."""
    alpha = options.initial_step
    while alpha >= options.min_step:
        best: _Step = None
        for i in axes:
            for sign in (1.0, -1.0):
                candidate = q.copy()
                candidate[i] += sign * alpha
                score = objective(candidate)
                if score > current and (best is None or score > best[1]):
                    best = (candidate, score)
        if best is not None:
            return best
        alpha *= 0.5
    return None


def estimate_jacobian(
    mask: Mask,
    pose: Pose6,
    shape: ShapePrimitive,
    camera: CameraModel,
    occluders: Sequence[Occluder] = (),
    steps: Sequence[float] | None = None,
    supersample: int = 1,
) -> np.ndarray:
    """d(score)/d(pose) by central differences, one step per pose axis."""
    step_vec = default_steps(pose, camera) if steps is None else np.asarray(steps, dtype=float).reshape(6)
    if np.any(step_vec <= 0):
        raise ValueError("finite-difference steps must be positive")
    objective = _Objective(mask, pose, step_vec, shape, camera, occluders, supersample)
    return objective.gradient(np.zeros(6), range(6)) / step_vec


def estimate_pose_vision(
    mask: Mask,
    prior: Pose6,
    shape: ShapePrimitive,
    camera: CameraModel,
    occluders: Sequence[Occluder] = (),
    options: VisionOptions = VisionOptions(),
) -> VisionPoseEstimate:
    """Refine ``prior`` so the rendered silhouette best matches ``mask``.

    Ascent runs along the normalised gradient with a halving line search.
    When that stalls, a coarse-to-fine search over single axes takes over, and
    the run stops once neither improves the score by the tolerance. Axes the
    shape is symmetric about are held at the prior.

    The returned pose is the iterate with the highest mask_overlap, and
    ``score`` is that overlap.
    """
    if mask.count() == 0:
        raise LostTrackError("observed mask is empty", score=-1.0)
    if mask_overlap(mask, render_mask(shape, prior, camera, occluders)) == 1.0:
        return VisionPoseEstimate(prior, 1.0, 0, True)

    axes = [i for i in range(6) if i not in shape.unobservable_axes]
    objective = _Objective(
        mask, prior, default_steps(prior, camera, options), shape, camera, occluders, options.supersample
    )
    q = np.zeros(6)
    current = objective(q)
    best_q, best_score = q, objective.binary(q)
    converged = False
    iterations = 0
    while iterations < options.max_iterations:
        iterations += 1
        step = _gradient_step(objective, q, current, axes, options)
        if step is None or step[1] - current < options.improvement_tolerance:
            fallback = _axis_step(objective, q, current, axes, options)
            if fallback is not None and (step is None or fallback[1] > step[1]):
                step = fallback
        if step is None:
            converged = True
            break
        q, score = step
        gain = score - current
        current = score
        binary = objective.binary(q)
        if binary > best_score:
            best_q, best_score = q, binary
        if best_score == 1.0 or gain < options.improvement_tolerance:
            converged = True
            break

    pose = objective.pose(best_q)
    logger.debug("vision ascent: %d iterations, score %.4f", iterations, best_score)
    if best_score < 0.0:
        raise LostTrackError(f"silhouette match lost (score {best_score:.3f})", score=best_score)
    return VisionPoseEstimate(pose, best_score, iterations, converged)


def pose_lattice(
    center: Pose6,
    translation_halfwidth_m: float,
    rotation_halfwidth_rad: float,
    points_per_axis: int = 5,
) -> List[Pose6]:
    """Regular grid around ``center``; scan order is itertools.product over x, y, z, roll, pitch, yaw."""
    if points_per_axis < 1:
        return []
    t = np.linspace(-translation_halfwidth_m, translation_halfwidth_m, points_per_axis)
    r = np.linspace(-rotation_halfwidth_rad, rotation_halfwidth_rad, points_per_axis)
    if points_per_axis == 1:
        t, r = np.zeros(1), np.zeros(1)
    base = center.as_vector()
    return [Pose6.from_vector(base + np.array(delta)) for delta in itertools.product(t, t, t, r, r, r)]


def brute_force_pose_search(
    mask: Mask,
    grid: Sequence[Pose6],
    shape: ShapePrimitive,
    camera: CameraModel,
    occluders: Sequence[Occluder] = (),
) -> Tuple[Pose6, float]:
    """Exhaustive argmax of mask_overlap over ``grid``; ties keep the earliest pose."""
    if len(grid) == 0:
        raise EmptyGridError("pose grid is empty")
    best_pose, best_score = grid[0], -np.inf
    for pose in grid:
        score = mask_overlap(mask, render_mask(shape, pose, camera, occluders))
        if score > best_score:
            best_pose, best_score = pose, score
    return best_pose, float(best_score)
