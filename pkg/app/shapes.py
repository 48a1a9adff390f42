"""Convex shape primitives: trimesh tessellation for the rasterizer and analytic
nearest-surface-point queries for the haptic model.

Capsules and cylinders run along the local x axis, so a roll about the body
x axis leaves them unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Tuple

import numpy as np
import trimesh

from .geometry import Pose6


class ShapeKind(str, Enum):
    CAPSULE = "capsule"
    CYLINDER = "cylinder"
    BOX = "box"
    SPHERE = "sphere"


# kind -> (dimension names, roll/pitch/yaw indices that do not change the shape)
_DIMENSIONS = {
    ShapeKind.SPHERE: ("radius",),
    ShapeKind.CAPSULE: ("radius", "length"),
    ShapeKind.CYLINDER: ("radius", "length"),
    ShapeKind.BOX: ("size_x", "size_y", "size_z"),
}
_SYMMETRIC_AXES = {
    ShapeKind.SPHERE: (3, 4, 5),
    ShapeKind.CAPSULE: (3,),
    ShapeKind.CYLINDER: (3,),
    ShapeKind.BOX: (),
}
_Z_TO_X = trimesh.transformations.rotation_matrix(np.pi / 2.0, [0.0, 1.0, 0.0])


@dataclass(frozen=True)
class ShapePrimitive:
    kind: ShapeKind
    dimensions: Tuple[float, ...]
    tessellation: int = 1024

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        dims = tuple(float(d) for d in self.dimensions)
        names = _DIMENSIONS[self.kind]
        if len(dims) != len(names):
            raise ValueError(f"{self.kind.value} needs dimensions {names}")
        if any(not np.isfinite(d) or d <= 0 for d in dims):
            raise ValueError("all dimensions must be positive")
        if self.tessellation < 12:
            raise ValueError("tessellation budget must allow at least 12 triangles")
        object.__setattr__(self, "dimensions", dims)

    @classmethod
    def sphere(cls, radius: float, tessellation: int = 1024) -> "ShapePrimitive":
        return cls(ShapeKind.SPHERE, (radius,), tessellation)

    @classmethod
    def capsule(cls, radius: float, length: float, tessellation: int = 1024) -> "ShapePrimitive":
        return cls(ShapeKind.CAPSULE, (radius, length), tessellation)

    @classmethod
    def cylinder(cls, radius: float, length: float, tessellation: int = 1024) -> "ShapePrimitive":
        return cls(ShapeKind.CYLINDER, (radius, length), tessellation)

    @classmethod
    def box(cls, size_x: float, size_y: float, size_z: float) -> "ShapePrimitive":
        return cls(ShapeKind.BOX, (size_x, size_y, size_z), 12)

    @property
    def unobservable_axes(self) -> Tuple[int, ...]:
        """Pose-vector indices (3..5) that leave the surface unchanged."""
        return _SYMMETRIC_AXES[self.kind]

    @property
    def bounding_radius(self) -> float:
        if self.kind is ShapeKind.SPHERE:
            return self.dimensions[0]
        if self.kind is ShapeKind.BOX:
            return 0.5 * float(np.linalg.norm(self.dimensions))
        radius, length = self.dimensions
        if self.kind is ShapeKind.CAPSULE:
            return radius + 0.5 * length
        return float(np.hypot(radius, 0.5 * length))

    @cached_property
    def surface_mesh(self) -> trimesh.Trimesh:
        """Closed, outward-wound surface in the local frame with at most ``tessellation`` faces."""
        if self.kind is ShapeKind.BOX:
            mesh = trimesh.creation.box(extents=self.dimensions)
        elif self.kind is ShapeKind.SPHERE:
            (radius,) = self.dimensions
            mesh = _within_budget(
                lambda n: trimesh.creation.uv_sphere(radius=radius, count=[n, n]),
                self.tessellation,
                math.isqrt(self.tessellation // 2) + 2,
            )
        elif self.kind is ShapeKind.CAPSULE:
            radius, length = self.dimensions
            mesh = _within_budget(
                lambda n: trimesh.creation.capsule(height=length, radius=radius, count=[n, n]),
                self.tessellation,
                math.isqrt(self.tessellation // 2) + 2,
            )
        else:
            radius, length = self.dimensions
            mesh = _within_budget(
                lambda n: trimesh.creation.cylinder(radius=radius, height=length, sections=n),
                self.tessellation,
                min(64, self.tessellation // 4),
            )
        mesh.apply_translation(-mesh.bounds.mean(axis=0))
        if self.kind in (ShapeKind.CAPSULE, ShapeKind.CYLINDER):
            # trimesh builds these along z; ours run along x
            mesh.apply_transform(_Z_TO_X)
        if mesh.volume < 0:
            mesh.invert()
        return mesh

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """(vertices (N,3), faces (M,3)) in the local frame, outward-wound."""
        return (
            np.asarray(self.surface_mesh.vertices, dtype=float),
            np.asarray(self.surface_mesh.faces, dtype=np.int64),
        )

    def nearest_point_local(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind is ShapeKind.SPHERE:
            return _radial(p, np.zeros_like(p), self.dimensions[0])
        if self.kind is ShapeKind.CAPSULE:
            radius, length = self.dimensions
            axis_pt = np.zeros_like(p)
            axis_pt[:, 0] = np.clip(p[:, 0], -0.5 * length, 0.5 * length)
            return _radial(p, axis_pt, radius)
        if self.kind is ShapeKind.CYLINDER:
            return _cylinder_nearest(p, *self.dimensions)
        return _box_nearest(p, 0.5 * np.asarray(self.dimensions))

    def nearest_surface_point(self, pose: Pose6, points_world: np.ndarray) -> np.ndarray:
        tf = pose.transform()
        local = tf.apply_inverse(np.atleast_2d(points_world))
        return tf.apply(self.nearest_point_local(local))

    def world_mesh(self, pose: Pose6) -> Tuple[np.ndarray, np.ndarray]:
        vertices, faces = self.mesh
        return pose.transform().apply(vertices), faces


def _radial(p: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    d = p - centers
    n = np.linalg.norm(d, axis=1, keepdims=True)
    # points on the axis project in +y
    fallback = np.tile(np.array([0.0, 1.0, 0.0]), (len(p), 1))
    direction = np.where(n > 1e-15, d / np.where(n > 1e-15, n, 1.0), fallback)
    return centers + radius * direction


def _cylinder_nearest(p: np.ndarray, radius: float, length: float) -> np.ndarray:
    h = 0.5 * length
    x = p[:, 0]
    rho = np.hypot(p[:, 1], p[:, 2])
    radial = np.where(
        (rho > 1e-15)[:, None],
        np.stack([np.zeros_like(x), p[:, 1], p[:, 2]], axis=1) / np.where(rho > 1e-15, rho, 1.0)[:, None],
        np.array([0.0, 1.0, 0.0]),
    )
    inside = (np.abs(x) <= h) & (rho <= radius)
    # outside: clamp into the solid
    out_x = np.clip(x, -h, h)
    out_rho = np.minimum(rho, radius)
    # inside: push to the closer of cap or side
    to_cap = h - np.abs(x)
    to_side = radius - rho
    in_x = np.where(to_cap < to_side, np.where(x >= 0, h, -h), x)
    in_rho = np.where(to_cap < to_side, rho, radius)
    nx = np.where(inside, in_x, out_x)
    nrho = np.where(inside, in_rho, out_rho)
    out = radial * nrho[:, None]
    out[:, 0] = nx
    return out


def _box_nearest(p: np.ndarray, half: np.ndarray) -> np.ndarray:
    out = np.clip(p, -half, half)
    inside = np.all(np.abs(p) <= half, axis=1)
    if np.any(inside):
        q = p[inside]
        gap = half - np.abs(q)
        axis = np.argmin(gap, axis=1)
        rows = np.arange(len(q))
        sign = np.where(q[rows, axis] >= 0, 1.0, -1.0)
        q = q.copy()
        q[rows, axis] = sign * half[axis]
        out[inside] = q
    return out


def _within_budget(build: Callable[[int], trimesh.Trimesh], budget: int, start: int) -> trimesh.Trimesh:
    """Finest ``build(n)`` for n counting down from ``start`` whose face count fits ``budget``."""
    for n in range(max(start, 3), 2, -1):
        mesh = build(n)
        if len(mesh.faces) <= budget:
            return mesh
    raise ValueError(f"no tessellation fits within {budget} triangles")
