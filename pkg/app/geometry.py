"""Poses, rotations, rigid transforms and the pinhole camera.

Attitudes are roll-pitch-yaw with R = Rz(yaw) @ Ry(pitch) @ Rx(roll): a body
vector is rolled about x first, then pitched about y, then yawed about z
(fixed axes). This is the same matrix as intrinsic z-y'-x''.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.transform import Rotation


# Variance marking a modality or axis as uninformative without changing matrix shapes.
COVARIANCE_SENTINEL = 1e6

_GIMBAL_EPS = 1e-9
_ORTHO_TOL = 1e-9


def wrap_angle(a: np.ndarray | float) -> np.ndarray:
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2.0 * np.pi, w)


def rpy_to_matrix(attitude: Sequence[float]) -> np.ndarray:
    att = np.asarray(attitude, dtype=float).reshape(3)
    if not np.all(np.isfinite(att)):
        raise ValueError("attitude must be finite")
    # lowercase "xyz" in scipy is extrinsic: Rz @ Ry @ Rx
    return Rotation.from_euler("xyz", att).as_matrix()


def matrix_to_rpy(rotation: np.ndarray) -> np.ndarray:
    R = np.asarray(rotation, dtype=float)
    sp = float(np.clip(-R[2, 0], -1.0, 1.0))
    cp = float(np.hypot(R[0, 0], R[1, 0]))
    pitch = float(np.arctan2(sp, cp))
    if abs(abs(pitch) - np.pi / 2.0) < _GIMBAL_EPS or cp < _GIMBAL_EPS:
        # gimbal lock: roll pinned to 0, the coupled angle goes to yaw
        roll = 0.0
        yaw = float(np.arctan2(-R[0, 1], R[1, 1]))
    else:
        roll = float(np.arctan2(R[2, 1], R[2, 2]))
        yaw = float(np.arctan2(R[1, 0], R[0, 0]))
    return wrap_angle(np.array([roll, pitch, yaw]))


def axis_angle_matrix(axis: Sequence[float], angle: float) -> np.ndarray:
    ax = np.asarray(axis, dtype=float)
    return Rotation.from_rotvec(ax / np.linalg.norm(ax) * float(angle)).as_matrix()


def _vec3(value: Sequence[float], name: str) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pose6:
    """Object pose: position in m, RPY attitude in rad wrapped to (-pi, pi]."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        att = wrap_angle(_vec3(self.attitude, "attitude"))
        att.setflags(write=False)
        object.__setattr__(self, "attitude", att)

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Pose6":
        arr = np.asarray(v, dtype=float).reshape(6)
        return cls(arr[:3], arr[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.attitude])

    def rotation(self) -> np.ndarray:
        return rpy_to_matrix(self.attitude)

    def transform(self) -> "RigidTransform":
        return RigidTransform(self.rotation(), self.position)

    def perturbed(self, delta: Sequence[float]) -> "Pose6":
        return Pose6.from_vector(self.as_vector() + np.asarray(delta, dtype=float))


def pose_error(a: Pose6, b: Pose6) -> np.ndarray:
    """Componentwise a - b with the attitude part wrapped."""
    err = a.as_vector() - b.as_vector()
    err[3:] = wrap_angle(err[3:])
    return err


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x_parent = rotation @ x_child + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(R.T @ R, np.eye(3), atol=_ORTHO_TOL) or abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must be orthonormal with det 1")
        R.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", _vec3(self.translation, "translation"))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_rpy(cls, translation: Sequence[float], attitude: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(rpy_to_matrix(attitude), translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (pts - self.translation) @ self.rotation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def to_pose(self) -> Pose6:
        return Pose6(self.translation, matrix_to_rpy(self.rotation))


class Projection(NamedTuple):
    uv: np.ndarray
    in_front: bool


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera; camera frame is x right, y down, z along the optical axis."""

    fx: float
    fy: float
    cx: float
    cy: float
    height: int
    width: int
    extrinsic: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.height <= 0 or self.width <= 0:
            raise ValueError("image size must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def look_at(
        cls,
        eye: Sequence[float],
        target: Sequence[float],
        *,
        fx: float,
        fy: float,
        width: int,
        height: int,
        up: Sequence[float] = (0.0, 0.0, 1.0),
    ) -> "CameraModel":
        eye_v = np.asarray(eye, dtype=float)
        forward = np.asarray(target, dtype=float) - eye_v
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=float))
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.vstack([right, down, forward])
        return cls(fx, fy, width / 2.0, height / 2.0, height, width, RigidTransform(R, -R @ eye_v))

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.extrinsic.inverse().translation

    def to_camera(self, points_world: np.ndarray) -> np.ndarray:
        return self.extrinsic.apply(points_world)

    def scaled(self, factor: int) -> "CameraModel":
        return CameraModel(
            self.fx * factor,
            self.fy * factor,
            self.cx * factor,
            self.cy * factor,
            self.height * factor,
            self.width * factor,
            self.extrinsic,
        )

    def depth_of(self, point_world: Sequence[float]) -> float:
        return float(self.to_camera(np.asarray(point_world, dtype=float))[2])


def project_points(camera: CameraModel, points_world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection: returns (uv, camera-frame z)."""
    pc = camera.to_camera(np.atleast_2d(points_world))
    z = pc[:, 2]
    safe = np.where(z > 0, z, 1.0)
    u = camera.fx * pc[:, 0] / safe + camera.cx
    v = camera.fy * pc[:, 1] / safe + camera.cy
    return np.stack([u, v], axis=1), z


def project_point(camera: CameraModel, p: Sequence[float]) -> Projection:
    uv, z = project_points(camera, np.asarray(p, dtype=float).reshape(1, 3))
    if z[0] <= 0:
        return Projection(np.full(2, np.nan), False)
    return Projection(uv[0], True)
