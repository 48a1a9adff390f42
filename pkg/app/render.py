"""Deterministic z-buffer rasterizer for segmentation masks.

Pixel (row i, col j) is sampled at its center (j + 0.5, i + 0.5). Triangles
with any vertex at or behind the camera plane are dropped. No anti-aliasing.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import DegenerateError, DimensionMismatchError, InfeasibleError
from .geometry import CameraModel, Pose6, project_points
from .shapes import ShapePrimitive


_NEAR = 1e-6
_CHUNK = 64
_MAX_LABEL = int(np.iinfo(np.int32).max)

Occluder = Tuple[ShapePrimitive, Pose6]


@dataclass(frozen=True, eq=False)
class Mask:
    """h x w grid of object labels; 0 is background."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.array(self.labels)
        if labels.ndim != 2:
            raise ValueError("mask labels must be a 2-D grid")
        if labels.dtype.kind not in "iu" or (labels.size and labels.min() < 0):
            raise ValueError("mask labels must be non-negative integers")
        if labels.size and labels.max() > _MAX_LABEL:
            raise ValueError(f"mask labels must not exceed {_MAX_LABEL}")
        labels = labels.astype(np.int32)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def empty(cls, height: int, width: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def binary(self) -> np.ndarray:
        return self.labels > 0

    def count(self) -> int:
        return int(np.count_nonzero(self.labels))

    def complement(self) -> "Mask":
        return Mask((~self.binary()).astype(np.uint8))

    def pgm_bytes(self) -> bytes:
        """Binary PGM, one byte per pixel; labels above 255 saturate."""
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + np.minimum(self.labels, 255).astype(np.uint8).tobytes()


def _rasterize_depth(camera: CameraModel, vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Nearest camera-frame depth per pixel; +inf where nothing is drawn."""
    h, w = camera.height, camera.width
    depth = np.full((h, w), np.inf)
    uv, z = project_points(camera, vertices)
    tri_z = z[faces]
    keep = np.all(tri_z > _NEAR, axis=1)
    if not np.any(keep):
        return depth
    faces = faces[keep]
    tri_uv = uv[faces]
    tri_z = tri_z[keep]

    # back faces never own a silhouette pixel of a closed convex mesh
    centers_cam = camera.to_camera(vertices[faces].mean(axis=1))
    tri_world = vertices[faces]
    normals = np.cross(tri_world[:, 1] - tri_world[:, 0], tri_world[:, 2] - tri_world[:, 0])
    normals_cam = normals @ camera.extrinsic.rotation.T
    front = np.einsum("ij,ij->i", normals_cam, centers_cam) < 0
    tri_uv, tri_z = tri_uv[front], tri_z[front]
    if len(tri_uv) == 0:
        return depth

    lo = np.floor(tri_uv.min(axis=1) - 0.5).astype(int)
    hi = np.ceil(tri_uv.max(axis=1) - 0.5).astype(int)
    on_screen = (hi[:, 0] >= 0) & (hi[:, 1] >= 0) & (lo[:, 0] < w) & (lo[:, 1] < h)
    tri_uv, tri_z, lo, hi = tri_uv[on_screen], tri_z[on_screen], lo[on_screen], hi[on_screen]
    if len(tri_uv) == 0:
        return depth
    # spatially coherent chunks keep the per-chunk pixel window small
    order = np.lexsort((lo[:, 0], lo[:, 1]))
    tri_uv, tri_z, lo, hi = tri_uv[order], tri_z[order], lo[order], hi[order]

    inv_z = 1.0 / tri_z
    for start in range(0, len(tri_uv), _CHUNK):
        sl = slice(start, start + _CHUNK)
        x0 = max(int(lo[sl, 0].min()), 0)
        y0 = max(int(lo[sl, 1].min()), 0)
        x1 = min(int(hi[sl, 0].max()), w - 1)
        y1 = min(int(hi[sl, 1].max()), h - 1)
        if x1 < x0 or y1 < y0:
            continue
        px = np.arange(x0, x1 + 1) + 0.5
        py = np.arange(y0, y1 + 1) + 0.5
        gx, gy = np.meshgrid(px, py)
        gx = gx.ravel()[None, :]
        gy = gy.ravel()[None, :]
        a, b, c = tri_uv[sl, 0], tri_uv[sl, 1], tri_uv[sl, 2]
        area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        valid_area = np.abs(area) > 1e-12
        safe_area = np.where(valid_area, area, 1.0)[:, None]
        w0 = ((b[:, 0:1] - gx) * (c[:, 1:2] - gy) - (b[:, 1:2] - gy) * (c[:, 0:1] - gx)) / safe_area
        w1 = ((c[:, 0:1] - gx) * (a[:, 1:2] - gy) - (c[:, 1:2] - gy) * (a[:, 0:1] - gx)) / safe_area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0) & valid_area[:, None]
        if not np.any(inside):
            continue
        iz = inv_z[sl]
        # perspective-correct depth: 1/z is affine in screen space
        pix_inv_z = w0 * iz[:, 0:1] + w1 * iz[:, 1:2] + w2 * iz[:, 2:3]
        pix_z = np.where(inside, 1.0 / np.where(inside, pix_inv_z, 1.0), np.inf)
        window = pix_z.min(axis=0).reshape(y1 - y0 + 1, x1 - x0 + 1)
        np.minimum(depth[y0 : y1 + 1, x0 : x1 + 1], window, out=depth[y0 : y1 + 1, x0 : x1 + 1])
    return depth


def render_depth(shape: ShapePrimitive, pose: Pose6, camera: CameraModel) -> np.ndarray:
    vertices, faces = shape.world_mesh(pose)
    return _rasterize_depth(camera, vertices, faces)


def render_mask(
    shape: ShapePrimitive,
    pose: Pose6,
    camera: CameraModel,
    occluders: Sequence[Occluder] = (),
) -> Mask:
    """Label 1 where the target is the nearest surface, 0 elsewhere."""
    target = render_depth(shape, pose, camera)
    visible = np.isfinite(target)
    for occ_shape, occ_pose in occluders:
        if not np.any(visible):
            break
        occ = render_depth(occ_shape, occ_pose, camera)
        visible &= target < occ
    return Mask(visible.astype(np.uint8))


def render_coverage(
    shape: ShapePrimitive,
    pose: Pose6,
    camera: CameraModel,
    occluders: Sequence[Occluder] = (),
    supersample: int = 1,
) -> np.ndarray:
    """Fraction of each pixel covered by the target, from a ``supersample``-times finer render."""
    if supersample <= 1:
        return render_mask(shape, pose, camera, occluders).binary().astype(float)
    fine = render_mask(shape, pose, camera.scaled(supersample), occluders).binary().astype(float)
    s = supersample
    return fine.reshape(camera.height, s, camera.width, s).mean(axis=(1, 3))


def _require_same_shape(a: Mask, b: Mask) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mask sizes differ: {a.shape} vs {b.shape}")


def occlusion_fraction(full: Mask, visible: Mask) -> float:
    """Share of the unoccluded target's pixels that are missing from ``visible``."""
    _require_same_shape(full, visible)
    total = full.count()
    if total == 0:
        raise DegenerateError("full mask has no target pixels")
    shown = int(np.count_nonzero(full.binary() & visible.binary()))
    return float(np.clip((total - shown) / total, 0.0, 1.0))


def _boundary_pixels(target: np.ndarray) -> np.ndarray:
    padded = np.pad(target, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return np.argwhere(target & ~interior)


def _bfs_region(target: np.ndarray, seed: Tuple[int, int], budget: int) -> Iterable[Tuple[int, int]]:
    h, w = target.shape
    seen = np.zeros_like(target)
    queue = deque([seed])
    seen[seed] = True
    taken = 0
    while queue and taken < budget:
        i, j = queue.popleft()
        yield i, j
        taken += 1
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ni, nj = i + di, j + dj
            if 0 <= ni < h and 0 <= nj < w and target[ni, nj] and not seen[ni, nj]:
                seen[ni, nj] = True
                queue.append((ni, nj))


def degrade_mask(
    truth: Mask,
    occlusion_target: float,
    pixel_noise: float,
    rng_seed: int | np.random.SeedSequence | None,
) -> Mask:
    """Synthetic segmentation output: a contiguous bite removed, then pixel flips.

    The bite is grown breadth-first from a random boundary pixel of the target
    until ``occlusion_target`` of the target pixels are gone.
    """
    if not 0.0 <= occlusion_target < 1.0:
        raise ValueError("occlusion_target must be in [0, 1)")
    if not 0.0 <= pixel_noise <= 0.1:
        raise ValueError("pixel_noise must be in [0, 0.1]")
    target = truth.binary().copy()
    total = int(np.count_nonzero(target))
    if total == 0:
        raise InfeasibleError("truth mask has no target pixels")
    rng = np.random.default_rng(rng_seed)
    remaining = int(round(occlusion_target * total))
    while remaining > 0:
        boundary = _boundary_pixels(target)
        seed = tuple(int(v) for v in boundary[rng.integers(len(boundary))])
        removed = list(_bfs_region(target, seed, remaining))
        for i, j in removed:
            target[i, j] = False
        remaining -= len(removed)
    if pixel_noise > 0.0:
        flips = rng.random(target.shape) < pixel_noise
        target ^= flips
    return Mask(target.astype(np.uint8))
