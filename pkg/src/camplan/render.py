"""Software z-buffer depth rendering and background subtraction.

Each pixel of a :class:`DepthImage` holds the Euclidean distance from the
camera center to the nearest surface seen through the pixel center, or
``NO_HIT`` (``inf``). Triangles are clipped against the near plane in camera
space, projected, scissored to the image and scan-converted with edge
functions. Depth is recovered per pixel by perspective-correct interpolation
of ``1/z`` followed by the norm of the camera-space point.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data_manager, log
from .camera import CameraIntrinsics, CameraPose
from .constants import FOREGROUND_SENTINEL, NO_HIT


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Per-pixel camera-to-surface distance, shape ``(n_y, n_x)``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("depth image must be two-dimensional")
        finite = values[np.isfinite(values)]
        if np.any(finite <= 0) or np.any(np.isnan(values)) or np.any(values == -np.inf):
            raise ValueError("depth values must be positive or NO_HIT")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def at(self, i: int, j: int) -> float:
        """Value of one-based pixel ``(i, j)``."""

        return float(self.values[j - 1, i - 1])

    def save(self, path: Path, depth_scale: float) -> Path:
        return data_manager.write_depth_pgm(path, self.values, depth_scale)


@dataclass(frozen=True, eq=False)
class SegmentedImage:
    """Difference image ``s`` with foreground where ``s < 0``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def foreground(self) -> np.ndarray:
        return self.values < 0

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def save(self, path: Path) -> Path:
        return data_manager.write_mask_pgm(path, self.foreground)


def clip_near(triangles: np.ndarray, near: float) -> np.ndarray:
    """Clip camera-space triangles to ``z >= near``.

    A triangle with one vertex in front becomes one triangle; with two
    vertices in front it becomes two. Triangles fully behind are removed.
    """

    triangles = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    front = triangles[..., 2] >= near
    count = front.sum(axis=1)
    kept = [triangles[count == 3]]

    def rolled(selection: np.ndarray, odd: np.ndarray) -> np.ndarray:
        tri = triangles[selection]
        k = np.argmax(odd[selection], axis=1)
        order = (k[:, None] + np.arange(3)[None, :]) % 3
        return np.take_along_axis(tri, order[:, :, None], axis=1)

    def cut(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        t = (near - a[:, 2]) / (b[:, 2] - a[:, 2])
        point = a + (b - a) * t[:, None]
        point[:, 2] = near
        return point

    one = count == 1
    if np.any(one):
        tri = rolled(one, front)
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        kept.append(np.stack([a, cut(a, b), cut(a, c)], axis=1))

    two = count == 2
    if np.any(two):
        tri = rolled(two, ~front)
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        ab, ac = cut(a, b), cut(a, c)
        kept.append(np.stack([ab, b, c], axis=1))
        kept.append(np.stack([ab, c, ac], axis=1))

    return np.concatenate(kept)


def _owns_edge(dx: float, dy: float) -> bool:
    # antisymmetric: exactly one of an edge and its reverse owns tie pixels
    return dy > 0 or (dy == 0 and dx < 0)


def _rasterize_band(
    screen: np.ndarray,
    inv_z: np.ndarray,
    intrinsics: CameraIntrinsics,
    buffer: np.ndarray,
    row_start: int,
    row_stop: int,
) -> None:
    """Rasterize all triangles into rows ``row_start..row_stop`` (one-based, inclusive)."""

    focal = intrinsics.focal
    cx, cy = intrinsics.center
    n_x = intrinsics.n_x
    for tri, w in zip(screen, inv_z):
        xs, ys = tri[:, 0], tri[:, 1]
        i0 = max(1, int(np.ceil(xs.min())))
        i1 = min(n_x, int(np.floor(xs.max())))
        j0 = max(row_start, int(np.ceil(ys.min())))
        j1 = min(row_stop, int(np.floor(ys.max())))
        if i0 > i1 or j0 > j1:
            continue

        px = np.arange(i0, i1 + 1, dtype=float)[None, :]
        py = np.arange(j0, j1 + 1, dtype=float)[:, None]
        weights = []
        inside = np.ones((j1 - j0 + 1, i1 - i0 + 1), dtype=bool)
        for k in range(3):
            a = tri[(k + 1) % 3]
            b = tri[(k + 2) % 3]
            dx, dy = b[0] - a[0], b[1] - a[1]
            edge = dx * (py - a[1]) - dy * (px - a[0])
            inside &= (edge > 0) | ((edge == 0) & _owns_edge(dx, dy))
            weights.append(edge)
        if not inside.any():
            continue

        area = weights[0] + weights[1] + weights[2]
        reciprocal = (weights[0] * w[0] + weights[1] * w[1] + weights[2] * w[2]) / area
        ray_x = (px - cx) / focal
        ray_y = (py - cy) / focal
        ray_norm = np.sqrt(ray_x * ray_x + ray_y * ray_y + 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            distance = ray_norm / reciprocal

        region = buffer[j0 - 1:j1, i0 - 1:i1]
        closer = inside & (distance < region)
        region[closer] = distance[closer]


def render_depth(
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    faces: np.ndarray,
    *,
    bands: int = 1,
) -> DepthImage:
    """Render the z-buffer depth image of ``faces`` seen from ``pose``.

    Args:
        pose: Camera pose.
        intrinsics: Camera intrinsics.
        faces: ``(F, 3, 3)`` world-space triangles.
        bands: Number of horizontal row bands rasterized concurrently. The
            result does not depend on it.

    Returns:
        DepthImage: Distances with ``NO_HIT`` where no face is seen.
    """

    buffer = np.full((intrinsics.n_y, intrinsics.n_x), NO_HIT)
    faces = np.asarray(faces, dtype=float).reshape(-1, 3, 3)
    if len(faces):
        cam = clip_near(pose.to_camera(faces), intrinsics.near)
        z = cam[..., 2]
        cx, cy = intrinsics.center
        screen = np.empty(cam.shape[:2] + (2,))
        screen[..., 0] = intrinsics.focal * cam[..., 0] / z + cx
        screen[..., 1] = intrinsics.focal * cam[..., 1] / z + cy

        e1 = screen[:, 1] - screen[:, 0]
        e2 = screen[:, 2] - screen[:, 0]
        signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        keep = signed != 0
        # orient every triangle the same way so the tie rule splits shared edges
        swap = signed < 0
        screen[swap] = screen[swap][:, [0, 2, 1]]
        z[swap] = z[swap][:, [0, 2, 1]]
        screen, inv_z = screen[keep], 1.0 / z[keep]

        bands = max(1, min(int(bands), intrinsics.n_y))
        edges = np.linspace(0, intrinsics.n_y, bands + 1).round().astype(int)
        ranges = [(int(lo) + 1, int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]
        if len(ranges) == 1:
            _rasterize_band(screen, inv_z, intrinsics, buffer, *ranges[0])
        else:
            with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
                futures = [
                    pool.submit(_rasterize_band, screen, inv_z, intrinsics, buffer, lo, hi) for lo, hi in ranges
                ]
                for future in futures:
                    future.result()
        log.debug("Rasterized %d clipped triangles into %d band(s)", len(screen), len(ranges))
    return DepthImage(buffer)


def segment(static_img: DepthImage, dynamic_img: DepthImage) -> SegmentedImage:
    """Background subtraction ``s = dynamic - static``.

    Both ``NO_HIT`` gives ``0``; dynamic content in front of empty space gives
    ``FOREGROUND_SENTINEL``; a static hit with no dynamic hit is background.

    Raises:
        ValueError: If the image sizes differ.
    """

    static = static_img.values
    dynamic = dynamic_img.values
    if static.shape != dynamic.shape:
        log.error("Cannot segment images of shapes %s and %s", static.shape, dynamic.shape)
        raise ValueError(f"image sizes differ: {static.shape} vs {dynamic.shape}")
    static_hit = np.isfinite(static)
    dynamic_hit = np.isfinite(dynamic)
    values = np.zeros(static.shape)
    both = static_hit & dynamic_hit
    values[both] = dynamic[both] - static[both]
    values[dynamic_hit & ~static_hit] = FOREGROUND_SENTINEL
    return SegmentedImage(values)


__all__ = ["DepthImage", "SegmentedImage", "clip_near", "render_depth", "segment"]
