"""Pinhole camera model shared by the rasterizer and the voxel coloring.

Camera coordinates are x right, y down, z forward. Pixel ``(i, j)`` is
one-based with its center at continuous coordinate ``(i, j)`` and covers
``[i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)``; the image therefore spans
``[0.5, n_x + 0.5] x [0.5, n_y + 0.5]``. Distances are Euclidean
camera-to-point norms, never axial depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from . import log
from .constants import DEFAULT_FOV_DEGREES, DEFAULT_NEAR
from .errors import PoseError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Image size, horizontal field of view (radians) and near plane (m)."""

    n_x: int = 320
    n_y: int = 240
    fov: float = math.radians(DEFAULT_FOV_DEGREES)
    near: float = DEFAULT_NEAR

    def __post_init__(self) -> None:
        if self.n_x < 8 or self.n_y < 8:
            log.error("Image size %dx%d below the 8x8 minimum", self.n_x, self.n_y)
            raise ValueError(f"image size {self.n_x}x{self.n_y} is below 8x8")
        if not 0.0 < self.fov < math.pi:
            raise ValueError(f"field of view {self.fov} rad must lie in (0, pi)")
        if not self.near > 0.0:
            raise ValueError(f"near plane {self.near} must be positive")

    @classmethod
    def from_degrees(cls, n_x: int, n_y: int, fov_degrees: float = DEFAULT_FOV_DEGREES, near: float = DEFAULT_NEAR) -> "CameraIntrinsics":
        return cls(n_x=n_x, n_y=n_y, fov=math.radians(fov_degrees), near=near)

    @property
    def focal(self) -> float:
        """Focal length in pixels (square pixels)."""

        return (self.n_x / 2.0) / math.tan(self.fov / 2.0)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.n_x + 1) / 2.0, (self.n_y + 1) / 2.0)

    @property
    def vertical_fov(self) -> float:
        return 2.0 * math.atan((self.n_y / 2.0) / self.focal)


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Camera position and orientation.

    ``quaternion`` is scalar-last ``(x, y, z, w)`` as used by
    :class:`scipy.spatial.transform.Rotation`; it rotates camera axes into
    world axes, so the columns of :attr:`rotation` are the world directions
    of right, down and forward.
    """

    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self) -> None:
        position = np.asarray(self.position, dtype=float).reshape(3)
        quaternion = np.asarray(self.quaternion, dtype=float).reshape(4)
        if not np.all(np.isfinite(position)):
            raise PoseError("camera position must be finite")
        norm = float(np.linalg.norm(quaternion))
        if not np.isfinite(norm) or norm == 0.0:
            raise PoseError("camera orientation quaternion must be non-zero")
        quaternion = quaternion / norm
        position.setflags(write=False)
        quaternion.setflags(write=False)
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "quaternion", quaternion)

    @classmethod
    def from_axes(cls, position: Sequence[float], right: np.ndarray, down: np.ndarray, forward: np.ndarray) -> "CameraPose":
        matrix = np.column_stack([right, down, forward])
        return cls(position=np.asarray(position, dtype=float), quaternion=Rotation.from_matrix(matrix).as_quat())

    @classmethod
    def from_pan_tilt(cls, position: Sequence[float], pan: float, tilt: float) -> "CameraPose":
        """Roll-free pose; pan turns about +z from +x, tilt raises the view above the horizon."""

        forward = np.array([math.cos(tilt) * math.cos(pan), math.cos(tilt) * math.sin(pan), math.sin(tilt)])
        right = np.array([math.sin(pan), -math.cos(pan), 0.0])
        down = np.cross(forward, right)
        return cls.from_axes(position, right, down, forward)

    @cached_property
    def rotation(self) -> np.ndarray:
        matrix = Rotation.from_quat(self.quaternion).as_matrix()
        matrix.setflags(write=False)
        return matrix

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def pan_tilt(self) -> tuple[float, float]:
        """Pan in ``[0, 2*pi)`` and tilt in ``[-pi/2, pi/2]`` of the view direction."""

        fx, fy, fz = self.forward
        tilt = math.asin(max(-1.0, min(1.0, float(fz))))
        pan = math.atan2(float(fy), float(fx)) % (2.0 * math.pi)
        return pan, tilt

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """World points ``(..., 3)`` expressed in camera coordinates."""

        return (np.asarray(points, dtype=float) - self.position) @ self.rotation


DEFAULT_UP = (0.0, 0.0, 1.0)
VERTICAL_FALLBACK_UP = (0.0, 1.0, 0.0)


def look_at(
    position: Sequence[float],
    target: Sequence[float],
    up: Optional[Sequence[float]] = None,
) -> CameraPose:
    """Pose at ``position`` whose optical axis passes through ``target``.

    Without ``up`` the world ``+z`` axis fixes the roll; a camera looking
    straight up or down uses ``+y`` instead. An explicit ``up`` is never
    replaced.

    Raises:
        PoseError: If ``target`` equals ``position`` or an explicit ``up`` is
            parallel to the viewing direction.
    """

    position = np.asarray(position, dtype=float)
    view = np.asarray(target, dtype=float) - position
    length = float(np.linalg.norm(view))
    if length == 0.0:
        log.error("look_at target coincides with the camera position %s", position)
        raise PoseError("look_at target coincides with the camera position")
    forward = view / length
    if up is None:
        up = DEFAULT_UP if abs(forward[2]) < 1.0 - 1e-9 else VERTICAL_FALLBACK_UP
    up = np.asarray(up, dtype=float)
    side = np.cross(forward, up)
    side_norm = float(np.linalg.norm(side))
    if side_norm <= 1e-9 * max(float(np.linalg.norm(up)), 1e-300):
        log.error("look_at up vector %s is parallel to the view direction", up)
        raise PoseError("up vector is parallel to the view direction")
    right = side / side_norm
    down = np.cross(forward, right)
    return CameraPose.from_axes(position, right, down, forward)


def project_points(
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    points: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection.

    Returns:
        tuple: ``(u, v, distance, in_front)`` for points of shape ``(..., 3)``;
        ``u``/``v`` are NaN where ``in_front`` is false.
    """

    cam = pose.to_camera(points)
    z = cam[..., 2]
    in_front = z >= intrinsics.near
    cx, cy = intrinsics.center
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(in_front, intrinsics.focal * cam[..., 0] / z + cx, np.nan)
        v = np.where(in_front, intrinsics.focal * cam[..., 1] / z + cy, np.nan)
    distance = np.linalg.norm(np.asarray(points, dtype=float) - pose.position, axis=-1)
    return u, v, distance, in_front


def project(
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    point: Sequence[float],
) -> tuple[Optional[tuple[float, float]], float, bool]:
    """Project one point: ``(pixel coordinates, distance, in_front)``.

    Pixel coordinates are ``None`` when the point lies behind the near plane.
    """

    u, v, distance, in_front = project_points(pose, intrinsics, np.asarray(point, dtype=float)[None])
    if not in_front[0]:
        return None, float(distance[0]), False
    return (float(u[0]), float(v[0])), float(distance[0]), True


def pixel_indices(u: np.ndarray, v: np.ndarray, intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Round continuous coordinates to one-based pixel indices.

    Returns:
        tuple: ``(i, j, inside)``; indices are only meaningful where
        ``inside`` holds.
    """

    with np.errstate(invalid="ignore"):
        fi = np.floor(np.asarray(u, dtype=float) + 0.5)
        fj = np.floor(np.asarray(v, dtype=float) + 0.5)
        inside = (fi >= 1) & (fi <= intrinsics.n_x) & (fj >= 1) & (fj <= intrinsics.n_y)
    i = np.where(inside, fi, 0).astype(np.int64)
    j = np.where(inside, fj, 0).astype(np.int64)
    return i, j, inside


def pixel_of(coordinates: Sequence[float], intrinsics: CameraIntrinsics) -> Optional[tuple[int, int]]:
    """Pixel containing ``coordinates`` or ``None`` when outside the image."""

    u, v = coordinates
    i, j, inside = pixel_indices(np.array([u]), np.array([v]), intrinsics)
    if not inside[0]:
        return None
    return int(i[0]), int(j[0])


def pixel_rays(pose: CameraPose, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Unit world directions through every pixel center, shape ``(n_y, n_x, 3)``."""

    cx, cy = intrinsics.center
    ii, jj = np.meshgrid(np.arange(1, intrinsics.n_x + 1), np.arange(1, intrinsics.n_y + 1))
    cam = np.stack([(ii - cx) / intrinsics.focal, (jj - cy) / intrinsics.focal, np.ones(ii.shape)], axis=-1)
    cam /= np.linalg.norm(cam, axis=-1, keepdims=True)
    return cam @ pose.rotation.T


def pixel_ray(pose: CameraPose, intrinsics: CameraIntrinsics, i: int, j: int) -> np.ndarray:
    """Unit world direction through the center of pixel ``(i, j)``."""

    cx, cy = intrinsics.center
    direction = np.array([(i - cx) / intrinsics.focal, (j - cy) / intrinsics.focal, 1.0])
    return pose.rotation @ (direction / np.linalg.norm(direction))


__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "look_at",
    "project",
    "project_points",
    "pixel_of",
    "pixel_indices",
    "pixel_ray",
    "pixel_rays",
]
