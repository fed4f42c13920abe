"""Triangle meshes, the work-cell environment and the ray-casting oracle.

Meshes are stored as numpy arrays (``vertices`` of shape ``(V, 3)`` and
``faces`` of shape ``(F, 3)``) and are treated as immutable after
construction. The environment bundles static meshes with dynamic objects that
carry one rigid transform per discrete time step.

The ray oracle (:func:`ray_visible`, :func:`visible_mask`, :func:`cast_rays`)
is independent of the rasterizer and exists so the rasterizer and the voxel
coloring can be checked against plain geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import data_manager, log
from .constants import DEGENERATE_AREA
from .errors import MeshFormatError, MeshStructureError, SceneError


RIGIDITY_TOLERANCE = 1e-6
BOUNDS_TOLERANCE = 1e-9
LEAF_SIZE = 8

# Fixed generic directions for the inside/outside parity vote.
_PARITY_DIRECTIONS = np.array(
    [
        [0.8212, 0.3617, 0.4412],
        [-0.2913, 0.8331, -0.4702],
        [0.1927, -0.5289, -0.8265],
    ]
)
_PARITY_DIRECTIONS /= np.linalg.norm(_PARITY_DIRECTIONS, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable triangle mesh.

    Attributes:
        vertices: ``(V, 3)`` float array of coordinates in meters.
        faces: ``(F, 3)`` int array of zero-based vertex indices.
        name: Label used in log and error messages.
        dropped_faces: Number of degenerate faces removed at construction.
    """

    vertices: np.ndarray
    faces: np.ndarray
    name: str = "mesh"
    dropped_faces: int = 0

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            log.error("Mesh '%s' has non-finite coordinates", self.name)
            raise MeshFormatError(f"mesh '{self.name}' has non-finite coordinates")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            bad = int(np.flatnonzero((faces < 0).any(axis=1) | (faces >= len(vertices)).any(axis=1))[0])
            log.error("Mesh '%s' face %d references a missing vertex", self.name, bad + 1)
            raise MeshStructureError(
                f"mesh '{self.name}': face {bad + 1} {tuple(int(i) + 1 for i in faces[bad])} "
                f"references a vertex outside 1..{len(vertices)}"
            )
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @property
    def triangles(self) -> np.ndarray:
        """Return the ``(F, 3, 3)`` array of face corner coordinates."""

        return self.vertices[self.faces]

    @cached_property
    def is_closed(self) -> bool:
        """True when every edge is shared by exactly two faces and the
        Euler characteristic of the referenced vertices is even."""

        if len(self.faces) == 0:
            return False
        edges = np.sort(self.faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
        unique_edges, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts != 2):
            return False
        euler = len(np.unique(self.faces)) - len(unique_edges) + len(self.faces)
        return euler % 2 == 0

    def transformed(self, pose: np.ndarray) -> np.ndarray:
        """Return the triangles moved by a 3x4 rigid transform."""

        pose = np.asarray(pose, dtype=float)
        return self.triangles @ pose[:, :3].T + pose[:, 3]


def build_mesh(vertices: np.ndarray, faces: np.ndarray, *, name: str = "mesh") -> TriangleMesh:
    """Construct a mesh, dropping faces whose area is below ``DEGENERATE_AREA``."""

    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        return TriangleMesh(vertices, faces, name=name)
    # index validation happens in TriangleMesh before the area lookup
    checked = TriangleMesh(vertices, faces, name=name)
    tri = checked.triangles
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    keep = area >= DEGENERATE_AREA
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        log.warning("Mesh '%s': dropped %d degenerate face(s)", name, dropped)
    return TriangleMesh(vertices, faces[keep], name=name, dropped_faces=dropped)


def load_obj(path: Union[str, Path]) -> TriangleMesh:
    """Load an ASCII Wavefront OBJ file as a triangle mesh.

    Polygons with more than three corners are fan-triangulated around their
    first vertex. Degenerate faces are dropped and counted on
    :attr:`TriangleMesh.dropped_faces`.

    Args:
        path: Location of the ``.obj`` file.

    Returns:
        TriangleMesh: The loaded mesh, named after the file stem.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        MeshFormatError: For malformed records; the message carries the line.
        MeshStructureError: For faces referencing missing vertices.
    """

    path = Path(path)
    records = data_manager.read_obj(path)
    vertex_count = len(records.vertices)
    triangles: list[tuple[int, int, int]] = []
    for number, (polygon, line) in enumerate(zip(records.polygons, records.polygon_lines), start=1):
        for index in polygon:
            if index < 0 or index >= vertex_count:
                log.error("OBJ '%s' face %d (line %d) references vertex %d", path, number, line, index + 1)
                raise MeshStructureError(
                    f"{path.name}: face {number} on line {line} references vertex {index + 1} "
                    f"but the file has {vertex_count} vertices"
                )
        for k in range(1, len(polygon) - 1):
            triangles.append((polygon[0], polygon[k], polygon[k + 1]))

    mesh = build_mesh(
        np.array(records.vertices, dtype=float).reshape(-1, 3),
        np.array(triangles, dtype=np.int64).reshape(-1, 3),
        name=path.stem,
    )
    log.info(
        "Loaded mesh '%s': %d vertices, %d faces (%d dropped)",
        mesh.name,
        len(mesh.vertices),
        len(mesh.faces),
        mesh.dropped_faces,
    )
    return mesh


def write_obj(mesh: TriangleMesh, path: Union[str, Path]) -> Path:
    """Write ``mesh`` as an OBJ file with full float precision."""

    return data_manager.write_obj(Path(path), mesh.vertices, mesh.faces, name=mesh.name)


def merge_meshes(meshes: Iterable[TriangleMesh], *, name: str) -> TriangleMesh:
    """Concatenate several meshes into one."""

    vertices: list[np.ndarray] = []
    faces: list[np.ndarray] = []
    offset = 0
    for mesh in meshes:
        vertices.append(mesh.vertices)
        faces.append(mesh.faces + offset)
        offset += len(mesh.vertices)
    if not vertices:
        return TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64), name=name)
    return TriangleMesh(np.vstack(vertices), np.vstack(faces), name=name)


# ---------------------------------------------------------------------------
# Primitive meshes
# ---------------------------------------------------------------------------


def box_mesh(lower: Sequence[float], upper: Sequence[float], *, name: str = "box") -> TriangleMesh:
    """Closed axis-aligned box with outward-facing triangles."""

    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if np.any(hi <= lo):
        raise ValueError(f"box '{name}' needs upper > lower on every axis")
    vertices = np.array(
        [[hi[0] if i & 1 else lo[0], hi[1] if i & 2 else lo[1], hi[2] if i & 4 else lo[2]] for i in range(8)]
    )
    faces = np.array(
        [
            [0, 2, 1], [1, 2, 3],  # z-
            [4, 5, 6], [5, 7, 6],  # z+
            [0, 1, 4], [1, 5, 4],  # y-
            [2, 6, 3], [3, 6, 7],  # y+
            [0, 4, 2], [2, 4, 6],  # x-
            [1, 3, 5], [3, 7, 5],  # x+
        ]
    )
    return TriangleMesh(vertices, faces, name=name)


def cylinder_mesh(
    center: Sequence[float],
    radius: float,
    height: float,
    *,
    segments: int = 16,
    name: str = "cylinder",
) -> TriangleMesh:
    """Closed vertical prism approximating a cylinder standing on ``center``."""

    if radius <= 0 or height <= 0 or segments < 3:
        raise ValueError("cylinder needs radius > 0, height > 0 and at least 3 segments")
    cx, cy, cz = (float(v) for v in center)
    angles = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles)])
    bottom = np.column_stack([ring, np.full(segments, cz)])
    top = np.column_stack([ring, np.full(segments, cz + height)])
    vertices = np.vstack([bottom, top, [[cx, cy, cz], [cx, cy, cz + height]]])
    b_center, t_center = 2 * segments, 2 * segments + 1
    faces = []
    for k in range(segments):
        n = (k + 1) % segments
        faces.append([k, n, segments + n])
        faces.append([k, segments + n, segments + k])
        faces.append([b_center, n, k])
        faces.append([t_center, segments + k, segments + n])
    return TriangleMesh(vertices, np.array(faces), name=name)


def humanoid_mesh(base: Sequence[float], height: float = 1.8, *, name: str = "humanoid") -> TriangleMesh:
    """Low-poly standing figure made of disjoint closed boxes."""

    x, y, z = (float(v) for v in base)
    h = float(height)
    gap = 0.005 * h
    parts = [
        box_mesh([x - 0.12 * h, y - 0.06 * h, z], [x - 0.02 * h, y + 0.06 * h, z + 0.45 * h]),
        box_mesh([x + 0.02 * h, y - 0.06 * h, z], [x + 0.12 * h, y + 0.06 * h, z + 0.45 * h]),
        box_mesh([x - 0.14 * h, y - 0.08 * h, z + 0.45 * h + gap], [x + 0.14 * h, y + 0.08 * h, z + 0.82 * h]),
        box_mesh([x - 0.22 * h, y - 0.05 * h, z + 0.5 * h], [x - 0.14 * h - gap, y + 0.05 * h, z + 0.8 * h]),
        box_mesh([x + 0.14 * h + gap, y - 0.05 * h, z + 0.5 * h], [x + 0.22 * h, y + 0.05 * h, z + 0.8 * h]),
        box_mesh([x - 0.07 * h, y - 0.07 * h, z + 0.82 * h + gap], [x + 0.07 * h, y + 0.07 * h, z + h]),
    ]
    return merge_meshes(parts, name=name)


def wall_with_door_mesh(
    x: float,
    y_range: tuple[float, float],
    height: float,
    door: tuple[float, float, float],
    *,
    thickness: float = 0.1,
    name: str = "wall",
) -> TriangleMesh:
    """Wall in the plane ``x`` with a rectangular doorway.

    Args:
        x: Wall center plane.
        y_range: Extent of the wall along y.
        height: Wall height above z = 0.
        door: ``(y_start, y_end, door_height)`` of the opening.
        thickness: Wall thickness along x.
        name: Mesh label.
    """

    y0, y1 = y_range
    d0, d1, dh = door
    x0, x1 = x - thickness / 2.0, x + thickness / 2.0
    parts = []
    if d0 > y0:
        parts.append(box_mesh([x0, y0, 0.0], [x1, d0, height]))
    if y1 > d1:
        parts.append(box_mesh([x0, d1, 0.0], [x1, y1, height]))
    if height > dh:
        parts.append(box_mesh([x0, d0, dh], [x1, d1, height]))
    return merge_meshes(parts, name=name)


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


def validate_rigid(pose: np.ndarray, *, label: str) -> np.ndarray:
    """Return ``pose`` as a ``(3, 4)`` array after checking it is rigid."""

    pose = np.asarray(pose, dtype=float).reshape(3, 4)
    rotation = pose[:, :3]
    orthogonality = np.abs(rotation.T @ rotation - np.eye(3)).max()
    if orthogonality > RIGIDITY_TOLERANCE or abs(np.linalg.det(rotation) - 1.0) > RIGIDITY_TOLERANCE:
        log.error("Transform %s is not a rigid motion", label)
        raise SceneError(f"transform {label} is not a rigid motion")
    if not np.all(np.isfinite(pose)):
        raise SceneError(f"transform {label} has non-finite entries")
    return pose


@dataclass(frozen=True, eq=False)
class DynamicObject:
    """A mesh together with one rigid transform per time step."""

    mesh: TriangleMesh
    poses: np.ndarray

    def __post_init__(self) -> None:
        poses = np.asarray(self.poses, dtype=float).reshape(-1, 3, 4)
        for t, pose in enumerate(poses, start=1):
            validate_rigid(pose, label=f"'{self.mesh.name}' at t={t}")
        poses.setflags(write=False)
        object.__setattr__(self, "poses", poses)

    def triangles_at(self, t: int) -> np.ndarray:
        return self.mesh.transformed(self.poses[t - 1])


@dataclass(frozen=True, eq=False)
class Environment:
    """Static geometry, dynamic objects and the bounding box of the work cell."""

    static_meshes: tuple[TriangleMesh, ...]
    dynamic_objects: tuple[DynamicObject, ...]
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    time_steps: int = 1
    _static_faces: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        lower = np.asarray(self.bounds_min, dtype=float).reshape(3)
        upper = np.asarray(self.bounds_max, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)) and np.all(lower < upper)):
            raise SceneError("environment bounds must be finite with min < max")
        if self.time_steps < 1:
            raise SceneError("environment needs at least one time step")
        object.__setattr__(self, "static_meshes", tuple(self.static_meshes))
        object.__setattr__(self, "dynamic_objects", tuple(self.dynamic_objects))
        object.__setattr__(self, "bounds_min", lower)
        object.__setattr__(self, "bounds_max", upper)

        for mesh in self.static_meshes:
            if len(mesh.vertices) and not _inside(mesh.vertices, lower, upper):
                log.error("Static mesh '%s' leaves the environment bounds", mesh.name)
                raise SceneError(f"static mesh '{mesh.name}' has vertices outside the environment bounds")

        for obj in self.dynamic_objects:
            if len(obj.poses) != self.time_steps:
                log.error("Dynamic object '%s' has %d poses, expected %d", obj.mesh.name, len(obj.poses), self.time_steps)
                raise SceneError(
                    f"dynamic object '{obj.mesh.name}' has {len(obj.poses)} poses but the scene has "
                    f"{self.time_steps} time steps"
                )
            for t in range(1, self.time_steps + 1):
                moved = obj.triangles_at(t).reshape(-1, 3)
                if len(moved) and not _inside(moved, lower, upper):
                    log.warning("Dynamic object '%s' leaves the environment bounds at t=%d", obj.mesh.name, t)

        static = [mesh.triangles for mesh in self.static_meshes]
        faces = np.concatenate(static) if static else np.empty((0, 3, 3))
        faces.setflags(write=False)
        object.__setattr__(self, "_static_faces", faces)

    @property
    def static_faces(self) -> np.ndarray:
        return self._static_faces


def _inside(points: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> bool:
    return bool(np.all(points >= lower - BOUNDS_TOLERANCE) and np.all(points <= upper + BOUNDS_TOLERANCE))


def _check_time_step(env: Environment, t: int) -> None:
    if not 1 <= t <= env.time_steps:
        log.error("Time step %s outside 1..%d", t, env.time_steps)
        raise SceneError(f"time step {t} outside 1..{env.time_steps}")


def assemble_scene(env: Environment, t: int, include_dynamic: bool) -> np.ndarray:
    """Collect the faces visible to the renderer at time step ``t``.

    Args:
        env: The environment.
        t: One-based time step.
        include_dynamic: When false only the static faces are returned.

    Returns:
        np.ndarray: ``(F, 3, 3)`` triangle corners.

    Raises:
        SceneError: If ``t`` is outside ``1..T``.
    """

    _check_time_step(env, t)
    if not include_dynamic or not env.dynamic_objects:
        return env.static_faces
    dynamic = [obj.triangles_at(t) for obj in env.dynamic_objects]
    return np.concatenate([env.static_faces, *dynamic])


# ---------------------------------------------------------------------------
# Ray oracle
# ---------------------------------------------------------------------------


def _admits(s: np.ndarray, edge: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Edge test with a top-left tie-break in the sheared ray plane.

    ``(dx, dy)`` is the edge vector in triangle order; multiplied by the
    winding sign it has the interior on a fixed side, so two faces sharing
    the edge see opposite vectors and exactly one of them owns ``edge == 0``.
    """

    dx = s * dx
    dy = s * dy
    owned = (dy > 0) | ((dy == 0) & (dx < 0))
    return (s * edge > 0) | ((edge == 0) & owned)


def _segment_param(
    origin: np.ndarray,
    direction: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
) -> np.ndarray:
    """Watertight ray/triangle test, broadcast over rows.

    Returns the ray parameter ``t`` (hit point ``origin + t * direction``) or
    NaN where the ray misses. Rays lying in the triangle plane never hit.
    """

    o, d, a, b, c = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (origin, direction, a, b, c))
    )
    shape = o.shape[:-1]
    o, d, a, b, c = (v.reshape(-1, 3) for v in (o, d, a, b, c))
    rows = np.arange(len(o))

    kz = np.argmax(np.abs(d), axis=1)
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    flip = d[rows, kz] < 0
    kx, ky = np.where(flip, ky, kx), np.where(flip, kx, ky)

    dz = d[rows, kz]
    sx = d[rows, kx] / dz
    sy = d[rows, ky] / dz
    sz = 1.0 / dz

    def sheared(p: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rel = p - o
        pz = rel[rows, kz]
        return rel[rows, kx] - sx * pz, rel[rows, ky] - sy * pz, sz * pz

    ax, ay, az = sheared(a)
    bx, by, bz = sheared(b)
    cx, cy, cz = sheared(c)

    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    det = u + v + w
    s = np.sign(det)
    inside = (
        _admits(s, u, cx - bx, cy - by)
        & _admits(s, v, ax - cx, ay - cy)
        & _admits(s, w, bx - ax, by - ay)
    )
    miss = ~inside | (det == 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        t = (u * az + v * bz + w * cz) / det
    t[miss] = np.nan
    return t.reshape(shape)


def segment_hits_brute(origin: np.ndarray, target: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Indices of all faces crossing the open segment, by plain iteration."""

    faces = np.asarray(faces, dtype=float).reshape(-1, 3, 3)
    if len(faces) == 0:
        return np.empty(0, dtype=np.int64)
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(target, dtype=float) - origin
    t = _segment_param(origin, direction, faces[:, 0], faces[:, 1], faces[:, 2])
    with np.errstate(invalid="ignore"):
        return np.flatnonzero((t > 0.0) & (t < 1.0))


class FaceTree:
    """Axis-aligned bounding volume hierarchy over a face list.

    Nodes are stored in flat arrays. Leaves hold at most ``leaf_size`` faces
    as a contiguous range of :attr:`order`; inner nodes have ``count == 0``.
    """

    def __init__(self, faces: np.ndarray, *, leaf_size: int = LEAF_SIZE) -> None:
        self.faces = np.asarray(faces, dtype=float).reshape(-1, 3, 3)
        self.leaf_size = leaf_size
        self.order = np.arange(len(self.faces))
        self._face_lower = self.faces.min(axis=1) if len(self.faces) else np.empty((0, 3))
        self._face_upper = self.faces.max(axis=1) if len(self.faces) else np.empty((0, 3))
        self._centroids = self.faces.mean(axis=1) if len(self.faces) else np.empty((0, 3))
        lower: list[np.ndarray] = []
        upper: list[np.ndarray] = []
        left: list[int] = []
        right: list[int] = []
        start: list[int] = []
        count: list[int] = []
        self._nodes = (lower, upper, left, right, start, count)
        if len(self.faces):
            self._build(0, len(self.faces))
        self.lower = np.array(lower).reshape(-1, 3)
        self.upper = np.array(upper).reshape(-1, 3)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        extent = (self.upper.max(axis=0) - self.lower.min(axis=0)) if len(self.faces) else np.zeros(3)
        self._pad = 1e-9 * max(float(np.linalg.norm(extent)), 1.0)
        del self._nodes

    def _build(self, begin: int, end: int) -> int:
        lower, upper, left, right, start, count = self._nodes
        idx = self.order[begin:end]
        node = len(lower)
        lower.append(self._face_lower[idx].min(axis=0))
        upper.append(self._face_upper[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(begin)
        count.append(end - begin)
        if end - begin > self.leaf_size:
            centroids = self._centroids[idx]
            axis = int(np.argmax(centroids.max(axis=0) - centroids.min(axis=0)))
            self.order[begin:end] = idx[np.argsort(centroids[:, axis], kind="stable")]
            middle = begin + (end - begin) // 2
            count[node] = 0
            left[node] = self._build(begin, middle)
            right[node] = self._build(middle, end)
        return node

    def __len__(self) -> int:
        return len(self.faces)

    def _crosses_box(self, node: int, origin: np.ndarray, direction: np.ndarray) -> bool:
        t0, t1 = 0.0, 1.0
        lo = self.lower[node] - self._pad
        hi = self.upper[node] + self._pad
        for k in range(3):
            if direction[k] == 0.0:
                if origin[k] < lo[k] or origin[k] > hi[k]:
                    return False
                continue
            a = (lo[k] - origin[k]) / direction[k]
            b = (hi[k] - origin[k]) / direction[k]
            if a > b:
                a, b = b, a
            t0 = max(t0, a)
            t1 = min(t1, b)
            if t0 > t1:
                return False
        return True

    def candidates(self, origin: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Faces in every leaf whose box the segment touches."""

        if not len(self.faces):
            return np.empty(0, dtype=np.int64)
        origin = np.asarray(origin, dtype=float)
        direction = np.asarray(target, dtype=float) - origin
        found: list[np.ndarray] = []
        stack = [0]
        while stack:
            node = stack.pop()
            if not self._crosses_box(node, origin, direction):
                continue
            if self.count[node]:
                s = self.start[node]
                found.append(self.order[s:s + self.count[node]])
            else:
                stack.append(int(self.right[node]))
                stack.append(int(self.left[node]))
        return np.concatenate(found) if found else np.empty(0, dtype=np.int64)

    def segment_hits(self, origin: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Sorted indices of faces crossing the open segment."""

        idx = self.candidates(origin, target)
        if not len(idx):
            return idx
        origin = np.asarray(origin, dtype=float)
        direction = np.asarray(target, dtype=float) - origin
        tri = self.faces[idx]
        t = _segment_param(origin, direction, tri[:, 0], tri[:, 1], tri[:, 2])
        with np.errstate(invalid="ignore"):
            return np.sort(idx[(t > 0.0) & (t < 1.0)])


FaceInput = Union[np.ndarray, FaceTree]


def ray_visible(origin: Sequence[float], target: Sequence[float], faces: FaceInput) -> bool:
    """True iff no face crosses the open segment between the two points.

    The segment is always traced from the lexicographically smaller endpoint
    so that swapping ``origin`` and ``target`` gives the same answer.

    A raw face array is wrapped in a fresh :class:`FaceTree` on every call;
    build the tree once and pass it in when issuing many queries against the
    same scene, or use :func:`visible_mask` for one origin and many targets.
    """

    p = np.asarray(origin, dtype=float)
    q = np.asarray(target, dtype=float)
    if np.array_equal(p, q):
        raise ValueError("ray_visible needs two distinct points")
    if tuple(q) < tuple(p):
        p, q = q, p
    tree = faces if isinstance(faces, FaceTree) else FaceTree(faces)
    if not len(tree):
        return True
    return len(tree.segment_hits(p, q)) == 0


def visible_mask(origin: Sequence[float], targets: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Vectorized :func:`ray_visible` from one origin to many targets."""

    origin = np.asarray(origin, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    faces = np.asarray(faces, dtype=float).reshape(-1, 3, 3)
    blocked = np.zeros(len(targets), dtype=bool)
    direction = targets - origin
    for tri in faces:
        t = _segment_param(origin, direction, tri[0], tri[1], tri[2])
        with np.errstate(invalid="ignore"):
            blocked |= (t > 0.0) & (t < 1.0)
    return ~blocked


def cast_rays(origins: np.ndarray, directions: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Euclidean distance to the first face along each ray, ``inf`` on a miss."""

    origins, directions = np.broadcast_arrays(
        np.asarray(origins, dtype=float), np.asarray(directions, dtype=float)
    )
    shape = origins.shape[:-1]
    origins = origins.reshape(-1, 3)
    directions = directions.reshape(-1, 3)
    faces = np.asarray(faces, dtype=float).reshape(-1, 3, 3)
    best = np.full(len(origins), np.inf)
    for tri in faces:
        t = _segment_param(origins, directions, tri[0], tri[1], tri[2])
        with np.errstate(invalid="ignore"):
            hit = t > 0.0
        best[hit] = np.minimum(best[hit], t[hit])
    return (best * np.linalg.norm(directions, axis=1)).reshape(shape)


def cast_ray(origin: Sequence[float], direction: Sequence[float], faces: np.ndarray) -> float:
    """Single-ray version of :func:`cast_rays`."""

    return float(cast_rays(np.asarray(origin, dtype=float)[None], np.asarray(direction, dtype=float)[None], faces)[0])


def point_in_dynamic(env: Environment, t: int, point: Sequence[float]) -> bool:
    """True iff ``point`` lies inside any dynamic mesh at time step ``t``.

    Inside/outside is decided by crossing parity along three fixed generic
    directions with a majority vote.

    Raises:
        SceneError: If ``t`` is outside ``1..T``.
        MeshStructureError: If a dynamic mesh is not closed.
    """

    _check_time_step(env, t)
    p = np.asarray(point, dtype=float)
    for obj in env.dynamic_objects:
        if not obj.mesh.is_closed:
            log.error("Dynamic mesh '%s' is not watertight", obj.mesh.name)
            raise MeshStructureError(f"dynamic mesh '{obj.mesh.name}' is not watertight")
    for obj in env.dynamic_objects:
        tri = obj.triangles_at(t)
        lo = tri.reshape(-1, 3).min(axis=0)
        hi = tri.reshape(-1, 3).max(axis=0)
        if np.any(p < lo) or np.any(p > hi):
            continue
        reach = 2.0 * float(np.linalg.norm(hi - lo)) + 1.0
        votes = 0
        for direction in _PARITY_DIRECTIONS:
            crossings = len(segment_hits_brute(p, p + reach * direction, tri))
            votes += crossings % 2
        if votes >= 2:
            return True
    return False


__all__ = [
    "TriangleMesh",
    "DynamicObject",
    "Environment",
    "FaceTree",
    "build_mesh",
    "load_obj",
    "write_obj",
    "merge_meshes",
    "box_mesh",
    "cylinder_mesh",
    "humanoid_mesh",
    "wall_with_door_mesh",
    "validate_rigid",
    "assemble_scene",
    "segment_hits_brute",
    "ray_visible",
    "visible_mask",
    "cast_rays",
    "cast_ray",
    "point_in_dynamic",
]
