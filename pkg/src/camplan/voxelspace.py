"""Voxel grid, per-camera attribute coloring and k-overlap combination.

A field stores one byte per voxel in x-fastest order. Coverage fields use
:class:`~camplan.constants.CoverageLabel`, hull fields use
:class:`~camplan.constants.HullLabel`. Combining fields never enumerates
camera subsets: a voxel belongs to the k-overlap view iff at least ``k``
fields select it, which is the same set as the union of all k-wise
intersections.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from . import log
from .camera import CameraIntrinsics, CameraPose, pixel_indices, project_points
from .constants import CoverageLabel, HullLabel, ObjectiveMode, SampleMode
from .render import DepthImage, SegmentedImage


# Pixels added around a voxel footprint in corner mode.
FOOTPRINT_DILATION = 2
CHUNK_SIZE = 1 << 16

DETECTABLE_LABELS = (int(CoverageLabel.DETECTABLE),)
HULL_LABELS = (int(HullLabel.OUTSIDE), int(HullLabel.OCCLUDED), int(HullLabel.CHANGED))
IDENTICAL_LABELS = (int(HullLabel.IDENTICAL),)

Selector = Union[Callable[[np.ndarray], np.ndarray], Iterable[int]]

_CORNER_OFFSETS = np.array([[(k >> 0) & 1, (k >> 1) & 1, (k >> 2) & 1] for k in range(8)], dtype=float)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Regular grid of ``v_x * v_y * v_z`` axis-aligned cells.

    Attributes:
        origin: Lower corner of the grid box.
        cell_size: Edge lengths of one cell.
        resolution: Cell counts per axis.
        weights: Optional flat, non-negative per-voxel weights.
    """

    origin: np.ndarray
    cell_size: np.ndarray
    resolution: tuple[int, int, int]
    weights: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        cell = np.asarray(self.cell_size, dtype=float).reshape(3)
        resolution = tuple(int(v) for v in self.resolution)
        if len(resolution) != 3 or min(resolution) < 1:
            raise ValueError(f"grid resolution {resolution} needs three positive counts")
        if np.any(cell <= 0) or not np.all(np.isfinite(cell)) or not np.all(np.isfinite(origin)):
            raise ValueError("grid cell sizes must be positive and finite")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cell_size", cell)
        object.__setattr__(self, "resolution", resolution)
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float).ravel()
            if weights.size != self.count:
                raise ValueError(f"weight field has {weights.size} entries, grid has {self.count} voxels")
            if not np.all(np.isfinite(weights)) or np.any(weights < 0):
                raise ValueError("voxel weights must be finite and non-negative")
            weights.setflags(write=False)
            object.__setattr__(self, "weights", weights)

    @property
    def count(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_size))

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.cell_size * np.array(self.resolution)

    def within(self, lower: Sequence[float], upper: Sequence[float]) -> bool:
        tolerance = 1e-9 * float(np.linalg.norm(self.upper - self.origin))
        return bool(
            np.all(self.origin >= np.asarray(lower) - tolerance) and np.all(self.upper <= np.asarray(upper) + tolerance)
        )

    def indices(self, flat: Optional[np.ndarray] = None) -> np.ndarray:
        """``(ix, iy, iz)`` rows for flat indices (all voxels by default)."""

        flat = np.arange(self.count) if flat is None else np.asarray(flat)
        vx, vy, vz = self.resolution
        iz, iy, ix = np.unravel_index(flat, (vz, vy, vx))
        return np.column_stack([ix, iy, iz])

    def centers(self, flat: Optional[np.ndarray] = None) -> np.ndarray:
        return self.origin + (self.indices(flat) + 0.5) * self.cell_size

    def corners(self, flat: Optional[np.ndarray] = None) -> np.ndarray:
        """``(n, 8, 3)`` corner coordinates."""

        low = self.origin + self.indices(flat) * self.cell_size
        return low[:, None, :] + _CORNER_OFFSETS[None, :, :] * self.cell_size

    def same_as(self, other: "VoxelGrid") -> bool:
        return (
            self.resolution == other.resolution
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.cell_size, other.cell_size)
        )


@dataclass(frozen=True, eq=False)
class AttributeField:
    """One label per voxel produced by coloring a single camera."""

    labels: np.ndarray
    mode: ObjectiveMode
    grid: VoxelGrid

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.uint8).ravel()
        if labels.size != self.grid.count:
            raise ValueError(f"field has {labels.size} labels, grid has {self.grid.count} voxels")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


@dataclass(frozen=True, eq=False)
class MultiView:
    """Per-voxel number of fields selecting the voxel."""

    counts: np.ndarray
    cameras: int
    threshold: int = 1

    def members(self, k: Optional[int] = None) -> np.ndarray:
        """Boolean membership at overlap ``k`` (default: the combine threshold)."""

        return self.counts >= (self.threshold if k is None else k)


# ---------------------------------------------------------------------------
# Coloring
# ---------------------------------------------------------------------------


def _window_reduce(
    image: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    heights: np.ndarray,
    widths: np.ndarray,
    reducer: Callable[..., np.ndarray],
    fill: float,
) -> np.ndarray:
    """Reduce ``image`` over rectangles starting at ``(rows, cols)``.

    Rectangle sizes are rounded up to powers of two so one filter pass serves
    many voxels; the reduced window therefore contains the requested one.
    """

    result = np.full(rows.shape, fill, dtype=float)
    size_h = np.left_shift(1, np.ceil(np.log2(np.maximum(heights, 1))).astype(int))
    size_w = np.left_shift(1, np.ceil(np.log2(np.maximum(widths, 1))).astype(int))
    pad = int(max(size_h.max(initial=1), size_w.max(initial=1)))
    padded = np.pad(image.astype(float), ((0, pad), (0, pad)), constant_values=fill)
    for sh, sw in set(zip(size_h.tolist(), size_w.tolist())):
        select = (size_h == sh) & (size_w == sw)
        filtered = reducer(padded, size=(sh, sw), mode="constant", cval=fill)
        result[select] = filtered[rows[select] + sh // 2, cols[select] + sw // 2]
    return result


def _center_labels(
    grid: VoxelGrid,
    flat: np.ndarray,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    static: np.ndarray,
    foreground: Optional[np.ndarray],
    depth_slack: float,
) -> np.ndarray:
    u, v, distance, in_front = project_points(pose, intrinsics, grid.centers(flat))
    i, j, inside = pixel_indices(u, v, intrinsics)
    visible = in_front & inside
    pixel_depth = np.where(visible, static[j - 1, i - 1], np.inf)
    occluded = visible & (distance > pixel_depth + depth_slack)
    labels = np.full(flat.shape, int(HullLabel.OUTSIDE), dtype=np.uint8)
    labels[occluded] = HullLabel.OCCLUDED
    open_ = visible & ~occluded
    if foreground is None:
        labels[open_] = HullLabel.IDENTICAL
    else:
        changed = open_ & foreground[j - 1, i - 1]
        labels[open_] = HullLabel.IDENTICAL
        labels[changed] = HullLabel.CHANGED
    return labels


def _corner_labels(
    grid: VoxelGrid,
    flat: np.ndarray,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    static: np.ndarray,
    foreground: Optional[np.ndarray],
    depth_slack: float,
) -> np.ndarray:
    u, v, distance, in_front = project_points(pose, intrinsics, grid.corners(flat))
    labels = np.full(flat.shape, int(HullLabel.OUTSIDE), dtype=np.uint8)
    all_front = in_front.all(axis=1)
    u = np.where(all_front[:, None], u, 0.0)
    v = np.where(all_front[:, None], v, 0.0)
    col0 = np.floor(u.min(axis=1) + 0.5) - FOOTPRINT_DILATION
    col1 = np.floor(u.max(axis=1) + 0.5) + FOOTPRINT_DILATION
    row0 = np.floor(v.min(axis=1) + 0.5) - FOOTPRINT_DILATION
    row1 = np.floor(v.max(axis=1) + 0.5) + FOOTPRINT_DILATION
    inside = all_front & (col0 >= 1) & (row0 >= 1) & (col1 <= intrinsics.n_x) & (row1 <= intrinsics.n_y)
    if not inside.any():
        return labels

    rows = row0[inside].astype(np.int64) - 1
    cols = col0[inside].astype(np.int64) - 1
    heights = (row1[inside] - row0[inside] + 1).astype(np.int64)
    widths = (col1[inside] - col0[inside] + 1).astype(np.int64)
    nearest = _window_reduce(static, rows, cols, heights, widths, ndimage.minimum_filter, np.inf)
    farthest_corner = distance[inside].max(axis=1)
    occluded = farthest_corner > nearest + depth_slack

    sub = np.full(rows.shape, int(HullLabel.IDENTICAL), dtype=np.uint8)
    sub[occluded] = HullLabel.OCCLUDED
    if foreground is not None:
        hit = _window_reduce(foreground, rows, cols, heights, widths, ndimage.maximum_filter, 0.0) > 0
        sub[~occluded & hit] = HullLabel.CHANGED
    labels[inside] = sub
    return labels


def _color(
    grid: VoxelGrid,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    static_depth: DepthImage,
    seg: Optional[SegmentedImage],
    sample: SampleMode,
    depth_slack: float,
    workers: int,
) -> np.ndarray:
    if static_depth.values.shape != (intrinsics.n_y, intrinsics.n_x):
        raise ValueError("static depth image does not match the intrinsics")
    static = static_depth.values
    foreground = None if seg is None else seg.foreground
    kernel = _corner_labels if SampleMode(sample) is SampleMode.CORNERS else _center_labels
    chunks = [np.arange(s, min(s + CHUNK_SIZE, grid.count)) for s in range(0, grid.count, CHUNK_SIZE)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda flat: kernel(grid, flat, pose, intrinsics, static, foreground, depth_slack), chunks)
            )
    else:
        parts = [kernel(grid, flat, pose, intrinsics, static, foreground, depth_slack) for flat in chunks]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.uint8)


def color_coverage(
    grid: VoxelGrid,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    static_depth: DepthImage,
    *,
    sample: SampleMode = SampleMode.CENTER,
    depth_slack: float = 0.0,
    workers: int = 1,
) -> AttributeField:
    """Label every voxel detectable or undetectable for one camera.

    A voxel is undetectable when its sample point lies behind the near plane,
    projects outside the image, or lies farther than the static depth seen at
    its pixel plus ``depth_slack``. ``NO_HIT`` pixels never occlude.
    """

    labels = _color(grid, pose, intrinsics, static_depth, None, sample, depth_slack, workers)
    coverage = np.where(labels == HullLabel.IDENTICAL, CoverageLabel.DETECTABLE, CoverageLabel.UNDETECTABLE)
    field = AttributeField(coverage.astype(np.uint8), ObjectiveMode.MAX_COVERAGE, grid)
    log.debug("Coverage coloring: %d of %d voxels detectable", int(coverage.sum()), grid.count)
    return field


def color_hull(
    grid: VoxelGrid,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    static_depth: DepthImage,
    seg: SegmentedImage,
    *,
    sample: SampleMode = SampleMode.CENTER,
    depth_slack: float = 0.0,
    workers: int = 1,
) -> AttributeField:
    """Label every voxel outside, occluded, changed or identical.

    Voxels passing the coverage test are changed when they project onto a
    foreground pixel of ``seg`` and identical otherwise. Occlusion only
    considers static geometry, so space behind a dynamic object projects into
    its silhouette and counts as changed.
    """

    if seg.values.shape != static_depth.values.shape:
        raise ValueError("segmented image and static depth image differ in size")
    labels = _color(grid, pose, intrinsics, static_depth, seg, sample, depth_slack, workers)
    return AttributeField(labels, ObjectiveMode.MIN_HULL_ERROR, grid)


# ---------------------------------------------------------------------------
# Combination and metric
# ---------------------------------------------------------------------------


def _selection(selector: Selector, labels: np.ndarray) -> np.ndarray:
    if callable(selector):
        return np.asarray(selector(labels), dtype=bool)
    return np.isin(labels, np.fromiter((int(v) for v in selector), dtype=np.int64))


def combine(fields: Sequence[AttributeField], selector: Selector, k: int) -> MultiView:
    """Count, per voxel, how many fields select it.

    Args:
        fields: One field per camera, all on the same grid.
        selector: Label codes to select, or a predicate over a label array.
        k: Overlap threshold, ``1 <= k <= M``.

    Raises:
        ValueError: On an empty field list, mismatched grids or ``k`` out of
            range.
    """

    if not fields:
        raise ValueError("combine needs at least one field")
    count = len(fields)
    if not 1 <= k <= count:
        log.error("Overlap threshold %d outside 1..%d", k, count)
        raise ValueError(f"overlap threshold {k} outside 1..{count}")
    grid = fields[0].grid
    for field in fields[1:]:
        if field.grid is not grid and not field.grid.same_as(grid):
            raise ValueError("fields live on different grids")
    totals = np.zeros(grid.count, dtype=np.int32)
    for field in fields:
        totals += _selection(selector, field.labels)
    return MultiView(counts=totals, cameras=count, threshold=k)


def complement_identity_check(fields: Sequence[AttributeField], labels: Iterable[int], k: int) -> bool:
    """Check that ``C_k`` over ``labels`` is the complement of ``C_{M-k+1}``
    over every other label."""

    chosen = tuple(int(v) for v in labels)
    count = len(fields)
    view = combine(fields, chosen, k)
    complement = combine(fields, lambda values: ~np.isin(values, chosen), count - (k - 1))
    return bool(np.array_equal(view.members(), ~complement.members()))


def measure(view: MultiView, k: Optional[int] = None, weights: Optional[np.ndarray] = None) -> float:
    """Voxel count (or weight sum) of the view at overlap ``k``.

    Raises:
        ValueError: If ``weights`` does not match the number of voxels.
    """

    members = view.members(k)
    if weights is None:
        return float(np.count_nonzero(members))
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape != members.shape:
        raise ValueError(f"weight field has {weights.size} entries, view has {members.size} voxels")
    return float(weights[members].sum())


def volume(view: MultiView, grid: VoxelGrid, k: Optional[int] = None) -> float:
    """Member count at ``k`` times the cell volume."""

    return measure(view, k) * grid.cell_volume


__all__ = [
    "VoxelGrid",
    "AttributeField",
    "MultiView",
    "DETECTABLE_LABELS",
    "HULL_LABELS",
    "IDENTICAL_LABELS",
    "color_coverage",
    "color_hull",
    "combine",
    "complement_identity_check",
    "measure",
    "volume",
]
