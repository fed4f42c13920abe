"""Objective assembly: variables to poses, per-camera coloring, aggregation.

This is the business layer of camplan. A :class:`SimulationContext` bundles
the immutable scene with the optimization domain and objective settings and
carries a cache of rendered static depth images, in the same bucket style the
rest of the code base uses for expensive derived data. All public functions
are pure in their inputs: the cache only avoids recomputation.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from . import data_manager, log
from .camera import CameraIntrinsics, CameraPose, look_at
from .constants import Aggregation, ObjectiveMode, Parametrization, SampleMode
from .errors import BudgetExceededError, ConfigError, DomainError, SceneError
from .geometry import DynamicObject, Environment, assemble_scene, load_obj
from .render import DepthImage, SegmentedImage, render_depth, segment
from .voxelspace import (
    DETECTABLE_LABELS,
    HULL_LABELS,
    AttributeField,
    MultiView,
    VoxelGrid,
    color_coverage,
    color_hull,
    combine,
    measure,
)


STATIC_CACHE_LIMIT = 512

BLOCK_NAMES = {
    Parametrization.FULL: ("x", "y", "z", "pan", "tilt"),
    Parametrization.POSITION_LOOKAT: ("x", "y", "z"),
    Parametrization.PLANAR_LOOKAT: ("x", "y"),
    Parametrization.LINE: ("s",),
}


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariableBlock:
    """Variables of one camera and how they map to its pose.

    ``full`` blocks are ``(x, y, z, pan, tilt)``. ``position_lookat`` blocks
    are a position aimed at ``target``; ``planar_lookat`` blocks fix the
    height to ``mount_height``. ``line`` blocks place the camera at arc
    length ``s`` from ``start`` towards ``end`` and aim it at ``target`` when
    one is given, else along the fixed ``pan``/``tilt``.
    """

    parametrization: Parametrization
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    target: Optional[tuple[float, float, float]] = None
    up: Optional[tuple[float, float, float]] = None
    mount_height: Optional[float] = None
    start: Optional[tuple[float, float, float]] = None
    end: Optional[tuple[float, float, float]] = None
    pan: float = 0.0
    tilt: float = 0.0

    @classmethod
    def from_settings(cls, settings: data_manager.CameraSettings) -> "VariableBlock":
        return cls(
            parametrization=settings.parametrization,
            lower=tuple(settings.lower),
            upper=tuple(settings.upper),
            target=settings.target,
            up=settings.up,
            mount_height=settings.mount_height,
            start=settings.start,
            end=settings.end,
            pan=settings.pan,
            tilt=settings.tilt,
        )

    @property
    def dimension(self) -> int:
        return len(BLOCK_NAMES[self.parametrization])

    def _line_axis(self) -> tuple[np.ndarray, np.ndarray]:
        start = np.asarray(self.start, dtype=float)
        direction = np.asarray(self.end, dtype=float) - start
        return start, direction / np.linalg.norm(direction)

    def _aim(self, position: np.ndarray) -> CameraPose:
        if self.target is not None:
            return look_at(position, self.target, self.up)
        return CameraPose.from_pan_tilt(position, self.pan, self.tilt)

    def pose(self, values: Sequence[float]) -> CameraPose:
        values = [float(v) for v in values]
        kind = self.parametrization
        if kind is Parametrization.FULL:
            return CameraPose.from_pan_tilt(values[:3], values[3], values[4])
        if kind is Parametrization.POSITION_LOOKAT:
            return look_at(values, self.target, self.up)
        if kind is Parametrization.PLANAR_LOOKAT:
            return look_at([values[0], values[1], float(self.mount_height)], self.target, self.up)
        start, axis = self._line_axis()
        return self._aim(start + values[0] * axis)

    def values(self, pose: CameraPose) -> tuple[float, ...]:
        """Inverse of :meth:`pose` for poses this block can produce."""

        position = pose.position
        kind = self.parametrization
        if kind is Parametrization.FULL:
            pan, tilt = pose.pan_tilt
            return (*(float(v) for v in position), pan, tilt)
        if kind is Parametrization.POSITION_LOOKAT:
            return tuple(float(v) for v in position)
        if kind is Parametrization.PLANAR_LOOKAT:
            return (float(position[0]), float(position[1]))
        start, axis = self._line_axis()
        return (float(np.dot(position - start, axis)),)


@dataclass(frozen=True)
class Domain:
    """Product of camera blocks with per-scalar box bounds."""

    blocks: tuple[VariableBlock, ...]

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ConfigError("a domain needs at least one camera block")
        for index, block in enumerate(self.blocks, start=1):
            if len(block.lower) != block.dimension or len(block.upper) != block.dimension:
                raise ConfigError(f"camera {index}: {block.parametrization.value} needs {block.dimension} bounds")
            for lo, hi in zip(block.lower, block.upper):
                if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                    raise ConfigError(f"camera {index}: bounds must be finite with lower <= upper")

    @property
    def cameras(self) -> int:
        return len(self.blocks)

    @property
    def dimension(self) -> int:
        return sum(block.dimension for block in self.blocks)

    @property
    def lower(self) -> np.ndarray:
        return np.array([v for block in self.blocks for v in block.lower], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([v for block in self.blocks for v in block.upper], dtype=float)

    @property
    def bounds(self) -> np.ndarray:
        """``(n, 2)`` array of ``[lower, upper]`` rows."""

        return np.column_stack([self.lower, self.upper])

    @property
    def names(self) -> list[str]:
        return [
            f"camera{index}.{name}"
            for index, block in enumerate(self.blocks, start=1)
            for name in BLOCK_NAMES[block.parametrization]
        ]

    def appended(self, block: VariableBlock) -> "Domain":
        return Domain(self.blocks + (block,))


def poses_from_vector(domain: Domain, x: Sequence[float]) -> list[CameraPose]:
    """Map a variable vector to one pose per camera block.

    Raises:
        DomainError: If ``x`` has the wrong length or a component leaves its
            bounds; the message names the scalar.
    """

    x = np.asarray(x, dtype=float).ravel()
    if x.size != domain.dimension:
        log.error("Variable vector has %d entries, domain needs %d", x.size, domain.dimension)
        raise DomainError(f"variable vector has {x.size} entries, the domain needs {domain.dimension}")
    lower, upper, names = domain.lower, domain.upper, domain.names
    for index in range(x.size):
        if not (lower[index] <= x[index] <= upper[index]):
            log.error("Scalar %s = %r outside [%r, %r]", names[index], x[index], lower[index], upper[index])
            raise DomainError(
                f"x_{index + 1} ({names[index]}) = {x[index]!r} outside [{lower[index]!r}, {upper[index]!r}]"
            )
    poses = []
    offset = 0
    for block in domain.blocks:
        poses.append(block.pose(x[offset:offset + block.dimension]))
        offset += block.dimension
    return poses


def vector_from_poses(domain: Domain, poses: Sequence[CameraPose]) -> np.ndarray:
    """Inverse of :func:`poses_from_vector` for poses each block can produce."""

    if len(poses) != domain.cameras:
        raise DomainError(f"expected {domain.cameras} poses, got {len(poses)}")
    return np.array([v for block, pose in zip(domain.blocks, poses) for v in block.values(pose)], dtype=float)


# ---------------------------------------------------------------------------
# Context and cache
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which objective to compute and how to fold time steps."""

    mode: ObjectiveMode
    threshold: int = 1
    aggregation: Aggregation = Aggregation.SUM
    sample_mode: SampleMode = SampleMode.CENTER
    depth_slack: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", ObjectiveMode(self.mode))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        object.__setattr__(self, "sample_mode", SampleMode(self.sample_mode))
        if self.threshold < 1:
            raise ConfigError(f"overlap threshold {self.threshold} must be at least 1")
        if self.depth_slack < 0:
            raise ConfigError("depth slack must be non-negative")

    @property
    def selector(self) -> tuple[int, ...]:
        return DETECTABLE_LABELS if self.mode is ObjectiveMode.MAX_COVERAGE else HULL_LABELS


@dataclass(frozen=True)
class SimulationContext:
    """Immutable inputs of :func:`evaluate` plus a render cache."""

    env: Environment
    grid: VoxelGrid
    intrinsics: CameraIntrinsics
    domain: Domain
    spec: ObjectiveSpec
    workers: int = 1
    _cache: Dict[str, Dict[Any, Any]] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.spec.threshold > self.domain.cameras:
            log.error("Threshold %d exceeds the %d cameras", self.spec.threshold, self.domain.cameras)
            raise ConfigError(f"threshold {self.spec.threshold} exceeds the number of cameras M = {self.domain.cameras}")
        if not self.grid.within(self.env.bounds_min, self.env.bounds_max):
            raise SceneError("the voxel grid must lie inside the environment bounds")

    def with_domain(self, domain: Domain) -> "SimulationContext":
        return SimulationContext(self.env, self.grid, self.intrinsics, domain, self.spec, self.workers)


def _get_cache_bucket(context: SimulationContext, name: str) -> Dict[Any, Any]:
    bucket = context._cache.get(name)
    if bucket is None:
        log.debug("Initializing cache bucket '%s'", name)
        bucket = {}
        context._cache[name] = bucket
    return bucket


def _invalidate_cache(context: SimulationContext, *names: str) -> None:
    for name in names:
        context._cache.pop(name, None)


def _ensure_scene_cache(context: SimulationContext, t: int) -> Dict[Any, Any]:
    """Faces per time step, with dynamic content only when the scene has any."""

    bucket = _get_cache_bucket(context, "scene")
    if t not in bucket:
        bucket[t] = assemble_scene(context.env, t, include_dynamic=True)
    return bucket


def static_depth(context: SimulationContext, pose: CameraPose) -> DepthImage:
    """Static-only depth image for ``pose``; cached across time steps and calls."""

    bucket = _get_cache_bucket(context, "static_depth")
    key = (pose.position.tobytes(), pose.quaternion.tobytes())
    image = bucket.get(key)
    if image is None:
        image = render_depth(pose, context.intrinsics, context.env.static_faces)
        if len(bucket) >= STATIC_CACHE_LIMIT:
            _invalidate_cache(context, "static_depth")
            bucket = _get_cache_bucket(context, "static_depth")
        bucket[key] = image
    return image


def build_context(config: data_manager.RunConfig, *, workers: int = 1) -> SimulationContext:
    """Load meshes and weights referenced by ``config`` into a context.

    Raises:
        FileNotFoundError: For missing meshes or weight files.
        SceneError: For inconsistent dynamics or bounds.
        ConfigError: For threshold or weight-size violations.
    """

    static = tuple(load_obj(path) for path in config.scene.static_meshes)
    dynamic = tuple(
        DynamicObject(mesh=load_obj(spec.mesh), poses=np.array(spec.poses, dtype=float).reshape(-1, 3, 4))
        for spec in config.scene.dynamic
    )
    env = Environment(
        static_meshes=static,
        dynamic_objects=dynamic,
        bounds_min=np.array(config.scene.bounds_min),
        bounds_max=np.array(config.scene.bounds_max),
        time_steps=config.scene.time_steps,
    )
    weights = None
    count = int(np.prod(config.grid.resolution))
    if config.grid.weight_file is not None:
        weights = data_manager.load_weights(config.grid.weight_file, count)
    grid = VoxelGrid(
        origin=np.array(config.grid.origin),
        cell_size=np.array(config.grid.cell_size),
        resolution=config.grid.resolution,
        weights=weights,
    )
    intrinsics = CameraIntrinsics.from_degrees(
        config.intrinsics.width, config.intrinsics.height, config.intrinsics.fov_degrees, config.intrinsics.near
    )
    domain = Domain(tuple(VariableBlock.from_settings(camera) for camera in config.cameras))
    spec = ObjectiveSpec(
        mode=config.objective.mode,
        threshold=config.objective.threshold,
        aggregation=config.objective.aggregation,
        sample_mode=config.objective.sample_mode,
        depth_slack=config.objective.depth_slack,
    )
    context = SimulationContext(env, grid, intrinsics, domain, spec, workers=max(1, workers))
    log.info(
        "Built context: %d static face(s), %d dynamic object(s), %d voxel(s), %d camera(s), n=%d",
        len(env.static_faces),
        len(env.dynamic_objects),
        grid.count,
        domain.cameras,
        domain.dimension,
    )
    return context


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Simulation:
    """Everything produced for one variable vector at one time step."""

    t: int
    poses: List[CameraPose]
    static_images: List[DepthImage]
    dynamic_images: List[Optional[DepthImage]]
    segmentations: List[Optional[SegmentedImage]]
    fields: List[AttributeField]
    view: MultiView
    value: float


def _camera_step(context: SimulationContext, pose: CameraPose, t: int):
    static = static_depth(context, pose)
    spec = context.spec
    if spec.mode is ObjectiveMode.MAX_COVERAGE:
        field_ = color_coverage(
            context.grid, pose, context.intrinsics, static, sample=spec.sample_mode, depth_slack=spec.depth_slack
        )
        return static, None, None, field_
    if context.env.dynamic_objects:
        faces = _ensure_scene_cache(context, t)[t]
        dynamic = render_depth(pose, context.intrinsics, faces)
    else:
        dynamic = static
    seg = segment(static, dynamic)
    field_ = color_hull(
        context.grid, pose, context.intrinsics, static, seg, sample=spec.sample_mode, depth_slack=spec.depth_slack
    )
    return static, dynamic, seg, field_


def simulate(context: SimulationContext, x: Sequence[float], t: int = 1) -> Simulation:
    """Render, segment, color and combine all cameras at time step ``t``.

    Raises:
        DomainError: If ``x`` does not fit the domain.
        SceneError: If ``t`` is outside ``1..T``.
    """

    if not 1 <= t <= context.env.time_steps:
        raise SceneError(f"time step {t} outside 1..{context.env.time_steps}")
    poses = poses_from_vector(context.domain, x)
    if context.workers > 1 and len(poses) > 1:
        with ThreadPoolExecutor(max_workers=min(context.workers, len(poses))) as pool:
            steps = list(pool.map(lambda pose: _camera_step(context, pose, t), poses))
    else:
        steps = [_camera_step(context, pose, t) for pose in poses]
    fields = [step[3] for step in steps]
    k = context.spec.threshold
    view = combine(fields, context.spec.selector, k)
    value = measure(view, k, context.grid.weights)
    return Simulation(
        t=t,
        poses=poses,
        static_images=[step[0] for step in steps],
        dynamic_images=[step[1] for step in steps],
        segmentations=[step[2] for step in steps],
        fields=fields,
        view=view,
        value=value,
    )


def evaluate(context: SimulationContext, x: Sequence[float]) -> float:
    """Objective value of ``x``.

    Coverage depends on static geometry only and is computed once. The hull
    error is measured at every time step and folded by the configured
    aggregation in time-step order.
    """

    if context.spec.mode is ObjectiveMode.MAX_COVERAGE:
        return simulate(context, x, 1).value
    values = [simulate(context, x, t).value for t in range(1, context.env.time_steps + 1)]
    if context.spec.aggregation is Aggregation.MAX:
        return float(max(values))
    return float(sum(values))


def threshold_readings(spec: ObjectiveSpec, cameras: int) -> tuple[str, str]:
    """Both readings of a hull threshold: on the changed-or-undetectable sets
    and the equivalent one on the identical sets."""

    k = spec.threshold
    dual = cameras - (k - 1)
    return (
        f"hull = voxels changed or undetectable in at least {k} of {cameras} camera(s)",
        f"equivalently: voxels not identical in fewer than {dual} of {cameras} camera(s) "
        f"(identical-set threshold {dual})",
    )


class ProgressObjective:
    """Solver-facing objective: always maximized, logs every evaluation.

    Hull errors are negated so that larger is better for every solver.
    """

    def __init__(self, context: SimulationContext) -> None:
        self.context = context
        self.sign = -1.0 if context.spec.mode is ObjectiveMode.MIN_HULL_ERROR else 1.0
        self.evaluations = 0
        self.best = -math.inf

    def __call__(self, x: Sequence[float]) -> float:
        value = self.sign * evaluate(self.context, x)
        self.evaluations += 1
        self.best = max(self.best, value)
        log.info("evaluation %d: value=%.10g best=%.10g", self.evaluations, value, self.best)
        return value


def solver_objective(context: SimulationContext) -> ProgressObjective:
    return ProgressObjective(context)


# ---------------------------------------------------------------------------
# Grid scan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    x: tuple[float, ...]
    value: float
    millis: float


@dataclass(frozen=True)
class ScanTable:
    rows: tuple[ScanRow, ...]
    argmax: tuple[float, ...]
    max: float


def lattice(domain: Domain, steps: Union[int, Sequence[int]]) -> list[tuple[float, ...]]:
    """Row-major Cartesian lattice of per-scalar linspaces (last scalar fastest)."""

    counts = [int(steps)] * domain.dimension if isinstance(steps, (int, np.integer)) else [int(s) for s in steps]
    if len(counts) == 1 and domain.dimension > 1:
        counts = counts * domain.dimension
    if len(counts) != domain.dimension or min(counts) < 1:
        raise ConfigError(f"scan needs 1 or {domain.dimension} positive step counts")
    axes = [
        np.linspace(lo, hi, count) if count > 1 else np.array([0.5 * (lo + hi)])
        for lo, hi, count in zip(domain.lower, domain.upper, counts)
    ]
    return [tuple(float(v) for v in point) for point in itertools.product(*axes)]


def grid_scan(
    context: SimulationContext,
    steps: Union[int, Sequence[int]],
    *,
    budget: int,
    record_timings: bool = False,
    objective: Optional[Callable[[Sequence[float]], float]] = None,
) -> ScanTable:
    """Evaluate the objective on the full lattice.

    Args:
        context: Simulation context.
        steps: Points per scalar, or one count for all scalars.
        budget: Maximum number of evaluations allowed.
        record_timings: Store wall time per point; zeros otherwise.
        objective: Replacement for :func:`evaluate` (tests).

    Raises:
        BudgetExceededError: If the lattice is larger than ``budget``.
    """

    points = lattice(context.domain, steps)
    if len(points) > budget:
        log.error("Scan needs %d evaluations, budget is %d", len(points), budget)
        raise BudgetExceededError(len(points), budget)
    evaluate_point = objective or (lambda x: evaluate(context, x))
    sign = -1.0 if context.spec.mode is ObjectiveMode.MIN_HULL_ERROR else 1.0
    rows = []
    for index, point in enumerate(points, start=1):
        started = time.perf_counter()
        value = float(evaluate_point(point))
        millis = (time.perf_counter() - started) * 1000.0 if record_timings else 0.0
        rows.append(ScanRow(point, value, millis))
        log.info("scan point %d/%d: value=%.10g", index, len(points), value)
    best = max(rows, key=lambda row: sign * row.value)
    return ScanTable(rows=tuple(rows), argmax=best.x, max=sign * best.value)


__all__ = [
    "VariableBlock",
    "Domain",
    "ObjectiveSpec",
    "SimulationContext",
    "Simulation",
    "ScanRow",
    "ScanTable",
    "ProgressObjective",
    "poses_from_vector",
    "vector_from_poses",
    "static_depth",
    "build_context",
    "simulate",
    "evaluate",
    "threshold_readings",
    "solver_objective",
    "lattice",
    "grid_scan",
]
