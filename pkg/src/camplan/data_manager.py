"""Data access helpers for camplan runs.

Everything that touches the filesystem lives here: resolving and parsing the
``config.ini`` run description into typed records, reading and writing OBJ
meshes, and exporting depth images, voxel dumps, scan tables, solver traces
and spreadsheets. The simulation modules only ever see numpy arrays and the
frozen dataclasses defined below.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import openpyxl
from openpyxl.styles import Font

from . import log
from .constants import (
    DEFAULT_BUDGET,
    DEFAULT_FOV_DEGREES,
    DEFAULT_NEAR,
    EXPECTED_SCHEMA_VERSION,
    PGM_MAX_DEPTH_CODE,
    PGM_NO_HIT_CODE,
    Aggregation,
    ObjectiveMode,
    Parametrization,
    SampleMode,
    SolverName,
)
from .errors import ConfigError, MeshFormatError


CONFIG_FILE_NAME = "config.ini"
VOXA_MAGIC = "VOXA"
VOXA_VERSION = "v1"

Vector3 = tuple[float, float, float]

BLOCK_DIMENSIONS = {
    Parametrization.FULL: 5,
    Parametrization.POSITION_LOOKAT: 3,
    Parametrization.PLANAR_LOOKAT: 2,
    Parametrization.LINE: 1,
}


# ---------------------------------------------------------------------------
# Typed configuration records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DynamicSpec:
    """One ``[Dynamic.<name>]`` section: a mesh and its per-step transforms."""

    name: str
    mesh: Path
    poses: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class SceneSettings:
    static_meshes: tuple[Path, ...]
    time_steps: int
    bounds_min: Vector3
    bounds_max: Vector3
    dynamic: tuple[DynamicSpec, ...] = ()


@dataclass(frozen=True)
class GridSettings:
    origin: Vector3
    cell_size: Vector3
    resolution: tuple[int, int, int]
    weight_file: Optional[Path] = None


@dataclass(frozen=True)
class IntrinsicsSettings:
    width: int = 320
    height: int = 240
    fov_degrees: float = DEFAULT_FOV_DEGREES
    near: float = DEFAULT_NEAR


@dataclass(frozen=True)
class CameraSettings:
    """One ``[Camera.<m>]`` block of the optimization domain.

    Angles are radians. ``target`` is required by the look-at
    parametrizations; line blocks use it when given and the fixed
    ``pan``/``tilt`` otherwise.
    """

    parametrization: Parametrization
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    target: Optional[Vector3] = None
    up: Optional[Vector3] = None
    mount_height: Optional[float] = None
    start: Optional[Vector3] = None
    end: Optional[Vector3] = None
    pan: float = 0.0
    tilt: float = 0.0


@dataclass(frozen=True)
class ObjectiveSettings:
    mode: ObjectiveMode
    threshold: int
    aggregation: Aggregation = Aggregation.SUM
    sample_mode: SampleMode = SampleMode.CENTER
    depth_slack: float = 0.0


@dataclass(frozen=True)
class SolverSettings:
    name: SolverName = SolverName.CORS_RBF
    budget: int = DEFAULT_BUDGET
    seed: int = 0
    initial_points: tuple[tuple[float, ...], ...] = ()
    manual_placement: Optional[tuple[float, ...]] = None
    scan_steps: tuple[int, ...] = (6,)
    scan_budget: int = 10_000


@dataclass(frozen=True)
class OutputSettings:
    directory: Path
    depth_scale: float = 0.001
    record_timings: bool = False
    export_workbook: bool = False
    export_voxels: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Typed representation of a complete ``config.ini`` experiment."""

    name: str
    schema_version: str
    scene: SceneSettings
    grid: GridSettings
    intrinsics: IntrinsicsSettings
    cameras: tuple[CameraSettings, ...]
    objective: ObjectiveSettings
    solver: SolverSettings
    output: OutputSettings
    source: Optional[Path] = field(default=None, compare=False)

    @property
    def dimension(self) -> int:
        return sum(BLOCK_DIMENSIONS[camera.parametrization] for camera in self.cameras)


@dataclass(frozen=True)
class ObjRecords:
    """Raw content of an OBJ file with zero-based, unchecked polygon indices."""

    vertices: list[tuple[float, float, float]]
    polygons: list[tuple[int, ...]]
    polygon_lines: list[int]


# ---------------------------------------------------------------------------
# Configuration discovery and parsing
# ---------------------------------------------------------------------------


def find_config_file(explicit_path: Optional[Path] = None) -> Path:
    """Locate the run configuration.

    An explicit path is returned unchanged. Otherwise the search walks up from
    the current working directory and returns the first ``config.ini`` found.

    Raises:
        FileNotFoundError: If no parent directory holds ``CONFIG_FILE_NAME``.
    """

    if explicit_path:
        log.debug("Using explicit config path '%s'", explicit_path)
        return Path(explicit_path)

    current = Path.cwd()
    for directory in (current, *current.parents):
        candidate = directory / CONFIG_FILE_NAME
        if candidate.exists():
            log.debug("Discovered config file at '%s'", candidate)
            return candidate

    log.error("Configuration file '%s' not found starting from '%s'", CONFIG_FILE_NAME, current)
    raise FileNotFoundError(f"Configuration file not found: {CONFIG_FILE_NAME}")


def read_config(config_path: Path) -> configparser.ConfigParser:
    """Load an INI file into a ``ConfigParser`` after checking it exists."""

    config_path = Path(config_path).expanduser().resolve()
    log.debug("Reading configuration file '%s'", config_path)
    if not config_path.exists():
        log.error("Configuration file not found at '%s'", config_path)
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    parser = configparser.ConfigParser()
    parser.read(config_path, encoding="utf-8")
    return parser


def _numbers(text: str) -> tuple[float, ...]:
    tokens = [token for token in re.split(r"[,\s]+", text.strip()) if token]
    try:
        return tuple(float(token) for token in tokens)
    except ValueError as exc:
        raise ConfigError(f"expected a list of numbers, got '{text}'") from exc


def _vector3(text: str, *, key: str) -> Vector3:
    values = _numbers(text)
    if len(values) != 3:
        raise ConfigError(f"{key} needs 3 numbers, got {len(values)}")
    return values  # type: ignore[return-value]


def _optional_vector3(section: configparser.SectionProxy, key: str) -> Optional[Vector3]:
    raw = section.get(key)
    return None if raw is None else _vector3(raw, key=f"[{section.name}] {key}")


def _resolve(raw: str, base_path: Path) -> Path:
    path = Path(raw.strip()).expanduser()
    if not path.is_absolute():
        path = base_path / path
    return path.resolve()


def _enum(enum_type, raw: str, *, key: str):
    try:
        return enum_type(raw.strip().lower())
    except ValueError as exc:
        allowed = ", ".join(member.value for member in enum_type)
        raise ConfigError(f"{key} must be one of {allowed}, got '{raw}'") from exc


def _suffix_sections(parser: configparser.ConfigParser, prefix: str) -> list[str]:
    return [name for name in parser.sections() if name.startswith(prefix + ".")]


def _parse_camera(section: configparser.SectionProxy) -> CameraSettings:
    label = f"[{section.name}]"
    parametrization = _enum(Parametrization, section["Parametrization"], key=f"{label} Parametrization")
    dimension = BLOCK_DIMENSIONS[parametrization]
    lower = _numbers(section["Lower"])
    upper = _numbers(section["Upper"])
    if len(lower) != dimension or len(upper) != dimension:
        raise ConfigError(
            f"{label}: {parametrization.value} blocks need {dimension} bounds, "
            f"got {len(lower)} lower and {len(upper)} upper"
        )
    if any(not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi) for lo, hi in zip(lower, upper)):
        raise ConfigError(f"{label}: bounds must be finite with Lower <= Upper")

    camera = CameraSettings(
        parametrization=parametrization,
        lower=lower,
        upper=upper,
        target=_optional_vector3(section, "Target"),
        up=_optional_vector3(section, "Up"),
        mount_height=section.getfloat("MountHeight"),
        start=_optional_vector3(section, "Start"),
        end=_optional_vector3(section, "End"),
        pan=section.getfloat("Pan", fallback=0.0),
        tilt=section.getfloat("Tilt", fallback=0.0),
    )
    if parametrization in (Parametrization.POSITION_LOOKAT, Parametrization.PLANAR_LOOKAT) and camera.target is None:
        raise ConfigError(f"{label}: {parametrization.value} blocks need a Target")
    if parametrization is Parametrization.PLANAR_LOOKAT and camera.mount_height is None:
        raise ConfigError(f"{label}: planar_lookat blocks need a MountHeight")
    if parametrization is Parametrization.LINE:
        if camera.start is None or camera.end is None:
            raise ConfigError(f"{label}: line blocks need Start and End")
        if camera.start == camera.end:
            raise ConfigError(f"{label}: line Start and End must differ")
    return camera


def parse_run_config(parser: configparser.ConfigParser, *, base_path: Optional[Path] = None) -> RunConfig:
    """Convert a ``ConfigParser`` into a validated :class:`RunConfig`.

    Relative paths are resolved against ``base_path`` (the directory holding
    the config file) or the current working directory.

    Raises:
        ConfigError: On missing entries, unknown enum values, bound or
            threshold violations, or a schema version mismatch.
        FileNotFoundError: If a referenced mesh or weight file is missing.
    """

    base_path = Path(base_path) if base_path is not None else Path.cwd()
    try:
        schema_version = parser.get("System", "SchemaVersion").strip()
        name = parser.get("System", "Name", fallback="camplan").strip()

        scene_section = parser["Scene"]
        static_meshes = tuple(
            _resolve(raw, base_path) for raw in scene_section.get("StaticMeshes", "").split(",") if raw.strip()
        )
        time_steps = scene_section.getint("TimeSteps", fallback=1)
        dynamic = []
        for section_name in _suffix_sections(parser, "Dynamic"):
            section = parser[section_name]
            poses = []
            for t in range(1, time_steps + 1):
                key = f"Pose{t}"
                if key not in section:
                    raise ConfigError(f"[{section_name}] is missing {key} for {time_steps} time steps")
                values = _numbers(section[key])
                if len(values) != 12:
                    raise ConfigError(f"[{section_name}] {key} needs 12 numbers (3x4 row-major)")
                poses.append(values)
            extra = [key for key in section if key.lower().startswith("pose") and key[4:].isdigit() and int(key[4:]) > time_steps]
            if extra:
                raise ConfigError(f"[{section_name}] has more poses than the {time_steps} time steps")
            dynamic.append(
                DynamicSpec(
                    name=section_name.split(".", 1)[1],
                    mesh=_resolve(section["Mesh"], base_path),
                    poses=tuple(poses),
                )
            )
        scene = SceneSettings(
            static_meshes=static_meshes,
            time_steps=time_steps,
            bounds_min=_vector3(scene_section["BoundsMin"], key="[Scene] BoundsMin"),
            bounds_max=_vector3(scene_section["BoundsMax"], key="[Scene] BoundsMax"),
            dynamic=tuple(dynamic),
        )

        grid_section = parser["Grid"]
        resolution = tuple(int(v) for v in _numbers(grid_section["Resolution"]))
        weight_raw = grid_section.get("WeightFile")
        grid = GridSettings(
            origin=_vector3(grid_section["Origin"], key="[Grid] Origin"),
            cell_size=_vector3(grid_section["CellSize"], key="[Grid] CellSize"),
            resolution=resolution,  # type: ignore[arg-type]
            weight_file=_resolve(weight_raw, base_path) if weight_raw else None,
        )

        intrinsics_section = parser["Intrinsics"] if parser.has_section("Intrinsics") else None
        intrinsics = IntrinsicsSettings(
            width=intrinsics_section.getint("Width", fallback=320) if intrinsics_section else 320,
            height=intrinsics_section.getint("Height", fallback=240) if intrinsics_section else 240,
            fov_degrees=intrinsics_section.getfloat("FieldOfView", fallback=DEFAULT_FOV_DEGREES)
            if intrinsics_section
            else DEFAULT_FOV_DEGREES,
            near=intrinsics_section.getfloat("Near", fallback=DEFAULT_NEAR) if intrinsics_section else DEFAULT_NEAR,
        )

        camera_names = sorted(
            _suffix_sections(parser, "Camera"),
            key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else s,
        )
        cameras = tuple(_parse_camera(parser[section_name]) for section_name in camera_names)

        objective_section = parser["Objective"]
        slack_raw = objective_section.get("DepthSlack", "0").strip().lower()
        if slack_raw == "half_diagonal":
            depth_slack = 0.5 * math.sqrt(sum(c * c for c in grid.cell_size))
        else:
            depth_slack = float(slack_raw)
        objective = ObjectiveSettings(
            mode=_enum(ObjectiveMode, objective_section["Mode"], key="[Objective] Mode"),
            threshold=int(objective_section["Threshold"]),
            aggregation=_enum(
                Aggregation, objective_section.get("Aggregation", Aggregation.SUM.value), key="[Objective] Aggregation"
            ),
            sample_mode=_enum(
                SampleMode, objective_section.get("SampleMode", SampleMode.CENTER.value), key="[Objective] SampleMode"
            ),
            depth_slack=depth_slack,
        )

        solver_section = parser["Solver"] if parser.has_section("Solver") else parser[parser.default_section]
        initial_raw = solver_section.get("InitialPoints", "")
        manual_raw = solver_section.get("ManualPlacement")
        solver = SolverSettings(
            name=_enum(SolverName, solver_section.get("Name", SolverName.CORS_RBF.value), key="[Solver] Name"),
            budget=solver_section.getint("Budget", fallback=DEFAULT_BUDGET),
            seed=solver_section.getint("Seed", fallback=0),
            initial_points=tuple(_numbers(chunk) for chunk in initial_raw.split(";") if chunk.strip()),
            manual_placement=_numbers(manual_raw) if manual_raw else None,
            scan_steps=tuple(int(v) for v in _numbers(solver_section.get("ScanSteps", "6"))),
            scan_budget=solver_section.getint("ScanBudget", fallback=10_000),
        )

        output_section = parser["Output"] if parser.has_section("Output") else parser[parser.default_section]
        output = OutputSettings(
            directory=_resolve(output_section.get("Directory", "out"), base_path),
            depth_scale=output_section.getfloat("DepthScale", fallback=0.001),
            record_timings=output_section.getboolean("RecordTimings", fallback=False),
            export_workbook=output_section.getboolean("ExportWorkbook", fallback=False),
            export_voxels=output_section.getboolean("ExportVoxels", fallback=True),
        )
    except (configparser.NoSectionError, configparser.NoOptionError, KeyError) as exc:
        log.error("Missing required configuration entry: %s", exc)
        raise ConfigError(f"Missing required configuration entry: {exc}") from exc

    config = RunConfig(
        name=name,
        schema_version=schema_version,
        scene=scene,
        grid=grid,
        intrinsics=intrinsics,
        cameras=cameras,
        objective=objective,
        solver=solver,
        output=output,
    )
    validate_run_config(config)
    log.debug("Parsed run config '%s' with %d camera block(s)", config.name, len(config.cameras))
    return config


def validate_run_config(config: RunConfig) -> None:
    """Enforce the cross-section rules of a run configuration.

    Raises:
        ConfigError: For any rule violation.
        FileNotFoundError: For missing mesh or weight files.
    """

    def fail(message: str) -> None:
        log.error("Invalid configuration: %s", message)
        raise ConfigError(message)

    if config.schema_version != EXPECTED_SCHEMA_VERSION:
        fail(f"schema mismatch: expected {EXPECTED_SCHEMA_VERSION}, found {config.schema_version}")
    if config.scene.time_steps < 1:
        fail("[Scene] TimeSteps must be at least 1")
    if not config.cameras:
        fail("at least one [Camera.<m>] block is required")
    count = len(config.cameras)
    if not 1 <= config.objective.threshold <= count:
        fail(f"[Objective] Threshold {config.objective.threshold} must lie in 1..{count} (M = {count})")
    if len(config.grid.resolution) != 3 or min(config.grid.resolution) < 1:
        fail("[Grid] Resolution needs three positive counts")
    if min(config.grid.cell_size) <= 0:
        fail("[Grid] CellSize must be positive")
    if config.objective.depth_slack < 0:
        fail("[Objective] DepthSlack must be non-negative")
    if config.solver.budget < 0:
        fail("[Solver] Budget must be non-negative")
    if config.intrinsics.width < 8 or config.intrinsics.height < 8:
        fail("[Intrinsics] Width and Height must be at least 8")

    dimension = config.dimension
    for point in config.solver.initial_points:
        if len(point) != dimension:
            fail(f"[Solver] InitialPoints entries need {dimension} values, got {len(point)}")
    if config.solver.manual_placement is not None and len(config.solver.manual_placement) != dimension:
        fail(f"[Solver] ManualPlacement needs {dimension} values")
    if len(config.solver.scan_steps) not in (1, dimension) or min(config.solver.scan_steps) < 1:
        fail(f"[Solver] ScanSteps needs 1 or {dimension} positive counts")

    for path in (*config.scene.static_meshes, *(spec.mesh for spec in config.scene.dynamic)):
        if not path.exists():
            log.error("Mesh file not found at '%s'", path)
            raise FileNotFoundError(f"Mesh file not found: {path}")
    if config.grid.weight_file is not None and not config.grid.weight_file.exists():
        log.error("Weight file not found at '%s'", config.grid.weight_file)
        raise FileNotFoundError(f"Weight file not found: {config.grid.weight_file}")


def load_run_config(config_path: Optional[Path] = None) -> RunConfig:
    """Find, read and parse a run configuration in one step."""

    located = Path(find_config_file(config_path)).expanduser().resolve()
    parser = read_config(located)
    config = parse_run_config(parser, base_path=located.parent)
    object.__setattr__(config, "source", located)
    log.info("Loaded run config '%s' from '%s'", config.name, located)
    return config


def _fmt(values: Iterable[float]) -> str:
    return ", ".join(repr(float(v)) for v in values)


def serialize_run_config(config: RunConfig) -> configparser.ConfigParser:
    """Build a ``ConfigParser`` that parses back into ``config``."""

    parser = configparser.ConfigParser()
    parser.optionxform = str  # type: ignore[assignment]
    parser["System"] = {"SchemaVersion": config.schema_version, "Name": config.name}
    parser["Scene"] = {
        "StaticMeshes": ", ".join(str(path) for path in config.scene.static_meshes),
        "TimeSteps": str(config.scene.time_steps),
        "BoundsMin": _fmt(config.scene.bounds_min),
        "BoundsMax": _fmt(config.scene.bounds_max),
    }
    for spec in config.scene.dynamic:
        section = {"Mesh": str(spec.mesh)}
        for t, pose in enumerate(spec.poses, start=1):
            section[f"Pose{t}"] = _fmt(pose)
        parser[f"Dynamic.{spec.name}"] = section
    grid = {
        "Origin": _fmt(config.grid.origin),
        "CellSize": _fmt(config.grid.cell_size),
        "Resolution": ", ".join(str(v) for v in config.grid.resolution),
    }
    if config.grid.weight_file is not None:
        grid["WeightFile"] = str(config.grid.weight_file)
    parser["Grid"] = grid
    parser["Intrinsics"] = {
        "Width": str(config.intrinsics.width),
        "Height": str(config.intrinsics.height),
        "FieldOfView": repr(float(config.intrinsics.fov_degrees)),
        "Near": repr(float(config.intrinsics.near)),
    }
    for index, camera in enumerate(config.cameras, start=1):
        section = {
            "Parametrization": camera.parametrization.value,
            "Lower": _fmt(camera.lower),
            "Upper": _fmt(camera.upper),
            "Pan": repr(float(camera.pan)),
            "Tilt": repr(float(camera.tilt)),
        }
        for key, value in (("Target", camera.target), ("Up", camera.up), ("Start", camera.start), ("End", camera.end)):
            if value is not None:
                section[key] = _fmt(value)
        if camera.mount_height is not None:
            section["MountHeight"] = repr(float(camera.mount_height))
        parser[f"Camera.{index}"] = section
    parser["Objective"] = {
        "Mode": config.objective.mode.value,
        "Threshold": str(config.objective.threshold),
        "Aggregation": config.objective.aggregation.value,
        "SampleMode": config.objective.sample_mode.value,
        "DepthSlack": repr(float(config.objective.depth_slack)),
    }
    solver = {
        "Name": config.solver.name.value,
        "Budget": str(config.solver.budget),
        "Seed": str(config.solver.seed),
        "ScanSteps": ", ".join(str(v) for v in config.solver.scan_steps),
        "ScanBudget": str(config.solver.scan_budget),
    }
    if config.solver.initial_points:
        solver["InitialPoints"] = "; ".join(_fmt(point) for point in config.solver.initial_points)
    if config.solver.manual_placement is not None:
        solver["ManualPlacement"] = _fmt(config.solver.manual_placement)
    parser["Solver"] = solver
    parser["Output"] = {
        "Directory": str(config.output.directory),
        "DepthScale": repr(float(config.output.depth_scale)),
        "RecordTimings": str(config.output.record_timings).lower(),
        "ExportWorkbook": str(config.output.export_workbook).lower(),
        "ExportVoxels": str(config.output.export_voxels).lower(),
    }
    return parser


def write_run_config(config: RunConfig, destination: Path) -> Path:
    """Persist ``config`` as an INI file with absolute paths."""

    destination = Path(destination).expanduser().resolve()
    destination.parent.mkdir(parents=True, exist_ok=True)
    with destination.open("w", encoding="utf-8") as handle:
        serialize_run_config(config).write(handle)
    log.debug("Wrote run config to '%s'", destination)
    return destination


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------


def _obj_index(token: str, vertex_count: int, line_number: int) -> int:
    head = token.split("/", 1)[0]
    try:
        index = int(head)
    except ValueError as exc:
        raise MeshFormatError(f"bad vertex reference '{token}'", line_number=line_number) from exc
    if index == 0:
        raise MeshFormatError("vertex index 0 is not valid in OBJ", line_number=line_number)
    # negative indices count back from the vertices read so far
    return index - 1 if index > 0 else vertex_count + index


def read_obj(path: Path) -> ObjRecords:
    """Parse the ``v``/``f`` records of an ASCII OBJ file.

    Other record types (normals, texture coordinates, groups, materials) are
    ignored.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        MeshFormatError: On malformed ``v`` or ``f`` records.
    """

    path = Path(path).expanduser()
    if not path.exists():
        log.error("OBJ file not found at '%s'", path)
        raise FileNotFoundError(f"OBJ file not found: {path}")

    vertices: list[tuple[float, float, float]] = []
    polygons: list[tuple[int, ...]] = []
    lines: list[int] = []
    with path.open("r", encoding="utf-8", errors="replace") as handle:
        for line_number, raw in enumerate(handle, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            keyword, *fields = text.split()
            if keyword == "v":
                if len(fields) not in (3, 4):
                    log.error("Malformed vertex in '%s' on line %d", path, line_number)
                    raise MeshFormatError(f"vertex needs 3 coordinates, got {len(fields)}", line_number=line_number)
                try:
                    coords = tuple(float(value) for value in fields[:3])
                except ValueError as exc:
                    raise MeshFormatError(f"bad vertex coordinate in '{text}'", line_number=line_number) from exc
                if not all(math.isfinite(value) for value in coords):
                    raise MeshFormatError("vertex coordinates must be finite", line_number=line_number)
                vertices.append(coords)  # type: ignore[arg-type]
            elif keyword == "f":
                if len(fields) < 3:
                    log.error("Malformed face in '%s' on line %d", path, line_number)
                    raise MeshFormatError(f"face needs at least 3 vertices, got {len(fields)}", line_number=line_number)
                polygons.append(tuple(_obj_index(token, len(vertices), line_number) for token in fields))
                lines.append(line_number)
    log.debug("Read %d vertices and %d polygons from '%s'", len(vertices), len(polygons), path)
    return ObjRecords(vertices=vertices, polygons=polygons, polygon_lines=lines)


def write_obj(path: Path, vertices: np.ndarray, faces: np.ndarray, *, name: Optional[str] = None) -> Path:
    """Write vertices and zero-based triangles as an OBJ file."""

    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        if name:
            handle.write(f"o {name}\n")
        for x, y, z in np.asarray(vertices, dtype=float).reshape(-1, 3):
            handle.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in np.asarray(faces, dtype=np.int64).reshape(-1, 3):
            handle.write(f"f {a + 1} {b + 1} {c + 1}\n")
    log.debug("Wrote OBJ '%s'", path)
    return path


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------


def depth_codes(values: np.ndarray, depth_scale: float) -> np.ndarray:
    """Quantize distances to 16-bit codes; ``inf`` maps to ``PGM_NO_HIT_CODE``."""

    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    codes = np.full(values.shape, PGM_NO_HIT_CODE, dtype=np.uint16)
    scaled = np.clip(np.round(values[finite] / depth_scale), 0, PGM_MAX_DEPTH_CODE)
    codes[finite] = scaled.astype(np.uint16)
    return codes


def write_depth_pgm(path: Path, values: np.ndarray, depth_scale: float) -> Path:
    """Write a depth image as a 16-bit big-endian binary PGM."""

    codes = depth_codes(values, depth_scale)
    height, width = codes.shape
    header = f"P5\n# depth_scale {depth_scale!r}\n{width} {height}\n{PGM_NO_HIT_CODE}\n".encode("ascii")
    return _write_bytes(path, header + codes.astype(">u2").tobytes())


def write_mask_pgm(path: Path, foreground: np.ndarray) -> Path:
    """Write a boolean mask as an 8-bit PGM (255 = foreground)."""

    mask = np.where(np.asarray(foreground, dtype=bool), 255, 0).astype(np.uint8)
    height, width = mask.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return _write_bytes(path, header + mask.tobytes())


def read_pgm(path: Path) -> tuple[np.ndarray, int, list[str]]:
    """Read a binary PGM.

    Returns:
        tuple: ``(pixels, maxval, comments)`` with pixels of shape
        ``(height, width)``.
    """

    data = Path(path).read_bytes()
    stream = io.BytesIO(data)
    tokens: list[bytes] = []
    comments: list[str] = []
    while len(tokens) < 4:
        line = stream.readline()
        if not line:
            raise ValueError(f"truncated PGM header in {path}")
        if line.startswith(b"#"):
            comments.append(line[1:].decode("ascii").strip())
            continue
        tokens.extend(line.split())
    if tokens[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else np.uint8
    pixels = np.frombuffer(stream.read(), dtype=dtype, count=width * height).reshape(height, width)
    return pixels.astype(np.uint16 if maxval > 255 else np.uint8), maxval, comments


# ---------------------------------------------------------------------------
# Voxel dumps
# ---------------------------------------------------------------------------


def write_voxa(
    path: Path,
    labels: np.ndarray,
    resolution: Sequence[int],
    origin: Sequence[float],
    cell_size: Sequence[float],
) -> Path:
    """Write one byte per voxel (x fastest) behind a ``VOXA v1`` header line."""

    labels = np.asarray(labels, dtype=np.uint8).ravel()
    header = " ".join(
        [
            VOXA_MAGIC,
            VOXA_VERSION,
            *(str(int(v)) for v in resolution),
            *(repr(float(v)) for v in origin),
            *(repr(float(v)) for v in cell_size),
        ]
    )
    return _write_bytes(path, header.encode("ascii") + b"\n" + labels.tobytes())


def read_voxa(path: Path) -> tuple[dict[str, tuple], np.ndarray]:
    """Read a ``VOXA v1`` dump back into its header and flat label array."""

    data = Path(path).read_bytes()
    newline = data.index(b"\n")
    fields = data[:newline].decode("ascii").split()
    if fields[:2] != [VOXA_MAGIC, VOXA_VERSION] or len(fields) != 11:
        raise ValueError(f"{path} is not a VOXA v1 dump")
    resolution = tuple(int(v) for v in fields[2:5])
    header = {
        "resolution": resolution,
        "origin": tuple(float(v) for v in fields[5:8]),
        "cell_size": tuple(float(v) for v in fields[8:11]),
    }
    labels = np.frombuffer(data[newline + 1:], dtype=np.uint8)
    expected = int(np.prod(resolution))
    if labels.size != expected:
        raise ValueError(f"{path} holds {labels.size} voxels, header says {expected}")
    return header, labels.copy()


def load_weights(path: Path, expected_count: int) -> np.ndarray:
    """Load a flat per-voxel weight field from a ``.npy`` file."""

    weights = np.load(Path(path), allow_pickle=False).astype(float).ravel()
    if weights.size != expected_count:
        log.error("Weight file '%s' has %d entries, grid has %d voxels", path, weights.size, expected_count)
        raise ConfigError(f"weight file {path} has {weights.size} entries, the grid has {expected_count} voxels")
    return weights


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def scan_header(dimension: int) -> list[str]:
    return [*(f"x_{i}" for i in range(1, dimension + 1)), "value", "millis"]


def trace_header(dimension: int) -> list[str]:
    return ["iter", "evals", "value", "best_value", "millis", *(f"x_{i}" for i in range(1, dimension + 1))]


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]], *, footer: Optional[str] = None) -> Path:
    """Write a CSV table with ``repr`` float formatting and LF line endings."""

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    if footer:
        buffer.write(f"# {footer}\n")
    return _write_bytes(path, buffer.getvalue().encode("utf-8"))


def write_poses(path: Path, cameras: Sequence[dict[str, Sequence[float]]]) -> Path:
    """Write camera poses as an INI file with one ``[Camera.<m>]`` per pose."""

    parser = configparser.ConfigParser()
    parser.optionxform = str  # type: ignore[assignment]
    for index, camera in enumerate(cameras, start=1):
        parser[f"Camera.{index}"] = {key: _fmt(values) for key, values in camera.items()}
    buffer = io.StringIO()
    parser.write(buffer)
    return _write_bytes(path, buffer.getvalue().encode("utf-8"))


def export_workbook(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]], *, title: str) -> Path:
    """Write a table to an ``.xlsx`` workbook with a bold header row."""

    workbook = openpyxl.Workbook()
    sheet = workbook.active
    sheet.title = title[:31]
    sheet.append(list(header))
    for cell in sheet[1]:
        cell.font = Font(bold=True)
    for row in rows:
        sheet.append([float(v) if isinstance(v, np.floating) else v for v in row])
    destination = Path(path).expanduser().resolve()
    destination.parent.mkdir(parents=True, exist_ok=True)
    workbook.save(destination)
    log.debug("Saved workbook '%s'", destination)
    return destination


def _write_bytes(path: Path, payload: bytes) -> Path:
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    log.debug("Wrote %d bytes to '%s'", len(payload), path)
    return path
