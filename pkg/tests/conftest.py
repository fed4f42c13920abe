"""Shared pytest fixtures and utilities for the camplan test suite."""

from __future__ import annotations

import argparse
import math
import sys
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
import pytest

# Ensure source packages are importable without installation.
PROJECT_ROOT = Path(__file__).resolve().parents[1]
SRC_DIR = PROJECT_ROOT / "src"

for candidate in (SRC_DIR, PROJECT_ROOT):
    candidate_str = str(candidate)
    if candidate_str not in sys.path:
        sys.path.insert(0, candidate_str)

from camplan import cli, constants, geometry, objective  # noqa: E402
from camplan.camera import CameraIntrinsics  # noqa: E402
from camplan.voxelspace import VoxelGrid  # noqa: E402
from setup_presets import create_preset  # noqa: E402

DEFAULT_SCHEMA_VERSION = constants.EXPECTED_SCHEMA_VERSION
_CONFIG_TEMPLATE = (
    "[System]\n"
    "SchemaVersion = {schema_version}\n"
    "Name = {name}\n\n"
    "[Scene]\n"
    "StaticMeshes = {static_mesh}\n"
    "TimeSteps = 2\n"
    "BoundsMin = -5, -5, 0\n"
    "BoundsMax = 5, 5, 4\n\n"
    "[Dynamic.cube]\n"
    "Mesh = {dynamic_mesh}\n"
    "Pose1 = 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0\n"
    "Pose2 = 1, 0, 0, -1, 0, 1, 0, 0, 0, 0, 1, 0\n\n"
    "[Grid]\n"
    "Origin = -4, -4, 0\n"
    "CellSize = 1, 1, 1\n"
    "Resolution = 8, 8, 3\n\n"
    "[Intrinsics]\n"
    "Width = 16\n"
    "Height = 12\n"
    "FieldOfView = 90\n\n"
    "[Camera.1]\n"
    "Parametrization = position_lookat\n"
    "Lower = -4, -4, 3.5\n"
    "Upper = 4, 4, 3.5\n"
    "Target = 0, 0, 0\n"
    "Up = 0, 1, 0\n\n"
    "[Camera.2]\n"
    "Parametrization = position_lookat\n"
    "Lower = -4, -4, 3.5\n"
    "Upper = 4, 4, 3.5\n"
    "Target = 0, 0, 0\n"
    "Up = 0, 1, 0\n\n"
    "[Objective]\n"
    "Mode = {mode}\n"
    "Threshold = {threshold}\n\n"
    "[Solver]\n"
    "Name = {solver}\n"
    "Budget = {budget}\n"
    "Seed = 0\n"
    "InitialPoints = -3, -3, 3.5, 3, 3, 3.5\n"
    "ScanSteps = {scan_steps}\n"
    "ScanBudget = {scan_budget}\n\n"
    "[Output]\n"
    "Directory = out\n"
)


@dataclass(frozen=True)
class ConfigBundle:
    """Container bundling together config metadata for tests."""

    directory: Path
    config_path: Path
    out_dir: Path
    mode: str
    threshold: int


@pytest.fixture(scope="session", autouse=True)
def _restore_sys_path() -> Iterator[None]:
    """Ensure sys.path modifications are undone after the test session."""

    original = sys.path.copy()
    try:
        yield
    finally:
        sys.path[:] = original


@pytest.fixture(scope="session")
def project_root() -> Path:
    """Return the repository root path."""

    return PROJECT_ROOT


@pytest.fixture(scope="session")
def src_dir() -> Path:
    """Return the ``src`` directory containing the package under test."""

    return SRC_DIR


# ---------------------------------------------------------------------------
# Scene fixtures
# ---------------------------------------------------------------------------


def translation(dx: float, dy: float, dz: float) -> np.ndarray:
    """Return a 3x4 rigid transform that only translates."""

    pose = np.zeros((3, 4))
    pose[:, :3] = np.eye(3)
    pose[:, 3] = (dx, dy, dz)
    return pose


def make_environment(
    static: Sequence[geometry.TriangleMesh] = (),
    dynamic: Sequence[geometry.DynamicObject] = (),
    *,
    lower: Sequence[float] = (-10.0, -10.0, -10.0),
    upper: Sequence[float] = (10.0, 10.0, 10.0),
    time_steps: int = 1,
) -> geometry.Environment:
    """Build an environment with generous default bounds."""

    return geometry.Environment(
        static_meshes=tuple(static),
        dynamic_objects=tuple(dynamic),
        bounds_min=np.array(lower, dtype=float),
        bounds_max=np.array(upper, dtype=float),
        time_steps=time_steps,
    )


@pytest.fixture
def intrinsics() -> CameraIntrinsics:
    """Small 90 degree camera used by most simulation tests."""

    return CameraIntrinsics(n_x=32, n_y=24, fov=math.radians(90.0))


@pytest.fixture
def empty_environment() -> geometry.Environment:
    """Environment without any geometry."""

    return make_environment()


@pytest.fixture
def wall_environment() -> geometry.Environment:
    """Wall in the plane x = 0 with a doorway around y = 0."""

    wall = geometry.wall_with_door_mesh(0.0, (-6.0, 6.0), 4.0, (-1.0, 1.0, 3.0), name="wall")
    return make_environment([wall], lower=(-10.0, -10.0, 0.0), upper=(10.0, 10.0, 10.0))


@pytest.fixture
def dynamic_box_environment() -> geometry.Environment:
    """A floating dynamic box that moves by +1 in x between two time steps."""

    cube = geometry.box_mesh([-0.5, -0.5, 0.5], [0.5, 0.5, 1.5], name="cube")
    mover = geometry.DynamicObject(mesh=cube, poses=np.stack([translation(0, 0, 0), translation(1, 0, 0)]))
    return make_environment(dynamic=[mover], lower=(-5.0, -5.0, 0.0), upper=(5.0, 5.0, 5.0), time_steps=2)


@pytest.fixture
def grid_factory() -> Callable[..., VoxelGrid]:
    """Factory for regular voxel grids."""

    def _create_grid(
        origin: Sequence[float] = (-2.0, -2.0, 0.0),
        cell: float = 0.5,
        resolution: Sequence[int] = (8, 8, 4),
        weights: Optional[np.ndarray] = None,
    ) -> VoxelGrid:
        return VoxelGrid(np.array(origin, dtype=float), np.full(3, cell), tuple(resolution), weights)

    return _create_grid


@pytest.fixture
def overhead_block() -> objective.VariableBlock:
    """Position-only block looking down at the origin from a ceiling."""

    return objective.VariableBlock(
        parametrization=constants.Parametrization.POSITION_LOOKAT,
        lower=(-3.0, -3.0, 4.0),
        upper=(3.0, 3.0, 4.0),
        target=(0.0, 0.0, 0.0),
        up=(0.0, 1.0, 0.0),
    )


@pytest.fixture
def context_factory(intrinsics: CameraIntrinsics, grid_factory) -> Callable[..., objective.SimulationContext]:
    """Factory that wires an environment, grid and blocks into a context."""

    def _create_context(
        env: geometry.Environment,
        blocks: Sequence[objective.VariableBlock],
        *,
        mode: constants.ObjectiveMode = constants.ObjectiveMode.MAX_COVERAGE,
        threshold: int = 1,
        grid: Optional[VoxelGrid] = None,
        camera: Optional[CameraIntrinsics] = None,
        **spec_options,
    ) -> objective.SimulationContext:
        spec = objective.ObjectiveSpec(mode=mode, threshold=threshold, **spec_options)
        return objective.SimulationContext(
            env=env,
            grid=grid if grid is not None else grid_factory(),
            intrinsics=camera if camera is not None else intrinsics,
            domain=objective.Domain(tuple(blocks)),
            spec=spec,
        )

    return _create_context


# ---------------------------------------------------------------------------
# Config and preset fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def mesh_factory(tmp_path: Path) -> Callable[..., Path]:
    """Factory writing a primitive mesh to an OBJ file in a temp folder."""

    def _write_mesh(mesh: geometry.TriangleMesh, *, subdir: str | None = None, filename: str | None = None) -> Path:
        base_dir = tmp_path if subdir is None else tmp_path / subdir
        base_dir.mkdir(parents=True, exist_ok=True)
        return geometry.write_obj(mesh, base_dir / (filename or f"{mesh.name}.obj"))

    return _write_mesh


@pytest.fixture
def config_factory(tmp_path: Path, mesh_factory: Callable[..., Path]) -> Callable[..., ConfigBundle]:
    """Provide a callable that writes small, fast run configurations."""

    def _create_config(
        *,
        mode: str = "max_coverage",
        threshold: int = 1,
        solver: str = "pattern_search",
        budget: int = 6,
        scan_steps: str = "2, 2, 1, 1, 1, 1",
        scan_budget: int = 100,
        make_relative: bool = True,
        schema_version: str = DEFAULT_SCHEMA_VERSION,
        extra: str = "",
    ) -> ConfigBundle:
        bundle_dir = tmp_path / f"bundle_{uuid.uuid4().hex}"
        bundle_dir.mkdir(parents=True, exist_ok=True)
        static_path = mesh_factory(
            geometry.box_mesh([1.0, 1.0, 0.0], [2.0, 2.0, 1.0], name="obstacle"), subdir=bundle_dir.name
        )
        dynamic_path = mesh_factory(
            geometry.box_mesh([-0.5, -0.5, 0.0], [0.5, 0.5, 1.0], name="cube"), subdir=bundle_dir.name
        )
        config_path = bundle_dir / "config.ini"
        config_path.write_text(
            _CONFIG_TEMPLATE.format(
                schema_version=schema_version,
                name="test-run",
                static_mesh=static_path.name if make_relative else str(static_path),
                dynamic_mesh=dynamic_path.name if make_relative else str(dynamic_path),
                mode=mode,
                threshold=threshold,
                solver=solver,
                budget=budget,
                scan_steps=scan_steps,
                scan_budget=scan_budget,
            )
            + extra,
            encoding="utf-8",
        )
        return ConfigBundle(
            directory=bundle_dir,
            config_path=config_path,
            out_dir=bundle_dir / "out",
            mode=mode,
            threshold=threshold,
        )

    return _create_config


@pytest.fixture
def config_file(config_factory: Callable[..., ConfigBundle]) -> Path:
    """Convenience fixture returning only the config path."""

    return config_factory().config_path


@pytest.fixture
def preset_factory(tmp_path: Path) -> Callable[[str], Path]:
    """Write a shipped preset into a fresh directory and return its config."""

    def _create(name: str) -> Path:
        return create_preset(name, tmp_path / name)

    return _create


# ---------------------------------------------------------------------------
# CLI layer fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def cli_parser() -> argparse.ArgumentParser:
    """Return a fresh CLI parser instance for tests."""

    return argparse.ArgumentParser(prog="camplan", description="camplan")


@pytest.fixture
def subparsers_action(
    cli_parser: argparse.ArgumentParser,
) -> argparse._SubParsersAction[argparse.ArgumentParser]:
    """Return the subparser action used to register commands."""

    return cli_parser.add_subparsers(dest="command")


@pytest.fixture
def command_table_entry() -> tuple[str, cli.CommandSpec]:
    """Provide a placeholder command table entry for dispatch tests."""

    def execute(session, args: argparse.Namespace) -> int:
        execute.__dict__["called"] = True
        return 0

    def register(
        subparsers: argparse._SubParsersAction[argparse.ArgumentParser],
    ) -> argparse.ArgumentParser:
        return subparsers.add_parser("noop")

    spec = cli.CommandSpec(
        name="noop",
        help_text="help",
        register=register,
        execute=execute,
    )
    return "noop", spec


@pytest.fixture
def command_spec_iterable() -> list[cli.CommandSpec]:
    """Provide a list of command specs for indexing tests."""

    def _make_spec(name: str) -> cli.CommandSpec:
        return cli.CommandSpec(
            name,
            f"{name} help",
            lambda subparsers: subparsers.add_parser(name),
            lambda *_: 0,
        )

    return [_make_spec("alpha"), _make_spec("beta"), _make_spec("gamma")]
