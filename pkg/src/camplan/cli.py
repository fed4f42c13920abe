"""Command-line entry points for camplan.

All orchestration in this module is limited to argparse wiring, translating
command-line arguments into calls on the simulation and solver layers, and
handing results to the data layer for export. Keeping the CLI thin lets tests
and scripts drive exactly the same parser configuration.
"""

from __future__ import annotations

import argparse
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, Mapping, MutableMapping, Optional, Sequence

import numpy as np

from . import data_manager, log, objective, solvers
from .constants import ObjectiveMode
from .errors import CamplanError, ConfigError, DomainError, SceneError, BudgetExceededError
from .geometry import assemble_scene
from .render import render_depth, segment


FORMAT_REFERENCE = """\
camplan file formats

config.ini (INI, schema 1.0.0)
  [System]     SchemaVersion, Name
  [Scene]      StaticMeshes (comma list of .obj), TimeSteps, BoundsMin, BoundsMax
  [Dynamic.N]  Mesh, Pose1..PoseT (12 numbers: 3x4 row-major rigid transform)
  [Grid]       Origin, CellSize, Resolution, WeightFile (optional .npy)
  [Intrinsics] Width, Height, FieldOfView (degrees, horizontal), Near
  [Camera.M]   Parametrization = full | position_lookat | planar_lookat | line,
               Lower, Upper, Target, Up (optional), MountHeight, Start, End, Pan, Tilt (radians)
  [Objective]  Mode = max_coverage | min_hull_error, Threshold, Aggregation = sum | max,
               SampleMode = center | corners, DepthSlack (metres or half_diagonal)
  [Solver]     Name = nelder_mead | pattern_search | cors_rbf, Budget, Seed,
               InitialPoints (';'-separated vectors), ManualPlacement, ScanSteps, ScanBudget
  [Output]     Directory, DepthScale, RecordTimings, ExportWorkbook, ExportVoxels

Depth image (.pgm)
  Binary P5, 16-bit big-endian, maxval 65535, comment "# depth_scale S".
  code = round(distance / S) clamped to 0..65534; 65535 = no hit.

Segmented image (.pgm)
  Binary P5, 8-bit, 255 = foreground (dynamic content), 0 = background.

Voxel dump (.voxa)
  ASCII line "VOXA v1 vx vy vz ox oy oz cx cy cz" then vx*vy*vz bytes, x fastest.
  Coverage fields: 0 undetectable, 1 detectable.
  Hull fields: 0 outside, 1 occluded, 2 changed, 3 identical.
  Views: 1 = member at the configured threshold.

Scan table (.csv)
  x_1..x_n,value,millis then "# argmax=(...) max=..." for coverage, or
  "# argmin=(...) min=..." for hull errors; rows hold the objective as evaluated.

Solver trace (.csv)
  iter,evals,value,best_value,millis,x_1..x_n (maximization convention:
  hull errors appear negated).

Best poses (.ini)
  One [Camera.M] section per camera with Position, Quaternion (x, y, z, w),
  PanTilt (radians) and Vector (the block's variables).
"""


@dataclass
class CliSession:
    """Run configuration plus command-line overrides for one invocation."""

    config: data_manager.RunConfig
    out: Path
    workers: int = 1
    _context: Optional[objective.SimulationContext] = field(default=None, repr=False)

    @property
    def context(self) -> objective.SimulationContext:
        if self._context is None:
            self._context = objective.build_context(self.config, workers=self.workers)
        return self._context


@dataclass(frozen=True)
class CommandSpec:
    """Describe how a CLI sub-command is configured and executed."""

    name: str
    help_text: str
    register: Callable[[argparse._SubParsersAction[argparse.ArgumentParser]], argparse.ArgumentParser]
    execute: Callable[[Optional[CliSession], argparse.Namespace], int]
    needs_config: bool = True


def build_parser() -> argparse.ArgumentParser:
    """Construct the top-level CLI argument parser."""
    parser = argparse.ArgumentParser(
        prog="camplan",
        description="Simulate multi-camera visibility and optimize camera placement.",
    )
    parser.add_argument("--config", type=Path, default=None, help="Path to config.ini (searched upwards by default).")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (overrides [Output] Directory).")
    parser.add_argument("--seed", type=int, default=None, help="Solver seed (overrides [Solver] Seed).")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="Worker threads; 0 picks the CPU count. Affects speed only, never output.",
    )
    return parser


def configure_subcommands(parser: argparse.ArgumentParser) -> Mapping[str, CommandSpec]:
    """Wire all CLI sub-commands onto the supplied parser."""
    subparsers = parser.add_subparsers(dest="command", required=True, title="commands")
    simulation_specs = register_simulation_commands(subparsers)
    optimization_specs = register_optimization_commands(subparsers)
    return build_command_table([*simulation_specs.values(), *optimization_specs.values()])


def register_simulation_commands(
    subparsers: argparse._SubParsersAction[argparse.ArgumentParser],
) -> Dict[str, CommandSpec]:
    """Declare commands that simulate one configuration."""
    specs = {
        "render": register_render_command(subparsers),
        "evaluate": register_evaluate_command(subparsers),
        "formats": register_formats_command(subparsers),
    }
    for spec in specs.values():
        spec.register(subparsers)
    return specs


def register_optimization_commands(
    subparsers: argparse._SubParsersAction[argparse.ArgumentParser],
) -> Dict[str, CommandSpec]:
    """Declare commands that search the placement domain."""
    specs = {
        "scan": register_scan_command(subparsers),
        "optimize": register_optimize_command(subparsers),
    }
    for spec in specs.values():
        spec.register(subparsers)
    return specs


def _add_vector_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--x", dest="x", default=None, help="Variable vector as comma/space separated numbers.")
    group.add_argument("--x-file", dest="x_file", type=Path, default=None, help="Text file holding the vector.")


def register_render_command(
    subparsers: argparse._SubParsersAction[argparse.ArgumentParser],
) -> CommandSpec:
    """Register the parser and executor for ``render``."""
    name = "render"
    help_text = "Write static, dynamic and segmented images of one camera."

    def registrar(action: argparse._SubParsersAction[argparse.ArgumentParser]) -> argparse.ArgumentParser:
        parser = action.add_parser(name, help=help_text)
        parser.add_argument("--camera", type=int, default=1, help="One-based camera index.")
        parser.add_argument("--t", dest="t", type=int, default=1, help="One-based time step.")
        _add_vector_arguments(parser)
        parser.set_defaults(command=name)
        return parser

    return CommandSpec(name=name, help_text=help_text, register=registrar, execute=run_render)


def register_evaluate_command(
    subparsers: argparse._SubParsersAction[argparse.ArgumentParser],
) -> CommandSpec:
    """Register the parser and executor for ``evaluate``."""
    name = "evaluate"
    help_text = "Print the objective value of a variable vector and dump its voxel fields."

    def registrar(action: argparse._SubParsersAction[argparse.ArgumentParser]) -> argparse.ArgumentParser:
        parser = action.add_parser(name, help=help_text)
        _add_vector_arguments(parser)
        parser.set_defaults(command=name)
        return parser

    return CommandSpec(name=name, help_text=help_text, register=registrar, execute=run_evaluate)


def register_scan_command(
    subparsers: argparse._SubParsersAction[argparse.ArgumentParser],
) -> CommandSpec:
    """Register the parser and executor for ``scan``."""
    name = "scan"
    help_text = "Evaluate the objective on the configured lattice."

    def registrar(action: argparse._SubParsersAction[argparse.ArgumentParser]) -> argparse.ArgumentParser:
        parser = action.add_parser(name, help=help_text)
        parser.add_argument("--steps", default=None, help="Points per scalar (overrides [Solver] ScanSteps).")
        parser.set_defaults(command=name)
        return parser

    return CommandSpec(name=name, help_text=help_text, register=registrar, execute=run_scan)


def register_optimize_command(
    subparsers: argparse._SubParsersAction[argparse.ArgumentParser],
) -> CommandSpec:
    """Register the parser and executor for ``optimize``."""
    name = "optimize"
    help_text = "Run the configured solver and export its trace and best placement."

    def registrar(action: argparse._SubParsersAction[argparse.ArgumentParser]) -> argparse.ArgumentParser:
        parser = action.add_parser(name, help=help_text)
        parser.add_argument("--budget", type=int, default=None, help="True evaluations (overrides [Solver] Budget).")
        parser.add_argument("--group", default=None, help="Start from initial point group I, II, III or IV.")
        parser.set_defaults(command=name)
        return parser

    return CommandSpec(name=name, help_text=help_text, register=registrar, execute=run_optimize)


def register_formats_command(
    subparsers: argparse._SubParsersAction[argparse.ArgumentParser],
) -> CommandSpec:
    """Register the parser and executor for ``formats``."""
    name = "formats"
    help_text = "Print the file-format reference."

    def registrar(action: argparse._SubParsersAction[argparse.ArgumentParser]) -> argparse.ArgumentParser:
        parser = action.add_parser(name, help=help_text)
        parser.set_defaults(command=name)
        return parser

    return CommandSpec(name=name, help_text=help_text, register=registrar, execute=run_formats, needs_config=False)


def resolve_threads(requested: int) -> int:
    if requested < 0:
        raise ValueError("--threads must be non-negative")
    return requested or (os.cpu_count() or 1)


def load_session(args: argparse.Namespace) -> CliSession:
    """Load the run configuration and apply command-line overrides."""
    config = data_manager.load_run_config(getattr(args, "config", None))
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = replace(config, solver=replace(config.solver, seed=seed))
    out = getattr(args, "out", None)
    directory = Path(out).expanduser().resolve() if out is not None else config.output.directory
    return CliSession(config=config, out=directory, workers=resolve_threads(getattr(args, "threads", 1)))


def dispatch_command(
    session: Optional[CliSession],
    args: argparse.Namespace,
    command_table: Mapping[str, CommandSpec],
) -> int:
    """Dispatch the parsed arguments to the configured executor."""
    if not hasattr(args, "command") or args.command is None:
        raise KeyError("No command specified")
    spec = command_table.get(args.command)
    if spec is None:
        raise KeyError(f"Unknown command: {args.command}")
    return spec.execute(session, args)


def build_command_table(specs: Iterable[CommandSpec]) -> MutableMapping[str, CommandSpec]:
    """Build an index of command specifications keyed by command name."""
    table: Dict[str, CommandSpec] = {}
    for spec in specs:
        if spec.name in table:
            raise ValueError(f"Duplicate command name: {spec.name}")
        table[spec.name] = spec
    return table


# ---------------------------------------------------------------------------
# Translation
# ---------------------------------------------------------------------------


def parse_vector(text: str) -> tuple[float, ...]:
    tokens = [token for token in re.split(r"[\s,;]+", text.strip()) if token]
    try:
        return tuple(float(token) for token in tokens)
    except ValueError as error:
        raise DomainError(f"variable vector is not numeric: {text.strip()!r}") from error


def translate_vector(session: CliSession, args: argparse.Namespace) -> tuple[float, ...]:
    """Variable vector from ``--x``/``--x-file``, else the configured placements.

    Falls back to ``ManualPlacement``, then the first initial point, then the
    domain center.
    """
    if getattr(args, "x", None) is not None:
        return parse_vector(args.x)
    if getattr(args, "x_file", None) is not None:
        path = Path(args.x_file)
        if not path.exists():
            raise FileNotFoundError(f"Vector file not found: {path}")
        return parse_vector(path.read_text(encoding="utf-8"))
    solver = session.config.solver
    if solver.manual_placement is not None:
        return solver.manual_placement
    if solver.initial_points:
        return solver.initial_points[0]
    domain = session.context.domain
    return tuple(float(v) for v in 0.5 * (domain.lower + domain.upper))


def translate_steps(session: CliSession, args: argparse.Namespace) -> tuple[int, ...]:
    raw = getattr(args, "steps", None)
    if raw is None:
        return session.config.solver.scan_steps
    return tuple(int(v) for v in parse_vector(raw))


def translate_starts(session: CliSession, args: argparse.Namespace) -> list[tuple[float, ...]]:
    group = getattr(args, "group", None)
    if group is not None:
        return solvers.initial_point_group(group, session.context.domain.bounds)
    return list(session.config.solver.initial_points)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _dump_simulation(session: CliSession, simulation: objective.Simulation, suffix: str) -> list[Path]:
    grid = session.context.grid
    written = []
    for index, field_ in enumerate(simulation.fields, start=1):
        written.append(
            data_manager.write_voxa(
                session.out / f"field_cam{index}{suffix}.voxa", field_.labels, grid.resolution, grid.origin, grid.cell_size
            )
        )
    members = simulation.view.members().astype(np.uint8)
    written.append(
        data_manager.write_voxa(session.out / f"view{suffix}.voxa", members, grid.resolution, grid.origin, grid.cell_size)
    )
    return written


def _dump_placement(session: CliSession, x: Sequence[float]) -> list[Path]:
    context = session.context
    if not session.config.output.export_voxels:
        return []
    if context.spec.mode is ObjectiveMode.MAX_COVERAGE:
        return _dump_simulation(session, objective.simulate(context, x, 1), "")
    written = []
    for t in range(1, context.env.time_steps + 1):
        written.extend(_dump_simulation(session, objective.simulate(context, x, t), f"_t{t}"))
    return written


def run_render(session: Optional[CliSession], args: argparse.Namespace) -> int:
    """Render one camera at one time step and write its images."""
    assert session is not None
    context = session.context
    index = int(args.camera)
    if not 1 <= index <= context.domain.cameras:
        raise ConfigError(f"camera index {index} outside 1..{context.domain.cameras}")
    t = int(args.t)
    if not 1 <= t <= context.env.time_steps:
        raise SceneError(f"time step {t} outside 1..{context.env.time_steps}")
    pose = objective.poses_from_vector(context.domain, translate_vector(session, args))[index - 1]
    static = objective.static_depth(context, pose)
    dynamic = render_depth(pose, context.intrinsics, assemble_scene(context.env, t, include_dynamic=True))
    scale = session.config.output.depth_scale
    static.save(session.out / f"static_cam{index}.pgm", scale)
    dynamic.save(session.out / f"dynamic_cam{index}_t{t}.pgm", scale)
    segment(static, dynamic).save(session.out / f"segmented_cam{index}_t{t}.pgm")
    print(f"Wrote {static.width}x{static.height} images for camera {index} at t={t} to {session.out}")
    return 0


def run_evaluate(session: Optional[CliSession], args: argparse.Namespace) -> int:
    """Evaluate one variable vector, print the value and dump voxel fields."""
    assert session is not None
    context = session.context
    x = translate_vector(session, args)
    value = objective.evaluate(context, x)
    if context.spec.mode is ObjectiveMode.MIN_HULL_ERROR:
        for line in objective.threshold_readings(context.spec, context.domain.cameras):
            print(line)
    print(f"value = {value!r}")
    written = _dump_placement(session, x)
    log.info("Evaluated %s: value=%r (%d voxel dump(s))", list(x), value, len(written))
    return 0


def run_scan(session: Optional[CliSession], args: argparse.Namespace) -> int:
    """Evaluate the lattice and write the scan table."""
    assert session is not None
    context = session.context
    config = session.config
    table = objective.grid_scan(
        context,
        translate_steps(session, args),
        budget=config.solver.scan_budget,
        record_timings=config.output.record_timings,
    )
    header = data_manager.scan_header(context.domain.dimension)
    rows = [[*row.x, row.value, row.millis] for row in table.rows]
    point = ", ".join(repr(v) for v in table.argmax)
    if context.spec.mode is ObjectiveMode.MIN_HULL_ERROR:
        footer = f"argmin=({point}) min={0.0 - table.max!r}"
    else:
        footer = f"argmax=({point}) max={table.max!r}"
    path = data_manager.write_csv(session.out / "scan.csv", header, rows, footer=footer)
    if config.output.export_workbook:
        data_manager.export_workbook(session.out / "scan.xlsx", header, rows, title="scan")
    print(f"Scanned {len(rows)} point(s); {footer}; table at {path}")
    return 0


def run_optimize(session: Optional[CliSession], args: argparse.Namespace) -> int:
    """Run the configured solver, then export trace, best poses and voxel dumps."""
    assert session is not None
    context = session.context
    config = session.config
    budget = config.solver.budget if getattr(args, "budget", None) is None else int(args.budget)
    f = objective.solver_objective(context)
    trace = solvers.run_solver(
        config.solver.name,
        f,
        translate_starts(session, args),
        context.domain.bounds,
        budget,
        seed=config.solver.seed,
        record_timings=config.output.record_timings,
    )
    header = data_manager.trace_header(context.domain.dimension)
    rows = trace.rows()
    data_manager.write_csv(session.out / "trace.csv", header, rows)
    if config.output.export_workbook:
        data_manager.export_workbook(session.out / "trace.xlsx", header, rows, title="trace")
    if trace.best is None:
        print("No evaluations were made.")
        return 0

    best_x = trace.best.x
    poses = objective.poses_from_vector(context.domain, best_x)
    offset = 0
    cameras = []
    for block, pose in zip(context.domain.blocks, poses):
        cameras.append(
            {
                "Position": pose.position,
                "Quaternion": pose.quaternion,
                "PanTilt": pose.pan_tilt,
                "Vector": best_x[offset:offset + block.dimension],
            }
        )
        offset += block.dimension
    data_manager.write_poses(session.out / "best_poses.ini", cameras)
    _dump_placement(session, best_x)

    best_value = trace.best_value * f.sign
    print(f"{trace.solver}: {trace.evaluations} evaluation(s), best value {best_value!r} at {list(best_x)}")
    if config.solver.manual_placement is not None:
        manual = objective.evaluate(context, config.solver.manual_placement)
        print(f"manual placement value {manual!r}")
    return 0


def run_formats(session: Optional[CliSession], args: argparse.Namespace) -> int:
    """Print the file-format reference."""
    print(FORMAT_REFERENCE, end="")
    return 0


def handle_cli_error(error: Exception) -> int:
    """Convert raised exceptions into user-friendly exit codes."""
    if isinstance(error, (ConfigError, DomainError, SceneError, BudgetExceededError, ValueError)):
        log.error("%s", error)
        return 2
    if isinstance(error, FileNotFoundError):
        log.error("%s", error)
        return 3
    if isinstance(error, CamplanError):
        log.error("%s", error)
        return 1
    log.exception("Unexpected failure: %s", error)
    return 1


def main(argv: Sequence[str] | None = None) -> int:
    """CLI entry point that orchestrates parsing and execution."""
    parser = build_parser()
    command_table = configure_subcommands(parser)
    args = parser.parse_args(argv)
    try:
        spec = command_table[args.command]
        session = load_session(args) if spec.needs_config else None
        return dispatch_command(session, args, command_table)
    except Exception as error:  # pragma: no cover - centralised error handler tested separately
        return handle_cli_error(error)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
