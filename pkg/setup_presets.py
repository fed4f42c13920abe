"""Utility for writing the shipped camplan presets.

The module doubles as a script (``python setup_presets.py ceiling-5cam out/``)
and as a library used by tests. Each preset is a directory holding its OBJ
meshes and a ``config.ini`` that references them by relative path.

Presets:
    wall-door-scan      one camera sliding past a wall with a doorway
    line-3cam           three cameras on a line in a pillared hall
    ceiling-5cam        five ceiling cameras watching a walking person
                        (160x120 images, 60x68x20 voxels)
    ceiling-5cam-full   the same cell at 320x240 and 120x135x40
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Mapping, Sequence

try:
    from camplan import geometry
except ImportError:  # pragma: no cover - running from a source checkout
    sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))
    from camplan import geometry

from camplan.constants import EXPECTED_SCHEMA_VERSION


CONFIG_FILE = "config.ini"


@dataclass(frozen=True)
class Preset:
    """Meshes plus INI sections of one preset."""

    name: str
    meshes: Mapping[str, geometry.TriangleMesh]
    sections: Mapping[str, Mapping[str, str]] = field(default_factory=dict)


def _vec(values: Sequence[float]) -> str:
    return ", ".join(repr(float(v)) for v in values)


def _translation(x: float, y: float, z: float) -> str:
    return _vec([1, 0, 0, x, 0, 1, 0, y, 0, 0, 1, z])


def wall_door_scan() -> Preset:
    """One camera slides past a wall; only the doorway lets it see the far side."""

    wall = geometry.wall_with_door_mesh(0.0, (-4.0, 4.0), 2.5, (-0.5, 0.5, 2.0), name="wall")
    return Preset(
        name="wall-door-scan",
        meshes={"wall.obj": wall},
        sections={
            "Scene": {"StaticMeshes": "wall.obj", "TimeSteps": "1", "BoundsMin": _vec([-5, -5, 0]), "BoundsMax": _vec([5, 5, 3])},
            "Grid": {"Origin": _vec([0.1, -4.8, 0.0]), "CellSize": _vec([0.2, 0.2, 0.2]), "Resolution": "24, 48, 12"},
            "Intrinsics": {"Width": "160", "Height": "120", "FieldOfView": "60.0", "Near": "0.05"},
            "Camera.1": {
                "Parametrization": "line",
                "Start": _vec([-4.0, -4.5, 1.5]),
                "End": _vec([-4.0, 4.5, 1.5]),
                "Lower": "0.0",
                "Upper": "9.0",
                "Pan": "0.0",
                "Tilt": "0.0",
            },
            "Objective": {"Mode": "max_coverage", "Threshold": "1"},
            "Solver": {"Name": "pattern_search", "Budget": "60", "InitialPoints": "4.5", "ScanSteps": "37"},
        },
    )


def line_3cam() -> Preset:
    """Three cameras on one line above a hall with pillars; k = 2 coverage."""

    pillars = [
        geometry.box_mesh([x - 2.0, -8.0, 0.0], [x + 2.0, -4.0, 15.0], name=f"pillar{k}")
        for k, x in enumerate((-20.0, 0.0, 20.0), start=1)
    ]
    block = geometry.box_mesh([-10.0, 8.0, 0.0], [10.0, 12.0, 6.0], name="block")
    hall = geometry.merge_meshes([*pillars, block], name="hall")
    camera = {
        "Parametrization": "line",
        "Start": _vec([0.0, -28.0, 20.0]),
        "End": _vec([1.0, -28.0, 20.0]),
        "Lower": "-45.0",
        "Upper": "45.0",
        "Target": _vec([0.0, 5.0, 3.0]),
    }
    return Preset(
        name="line-3cam",
        meshes={"hall.obj": hall},
        sections={
            "Scene": {"StaticMeshes": "hall.obj", "TimeSteps": "1", "BoundsMin": _vec([-50, -30, 0]), "BoundsMax": _vec([50, 30, 30])},
            "Grid": {"Origin": _vec([-40.0, -10.0, 0.0]), "CellSize": _vec([2.0, 2.0, 2.0]), "Resolution": "40, 15, 6"},
            "Intrinsics": {"Width": "160", "Height": "120", "FieldOfView": "60.0", "Near": "0.05"},
            "Camera.1": dict(camera),
            "Camera.2": dict(camera),
            "Camera.3": dict(camera),
            "Objective": {"Mode": "max_coverage", "Threshold": "2"},
            "Solver": {
                "Name": "cors_rbf",
                "Budget": "120",
                # vertices of the ordered simplex -45 <= a1 <= a2 <= a3 <= 45
                "InitialPoints": "-45, -45, -45; -45, -45, 45; -45, 45, 45; 45, 45, 45",
                "ScanSteps": "6",
            },
        },
    )


CEILING_HEIGHT = 26.5
CEILING_TARGET = (0.0, 0.0, 10.0)
WALK = ((-15.0, 10.0, 0.0), (-5.0, 12.0, 0.0), (5.0, 10.0, 0.0))


def _ceiling_5cam(full_scale: bool) -> Preset:
    table = geometry.box_mesh([-10.0, -6.0, 0.0], [10.0, 6.0, 8.0], name="table")
    pedestal = geometry.cylinder_mesh((0.0, -15.0, 0.0), 3.0, 12.0, name="pedestal")
    shelf = geometry.box_mesh([25.0, -30.0, 0.0], [33.0, 30.0, 20.0], name="shelf")
    cell = geometry.merge_meshes([table, pedestal, shelf], name="cell")
    person = geometry.humanoid_mesh((0.0, 0.0, 0.0), 18.0, name="person")

    camera = {
        "Parametrization": "position_lookat",
        "Lower": _vec([-35.0, -40.0, CEILING_HEIGHT]),
        "Upper": _vec([35.0, 40.0, CEILING_HEIGHT]),
        "Target": _vec(CEILING_TARGET),
        "Up": _vec([0.0, 1.0, 0.0]),
    }
    start = [(5.0, 5.0), (-5.0, 5.0), (5.0, -5.0), (-5.0, -5.0), (0.0, 1.0)]
    manual = [(-35.0, -40.0), (35.0, -40.0), (-35.0, 40.0), (35.0, 40.0), (-5.0, 11.0)]
    if full_scale:
        grid = {"Origin": _vec([-36.0, -40.5, 0.0]), "CellSize": _vec([0.6, 0.6, 0.6]), "Resolution": "120, 135, 40"}
        intrinsics = {"Width": "320", "Height": "240", "FieldOfView": "90.0", "Near": "0.05"}
    else:
        grid = {"Origin": _vec([-36.0, -40.8, 0.0]), "CellSize": _vec([1.2, 1.2, 1.2]), "Resolution": "60, 68, 20"}
        intrinsics = {"Width": "160", "Height": "120", "FieldOfView": "90.0", "Near": "0.05"}

    sections: Dict[str, Mapping[str, str]] = {
        "Scene": {"StaticMeshes": "cell.obj", "TimeSteps": str(len(WALK)), "BoundsMin": _vec([-40, -45, 0]), "BoundsMax": _vec([40, 45, 30])},
        "Dynamic.person": {"Mesh": "person.obj", **{f"Pose{t}": _translation(*p) for t, p in enumerate(WALK, start=1)}},
        "Grid": grid,
        "Intrinsics": intrinsics,
    }
    for index in range(1, 6):
        sections[f"Camera.{index}"] = dict(camera)
    sections["Objective"] = {"Mode": "min_hull_error", "Threshold": "5", "Aggregation": "sum", "SampleMode": "corners"}
    sections["Solver"] = {
        "Name": "cors_rbf",
        "Budget": "100",
        "InitialPoints": _vec([v for x, y in start for v in (x, y, CEILING_HEIGHT)]),
        "ManualPlacement": _vec([v for x, y in manual for v in (x, y, CEILING_HEIGHT)]),
        "ScanSteps": "1",
    }
    return Preset(
        name="ceiling-5cam-full" if full_scale else "ceiling-5cam",
        meshes={"cell.obj": cell, "person.obj": person},
        sections=sections,
    )


def ceiling_5cam() -> Preset:
    return _ceiling_5cam(full_scale=False)


def ceiling_5cam_full() -> Preset:
    return _ceiling_5cam(full_scale=True)


PRESETS: Mapping[str, Callable[[], Preset]] = {
    "wall-door-scan": wall_door_scan,
    "line-3cam": line_3cam,
    "ceiling-5cam": ceiling_5cam,
    "ceiling-5cam-full": ceiling_5cam_full,
}


def create_preset(name: str, directory: Path, *, overwrite: bool = False) -> Path:
    """Write preset ``name`` into ``directory`` and return its ``config.ini``.

    When ``overwrite`` is ``False`` (the default) this function raises
    ``FileExistsError`` if the config already exists.
    """

    if name not in PRESETS:
        raise KeyError(f"Unknown preset '{name}' (choose from {', '.join(PRESETS)})")
    directory = Path(directory).expanduser().resolve()
    config_path = directory / CONFIG_FILE
    if config_path.exists() and not overwrite:
        raise FileExistsError(f"Refusing to overwrite existing preset config: {config_path}")
    directory.mkdir(parents=True, exist_ok=True)

    preset = PRESETS[name]()
    for file_name, mesh in preset.meshes.items():
        geometry.write_obj(mesh, directory / file_name)

    parser = configparser.ConfigParser()
    parser.optionxform = str  # type: ignore[assignment]
    parser["System"] = {"SchemaVersion": EXPECTED_SCHEMA_VERSION, "Name": preset.name}
    for section, values in preset.sections.items():
        parser[section] = dict(values)
    parser["Output"] = {"Directory": "out", "DepthScale": "0.001", "RecordTimings": "false", "ExportWorkbook": "false"}
    with config_path.open("w", encoding="utf-8") as handle:
        parser.write(handle)
    return config_path


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse CLI arguments for the setup script."""

    parser = argparse.ArgumentParser(description="Write a camplan preset directory")
    parser.add_argument("preset", choices=sorted(PRESETS), help="Preset to write.")
    parser.add_argument("directory", type=Path, help="Target directory.")
    parser.add_argument("--force", action="store_true", help="Overwrite an existing preset config.")
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point for the CLI script."""

    args = parse_args(argv)
    print("--- camplan preset setup ---")
    try:
        config_path = create_preset(args.preset, args.directory, overwrite=args.force)
    except FileExistsError as exc:
        print(f"\n[ERROR] {exc}")
        print("Run with --force to overwrite the existing preset if appropriate.")
        return 1
    except (PermissionError, OSError) as exc:
        print(f"\n[ERROR] Unable to write preset: {exc}")
        return 1

    print(f"\n[SUCCESS] Wrote preset '{args.preset}' to '{config_path.parent}'.")
    return 0


if __name__ == "__main__":  # pragma: no cover - exercised via manual runs
    sys.exit(main())
