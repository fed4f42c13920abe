"""Unit tests documenting the camplan data access layer contract."""

from __future__ import annotations

import configparser
import math
from pathlib import Path

import numpy as np
import openpyxl
import pytest

from camplan import constants, data_manager
from camplan.errors import ConfigError, MeshFormatError


def _parser(config_path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.read(config_path, encoding="utf-8")
    return parser


# ---------------------------------------------------------------------------
# Configuration discovery
# ---------------------------------------------------------------------------


def test_find_config_file_respects_explicit_path(config_file: Path):
    """Supplying an explicit path should be treated as the winning answer."""

    result = data_manager.find_config_file(config_file)
    assert result == config_file


def test_find_config_file_discovers_in_parent_directory(tmp_path, monkeypatch):
    """Auto-discovery should walk up from the working directory."""

    config_file = tmp_path / "config.ini"
    config_file.write_text("[System]\nSchemaVersion = 1.0.0\n", encoding="utf-8")
    nested = tmp_path / "runs" / "today"
    nested.mkdir(parents=True)
    monkeypatch.chdir(nested)

    assert data_manager.find_config_file() == config_file


def test_find_config_file_raises_when_missing(tmp_path, monkeypatch):
    """Absent configuration should surface a clear FileNotFoundError."""

    monkeypatch.chdir(tmp_path)
    with pytest.raises(FileNotFoundError):
        data_manager.find_config_file()


def test_read_config_missing_file_raises(tmp_path):
    """Missing files should propagate a FileNotFoundError."""

    with pytest.raises(FileNotFoundError):
        data_manager.read_config(tmp_path / "not_there.ini")


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------


def test_load_run_config_builds_typed_records(config_factory):
    """A complete file should parse into typed, path-resolved records."""

    bundle = config_factory()
    config = data_manager.load_run_config(bundle.config_path)

    assert config.name == "test-run"
    assert config.source == bundle.config_path.resolve()
    assert config.dimension == 6
    assert config.scene.time_steps == 2
    assert config.scene.static_meshes == ((bundle.directory / "obstacle.obj").resolve(),)
    (cube,) = config.scene.dynamic
    assert cube.name == "cube"
    assert len(cube.poses) == 2 and all(len(pose) == 12 for pose in cube.poses)
    assert cube.poses[1][3] == -1.0
    assert config.grid.resolution == (8, 8, 3)
    assert config.intrinsics.width == 16 and config.intrinsics.height == 12
    assert config.intrinsics.near == pytest.approx(constants.DEFAULT_NEAR)
    assert [camera.parametrization for camera in config.cameras] == [constants.Parametrization.POSITION_LOOKAT] * 2
    assert config.cameras[0].up == (0.0, 1.0, 0.0)
    assert config.objective.mode is constants.ObjectiveMode.MAX_COVERAGE
    assert config.objective.aggregation is constants.Aggregation.SUM
    assert config.objective.sample_mode is constants.SampleMode.CENTER
    assert config.solver.name is constants.SolverName.PATTERN_SEARCH
    assert config.solver.initial_points == ((-3.0, -3.0, 3.5, 3.0, 3.0, 3.5),)
    assert config.solver.scan_steps == (2, 2, 1, 1, 1, 1)
    assert config.output.directory == bundle.out_dir.resolve()
    assert config.output.export_voxels is True


def test_parse_run_config_accepts_absolute_mesh_paths(config_factory):
    """Absolute mesh paths are kept as they are."""

    bundle = config_factory(make_relative=False)
    config = data_manager.load_run_config(bundle.config_path)
    assert config.scene.static_meshes[0].is_absolute()


@pytest.mark.parametrize("threshold", [0, 3])
def test_threshold_outside_camera_count_is_rejected(config_factory, threshold):
    """The threshold must lie between 1 and the number of cameras."""

    bundle = config_factory(threshold=threshold)
    with pytest.raises(ConfigError, match="Threshold"):
        data_manager.load_run_config(bundle.config_path)


def test_schema_mismatch_is_rejected(config_factory):
    """A different schema version should stop the run."""

    bundle = config_factory(schema_version="0.9.0")
    with pytest.raises(ConfigError, match="schema mismatch"):
        data_manager.load_run_config(bundle.config_path)


def test_unknown_enum_value_lists_allowed_values(config_factory):
    """Enum errors should tell the user which spellings are accepted."""

    bundle = config_factory(mode="fastest")
    with pytest.raises(ConfigError, match="max_coverage, min_hull_error"):
        data_manager.load_run_config(bundle.config_path)


def test_enum_values_are_case_insensitive(config_factory):
    """Mode names may be written in any case."""

    bundle = config_factory(mode="MIN_HULL_ERROR")
    config = data_manager.load_run_config(bundle.config_path)
    assert config.objective.mode is constants.ObjectiveMode.MIN_HULL_ERROR


def test_missing_mesh_file_raises(config_factory):
    """Referenced meshes must exist."""

    bundle = config_factory()
    (bundle.directory / "obstacle.obj").unlink()
    with pytest.raises(FileNotFoundError):
        data_manager.load_run_config(bundle.config_path)


def test_missing_section_is_a_config_error(config_factory):
    """Required sections surface as ConfigError rather than KeyError."""

    bundle = config_factory()
    parser = _parser(bundle.config_path)
    parser.remove_section("Grid")
    with pytest.raises(ConfigError, match="Missing required configuration entry"):
        data_manager.parse_run_config(parser, base_path=bundle.directory)


@pytest.mark.parametrize(
    "section, key, value, message",
    [
        ("Dynamic.cube", "Pose2", None, "missing Pose2"),
        ("Dynamic.cube", "Pose3", "1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0", "more poses"),
        ("Dynamic.cube", "Pose1", "1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1", "12 numbers"),
        ("Camera.1", "Lower", "-4, -4", "need 3 bounds"),
        ("Camera.1", "Upper", "-5, 4, 3.5", "Lower <= Upper"),
        ("Camera.2", "Target", None, "need a Target"),
        ("Grid", "CellSize", "1, 0, 1", "CellSize"),
        ("Grid", "Origin", "1, 2", "3 numbers"),
        ("Objective", "DepthSlack", "-0.1", "DepthSlack"),
        ("Solver", "InitialPoints", "1, 2, 3", "need 6 values"),
        ("Solver", "ScanSteps", "2, 2, 2", "ScanSteps"),
        ("Solver", "ManualPlacement", "0, 0", "ManualPlacement"),
        ("Solver", "Budget", "-1", "Budget"),
        ("Intrinsics", "Width", "4", "at least 8"),
        ("Scene", "BoundsMin", "a, b, c", "list of numbers"),
    ],
)
def test_invalid_entries_are_rejected(config_factory, section, key, value, message):
    """Each schema rule reports a ConfigError naming the offending entry."""

    bundle = config_factory()
    parser = _parser(bundle.config_path)
    if value is None:
        parser.remove_option(section, key)
    else:
        parser.set(section, key, value)
    with pytest.raises(ConfigError, match=message):
        data_manager.parse_run_config(parser, base_path=bundle.directory)


def test_planar_and_line_blocks_need_their_anchors(config_factory):
    """planar_lookat needs a MountHeight and line blocks need distinct ends."""

    bundle = config_factory()
    parser = _parser(bundle.config_path)
    parser.set("Camera.1", "Parametrization", "planar_lookat")
    parser.set("Camera.1", "Lower", "-4, -4")
    parser.set("Camera.1", "Upper", "4, 4")
    with pytest.raises(ConfigError, match="MountHeight"):
        data_manager.parse_run_config(parser, base_path=bundle.directory)

    parser = _parser(bundle.config_path)
    parser.set("Camera.1", "Parametrization", "line")
    parser.set("Camera.1", "Lower", "0")
    parser.set("Camera.1", "Upper", "1")
    parser.set("Camera.1", "Start", "0, 0, 3")
    parser.set("Camera.1", "End", "0, 0, 3")
    with pytest.raises(ConfigError, match="must differ"):
        data_manager.parse_run_config(parser, base_path=bundle.directory)


def test_half_diagonal_depth_slack(config_factory):
    """DepthSlack = half_diagonal resolves to half the voxel diagonal."""

    bundle = config_factory()
    parser = _parser(bundle.config_path)
    parser.set("Objective", "DepthSlack", "half_diagonal")
    config = data_manager.parse_run_config(parser, base_path=bundle.directory)
    assert config.objective.depth_slack == pytest.approx(math.sqrt(3.0) / 2.0)


def test_cameras_are_ordered_numerically(config_factory):
    """Camera.10 sorts after Camera.2."""

    bundle = config_factory()
    parser = _parser(bundle.config_path)
    parser["Camera.10"] = dict(parser["Camera.1"])
    parser.set("Camera.10", "Parametrization", "full")
    parser.set("Camera.10", "Lower", "0, 0, 3, 0, -1")
    parser.set("Camera.10", "Upper", "1, 1, 3, 6, 0")
    parser.set("Solver", "InitialPoints", "-3, -3, 3.5, 3, 3, 3.5, 0, 0, 3, 0, 0")
    parser.set("Solver", "ScanSteps", "1")
    config = data_manager.parse_run_config(parser, base_path=bundle.directory)
    assert [camera.parametrization.value for camera in config.cameras] == ["position_lookat", "position_lookat", "full"]
    assert config.dimension == 11


def test_serialized_config_parses_back_unchanged(config_factory, tmp_path):
    """serialize_run_config output should round-trip to an equal RunConfig."""

    bundle = config_factory(mode="min_hull_error", threshold=2)
    config = data_manager.load_run_config(bundle.config_path)

    again = data_manager.parse_run_config(data_manager.serialize_run_config(config), base_path=tmp_path)
    assert again == config

    written = data_manager.write_run_config(config, tmp_path / "copy" / "config.ini")
    assert data_manager.load_run_config(written) == config


# ---------------------------------------------------------------------------
# OBJ records
# ---------------------------------------------------------------------------


def test_read_obj_ignores_other_records(tmp_path):
    """Normals, texture coordinates and comments do not disturb v/f parsing."""

    path = tmp_path / "tri.obj"
    path.write_text(
        "# a triangle\n"
        "o tri\n"
        "v 0 0 0\n"
        "v 1 0 0 1.0\n"
        "vn 0 0 1\n"
        "vt 0 0\n"
        "v 0 1 0  # trailing comment\n"
        "f 1/1/1 2/2/1 -1\n",
        encoding="utf-8",
    )
    records = data_manager.read_obj(path)
    assert records.vertices == [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
    assert records.polygons == [(0, 1, 2)]
    assert records.polygon_lines == [8]


@pytest.mark.parametrize(
    "body, line_number",
    [
        ("v 0 0\n", 1),
        ("v 0 0 0\nv 1 0 nan\n", 2),
        ("v 0 0 0\nv 1 0 0\nf 1 2\n", 3),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", 4),
        ("v 0 0 0\nf 1 x 1\n", 2),
    ],
)
def test_read_obj_reports_malformed_lines(tmp_path, body, line_number):
    """Malformed records raise MeshFormatError carrying their line number."""

    path = tmp_path / "bad.obj"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(MeshFormatError) as excinfo:
        data_manager.read_obj(path)
    assert excinfo.value.line_number == line_number
    assert str(excinfo.value).startswith(f"line {line_number}:")


def test_read_obj_missing_file(tmp_path):
    """Missing OBJ files raise FileNotFoundError."""

    with pytest.raises(FileNotFoundError):
        data_manager.read_obj(tmp_path / "nowhere.obj")


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------


def test_depth_codes_quantize_and_clamp():
    """Codes are round(distance / scale), clamped below the NO_HIT code."""

    codes = data_manager.depth_codes(np.array([np.inf, 0.0, 1.0, 0.0004, 70.0]), 0.001)
    assert codes.dtype == np.uint16
    assert codes.tolist() == [65535, 0, 1000, 0, 65534]


def test_depth_pgm_is_big_endian(tmp_path):
    """The 16-bit payload follows the header in big-endian byte order."""

    path = data_manager.write_depth_pgm(tmp_path / "d.pgm", np.array([[0.258]]), 0.001)
    data = path.read_bytes()
    assert data.startswith(b"P5\n# depth_scale 0.001\n1 1\n65535\n")
    assert data.endswith(bytes([0x01, 0x02]))


def test_read_pgm_rejects_other_formats(tmp_path):
    """Only binary PGMs can be read back."""

    ascii_pgm = tmp_path / "ascii.pgm"
    ascii_pgm.write_bytes(b"P2\n1 1\n255\n7\n")
    with pytest.raises(ValueError, match="not a binary PGM"):
        data_manager.read_pgm(ascii_pgm)

    truncated = tmp_path / "short.pgm"
    truncated.write_bytes(b"P5\n4 ")
    with pytest.raises(ValueError, match="truncated"):
        data_manager.read_pgm(truncated)


# ---------------------------------------------------------------------------
# Voxel dumps and weights
# ---------------------------------------------------------------------------


def test_voxa_header_and_payload(tmp_path):
    """VOXA dumps hold an ASCII header line followed by one byte per voxel."""

    labels = np.array([0, 1, 2, 3, 1, 0], dtype=np.uint8)
    path = data_manager.write_voxa(tmp_path / "f.voxa", labels, (3, 2, 1), (0.0, -1.0, 0.5), (0.25, 0.25, 0.25))
    first_line = path.read_bytes().split(b"\n", 1)[0].decode("ascii")
    assert first_line == "VOXA v1 3 2 1 0.0 -1.0 0.5 0.25 0.25 0.25"

    header, read_back = data_manager.read_voxa(path)
    assert header == {"resolution": (3, 2, 1), "origin": (0.0, -1.0, 0.5), "cell_size": (0.25, 0.25, 0.25)}
    assert read_back.tolist() == [0, 1, 2, 3, 1, 0]


def test_read_voxa_rejects_bad_dumps(tmp_path):
    """Wrong magic and a payload of the wrong size are refused."""

    wrong_magic = tmp_path / "magic.voxa"
    wrong_magic.write_bytes(b"VOXB v1 1 1 1 0 0 0 1 1 1\n\x00")
    with pytest.raises(ValueError, match="not a VOXA"):
        data_manager.read_voxa(wrong_magic)

    short = tmp_path / "short.voxa"
    short.write_bytes(b"VOXA v1 2 1 1 0 0 0 1 1 1\n\x00")
    with pytest.raises(ValueError, match="header says 2"):
        data_manager.read_voxa(short)


def test_load_weights_checks_voxel_count(tmp_path):
    """Weight files must hold one entry per voxel."""

    path = tmp_path / "w.npy"
    np.save(path, np.arange(6, dtype=np.int32).reshape(2, 3))
    np.testing.assert_array_equal(data_manager.load_weights(path, 6), np.arange(6, dtype=float))
    with pytest.raises(ConfigError, match="6 entries"):
        data_manager.load_weights(path, 8)


# ---------------------------------------------------------------------------
# Tables and workbooks
# ---------------------------------------------------------------------------


def test_table_headers():
    """Scan and trace tables name their columns consistently."""

    assert data_manager.scan_header(2) == ["x_1", "x_2", "value", "millis"]
    assert data_manager.trace_header(1) == ["iter", "evals", "value", "best_value", "millis", "x_1"]


def test_write_csv_uses_repr_floats_and_footer(tmp_path):
    """Floats keep full precision, other cells stay as written, footers are comments."""

    path = data_manager.write_csv(
        tmp_path / "t.csv",
        ["a", "b", "c"],
        [[0.1, 2, np.float64(1 / 3)]],
        footer="argmax=(0.1) max=2",
    )
    assert path.read_text(encoding="utf-8") == "a,b,c\n0.1,2,0.3333333333333333\n# argmax=(0.1) max=2\n"


def test_write_poses_one_section_per_camera(tmp_path):
    """Best poses are written as [Camera.M] sections of comma-separated numbers."""

    path = data_manager.write_poses(
        tmp_path / "poses.ini",
        [
            {"Position": (1.0, 2.0, 3.0), "Vector": (0.5,)},
            {"Position": np.array([0.0, 0.0, 4.0]), "Vector": (1.5,)},
        ],
    )
    parser = configparser.ConfigParser()
    parser.optionxform = str  # type: ignore[assignment]
    parser.read(path, encoding="utf-8")
    assert parser.sections() == ["Camera.1", "Camera.2"]
    assert parser["Camera.1"]["Position"] == "1.0, 2.0, 3.0"
    assert parser["Camera.2"]["Vector"] == "1.5"


def test_export_workbook_writes_bold_header(tmp_path):
    """export_workbook should produce an openpyxl workbook with a bold header row."""

    path = data_manager.export_workbook(
        tmp_path / "nested" / "trace.xlsx",
        ["iter", "value"],
        [[1, np.float64(0.25)], [2, 0.5]],
        title="a title that is far too long for a worksheet",
    )
    workbook = openpyxl.load_workbook(path)
    sheet = workbook.active
    assert sheet.title == "a title that is far too long fo"
    assert [cell.value for cell in sheet[1]] == ["iter", "value"]
    assert all(cell.font.bold for cell in sheet[1])
    assert list(sheet.iter_rows(min_row=2, values_only=True)) == [(1, 0.25), (2, 0.5)]
