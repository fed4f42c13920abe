"""Domain constants shared across the camplan layers.

Enumerations and numeric sentinels live here so the data, simulation and
presentation layers agree on labels, modes and file-format codes.
"""

from __future__ import annotations

import math
from enum import Enum, IntEnum


# Central schema version expected in ``[System] SchemaVersion``.
EXPECTED_SCHEMA_VERSION = "1.0.0"

# Depth value of a pixel that sees no face.
NO_HIT = math.inf

# Segmentation value for pixels showing dynamic content in front of empty space.
FOREGROUND_SENTINEL = -1e30

# Faces with a smaller area (m^2) are dropped at load time.
DEGENERATE_AREA = 1e-12

# Exclusion radius ratios of the surrogate search, cycled per iteration.
BETA_CYCLE = (0.98, 0.6, 0.75, 0.2, 0.01)

DEFAULT_FOV_DEGREES = 90.0
DEFAULT_NEAR = 0.05
DEFAULT_BUDGET = 200

# 16-bit PGM code for NO_HIT; finite depths clamp to [0, PGM_MAX_DEPTH_CODE].
PGM_NO_HIT_CODE = 65535
PGM_MAX_DEPTH_CODE = 65534


class ObjectiveMode(str, Enum):
    """Enumerate the two placement objectives."""

    MAX_COVERAGE = "max_coverage"
    MIN_HULL_ERROR = "min_hull_error"


class Aggregation(str, Enum):
    """Enumerate how per-time-step values are folded into one number."""

    SUM = "sum"
    MAX = "max"


class Parametrization(str, Enum):
    """Enumerate how a camera block maps optimization variables to a pose."""

    FULL = "full"
    POSITION_LOOKAT = "position_lookat"
    PLANAR_LOOKAT = "planar_lookat"
    LINE = "line"


class SolverName(str, Enum):
    """Enumerate the available optimizers."""

    NELDER_MEAD = "nelder_mead"
    PATTERN_SEARCH = "pattern_search"
    CORS_RBF = "cors_rbf"


class SampleMode(str, Enum):
    """Enumerate the voxel sampling strategies used during coloring."""

    CENTER = "center"
    CORNERS = "corners"


class CoverageLabel(IntEnum):
    """Byte codes of coverage-mode attribute fields."""

    UNDETECTABLE = 0
    DETECTABLE = 1


class HullLabel(IntEnum):
    """Byte codes of hull-mode attribute fields."""

    OUTSIDE = 0
    OCCLUDED = 1
    CHANGED = 2
    IDENTICAL = 3


__all__ = [
    "EXPECTED_SCHEMA_VERSION",
    "NO_HIT",
    "FOREGROUND_SENTINEL",
    "DEGENERATE_AREA",
    "BETA_CYCLE",
    "DEFAULT_FOV_DEGREES",
    "DEFAULT_NEAR",
    "DEFAULT_BUDGET",
    "PGM_NO_HIT_CODE",
    "PGM_MAX_DEPTH_CODE",
    "ObjectiveMode",
    "Aggregation",
    "Parametrization",
    "SolverName",
    "SampleMode",
    "CoverageLabel",
    "HullLabel",
]
