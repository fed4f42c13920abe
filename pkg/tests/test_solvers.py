"""Unit tests for the local solvers, the RBF surrogate and CORS-RBF."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from camplan import data_manager, solvers
from camplan.errors import ConfigError, SingularSystemError


UNIT_SQUARE = np.array([[-1.0, 1.0], [-1.0, 1.0]])


def bowl(x):
    """Smooth concave test function peaking at (0.3, -0.2)."""

    return -((x[0] - 0.3) ** 2) - 2.0 * (x[1] + 0.2) ** 2


def _within(records, bounds):
    points = np.array([record.x for record in records])
    return np.all(points >= bounds[:, 0]) and np.all(points <= bounds[:, 1])


# ---------------------------------------------------------------------------
# Local solvers
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("solver", [solvers.nelder_mead, solvers.pattern_search])
def test_local_solver_finds_interior_peak(solver):
    """Both local methods climb a smooth bowl to its peak."""

    trace = solver(bowl, [-0.8, 0.7], UNIT_SQUARE, 150)
    assert trace.evaluations <= 150
    assert trace.records[0].x == (-0.8, 0.7)
    np.testing.assert_allclose(trace.best_x, [0.3, -0.2], atol=1e-2)
    assert _within(trace.records, UNIT_SQUARE)


@pytest.mark.parametrize("solver", [solvers.nelder_mead, solvers.pattern_search])
def test_local_solver_reaches_boundary_peak(solver):
    """A linear objective is maximized at the box corner without leaving the box."""

    trace = solver(lambda x: x[0] + x[1], [0.0, 0.0], UNIT_SQUARE, 120)
    assert trace.best_value == pytest.approx(2.0, abs=1e-3)
    assert _within(trace.records, UNIT_SQUARE)


@pytest.mark.parametrize("solver", [solvers.nelder_mead, solvers.pattern_search])
def test_local_solver_always_evaluates_start(solver):
    """A zero budget still evaluates the start point once."""

    trace = solver(bowl, [0.0, 0.0], UNIT_SQUARE, 0)
    assert trace.evaluations == 1
    assert trace.best.x == (0.0, 0.0)


@pytest.mark.parametrize("solver", [solvers.nelder_mead, solvers.pattern_search])
def test_local_solver_keeps_frozen_axes(solver):
    """Axes with equal bounds never move."""

    bounds = np.array([[-1.0, 1.0], [2.0, 2.0], [-1.0, 1.0]])
    trace = solver(lambda x: -(x[0] ** 2) - (x[2] - 0.5) ** 2, [0.9, 2.0, -0.9], bounds, 80)
    assert all(record.x[1] == 2.0 for record in trace.records)
    assert trace.best_value > -0.01


def test_pattern_search_stops_on_flat_objective():
    """Without improvement the steps shrink below tolerance and the search ends early."""

    trace = solvers.pattern_search(lambda x: 1.0, [0.0, 0.0], UNIT_SQUARE, 10_000)
    assert trace.evaluations < 200
    assert trace.best_index == 0


def test_nelder_mead_stops_when_simplex_collapses():
    """Convergence ends the run before the budget on a smooth bowl."""

    trace = solvers.nelder_mead(bowl, [0.0, 0.0], UNIT_SQUARE, 10_000)
    assert trace.evaluations < 10_000


@pytest.mark.parametrize(
    "x0, bounds",
    [([2.0, 0.0], UNIT_SQUARE), ([0.0], UNIT_SQUARE), ([0.0, 0.0], np.array([[1.0, -1.0], [0.0, 1.0]]))],
)
def test_local_solver_rejects_bad_inputs(x0, bounds):
    """Starts outside the box, wrong lengths and inverted bounds are configuration errors."""

    with pytest.raises(ConfigError):
        solvers.pattern_search(bowl, x0, bounds, 10)


def test_multistart_shares_budget_across_starts():
    """Each start is evaluated in turn from a single budget."""

    starts = [[0.0, 0.0], [0.5, -0.5]]
    trace = solvers.multistart("pattern_search", lambda x: 1.0, starts, UNIT_SQUARE, 400)
    points = [record.x for record in trace.records]
    assert points[0] == (0.0, 0.0)
    assert (0.5, -0.5) in points
    assert trace.evaluations <= 400


def test_multistart_rejects_surrogate_solver():
    """Only local solvers can be restarted."""

    with pytest.raises(ConfigError):
        solvers.multistart("cors_rbf", bowl, [[0.0, 0.0]], UNIT_SQUARE, 10)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


def test_trace_best_values_and_rows():
    """Best-so-far values are monotone and rows follow the trace header."""

    trace = solvers.pattern_search(bowl, [-0.8, 0.7], UNIT_SQUARE, 40)
    best = trace.best_values()
    assert all(a <= b for a, b in zip(best, best[1:]))
    assert best[-1] == trace.best_value
    rows = trace.rows()
    assert len(rows) == trace.evaluations
    assert all(len(row) == len(data_manager.trace_header(2)) for row in rows)
    assert [row[1] for row in rows] == list(range(1, trace.evaluations + 1))


def test_trace_evaluations_to_reach():
    """evaluations_to_reach reports the first evaluation hitting the target."""

    trace = solvers.pattern_search(bowl, [-0.8, 0.7], UNIT_SQUARE, 60)
    target = trace.best_value
    reached = trace.evaluations_to_reach(target)
    assert reached == trace.best.evaluations
    assert trace.evaluations_to_reach(target + 1.0) is None


# ---------------------------------------------------------------------------
# RBF surrogate
# ---------------------------------------------------------------------------


def test_surrogate_interpolates_samples():
    """The fitted surrogate reproduces every sample value."""

    rng = np.random.default_rng(1)
    sites = rng.random((12, 3))
    values = np.sin(4.0 * sites[:, 0]) + sites[:, 1] * sites[:, 2]
    surrogate = solvers.fit_surrogate(sites, values)
    assert surrogate.size == 12
    assert surrogate.residual() <= 1e-8
    np.testing.assert_allclose(surrogate(sites), values, atol=1e-8)


def test_surrogate_reproduces_linear_functions():
    """A linear tail makes affine data exact everywhere."""

    rng = np.random.default_rng(2)
    sites = rng.random((8, 2))
    linear = lambda p: 2.0 + 3.0 * p[..., 0] - p[..., 1]  # noqa: E731
    surrogate = solvers.fit_surrogate(sites, linear(sites))
    queries = rng.random((20, 2))
    np.testing.assert_allclose(surrogate(queries), linear(queries), atol=1e-8)


def test_surrogate_gradient_matches_finite_differences():
    """The analytic gradient agrees with central differences."""

    rng = np.random.default_rng(3)
    sites = rng.random((10, 2))
    surrogate = solvers.fit_surrogate(sites, np.cos(3.0 * sites[:, 0]) * sites[:, 1])
    point = np.array([0.37, 0.61])
    h = 1e-6
    numeric = [
        (surrogate(point + h * e) - surrogate(point - h * e)) / (2.0 * h) for e in np.eye(2)
    ]
    np.testing.assert_allclose(surrogate.gradient(point), numeric, rtol=1e-5, atol=1e-6)


def test_surrogate_rejects_too_few_sites():
    """A linear tail in n dimensions needs n + 1 sites."""

    with pytest.raises(ValueError):
        solvers.fit_surrogate(np.array([[0.0, 0.0], [1.0, 0.0]]), [0.0, 1.0])


def test_surrogate_rejects_duplicates():
    """Duplicate sites make the system singular and are refused."""

    sites = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(SingularSystemError):
        solvers.fit_surrogate(sites, [0.0, 1.0, 2.0, 3.0])
    surrogate = solvers.fit_surrogate(sites[:3], [0.0, 1.0, 2.0])
    with pytest.raises(SingularSystemError):
        surrogate.extended([0.0, 1.0], 5.0)


def test_surrogate_extension_matches_full_fit():
    """Appending sites by bordered updates gives the same interpolant as refitting."""

    rng = np.random.default_rng(4)
    sites = rng.random((15, 3))
    values = np.exp(-np.sum((sites - 0.4) ** 2, axis=1))
    surrogate = solvers.fit_surrogate(sites[:4], values[:4], diagonal=math.sqrt(3))
    for site, value in zip(sites[4:], values[4:]):
        surrogate = surrogate.extended(site, value)
    full = solvers.fit_surrogate(sites, values, diagonal=math.sqrt(3))
    queries = rng.random((25, 3))
    np.testing.assert_allclose(surrogate(queries), full(queries), atol=1e-8)
    assert surrogate.log_abs_determinant == pytest.approx(full.log_abs_determinant, rel=1e-6, abs=1e-6)
    assert surrogate.system_residual() <= 1e-6


@pytest.mark.parametrize("n", [1, 3, 10])
@pytest.mark.parametrize("extra", ["minimal", 20, 100])
def test_surrogate_exact_across_sizes(n, extra):
    """Samples are reproduced after every update and affine data everywhere, up to 100 sites in 10-D."""

    count = n + 1 if extra == "minimal" else extra
    sites = qmc.Halton(d=n, seed=n).random(count)
    values = np.sin(3.0 * sites).sum(axis=1) + sites[:, 0] ** 2
    surrogate = solvers.fit_surrogate(sites[: n + 1], values[: n + 1], diagonal=math.sqrt(n))
    for k in range(n + 1, count + 1):
        if k > n + 1:
            surrogate = surrogate.extended(sites[k - 1], values[k - 1])
        error = np.abs(surrogate(sites[:k]) - values[:k])
        assert np.all(error <= 1e-8 * (1.0 + np.abs(values[:k])))

    slope = np.linspace(-1.0, 2.0, n)
    linear = solvers.fit_surrogate(sites, 0.5 + sites @ slope, diagonal=math.sqrt(n))
    queries = np.random.default_rng(n).random((100, n))
    np.testing.assert_allclose(linear(queries), 0.5 + queries @ slope, atol=1e-8)


# ---------------------------------------------------------------------------
# CORS-RBF
# ---------------------------------------------------------------------------


def test_unit_scale_drops_frozen_axes():
    """Unit coordinates only keep axes with a positive span."""

    bounds = np.array([[0.0, 10.0], [5.0, 5.0], [-1.0, 1.0]])
    scaled = solvers.unit_scale(np.array([[5.0, 5.0, 1.0], [0.0, 5.0, -1.0]]), bounds)
    np.testing.assert_allclose(scaled, [[0.5, 1.0], [0.0, 0.0]])


def test_furthest_distance_of_square_corners():
    """The emptiest point among the four corners of the unit square is its center."""

    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    delta, argmax = solvers.furthest_distance(corners, np.random.default_rng(0))
    assert delta == pytest.approx(math.sqrt(0.5), abs=1e-6)
    np.testing.assert_allclose(argmax, [0.5, 0.5], atol=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=3, max_value=12), st.integers(min_value=0, max_value=2**16))
def test_furthest_distance_is_attained(count, seed):
    """delta equals the nearest-sample distance of the returned point inside the box."""

    rng = np.random.default_rng(seed)
    samples = rng.random((count, 2))
    delta, argmax = solvers.furthest_distance(samples, rng)
    assert np.all(argmax >= 0.0) and np.all(argmax <= 1.0)
    assert delta == pytest.approx(float(np.linalg.norm(samples - argmax, axis=1).min()))


def test_cors_rbf_improves_on_initial_design():
    """CORS-RBF spends its budget and beats the best initial sample."""

    initial = [[-0.9, -0.9], [0.9, -0.9], [-0.9, 0.9]]
    trace = solvers.cors_rbf(bowl, initial, UNIT_SQUARE, 30, seed=5)
    assert trace.evaluations == 30
    np.testing.assert_allclose([record.x for record in trace.records[:3]], initial, atol=1e-12)
    assert trace.best_value > max(bowl(p) for p in initial)
    assert trace.best_value > -0.05
    assert _within(trace.records, UNIT_SQUARE)


def test_cors_rbf_respects_exclusion_radius():
    """Every adaptive sample keeps at least the recorded radius from earlier samples."""

    trace = solvers.cors_rbf(bowl, [[-0.9, -0.9], [0.9, -0.9], [-0.9, 0.9]], UNIT_SQUARE, 20, seed=7)
    adaptive = [record for record in trace.records if record.iteration > 0]
    assert adaptive
    for record in adaptive:
        assert record.min_distance >= record.radius * (1.0 - 1e-6)
    assert all(math.isnan(record.radius) for record in trace.records if record.iteration == 0)


def test_cors_rbf_is_seeded():
    """Equal seeds reproduce the same sequence of points."""

    initial = [[0.0, 0.0]]
    first = solvers.cors_rbf(bowl, initial, UNIT_SQUARE, 15, seed=11)
    second = solvers.cors_rbf(bowl, initial, UNIT_SQUARE, 15, seed=11)
    assert [r.x for r in first.records] == [r.x for r in second.records]


def test_cors_rbf_completes_small_designs():
    """A single start in two dimensions is completed to three design sites."""

    trace = solvers.cors_rbf(bowl, [[0.0, 0.0]], UNIT_SQUARE, 10, seed=3)
    design = [record for record in trace.records if record.iteration == 0]
    assert len(design) == 3
    np.testing.assert_allclose(design[0].x, [0.0, 0.0], atol=1e-12)


def test_cors_rbf_evaluates_whole_design_over_budget():
    """Initial sites are evaluated even when they exceed the budget."""

    initial = solvers.initial_point_group("I", np.array([[-1.0, 1.0]] * 3))
    trace = solvers.cors_rbf(lambda x: -sum(v * v for v in x), initial, np.array([[-1.0, 1.0]] * 3), 4)
    assert trace.evaluations == 8


def test_cors_rbf_drops_duplicate_initial_sites(caplog):
    """A repeated initial site is evaluated once."""

    initial = [[-0.9, -0.9], [0.9, -0.9], [-0.9, 0.9], [0.9, -0.9]]
    with caplog.at_level("WARNING", logger="camplan"):
        trace = solvers.cors_rbf(bowl, initial, UNIT_SQUARE, 3, seed=0)
    assert trace.evaluations == 3
    assert any("duplicate initial site" in message for message in caplog.messages)


def test_cors_rbf_frozen_axes():
    """Frozen axes keep their value while the others are searched."""

    bounds = np.array([[-1.0, 1.0], [26.5, 26.5], [-1.0, 1.0]])
    initial = [[-0.5, 26.5, -0.5], [0.5, 26.5, -0.5], [0.0, 26.5, 0.5]]
    trace = solvers.cors_rbf(lambda x: -(x[0] ** 2) - x[2] ** 2, initial, bounds, 12, seed=2)
    assert all(record.x[1] == 26.5 for record in trace.records)


def test_cors_rbf_returns_trace_when_surrogate_refuses_twice(monkeypatch, caplog):
    """A site rejected with and without jitter ends the run with the trace so far."""

    def refuse(self, site, value):
        raise SingularSystemError("surrogate site duplicates an existing sample")

    monkeypatch.setattr(solvers.RbfSurrogate, "extended", refuse)
    initial = [[-0.9, -0.9], [0.9, -0.9], [-0.9, 0.9]]
    with caplog.at_level("WARNING", logger="camplan"):
        trace = solvers.cors_rbf(bowl, initial, UNIT_SQUARE, 10, seed=1)
    assert trace.evaluations == 4
    assert [record.iteration for record in trace.records] == [0, 0, 0, 1]
    assert any("jittered site as well" in message for message in caplog.messages)


def test_cors_rbf_keeps_samples_in_step_with_surrogate_after_jitter(monkeypatch):
    """After a jittered retry the exclusion constraints use the sites the surrogate holds."""

    original_extended = solvers.RbfSurrogate.extended
    original_maximum = solvers._constrained_maximum
    calls = {"extended": 0, "checked": 0}

    def flaky(self, site, value):
        calls["extended"] += 1
        if calls["extended"] == 1:
            raise SingularSystemError("surrogate site duplicates an existing sample")
        return original_extended(self, site, value)

    def checked(surrogate, points, *args, **kwargs):
        calls["checked"] += 1
        np.testing.assert_array_equal(points, surrogate.sites)
        return original_maximum(surrogate, points, *args, **kwargs)

    monkeypatch.setattr(solvers.RbfSurrogate, "extended", flaky)
    monkeypatch.setattr(solvers, "_constrained_maximum", checked)
    trace = solvers.cors_rbf(bowl, [[-0.9, -0.9], [0.9, -0.9], [-0.9, 0.9]], UNIT_SQUARE, 8, seed=2)
    assert trace.evaluations == 8
    assert calls["extended"] >= 2
    assert calls["checked"] >= 2


# ---------------------------------------------------------------------------
# Start-point groups and dispatch
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name, size", [("I", 8), ("II", 4), ("III", 8), ("IV", 64), ("ii", 4)])
def test_initial_point_group_sizes(name, size):
    """The four groups have 8, 4, 8 and 64 points."""

    assert len(solvers.initial_point_group(name)) == size


def test_initial_point_group_ordering():
    """Groups II and III lie in the ordered simplex; group I does not."""

    assert all(solvers.in_ordered_simplex(p) for p in solvers.initial_point_group("II"))
    assert all(solvers.in_ordered_simplex(p) for p in solvers.initial_point_group("III"))
    assert not all(solvers.in_ordered_simplex(p) for p in solvers.initial_point_group("I"))


def test_initial_point_group_maps_into_bounds():
    """With bounds the [-45, 45] cube is mapped affinely."""

    points = solvers.initial_point_group("II", np.array([[0.0, 90.0]] * 3))
    assert points[0] == (0.0, 0.0, 0.0)
    assert points[-1] == (90.0, 90.0, 90.0)


def test_initial_point_group_errors():
    """Unknown names and non-3D bounds are configuration errors."""

    with pytest.raises(ConfigError):
        solvers.initial_point_group("V")
    with pytest.raises(ConfigError):
        solvers.initial_point_group("I", UNIT_SQUARE)


@pytest.mark.parametrize("name", ["nelder_mead", "pattern_search", "cors_rbf"])
def test_run_solver_dispatch(name):
    """run_solver labels the trace with the solver that produced it."""

    trace = solvers.run_solver(name, bowl, [[-0.5, 0.5], [0.5, 0.5], [0.0, -0.5]], UNIT_SQUARE, 12, seed=0)
    assert trace.solver == name
    assert trace.evaluations >= 1


def test_run_solver_defaults_to_box_center():
    """Local solvers without starts begin at the middle of the box."""

    trace = solvers.run_solver("pattern_search", bowl, [], np.array([[0.0, 2.0], [-4.0, 0.0]]), 5)
    assert trace.records[0].x == (1.0, -2.0)
