"""Derivative-free optimizers over box domains.

Every solver maximizes. Objectives are called through a recorder that counts
evaluations against the budget and produces a :class:`SolverTrace`, so the
three methods report comparable progress tables. The surrogate method works
in unit-box coordinates; the traces always carry original coordinates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import minimize
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from . import log
from .constants import BETA_CYCLE, SolverName
from .errors import ConfigError, SingularSystemError, SolverError


Objective = Callable[[Sequence[float]], float]

# Relative tolerances shared by the local solvers.
DIAMETER_TOLERANCE = 1e-6
STEP_TOLERANCE = 1e-6
SIMPLEX_STEP = 0.05
PATTERN_STEP = 0.25

# Surrogate constants.
DUPLICATE_TOLERANCE = 1e-9
PIVOT_RATIO_THRESHOLD = 1e-14
REFACTOR_RESIDUAL = 1e-6
EXACTNESS = 1e-8
JITTER = 1e-6
DELTA_STARTS = 64
DELTA_ASCENT_STEPS = 40
LOCAL_STARTS = 8
REJECTION_DRAWS = 512

NELDER_MEAD_COEFFICIENTS = {"reflect": 1.0, "expand": 2.0, "contract": 0.5, "shrink": 0.5}


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    """One true objective evaluation.

    ``radius`` and ``min_distance`` are only set by the surrogate method and
    are measured in unit-box coordinates.
    """

    iteration: int
    x: tuple[float, ...]
    value: float
    evaluations: int
    millis: float
    radius: float = math.nan
    min_distance: float = math.nan


@dataclass(frozen=True)
class SolverTrace:
    solver: str
    records: tuple[TraceRecord, ...]
    best_index: int = -1

    @property
    def evaluations(self) -> int:
        return len(self.records)

    @property
    def best(self) -> Optional[TraceRecord]:
        return self.records[self.best_index] if self.best_index >= 0 else None

    @property
    def best_x(self) -> Optional[np.ndarray]:
        return None if self.best is None else np.array(self.best.x)

    @property
    def best_value(self) -> float:
        return -math.inf if self.best is None else self.best.value

    def best_values(self) -> list[float]:
        """Best-so-far value after each evaluation."""

        running = -math.inf
        values = []
        for record in self.records:
            running = max(running, record.value)
            values.append(running)
        return values

    def evaluations_to_reach(self, target: float, tolerance: float = 0.0) -> Optional[int]:
        """Evaluations used until the best value first reached ``target``."""

        for record, best in zip(self.records, self.best_values()):
            if best >= target - tolerance:
                return record.evaluations
        return None

    def rows(self) -> list[list[float]]:
        """Rows matching :func:`camplan.data_manager.trace_header`."""

        return [
            [r.iteration, r.evaluations, r.value, best, r.millis, *r.x]
            for r, best in zip(self.records, self.best_values())
        ]


class _Recorder:
    """Budgeted objective wrapper collecting trace records."""

    def __init__(self, f: Objective, budget: int, record_timings: bool) -> None:
        self.f = f
        self.budget = max(0, int(budget))
        self.record_timings = record_timings
        self.records: list[TraceRecord] = []
        self.best_index = -1

    @property
    def remaining(self) -> int:
        return self.budget - len(self.records)

    def extend_budget(self, mandatory: int) -> None:
        self.budget = max(self.budget, len(self.records) + mandatory)

    def __call__(self, x: np.ndarray, iteration: int, *, radius: float = math.nan, min_distance: float = math.nan) -> float:
        if self.remaining <= 0:
            raise SolverError("evaluation budget exhausted")
        point = tuple(float(v) for v in x)
        started = time.perf_counter()
        value = float(self.f(point))
        millis = (time.perf_counter() - started) * 1000.0 if self.record_timings else 0.0
        self.records.append(
            TraceRecord(iteration, point, value, len(self.records) + 1, millis, radius, min_distance)
        )
        if self.best_index < 0 or value > self.records[self.best_index].value:
            self.best_index = len(self.records) - 1
        return value

    def trace(self, solver: str) -> SolverTrace:
        return SolverTrace(solver=solver, records=tuple(self.records), best_index=self.best_index)


def _as_bounds(bounds: np.ndarray | Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2:
        raise ConfigError("bounds must be an (n, 2) array of [lower, upper] rows")
    lower, upper = bounds[:, 0].copy(), bounds[:, 1].copy()
    if not (np.all(np.isfinite(bounds)) and np.all(lower <= upper)):
        raise ConfigError("bounds must be finite with lower <= upper")
    return lower, upper


def _start(x0: Sequence[float], lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != lower.shape:
        raise ConfigError(f"start point has {x0.size} entries, bounds have {lower.size}")
    if np.any(x0 < lower) or np.any(x0 > upper):
        log.error("Start point %s lies outside the bounds", x0.tolist())
        raise ConfigError("start point lies outside the bounds")
    return x0


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------


def _simplex_around(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> list[np.ndarray]:
    """``x`` plus one vertex per non-degenerate axis, 5% of the span away."""

    span = upper - lower
    vertices = [x.copy()]
    for i in np.flatnonzero(span > 0):
        vertex = x.copy()
        step = SIMPLEX_STEP * span[i]
        vertex[i] = x[i] + step if x[i] + step <= upper[i] else x[i] - step
        vertices.append(vertex)
    return vertices


def _degenerate(vertices: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> bool:
    active = upper > lower
    edges = (vertices[1:] - vertices[0])[:, active] / (upper - lower)[active]
    diameter = float(np.abs(edges).max(initial=0.0))
    if diameter == 0.0:
        return True
    return abs(float(np.linalg.det(edges / diameter))) < 1e-10


def _nelder_mead(recorder: _Recorder, x0: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> None:
    tolerance = DIAMETER_TOLERANCE * float(np.linalg.norm(upper - lower))
    alpha, gamma, rho, sigma = (NELDER_MEAD_COEFFICIENTS[k] for k in ("reflect", "expand", "contract", "shrink"))

    vertices: list[np.ndarray] = []
    values: list[float] = []
    for vertex in _simplex_around(x0, lower, upper):
        if recorder.remaining <= 0:
            return
        vertices.append(vertex)
        values.append(recorder(vertex, 0))
    size = len(vertices)
    if size == 1:
        return

    iteration = 0
    while recorder.remaining > 0:
        iteration += 1
        order = sorted(range(size), key=lambda k: -values[k])
        vertices = [vertices[k] for k in order]
        values = [values[k] for k in order]
        simplex = np.array(vertices)
        if float(np.linalg.norm(simplex[1:] - simplex[0], axis=1).max()) < tolerance:
            log.debug("Nelder-Mead converged after %d iterations", iteration - 1)
            return
        if _degenerate(simplex, lower, upper):
            log.debug("Nelder-Mead simplex degenerated; reinitializing around the best vertex")
            fresh = _simplex_around(vertices[0], lower, upper)[1:]
            for k, vertex in enumerate(fresh, start=1):
                if recorder.remaining <= 0:
                    return
                vertices[k] = vertex
                values[k] = recorder(vertex, iteration)
            continue

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        reflected = np.clip(centroid + alpha * (centroid - worst), lower, upper)
        f_reflected = recorder(reflected, iteration)
        if values[0] >= f_reflected > values[-2]:
            vertices[-1], values[-1] = reflected, f_reflected
            continue
        if f_reflected > values[0]:
            if recorder.remaining <= 0:
                vertices[-1], values[-1] = reflected, f_reflected
                return
            expanded = np.clip(centroid + gamma * (reflected - centroid), lower, upper)
            f_expanded = recorder(expanded, iteration)
            if f_expanded > f_reflected:
                vertices[-1], values[-1] = expanded, f_expanded
            else:
                vertices[-1], values[-1] = reflected, f_reflected
            continue
        if recorder.remaining <= 0:
            return
        if f_reflected > values[-1]:
            contracted = np.clip(centroid + rho * (reflected - centroid), lower, upper)
            f_contracted = recorder(contracted, iteration)
            if f_contracted >= f_reflected:
                vertices[-1], values[-1] = contracted, f_contracted
                continue
        else:
            contracted = np.clip(centroid + rho * (worst - centroid), lower, upper)
            f_contracted = recorder(contracted, iteration)
            if f_contracted > values[-1]:
                vertices[-1], values[-1] = contracted, f_contracted
                continue
        for k in range(1, size):
            if recorder.remaining <= 0:
                return
            vertices[k] = vertices[0] + sigma * (vertices[k] - vertices[0])
            values[k] = recorder(vertices[k], iteration)


def nelder_mead(
    f: Objective,
    x0: Sequence[float],
    bounds: np.ndarray,
    budget: int,
    *,
    record_timings: bool = False,
) -> SolverTrace:
    """Bounded downhill simplex (maximizing).

    Candidate points are clipped to the box. The search stops when the budget
    is spent or the simplex diameter drops below ``1e-6`` times the domain
    diagonal; a simplex that collapses onto a face of the box is rebuilt
    around its best vertex with edges of 5% of each span.
    """

    lower, upper = _as_bounds(bounds)
    start = _start(x0, lower, upper)
    recorder = _Recorder(f, budget, record_timings)
    recorder.extend_budget(1)
    _nelder_mead(recorder, start, lower, upper)
    return recorder.trace(SolverName.NELDER_MEAD.value)


# ---------------------------------------------------------------------------
# Pattern search
# ---------------------------------------------------------------------------


def _pattern_search(recorder: _Recorder, x0: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> None:
    span = upper - lower
    steps = PATTERN_STEP * span
    floor = STEP_TOLERANCE * span
    x = x0.copy()
    if recorder.remaining <= 0:
        return
    best = recorder(x, 0)
    sweep = 0
    while recorder.remaining > 0:
        sweep += 1
        live = (steps >= floor) & (span > 0)
        if not live.any():
            log.debug("Pattern search steps fell below tolerance after %d sweeps", sweep - 1)
            return
        improved = False
        for i in np.flatnonzero(live):
            for direction in (1.0, -1.0):
                candidate = x.copy()
                candidate[i] = min(upper[i], max(lower[i], x[i] + direction * steps[i]))
                if candidate[i] == x[i]:
                    continue
                if recorder.remaining <= 0:
                    return
                value = recorder(candidate, sweep)
                if value > best:
                    x, best, improved = candidate, value, True
                    break
            if improved:
                break
        if not improved:
            steps = steps * 0.5


def pattern_search(
    f: Objective,
    x0: Sequence[float],
    bounds: np.ndarray,
    budget: int,
    *,
    record_timings: bool = False,
) -> SolverTrace:
    """Coordinate pattern search with step halving (maximizing).

    Steps start at 25% of each bound span. The first strictly improving
    poll point is accepted; a sweep without improvement halves all steps.
    """

    lower, upper = _as_bounds(bounds)
    start = _start(x0, lower, upper)
    recorder = _Recorder(f, budget, record_timings)
    recorder.extend_budget(1)
    _pattern_search(recorder, start, lower, upper)
    return recorder.trace(SolverName.PATTERN_SEARCH.value)


LOCAL_KERNELS = {
    SolverName.NELDER_MEAD: _nelder_mead,
    SolverName.PATTERN_SEARCH: _pattern_search,
}


def multistart(
    solver: SolverName | str,
    f: Objective,
    starts: Sequence[Sequence[float]],
    bounds: np.ndarray,
    budget: int,
    *,
    record_timings: bool = False,
) -> SolverTrace:
    """Run a local solver from each start in turn, sharing one budget."""

    name = SolverName(solver)
    if name not in LOCAL_KERNELS:
        raise ConfigError(f"{name.value} is not a local solver")
    lower, upper = _as_bounds(bounds)
    points = [_start(x, lower, upper) for x in starts]
    if not points:
        raise ConfigError("multistart needs at least one start point")
    recorder = _Recorder(f, budget, record_timings)
    recorder.extend_budget(1)
    for index, point in enumerate(points, start=1):
        if recorder.remaining <= 0:
            log.info("Budget spent before start %d of %d", index, len(points))
            break
        LOCAL_KERNELS[name](recorder, point, lower, upper)
    return recorder.trace(name.value)


# ---------------------------------------------------------------------------
# RBF surrogate
# ---------------------------------------------------------------------------


def _tail_block(sites: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(sites)), sites])


def _system(sites: np.ndarray) -> np.ndarray:
    """Interpolation matrix ordered as ``[[0, P^T], [P, Phi]]``.

    Putting the polynomial block first means a new site only appends one row
    and one column.
    """

    k, n = sites.shape
    tail = _tail_block(sites)
    matrix = np.zeros((k + n + 1, k + n + 1))
    matrix[: n + 1, n + 1:] = tail.T
    matrix[n + 1:, : n + 1] = tail
    matrix[n + 1:, n + 1:] = cdist(sites, sites) ** 3
    return matrix


def _pivot_ratio(upper: np.ndarray) -> float:
    diagonal = np.abs(np.diag(upper))
    largest = float(diagonal.max(initial=0.0))
    return float(diagonal.min(initial=0.0)) / largest if largest > 0 else 0.0


@dataclass(frozen=True, eq=False)
class RbfSurrogate:
    """Cubic RBF interpolant with a linear tail.

    The interpolation system is kept as an LU factorization ``A[perm] = L U``
    so that appending a site costs one bordered update instead of a new
    factorization.
    """

    sites: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    tail: np.ndarray
    perm: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    diagonal: float = 1.0

    @property
    def dimension(self) -> int:
        return self.sites.shape[1]

    @property
    def size(self) -> int:
        return self.sites.shape[0]

    @property
    def log_abs_determinant(self) -> float:
        return float(np.sum(np.log(np.abs(np.diag(self.upper)))))

    def __call__(self, points: np.ndarray) -> np.ndarray | float:
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        block = np.atleast_2d(points)
        values = (cdist(block, self.sites) ** 3) @ self.weights + _tail_block(block) @ self.tail
        return float(values[0]) if single else values

    def gradient(self, point: np.ndarray) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        offsets = point[None, :] - self.sites
        radii = np.linalg.norm(offsets, axis=1)
        return 3.0 * (self.weights * radii) @ offsets + self.tail[1:]

    def residual(self) -> float:
        """Largest relative interpolation error at the sites."""

        predicted = self(self.sites)
        return float(np.max(np.abs(predicted - self.values) / (1.0 + np.abs(self.values))))

    def system_residual(self) -> float:
        """Relative residual of the interpolation system solved by the factors."""

        matrix = _system(self.sites)
        solution = np.concatenate([self.tail, self.weights])
        rhs = np.concatenate([np.zeros(self.dimension + 1), self.values])
        scale = np.abs(matrix).sum(axis=1).max() * np.abs(solution).max(initial=0.0) + np.abs(rhs).max(initial=0.0)
        return float(np.abs(matrix @ solution - rhs).max() / (scale or 1.0))

    def extended(self, site: Sequence[float], value: float) -> "RbfSurrogate":
        """Surrogate with one more sample, by bordered LU update.

        Falls back to a full factorization when the updated system's residual
        exceeds ``1e-6``.

        Raises:
            SingularSystemError: If ``site`` duplicates a sample or the
                system becomes near-singular.
        """

        site = np.asarray(site, dtype=float).ravel()
        _check_distinct(self.sites, site, self.diagonal)
        sites = np.vstack([self.sites, site])
        values = np.append(self.values, float(value))
        column = np.concatenate([[1.0], site, np.linalg.norm(self.sites - site, axis=1) ** 3])
        u = linalg.solve_triangular(self.lower, column[self.perm], lower=True, unit_diagonal=True)
        l = linalg.solve_triangular(self.upper, column, trans="T", lower=False)
        delta = -float(l @ u)
        size = column.size
        lower = np.zeros((size + 1, size + 1))
        upper = np.zeros((size + 1, size + 1))
        lower[:size, :size] = self.lower
        lower[size, :size] = l
        lower[size, size] = 1.0
        upper[:size, :size] = self.upper
        upper[:size, size] = u
        upper[size, size] = delta
        perm = np.append(self.perm, size)
        if _pivot_ratio(upper) >= PIVOT_RATIO_THRESHOLD:
            candidate = _solve(sites, values, perm, lower, upper, self.diagonal)
            if candidate.system_residual() <= REFACTOR_RESIDUAL and candidate.residual() <= EXACTNESS:
                return candidate
        log.debug("Bordered update rejected at K=%d; refactorizing", len(sites))
        return fit_surrogate(sites, values, diagonal=self.diagonal)


def _check_distinct(sites: np.ndarray, site: np.ndarray, diagonal: float) -> None:
    if len(sites) and float(np.linalg.norm(sites - site, axis=1).min()) <= DUPLICATE_TOLERANCE * diagonal:
        log.error("Surrogate site %s duplicates an existing sample", site.tolist())
        raise SingularSystemError("surrogate site duplicates an existing sample")


def _solve(
    sites: np.ndarray,
    values: np.ndarray,
    perm: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    diagonal: float,
) -> RbfSurrogate:
    n = sites.shape[1]
    rhs = np.concatenate([np.zeros(n + 1), values])
    y = linalg.solve_triangular(lower, rhs[perm], lower=True, unit_diagonal=True)
    solution = linalg.solve_triangular(upper, y, lower=False)
    return RbfSurrogate(
        sites=sites,
        values=values,
        weights=solution[n + 1:],
        tail=solution[: n + 1],
        perm=perm,
        lower=lower,
        upper=upper,
        diagonal=diagonal,
    )


def fit_surrogate(
    sites: np.ndarray,
    values: Sequence[float],
    *,
    diagonal: Optional[float] = None,
) -> RbfSurrogate:
    """Fit the cubic RBF interpolant through ``(sites, values)``.

    Args:
        sites: ``(K, n)`` sample sites with ``K >= n + 1``.
        values: ``K`` sample values.
        diagonal: Domain diagonal used for the duplicate test; defaults to
            the diagonal of the sites' bounding box.

    Raises:
        SingularSystemError: On duplicate sites or a near-singular system.
        ValueError: On inconsistent shapes or too few sites.
    """

    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    k, n = sites.shape
    if values.size != k:
        raise ValueError(f"{k} sites but {values.size} values")
    if k < n + 1:
        raise ValueError(f"a linear tail in {n} dimensions needs at least {n + 1} sites, got {k}")
    if diagonal is None:
        diagonal = float(np.linalg.norm(sites.max(axis=0) - sites.min(axis=0))) or 1.0
    if k > 1:
        tree = cKDTree(sites)
        distances, _ = tree.query(sites, k=2)
        if float(distances[:, 1].min()) <= DUPLICATE_TOLERANCE * diagonal:
            log.error("Surrogate sites contain duplicates")
            raise SingularSystemError("surrogate sites contain duplicates")
    perm_matrix, lower, upper = linalg.lu(_system(sites))
    # A = P L U, so A[perm] = L U with perm read off the permutation matrix
    perm = np.argmax(perm_matrix, axis=0)
    if _pivot_ratio(upper) < PIVOT_RATIO_THRESHOLD:
        log.error("Surrogate system is near-singular at K=%d", k)
        raise SingularSystemError("surrogate system is near-singular (sites not affinely spanning?)")
    return _solve(sites, values, perm, lower, upper, diagonal)


# ---------------------------------------------------------------------------
# CORS-RBF
# ---------------------------------------------------------------------------


class _UnitBox:
    """Affine map between the box and ``[0, 1]^m`` over its non-degenerate axes."""

    def __init__(self, lower: np.ndarray, upper: np.ndarray) -> None:
        self.lower = lower
        self.active = upper > lower
        self.span = (upper - lower)[self.active]

    @property
    def dimension(self) -> int:
        return int(self.active.sum())

    def to_unit(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return (points[..., self.active] - self.lower[self.active]) / self.span

    def from_unit(self, point: np.ndarray) -> np.ndarray:
        x = self.lower.copy()
        x[self.active] = self.lower[self.active] + np.asarray(point, dtype=float) * self.span
        return x


def unit_scale(points: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Map points into the unit box the surrogate search measures distances in.

    Axes with ``lower == upper`` are dropped.
    """

    lower, upper = _as_bounds(bounds)
    return _UnitBox(lower, upper).to_unit(points)


def furthest_distance(samples: np.ndarray, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Approximate ``max_x min_k |x - s_k|`` over the unit box.

    Runs projected ascent of the nearest-sample distance from 64 random
    points plus all midpoints of sample pairs.

    Returns:
        tuple: ``(delta, argmax)``.
    """

    tree = cKDTree(samples)
    m = samples.shape[1]
    first, second = np.triu_indices(len(samples), k=1)
    starts = np.vstack([rng.random((DELTA_STARTS, m)), 0.5 * (samples[first] + samples[second])])
    distance, nearest = tree.query(starts)
    step = 0.25 * math.sqrt(m)
    for _ in range(DELTA_ASCENT_STEPS):
        direction = starts - samples[nearest]
        norm = np.linalg.norm(direction, axis=1, keepdims=True)
        direction = np.divide(direction, norm, out=np.zeros_like(direction), where=norm > 0)
        moved = np.clip(starts + step * direction, 0.0, 1.0)
        moved_distance, moved_nearest = tree.query(moved)
        better = moved_distance > distance
        starts[better] = moved[better]
        distance[better] = moved_distance[better]
        nearest[better] = moved_nearest[better]
        step *= 0.8
    best = int(np.argmax(distance))
    return float(distance[best]), starts[best].copy()


def _min_distance(samples: np.ndarray, point: np.ndarray) -> float:
    return float(np.linalg.norm(samples - point, axis=1).min())


def _constrained_maximum(
    surrogate: RbfSurrogate,
    samples: np.ndarray,
    radius: float,
    anchor: np.ndarray,
    rng: np.random.Generator,
) -> Optional[np.ndarray]:
    """Feasible maximizer of the surrogate with ``min_k |x - s_k| >= radius``.

    Starts are drawn uniformly and rejected when infeasible; SLSQP results
    that end up infeasible are projected out of the violated ball once and
    dropped if that does not help.
    """

    m = samples.shape[1]
    tree = cKDTree(samples)
    draws = rng.random((REJECTION_DRAWS, m))
    distance, _ = tree.query(draws)
    feasible = draws[distance >= radius]
    if len(feasible) > LOCAL_STARTS:
        feasible = feasible[np.argsort(-surrogate(feasible), kind="stable")[:LOCAL_STARTS]]
    starts = list(feasible)
    if _min_distance(samples, anchor) >= radius:
        starts.append(anchor)
    if not starts:
        return None

    squared = radius * radius
    constraint = {
        "type": "ineq",
        "fun": lambda z: np.sum((samples - z) ** 2, axis=1) - squared,
        "jac": lambda z: 2.0 * (z - samples),
    }
    candidates = []
    for start in starts:
        candidates.append(start)
        result = minimize(
            lambda z: -surrogate(z),
            start,
            jac=lambda z: -surrogate.gradient(z),
            method="SLSQP",
            bounds=[(0.0, 1.0)] * m,
            constraints=[constraint],
            options={"maxiter": 100},
        )
        point = np.clip(result.x, 0.0, 1.0)
        gap = point - samples
        lengths = np.linalg.norm(gap, axis=1)
        closest = int(np.argmin(lengths))
        if 0.0 < lengths[closest] < radius:
            point = np.clip(samples[closest] + gap[closest] * (radius / lengths[closest]) * (1.0 + 1e-9), 0.0, 1.0)
        if _min_distance(samples, point) >= radius:
            candidates.append(point)
    values = surrogate(np.array(candidates))
    return candidates[int(np.argmax(values))]


def _design(initial: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Append Latin hypercube sites until the design spans a linear tail."""

    design = initial
    sampler = qmc.LatinHypercube(d=m, seed=rng)
    while len(design) < m + 1 or np.linalg.matrix_rank(_tail_block(design)) < m + 1:
        extra = sampler.random(max(1, m + 1 - len(design)))
        design = np.vstack([design, extra]) if len(design) else extra
    return design


def cors_rbf(
    f: Objective,
    initial_sites: Sequence[Sequence[float]],
    bounds: np.ndarray,
    budget: int,
    *,
    seed: int = 0,
    record_timings: bool = False,
) -> SolverTrace:
    """Constrained optimization using response surfaces with a cubic RBF.

    Every iteration fits the surrogate on all samples, estimates the largest
    empty-ball radius ``delta``, maximizes the surrogate at distance at least
    ``beta * delta`` from all samples and evaluates the winner. ``beta``
    cycles through ``BETA_CYCLE`` starting at 0.98; when a ratio admits no
    feasible point the next one is tried, and the run ends when none does.

    Initial sites are always evaluated. Fewer than ``n + 1`` (or affinely
    dependent) sites are completed by a seeded Latin hypercube design.
    """

    lower, upper = _as_bounds(bounds)
    box = _UnitBox(lower, upper)
    m = box.dimension
    rng = np.random.default_rng(seed)
    initial = [_start(x, lower, upper) for x in initial_sites]

    recorder = _Recorder(f, budget, record_timings)
    if m == 0:
        recorder.extend_budget(1)
        recorder(initial[0] if initial else lower, 0)
        return recorder.trace(SolverName.CORS_RBF.value)

    diagonal = math.sqrt(m)
    kept: list[np.ndarray] = []
    for x in initial:
        site = box.to_unit(x)
        if kept and _min_distance(np.array(kept), site) <= DUPLICATE_TOLERANCE * diagonal:
            log.warning("Dropping duplicate initial site %s", x.tolist())
            continue
        kept.append(site)
    design = _design(np.array(kept).reshape(-1, m), m, rng)
    if len(design) > len(kept):
        log.info("Completed the initial design with %d Latin hypercube site(s)", len(design) - len(kept))

    recorder.extend_budget(len(design))
    samples: list[np.ndarray] = []
    values: list[float] = []
    for site in design:
        values.append(recorder(box.from_unit(site), 0))
        samples.append(site)

    surrogate = fit_surrogate(np.array(samples), values, diagonal=diagonal)
    iteration = 0
    while recorder.remaining > 0:
        iteration += 1
        points = np.array(samples)
        delta, anchor = furthest_distance(points, rng)

        winner = None
        radius = math.nan
        for offset in range(len(BETA_CYCLE)):
            beta = BETA_CYCLE[(iteration - 1 + offset) % len(BETA_CYCLE)]
            radius = max(beta * delta, DUPLICATE_TOLERANCE * diagonal)
            winner = _constrained_maximum(surrogate, points, radius, anchor, rng)
            if winner is not None:
                break
            log.debug("No feasible point at beta=%.2f (radius %.3g)", beta, radius)
        if winner is None:
            log.info("CORS-RBF stopped after %d iterations: no feasible point for any radius", iteration - 1)
            break

        distance = _min_distance(points, winner)
        value = recorder(box.from_unit(winner), iteration, radius=radius, min_distance=distance)
        extended = _add_sample(surrogate, winner, value, rng)
        if extended is None:
            log.warning("CORS-RBF stopped after %d iterations: the surrogate refused the new sample", iteration)
            break
        surrogate, stored = extended
        samples.append(stored)
        values.append(value)
    return recorder.trace(SolverName.CORS_RBF.value)


def _add_sample(
    surrogate: RbfSurrogate, site: np.ndarray, value: float, rng: np.random.Generator
) -> Optional[tuple[RbfSurrogate, np.ndarray]]:
    """Extend the surrogate; a rejected site is retried once with a small jitter.

    Returns:
        The extended surrogate and the site it stores, or ``None`` when the
        jittered site is rejected too.
    """

    try:
        return surrogate.extended(site, value), site
    except SingularSystemError:
        log.warning("Surrogate rejected a site; retrying with jitter")
    jittered = np.clip(site + JITTER * rng.standard_normal(site.size), 0.0, 1.0)
    try:
        return surrogate.extended(jittered, value), jittered
    except SingularSystemError as exc:
        log.warning("Surrogate rejected the jittered site as well: %s", exc)
        return None


# ---------------------------------------------------------------------------
# Start-point groups of the three-camera line experiment
# ---------------------------------------------------------------------------


LINE_BOX = 45.0

_GROUPS = {
    "I": [(a, b, c) for a in (-45.0, 45.0) for b in (-45.0, 45.0) for c in (-45.0, 45.0)],
    "II": [(-45.0, -45.0, -45.0), (-45.0, -45.0, 45.0), (-45.0, 45.0, 45.0), (45.0, 45.0, 45.0)],
    "III": [(a, b, c) for a in (-45.0, -15.0) for b in (-15.0, 15.0) for c in (15.0, 45.0)],
    "IV": [
        (a, b, c)
        for a in (-45.0, -15.0, 15.0, 45.0)
        for b in (-45.0, -15.0, 15.0, 45.0)
        for c in (-45.0, -15.0, 15.0, 45.0)
    ],
}


def in_ordered_simplex(point: Sequence[float]) -> bool:
    """Whether ``point`` satisfies ``-45 <= a1 <= a2 <= a3 <= 45``."""

    values = [-LINE_BOX, *point, LINE_BOX]
    return all(a <= b for a, b in zip(values, values[1:]))


def initial_point_group(name: str, bounds: Optional[np.ndarray] = None) -> list[tuple[float, ...]]:
    """Start points of group ``I``..``IV`` on the ``[-45, 45]^3`` line box.

    With ``bounds`` the points are mapped affinely into that box.

    Raises:
        ConfigError: For unknown groups or bounds that are not three-dimensional.
    """

    key = name.strip().upper()
    if key not in _GROUPS:
        raise ConfigError(f"unknown initial point group '{name}' (expected I, II, III or IV)")
    points = np.array(_GROUPS[key])
    outside = [p for p in _GROUPS[key] if not in_ordered_simplex(p)]
    if key == "III" and outside:
        log.warning("Group III has %d point(s) outside the ordered simplex; using them as printed", len(outside))
    if bounds is not None:
        lower, upper = _as_bounds(bounds)
        if lower.size != 3:
            raise ConfigError("initial point groups are defined for three scalars")
        points = lower + (points + LINE_BOX) / (2.0 * LINE_BOX) * (upper - lower)
    return [tuple(float(v) for v in p) for p in points]


def run_solver(
    name: SolverName | str,
    f: Objective,
    starts: Sequence[Sequence[float]],
    bounds: np.ndarray,
    budget: int,
    *,
    seed: int = 0,
    record_timings: bool = False,
) -> SolverTrace:
    """Dispatch by name: CORS-RBF takes all starts at once, local solvers run them in turn."""

    solver = SolverName(name)
    if solver is SolverName.CORS_RBF:
        return cors_rbf(f, starts, bounds, budget, seed=seed, record_timings=record_timings)
    if not starts:
        lower, upper = _as_bounds(bounds)
        starts = [tuple(0.5 * (lower + upper))]
    return multistart(solver, f, starts, bounds, budget, record_timings=record_timings)


__all__ = [
    "TraceRecord",
    "SolverTrace",
    "RbfSurrogate",
    "nelder_mead",
    "pattern_search",
    "multistart",
    "fit_surrogate",
    "furthest_distance",
    "unit_scale",
    "cors_rbf",
    "in_ordered_simplex",
    "initial_point_group",
    "run_solver",
]
