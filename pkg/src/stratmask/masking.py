"""Minimally sub-optimal responding that degrades the adversary's strategy fit.

Given adversary-controlled utilities, a true budget base g and thresholds
gamma_t, the decision maker picks perturbed thresholds gamma*_t of minimal
squared deviation such that the strategy-test margin of the induced responses
drops below (1 - eta) times the naive margin. eta = 0 reproduces the naive
responses exactly; eta = 1 forces the margin to zero or below.

The outer optimizer is deterministic and derivative-free: bisection probes
(a uniform shift plus single-threshold moves in both directions) collect
feasible starting points, and coordinate search with a pairwise polish pulls
the thresholds back toward their true values while staying feasible.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .dataset import MarginReport, kkt_multiplier
from .errors import (
    DegenerateMarginWarning,
    MaskingInfeasibleError,
    NonConvergedError,
    NonMonotoneDataWarning,
    SchemaError,
)
from .functions import FunctionSpec, function_from_dict
from .solvers import (
    DEFAULT_OPTIONS,
    OptimumPoint,
    SolverOptions,
    coordinate_search_minimize,
    maximize_concave,
)
from .strategy_test import margin_strategy

SCENARIO_SCHEMA = "stratmask.scenario.v1"


@dataclass(frozen=True, eq=False)
class MaskingProblem:
    """Utilities, true budget, masking extent, and solver options."""

    utilities: tuple[FunctionSpec, ...]
    budget: FunctionSpec
    thresholds: NDArray[np.float64]
    eta: float
    dimension: int
    opts: SolverOptions = DEFAULT_OPTIONS

    def __post_init__(self):
        object.__setattr__(self, "utilities", tuple(self.utilities))
        thr = np.array(self.thresholds, dtype=float)
        thr.setflags(write=False)
        object.__setattr__(self, "thresholds", thr)
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if thr.size < 2 or len(self.utilities) != thr.size:
            raise ValueError("need K >= 2 utilities with matching thresholds")
        if np.any(thr <= 0):
            raise ValueError("thresholds must be strictly positive")

    @property
    def horizon(self) -> int:
        return self.thresholds.size


@dataclass(frozen=True, eq=False)
class MaskingResult:
    """Everything the masking run produced, margins recomputable from scratch."""

    eta: float
    naive_points: tuple[OptimumPoint, ...]
    naive_margin: MarginReport
    psi_true: float
    thresholds_true: NDArray[np.float64]
    thresholds_masked: NDArray[np.float64]
    masked_points: tuple[OptimumPoint, ...]
    masked_margin: MarginReport
    psi_masked: float
    violation_sq: float  # sum_t (gamma*_t - gamma_t)^2
    feasible: bool

    def __post_init__(self):
        for name in ("thresholds_true", "thresholds_masked"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def violation(self) -> float:
        """Euclidean norm of the threshold perturbation (the figure axis)."""
        return float(np.sqrt(self.violation_sq))


def naive_responses(
    problem: MaskingProblem,
) -> tuple[tuple[OptimumPoint, ...], MarginReport]:
    """Exact utility maximization under the true thresholds, plus its margin."""
    points = []
    for t, u in enumerate(problem.utilities):
        try:
            points.append(
                maximize_concave(
                    u,
                    problem.budget,
                    float(problem.thresholds[t]),
                    problem.opts,
                    dimension=problem.dimension,
                )
            )
        except NonConvergedError as exc:
            raise NonConvergedError(
                f"naive response at t={t} did not converge: {exc}",
                best_point=exc.best_point,
                residual=exc.residual,
            ) from exc
    responses = np.stack([p.point for p in points])
    margin = margin_strategy(responses, problem.utilities, problem.thresholds, problem.budget)
    return tuple(points), margin


def masked_response(
    problem: MaskingProblem, t: int, gamma: float, naive_point: OptimumPoint
) -> OptimumPoint:
    """Response under a perturbed threshold: a pure function of (t, gamma).

    The solve is warm-started from the naive response rescaled onto the new
    budget level; with the naive point itself deterministic, every caller
    (search, final report, verification) reproduces the same response.
    """
    scale = gamma / float(problem.thresholds[t])
    warm = naive_point.point * scale
    try:
        return maximize_concave(
            problem.utilities[t],
            problem.budget,
            gamma,
            replace(problem.opts, n_starts=1),
            warm_start=warm,
            dimension=problem.dimension,
        )
    except NonConvergedError as exc:
        # a slightly unconverged inner solve is tolerable during the outer
        # search; it is still a deterministic function of (t, gamma)
        return exc.best_point  # type: ignore[return-value]


class _MaskEvaluator:
    """Caches inner argmax solves and pairwise terms across outer iterations.

    Every inner solve goes through :func:`masked_response`, a pure function of
    (t, threshold) given the fixed naive responses. Purity makes the margin a
    deterministic function of the threshold vector, so the search, the final
    report, and an independent verification all agree exactly. Changing one
    threshold re-solves one response and refreshes one column of the
    cross-utility matrix, which keeps coordinate search affordable at K = 100.
    """

    def __init__(self, problem: MaskingProblem, naive_points: tuple[OptimumPoint, ...]):
        self.problem = problem
        self.k = problem.horizon
        self._point_cache: dict[tuple[int, float], OptimumPoint] = {
            (t, float(problem.thresholds[t])): naive_points[t]
            for t in range(self.k)
        }
        self._margin_cache: dict[bytes, float] = {}
        self._gammas = np.array(problem.thresholds, dtype=float)
        self._points: list[OptimumPoint] = list(naive_points)
        self._responses = np.stack([p.point for p in naive_points])
        self._u_matrix = np.empty((self.k, self.k))  # [k, j] = u_k(beta_j)
        self._lams = np.empty(self.k)
        for t in range(self.k):
            self._refresh_column(t)
        self.evaluations = 0

    def _solve(self, t: int, gamma: float) -> OptimumPoint:
        key = (t, gamma)
        cached = self._point_cache.get(key)
        if cached is not None:
            return cached
        point = masked_response(
            self.problem, t, gamma, self._point_cache[(t, float(self.problem.thresholds[t]))]
        )
        self._point_cache[key] = point
        return point

    def _refresh_column(self, t: int) -> None:
        beta_t = self._responses[t]
        for k in range(self.k):
            self._u_matrix[k, t] = self.problem.utilities[k].value(beta_t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonMonotoneDataWarning)
            self._lams[t] = kkt_multiplier(
                self.problem.budget.gradient(beta_t),
                self.problem.utilities[t].gradient(beta_t),
            )

    def set_thresholds(self, gammas: NDArray[np.float64]) -> float:
        """Move to the given thresholds and return the threshold-form margin."""
        gammas = np.asarray(gammas, dtype=float)
        key = gammas.tobytes()
        cached = self._margin_cache.get(key)
        if cached is not None and np.array_equal(gammas, self._gammas):
            return cached
        for t in np.flatnonzero(gammas != self._gammas):
            point = self._solve(int(t), float(gammas[t]))
            self._points[int(t)] = point
            self._responses[int(t)] = point.point
            self._refresh_column(int(t))
        self._gammas = gammas.copy()
        self.evaluations += 1
        if cached is None:
            diag = np.diag(self._u_matrix)
            cross = (self._lams[:, None] * (self._u_matrix - diag[:, None])).T
            terms = (gammas[:, None] - gammas[None, :]) - cross
            mask = ~np.eye(self.k, dtype=bool)
            cached = float(terms[mask].min())
            self._margin_cache[key] = cached
        return cached

    def margin(self, gammas: NDArray[np.float64]) -> float:
        return self.set_thresholds(gammas)

    def points(self, gammas: NDArray[np.float64]) -> tuple[OptimumPoint, ...]:
        self.set_thresholds(np.asarray(gammas, dtype=float))
        return tuple(self._points)

    @property
    def responses(self) -> NDArray[np.float64]:
        return self._responses.copy()


def _identity_result(
    problem: MaskingProblem,
    naive_points: tuple[OptimumPoint, ...],
    naive_margin: MarginReport,
) -> MaskingResult:
    psi = float(naive_margin.threshold_value)
    return MaskingResult(
        eta=problem.eta,
        naive_points=naive_points,
        naive_margin=naive_margin,
        psi_true=psi,
        thresholds_true=problem.thresholds,
        thresholds_masked=problem.thresholds,
        masked_points=naive_points,
        masked_margin=naive_margin,
        psi_masked=psi,
        violation_sq=0.0,
        feasible=True,
    )


def _bisect_shift(
    margin_at,
    gamma: NDArray[np.float64],
    direction: NDArray[np.float64],
    limit: float,
    target: float,
) -> tuple[NDArray[np.float64] | None, float]:
    """Smallest c in (0, limit] with margin(gamma + c * direction) <= target.

    Doubling search for a feasible c, then bisection on the bracket. Returns
    (feasible point or None, best margin seen along the probe).
    """
    best_margin = np.inf
    bracket = None
    c = limit / 4096.0
    last_infeasible = 0.0
    while c <= limit:
        margin = margin_at(gamma + c * direction)
        best_margin = min(best_margin, margin)
        if margin <= target:
            bracket = (last_infeasible, c)
            break
        last_infeasible = c
        c *= 2.0
    if bracket is None and limit > 0:
        margin = margin_at(gamma + limit * direction)
        best_margin = min(best_margin, margin)
        if margin <= target:
            bracket = (last_infeasible, limit)
    if bracket is None:
        return None, best_margin
    lo, hi = bracket
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if margin_at(gamma + mid * direction) <= target:
            hi = mid
        else:
            lo = mid
    point = gamma + hi * direction
    if margin_at(point) > target:  # numerical guard: fall back to the bracket end
        point = gamma + bracket[1] * direction
    return point, best_margin


def _probe_coordinates(naive_margin: MarginReport, k: int, cap: int = 8) -> list[int]:
    """Coordinates involved in the smallest pairwise terms, tightest first.

    At small K this is every coordinate; at large K it limits the number of
    single-threshold probes to the pairs that actually bind the margin.
    """
    terms = np.array(naive_margin.threshold_terms, dtype=float)
    np.fill_diagonal(terms, np.inf)
    order = np.dstack(np.unravel_index(np.argsort(terms, axis=None), terms.shape))[0]
    coords: list[int] = []
    for j, kk in order:
        for c in (int(j), int(kk)):
            if c not in coords:
                coords.append(c)
        if len(coords) >= min(k, cap):
            break
    return coords[: min(k, cap)]


def _pairwise_polish(
    objective,
    constraint,
    x: NDArray[np.float64],
    coords: list[int],
    scale: NDArray[np.float64],
    opts: SolverOptions,
) -> NDArray[np.float64]:
    """Two-coordinate pattern moves with a shrinking step, feasibility-gated."""
    x = np.asarray(x, dtype=float).copy()
    fx = objective(x)
    step = opts.cs_step
    for _ in range(4 * opts.cs_max_passes):
        if step < opts.cs_step_min:
            break
        improved = False
        for a in coords:
            for b in coords:
                if b <= a:
                    continue
                for sa in (-1.0, 1.0):
                    for sb in (-1.0, 1.0):
                        trial = x.copy()
                        trial[a] += sa * step * scale[a]
                        trial[b] += sb * step * scale[b]
                        if constraint(trial) > 0:
                            continue
                        ft = objective(trial)
                        if ft < fx - 1e-15:
                            x, fx = trial, ft
                            improved = True
        if not improved:
            step *= opts.cs_shrink
    return x


def mask_strategy(
    problem: MaskingProblem,
    naive: tuple[tuple[OptimumPoint, ...], MarginReport] | None = None,
    evaluator: _MaskEvaluator | None = None,
) -> MaskingResult:
    """Minimize the squared threshold perturbation subject to the margin cap.

    The outer search is deterministic: bisection on the smallest feasible
    uniform shift gamma - s, plus single-threshold bisection probes in both
    directions (the margin is not monotone in a joint shift, and the optimal
    perturbation is often sparse, so the uniform start alone can strand the
    refinement in a poor basin). Coordinate search then refines the most
    promising feasible starts inside the box (0, 2 gamma]. eta = 0
    short-circuits to the naive responses with zero violation.
    """
    naive_points, naive_margin = naive if naive is not None else naive_responses(problem)
    psi_true = float(naive_margin.threshold_value)

    if problem.eta == 0.0:
        return _identity_result(problem, naive_points, naive_margin)
    if psi_true <= 0.0:
        warnings.warn(
            f"naive margin {psi_true:.3g} is already non-positive; nothing to mask",
            DegenerateMarginWarning,
            stacklevel=2,
        )
        return _identity_result(problem, naive_points, naive_margin)

    target = (1.0 - problem.eta) * psi_true
    gamma = np.array(problem.thresholds, dtype=float)
    if evaluator is None:
        evaluator = _MaskEvaluator(problem, naive_points)

    def objective(gammas: NDArray[np.float64]) -> float:
        return float(np.sum((gammas - gamma) ** 2))

    # start portfolio: uniform shifts plus single-threshold probes
    starts: list[NDArray[np.float64]] = []
    best_margin = psi_true
    ones = np.ones_like(gamma)
    for direction in (-ones, ones):
        point, probe_margin = _bisect_shift(
            evaluator.margin, gamma, direction, 0.999 * float(gamma.min()), target
        )
        best_margin = min(best_margin, probe_margin)
        if point is not None:
            starts.append(point)
            break  # the downward uniform shift suffices when it is feasible
    for t in _probe_coordinates(naive_margin, problem.horizon):
        basis = np.zeros_like(gamma)
        basis[t] = 1.0
        for direction, limit in ((-basis, 0.999 * float(gamma[t])), (basis, float(gamma[t]))):
            point, probe_margin = _bisect_shift(
                evaluator.margin, gamma, direction, limit, target
            )
            best_margin = min(best_margin, probe_margin)
            if point is not None:
                starts.append(point)
    if not starts:
        raise MaskingInfeasibleError(
            f"no feasible threshold perturbation inside (0, 2 gamma]; best margin "
            f"{best_margin:.6g} vs target {target:.6g}",
            best_margin=best_margin,
        )
    starts.sort(key=objective)

    # refinement under the margin cap, from the best few starts
    box_lo = 1e-9
    box_hi = 2.0 * gamma

    def constraint(gammas: NDArray[np.float64]) -> float:
        if np.any(gammas <= box_lo) or np.any(gammas > box_hi):
            return 1.0
        return evaluator.margin(gammas) - target

    n_refine = 3 if problem.horizon <= 10 else 1
    pair_coords = _probe_coordinates(naive_margin, problem.horizon,
                                     cap=6 if problem.horizon <= 10 else 4)
    refined = None
    for start in starts[:n_refine]:
        evaluator.margin(start)  # restore the evaluator onto the start point
        candidate = coordinate_search_minimize(
            objective, constraint, start, problem.opts, scale=gamma
        )
        # single-coordinate moves stall on the slanted constraint surface;
        # paired moves slide along it
        candidate = _pairwise_polish(
            objective, constraint, candidate, pair_coords, gamma, problem.opts
        )
        if refined is None or objective(candidate) < objective(refined) - 1e-15:
            refined = candidate
    assert refined is not None

    masked_points = evaluator.points(refined)
    masked_margin = margin_strategy(
        np.stack([p.point for p in masked_points]),
        problem.utilities,
        refined,
        problem.budget,
    )
    psi_masked = float(masked_margin.threshold_value)
    return MaskingResult(
        eta=problem.eta,
        naive_points=naive_points,
        naive_margin=naive_margin,
        psi_true=psi_true,
        thresholds_true=problem.thresholds,
        thresholds_masked=np.asarray(refined, dtype=float),
        masked_points=masked_points,
        masked_margin=masked_margin,
        psi_masked=psi_masked,
        violation_sq=float(np.sum((refined - gamma) ** 2)),
        feasible=bool(psi_masked <= target + 1e-9),
    )


@dataclass(frozen=True)
class CurvePoint:
    eta: float
    violation: float
    violation_sq: float
    psi_true: float
    psi_masked: float
    feasible: bool
    thresholds_masked: tuple[float, ...] = ()


def violation_curve(
    problem: MaskingProblem,
    eta_grid: list[float] | NDArray[np.float64],
) -> list[CurvePoint | None]:
    """Run the masking optimizer across an eta grid, reusing naive responses.

    Processed in descending eta order: a solution feasible at a larger eta is
    feasible at every smaller one, so carrying the best incumbent guarantees a
    monotone violation curve even when an individual solve lands in a poor
    local optimum. Per-eta failures are recorded as None, not raised.
    """
    etas = [float(e) for e in eta_grid]
    naive = naive_responses(problem)
    shared = _MaskEvaluator(problem, naive[0])
    results: dict[float, MaskingResult | None] = {}
    incumbent: MaskingResult | None = None
    for eta in sorted(set(etas), reverse=True):
        sub = replace(problem, eta=eta)
        try:
            res = mask_strategy(sub, naive=naive, evaluator=shared)
        except (MaskingInfeasibleError, NonConvergedError):
            results[eta] = None
            continue
        incumbent_ok = (
            incumbent is not None
            and incumbent.psi_masked <= (1.0 - eta) * incumbent.psi_true + 1e-9
        )
        if incumbent_ok and (
            not res.feasible or incumbent.violation_sq < res.violation_sq
        ):
            res = replace(incumbent, eta=eta, feasible=True)
        if res.feasible:
            incumbent = res
        results[eta] = res
    out: list[CurvePoint | None] = []
    for eta in etas:
        res = results[eta]
        if res is None:
            out.append(None)
        else:
            out.append(
                CurvePoint(
                    eta, res.violation, res.violation_sq, res.psi_true, res.psi_masked,
                    res.feasible, tuple(float(v) for v in res.thresholds_masked),
                )
            )
    return out


@dataclass(frozen=True)
class MaskVerification:
    ok: bool
    psi_true: float
    psi_masked: float
    target: float
    slack: float


def verify_masking(
    result: MaskingResult, problem: MaskingProblem, slack: float = 1e-6
) -> MaskVerification:
    """Recompute both margins from scratch and check the masking inequality.

    Independent of the optimizer's cached state: the naive responses are
    re-solved cold and the masked responses re-derived from them through the
    same canonical response policy, then both margins are rebuilt.
    """

    def cold(t: int) -> OptimumPoint:
        try:
            return maximize_concave(
                problem.utilities[t], problem.budget, float(problem.thresholds[t]),
                problem.opts, dimension=problem.dimension,
            )
        except NonConvergedError as exc:
            return exc.best_point  # type: ignore[return-value]

    fresh_naive = [cold(t) for t in range(problem.horizon)]
    fresh_masked = [
        masked_response(problem, t, float(result.thresholds_masked[t]), fresh_naive[t])
        for t in range(problem.horizon)
    ]
    psi_true = float(
        margin_strategy(
            np.stack([p.point for p in fresh_naive]),
            problem.utilities,
            problem.thresholds,
            problem.budget,
        ).threshold_value
    )
    psi_masked = float(
        margin_strategy(
            np.stack([p.point for p in fresh_masked]),
            problem.utilities,
            result.thresholds_masked,
            problem.budget,
        ).threshold_value
    )
    target = (1.0 - problem.eta) * psi_true
    return MaskVerification(
        ok=bool(psi_masked <= target + slack),
        psi_true=psi_true,
        psi_masked=psi_masked,
        target=target,
        slack=slack,
    )


def scenario_to_dict(problem: MaskingProblem) -> dict:
    return {
        "schema": SCENARIO_SCHEMA,
        "dimension": problem.dimension,
        "eta": problem.eta,
        "utilities": [u.to_dict() for u in problem.utilities],
        "budget": problem.budget.to_dict(),
        "thresholds": problem.thresholds.tolist(),
    }


def scenario_from_dict(payload: dict, opts: SolverOptions = DEFAULT_OPTIONS) -> MaskingProblem:
    if not isinstance(payload, dict) or payload.get("schema") != SCENARIO_SCHEMA:
        raise SchemaError(f"unknown scenario schema {payload.get('schema')!r}")
    try:
        return MaskingProblem(
            utilities=tuple(function_from_dict(u) for u in payload["utilities"]),
            budget=function_from_dict(payload["budget"]),
            thresholds=np.array(payload["thresholds"], dtype=float),
            eta=float(payload.get("eta", 0.0)),
            dimension=int(payload["dimension"]),
            opts=opts,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed scenario: {exc}") from exc


def save_scenario(problem: MaskingProblem, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(problem), indent=2) + "\n")


def load_scenario(path: str | Path, opts: SolverOptions = DEFAULT_OPTIONS) -> MaskingProblem:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON (line {exc.lineno})") from exc
    return scenario_from_dict(payload, opts)
