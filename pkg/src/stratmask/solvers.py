"""Generic numerical machinery: linear feasibility, constrained maximization,
a brute-force grid oracle, and derivative-free coordinate search.

The feasibility solver is a self-contained dense two-phase simplex; the
systems it sees are O(K^2) rows with 2K variables, far below the scale where
an external LP dependency would pay off.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ConditioningWarning,
    InfeasibleRegionError,
    NonConvergedError,
    UnsupportedDimensionError,
)
from .functions import FunctionSpec, LinearFunction, Vector

_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by the iterative solvers; all exposed through the CLI."""

    kkt_tol: float = 1e-6
    max_iters: int = 5000
    n_starts: int = 8
    grid_n: int = 200
    seed: int = 0
    activity_tol: float = 1e-6
    # coordinate-search schedule (steps are relative to the caller's scale)
    cs_step: float = 0.25
    cs_step_min: float = 1e-5
    cs_max_passes: int = 50
    cs_shrink: float = 0.4
    cs_n_starts: int = 3


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class InequalityRow:
    """coeffs . x  (<= | >=)  rhs"""

    coeffs: tuple[float, ...]
    rhs: float
    sense: str  # "<=" | ">="

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError("sense must be '<=' or '>='")


@dataclass(frozen=True)
class LinearFeasibilityProblem:
    """Find x with all rows satisfied and x_i >= floor_i (floors > 0 encode
    the strictly positive witnesses the rationality tests ask for)."""

    n_vars: int
    rows: tuple[InequalityRow, ...]
    floors: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "floors", tuple(float(f) for f in self.floors))
        if len(self.floors) != self.n_vars:
            raise ValueError("one floor per variable is required")
        for r in self.rows:
            if len(r.coeffs) != self.n_vars:
                raise ValueError("row coefficient count must equal n_vars")


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    witness: NDArray[np.float64] | None
    infeasibility_gap: float  # phase-1 optimum; 0 when feasible
    iterations: int
    max_row_violation: float  # at the witness, when feasible


def _pivot(tableau: NDArray[np.float64], basis: list[int], row: int, col: int) -> None:
    piv = tableau[row, col]
    tableau[row] /= piv
    colvals = tableau[:, col].copy()
    colvals[row] = 0.0
    tableau -= np.outer(colvals, tableau[row])
    basis[row] = col


def solve_feasibility(problem: LinearFeasibilityProblem) -> FeasibilityResult:
    """Two-phase (phase-1 only) dense simplex for the inequality system.

    Variables are shifted by their floors so the standard form has x >= 0;
    rows with negative shifted rhs get artificial variables, and feasibility
    holds iff the artificials can be driven to (numerical) zero.
    """
    n = problem.n_vars
    floors = np.array(problem.floors, dtype=float)
    n_rows = len(problem.rows)
    if n_rows == 0:
        return FeasibilityResult(True, floors.copy(), 0.0, 0, 0.0)

    a = np.zeros((n_rows, n))
    b = np.zeros(n_rows)
    for i, row in enumerate(problem.rows):
        coeffs = np.array(row.coeffs, dtype=float)
        rhs = row.rhs
        if row.sense == ">=":
            coeffs, rhs = -coeffs, -rhs
        a[i] = coeffs
        b[i] = rhs - coeffs @ floors  # shift x = floors + y, y >= 0

    magnitudes = np.abs(a[np.abs(a) > 0])
    if magnitudes.size and magnitudes.max() / magnitudes.min() > 1e12:
        warnings.warn(
            "inequality rows span more than 12 orders of magnitude; "
            "the simplex verdict may be unreliable",
            ConditioningWarning,
            stacklevel=2,
        )

    # Equalities a y + s = b with slack s >= 0; rows with b < 0 are negated and
    # given an artificial variable that starts basic.
    neg = b < 0
    n_art = int(neg.sum())
    n_cols = n + n_rows + n_art
    tableau = np.zeros((n_rows + 1, n_cols + 1))
    basis: list[int] = [0] * n_rows
    art_index = 0
    for i in range(n_rows):
        if neg[i]:
            tableau[i, :n] = -a[i]
            tableau[i, n + i] = -1.0
            art_col = n + n_rows + art_index
            tableau[i, art_col] = 1.0
            tableau[i, -1] = -b[i]
            basis[i] = art_col
            art_index += 1
        else:
            tableau[i, :n] = a[i]
            tableau[i, n + i] = 1.0
            tableau[i, -1] = b[i]
            basis[i] = n + i

    if n_art == 0:
        witness = floors.copy()
        max_violation = _max_violation(problem, witness)
        return FeasibilityResult(True, witness, 0.0, 0, max_violation)

    # Phase-1 objective: minimize the sum of artificials. The objective row
    # holds reduced costs for "min sum(z)" expressed against the basis.
    obj = np.zeros(n_cols + 1)
    obj[n + n_rows : n_cols] = 1.0
    for i in range(n_rows):
        if basis[i] >= n + n_rows:
            obj -= tableau[i]
    tableau[-1] = obj

    max_pivots = 200 * (n_rows + n_cols)
    iterations = 0
    bland_after = 5 * (n_rows + n_cols)
    while iterations < max_pivots:
        costs = tableau[-1, :-1]
        if iterations < bland_after:
            col = int(np.argmin(costs))
            if costs[col] >= -_SIMPLEX_TOL:
                break
        else:  # Bland's rule to break potential cycling
            negatives = np.flatnonzero(costs < -_SIMPLEX_TOL)
            if negatives.size == 0:
                break
            col = int(negatives[0])
        ratios = np.full(n_rows, np.inf)
        positive = tableau[:n_rows, col] > _SIMPLEX_TOL
        ratios[positive] = tableau[:n_rows, -1][positive] / tableau[:n_rows, col][positive]
        row = int(np.argmin(ratios))
        if not np.isfinite(ratios[row]):
            break  # unbounded phase-1 cannot happen; bail defensively
        _pivot(tableau, basis, row, col)
        iterations += 1

    gap = float(-tableau[-1, -1])  # phase-1 optimum (sum of artificials)
    if gap > 1e-7:
        return FeasibilityResult(False, None, gap, iterations, np.inf)

    y = np.zeros(n_cols)
    for i, col in enumerate(basis):
        y[col] = tableau[i, -1]
    witness = floors + y[:n]
    max_violation = _max_violation(problem, witness)
    return FeasibilityResult(True, witness, max(gap, 0.0), iterations, max_violation)


def _max_violation(problem: LinearFeasibilityProblem, x: NDArray[np.float64]) -> float:
    worst = 0.0
    for row in problem.rows:
        lhs = float(np.dot(row.coeffs, x))
        slack = row.rhs - lhs if row.sense == "<=" else lhs - row.rhs
        worst = max(worst, -slack)
    worst = max(worst, float(np.max(np.array(problem.floors) - x, initial=0.0)))
    return worst


@dataclass(frozen=True)
class OptimumPoint:
    point: NDArray[np.float64]
    objective: float
    kkt_residual: float
    active: bool
    iterations: int

    def __post_init__(self):
        pt = np.array(self.point, dtype=float)
        pt.setflags(write=False)
        object.__setattr__(self, "point", pt)


def _linear_budget(g: FunctionSpec, gamma: float) -> tuple[Vector, float] | None:
    """Return (price vector, rhs) when g is linear with positive prices."""
    if isinstance(g, LinearFunction) and np.all(g.coeffs > 0):
        return g.coeffs, gamma - g.offset
    return None


def _project_linear(x: Vector, price: Vector, rhs: float) -> Vector:
    """Euclidean projection onto {beta >= 0, price . beta <= rhs}.

    The projection is max(0, x - tau * price) where tau >= 0 is found exactly
    by scanning the breakpoints x_i / price_i in descending order (waterfill).
    """
    y = np.maximum(x, 0.0)
    if price @ y <= rhs:
        return y
    ratios = x / price
    order = np.argsort(-ratios)
    px = price * x
    pp = price * price
    s1 = 0.0
    s2 = 0.0
    tau = 0.0
    for j, idx in enumerate(order):
        s1 += px[idx]
        s2 += pp[idx]
        tau_j = (s1 - rhs) / s2
        next_ratio = ratios[order[j + 1]] if j + 1 < order.size else -np.inf
        if tau_j <= ratios[idx] and tau_j >= max(next_ratio, 0.0):
            tau = tau_j
            break
    else:
        tau = max((s1 - rhs) / s2, 0.0)
    return np.maximum(x - tau * price, 0.0)


def _retract_feasible(x: Vector, g: FunctionSpec, gamma: float) -> Vector:
    """Clip to the orthant, then ray-scale toward 0 until g(beta) <= gamma."""
    y = np.maximum(x, 0.0)
    if g.value(y) <= gamma:
        return y
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g.value(mid * y) <= gamma:
            lo = mid
        else:
            hi = mid
    return lo * y


def kkt_residual_max(
    beta: Vector,
    grad_u: Vector,
    grad_g: Vector,
    constraint_gap: float,
    activity_tol: float,
) -> float:
    """Stationarity residual for max u s.t. g <= gamma, beta >= 0.

    With multiplier lam fitted on the coordinates strictly inside the orthant,
    the residual collects the free-coordinate gradient mismatch, the sign
    violations on the boundary coordinates, and any constraint violation.
    """
    inside = beta > 1e-10
    lam = 0.0
    if abs(constraint_gap) <= activity_tol:
        gg = grad_g[inside]
        if gg.size and float(gg @ gg) > 1e-300:
            lam = max(0.0, float(gg @ grad_u[inside]) / float(gg @ gg))
    resid = grad_u - lam * grad_g
    score = 0.0
    if inside.any():
        score = float(np.max(np.abs(resid[inside])))
    if (~inside).any():
        score = max(score, float(np.max(np.maximum(resid[~inside], 0.0), initial=0.0)))
    score = max(score, max(0.0, -constraint_gap))
    return score / (1.0 + float(np.linalg.norm(grad_u)))


def _start_points(
    g: FunctionSpec,
    gamma: float,
    m: int,
    opts: SolverOptions,
    warm: Vector | None,
    linear: tuple[Vector, float] | None,
) -> list[Vector]:
    """Deterministic start set; a warm start counts toward opts.n_starts."""
    rng = np.random.default_rng(opts.seed)
    starts: list[Vector] = []
    if warm is not None:
        starts.append(_retract_feasible(np.asarray(warm, dtype=float), g, gamma))
    if linear is not None:
        price, rhs = linear
        starts.append(rhs / (m * price))  # interior point below the face
        while len(starts) < opts.n_starts:
            w = rng.dirichlet(np.ones(m))
            starts.append(rhs * w / price)
    else:
        starts.append(_retract_feasible(np.full(m, 1e-3), g, gamma))
        while len(starts) < opts.n_starts:
            direction = rng.dirichlet(np.ones(m))
            # scale the ray onto the boundary g = gamma, or keep it if interior
            hi = 1.0
            for _ in range(60):
                if g.value(direction * hi) > gamma:
                    break
                hi *= 2.0
            starts.append(_retract_feasible(direction * hi, g, gamma))
    return starts[: max(1, opts.n_starts)]


def maximize_concave(
    u: FunctionSpec,
    g: FunctionSpec,
    gamma: float,
    opts: SolverOptions = DEFAULT_OPTIONS,
    warm_start: Vector | None = None,
    dimension: int | None = None,
) -> OptimumPoint:
    """Maximize u over {beta >= 0, g(beta) <= gamma}.

    Projected-gradient ascent with backtracking line search, multi-started
    from feasible Dirichlet-like draws (deterministic given opts.seed). Linear
    utility under a linear budget short-circuits to the exact vertex solution.
    Raises NonConvergedError when the best start ends above opts.kkt_tol.
    """
    linear = _linear_budget(g, gamma)
    if dimension is None:
        if linear is not None:
            dimension = linear[0].size
        elif warm_start is not None:
            dimension = len(warm_start)
        elif isinstance(u, LinearFunction):
            dimension = u.coeffs.size
        else:
            raise ValueError("dimension must be given for non-linear budget functions")
    m = dimension

    if g.value(np.zeros(m)) > gamma + 1e-12:
        raise InfeasibleRegionError(
            f"feasible set is empty: g(0) = {g.value(np.zeros(m)):.6g} > {gamma:.6g}"
        )

    if linear is not None and isinstance(u, LinearFunction):
        return _vertex_maximize(u, linear[0], linear[1], gamma, g)

    best: OptimumPoint | None = None
    for start in _start_points(g, gamma, m, opts, warm_start, linear):
        candidate = _pgd_single(u, g, gamma, start, opts, linear)
        if best is None or candidate.objective > best.objective + 1e-15:
            best = candidate
    assert best is not None
    if best.kkt_residual > opts.kkt_tol:
        raise NonConvergedError(
            f"projected gradient stopped at KKT residual {best.kkt_residual:.3g} "
            f"> {opts.kkt_tol:.3g}",
            best_point=best,
            residual=best.kkt_residual,
        )
    return best


def _vertex_maximize(
    u: LinearFunction, price: Vector, rhs: float, gamma: float, g: FunctionSpec
) -> OptimumPoint:
    if rhs < 0:
        raise InfeasibleRegionError("budget right-hand side is negative")
    ratios = u.coeffs / price
    i_star = int(np.argmax(ratios))  # ties break to the lowest index
    beta = np.zeros(price.size)
    if ratios[i_star] > 0:
        beta[i_star] = rhs / price[i_star]
    active = abs(g.value(beta) - gamma) <= 1e-9 * max(1.0, abs(gamma))
    return OptimumPoint(beta, u.value(beta), 0.0, active, 0)


def _pgd_single(
    u: FunctionSpec,
    g: FunctionSpec,
    gamma: float,
    start: Vector,
    opts: SolverOptions,
    linear: tuple[Vector, float] | None,
) -> OptimumPoint:
    if linear is not None:
        price, rhs = linear
        project = lambda x: _project_linear(x, price, rhs)
        grad_g = price  # constant for a linear budget
    else:
        project = lambda x: _retract_feasible(x, g, gamma)
        grad_g = None

    beta = project(np.asarray(start, dtype=float))
    value = u.value(beta)
    grad = u.gradient(beta)
    gnorm = math.sqrt(float(grad @ grad))
    step = 1.0 / max(gnorm, 1e-12)
    it = 0
    stall = 0
    for it in range(1, opts.max_iters + 1):
        if it % 3 == 1:  # the KKT check costs a g-gradient; amortize it
            gap = gamma - g.value(beta)
            gg = grad_g if grad_g is not None else g.gradient(beta)
            if kkt_residual_max(beta, grad, gg, gap, opts.activity_tol) <= 0.5 * opts.kkt_tol:
                break
        moved = False
        trial = step
        for _ in range(30):
            candidate = project(beta + trial * grad)
            cand_value = u.value(candidate)
            if cand_value > value + 1e-14 * (1.0 + abs(value)):
                moved = True
                break
            trial *= 0.25
        if not moved:
            stall += 1
            if stall >= 2:
                break
            step = 1.0 / max(gnorm, 1e-12)
            continue
        stall = 0
        new_grad = u.gradient(candidate)
        s = candidate - beta
        y = grad - new_grad  # ascent: curvature pairs with the gradient drop
        sy = float(s @ y)
        ss = float(s @ s)
        step = ss / sy if sy > 1e-18 else trial * 4.0  # Barzilai-Borwein, safeguarded
        step = min(max(step, 1e-14), 1e14)
        beta, value, grad = candidate, cand_value, new_grad
        gnorm = math.sqrt(float(grad @ grad))

    gap = gamma - g.value(beta)
    gg = grad_g if grad_g is not None else g.gradient(beta)
    resid = kkt_residual_max(beta, grad, gg, gap, opts.activity_tol)
    active = abs(gap) <= opts.activity_tol * max(1.0, abs(gamma))
    return OptimumPoint(beta, value, resid, active, it)


def grid_oracle_maximize(
    u: FunctionSpec,
    g: FunctionSpec,
    gamma: float,
    grid_n: int = 200,
    dimension: int | None = None,
) -> OptimumPoint:
    """Exhaustive grid argmax over the feasible set's bounding box (m <= 3)."""
    if dimension is None:
        if isinstance(g, LinearFunction):
            dimension = g.coeffs.size
        elif isinstance(u, LinearFunction):
            dimension = u.coeffs.size
        else:
            raise ValueError("dimension must be given when neither function is linear")
    m = dimension
    if m > 3:
        raise UnsupportedDimensionError(f"grid oracle supports m <= 3, got m = {m}")
    if g.value(np.zeros(m)) > gamma + 1e-12:
        raise InfeasibleRegionError("feasible set is empty at the origin")

    uppers = np.empty(m)
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        hi = 1.0
        for _ in range(200):
            if g.value(hi * e) > gamma:
                break
            hi *= 2.0
        else:
            raise InfeasibleRegionError("feasible set appears unbounded along an axis")
        lo = 0.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if g.value(mid * e) <= gamma:
                lo = mid
            else:
                hi = mid
        uppers[i] = hi

    axes = [np.linspace(0.0, uppers[i], grid_n) for i in range(m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([ax.ravel() for ax in mesh], axis=1)
    feasible = g.values(points) <= gamma + 1e-12
    if not feasible.any():
        raise InfeasibleRegionError("no grid point is feasible")
    candidates = points[feasible]
    values = u.values(candidates)
    idx = int(np.argmax(values))
    beta = candidates[idx]
    spacing = float(np.linalg.norm(uppers / max(grid_n - 1, 1)))
    cell_tol = float(np.linalg.norm(g.gradient(beta))) * spacing + 1e-9
    active = abs(g.value(beta) - gamma) <= cell_tol
    return OptimumPoint(beta, float(values[idx]), np.nan, active, candidates.shape[0])


def coordinate_search_minimize(
    objective: Callable[[Vector], float],
    constraint: Callable[[Vector], float],
    x0: Vector,
    opts: SolverOptions = DEFAULT_OPTIONS,
    scale: Vector | None = None,
) -> NDArray[np.float64]:
    """Derivative-free coordinate descent under constraint(x) <= 0.

    Starts must be feasible; infeasible trial moves are rejected outright.
    Multi-start with a shrinking step schedule, deterministic given opts.seed.
    The returned point is feasible with objective <= objective(x0).
    """
    x0 = np.asarray(x0, dtype=float)
    if constraint(x0) > 0:
        raise InfeasibleRegionError(
            "coordinate search requires a feasible initializer; supply x0 with constraint(x0) <= 0"
        )
    scale = np.ones_like(x0) if scale is None else np.asarray(scale, dtype=float)
    rng = np.random.default_rng(opts.seed)

    def descend(start: Vector) -> tuple[Vector, float]:
        x = start.copy()
        fx = objective(x)
        step = opts.cs_step
        for _ in range(opts.cs_max_passes):
            improved = False
            for i in range(x.size):
                for direction in (+1.0, -1.0):
                    width = step * scale[i] * direction
                    trial = x.copy()
                    trial[i] += width
                    if constraint(trial) > 0:
                        continue
                    ft = objective(trial)
                    if ft < fx - 1e-15:
                        # ride the descent direction while it keeps paying
                        while True:
                            width *= 2.0
                            nxt = trial.copy()
                            nxt[i] += width
                            if constraint(nxt) > 0:
                                break
                            fn = objective(nxt)
                            if fn >= ft - 1e-15:
                                break
                            trial, ft = nxt, fn
                        x, fx = trial, ft
                        improved = True
                        break
            if not improved:
                step *= opts.cs_shrink
                if step < opts.cs_step_min:
                    break
        return x, fx

    best_x, best_f = descend(x0)
    for _ in range(max(0, opts.cs_n_starts - 1)):
        jitter = x0 + rng.normal(scale=0.1, size=x0.size) * scale
        if constraint(jitter) > 0:
            continue
        x, fx = descend(jitter)
        if fx < best_f - 1e-15:
            best_x, best_f = x, fx
    return best_x


def replace_options(opts: SolverOptions, **kwargs) -> SolverOptions:
    """Functional update helper (dataclasses.replace re-export)."""
    return replace(opts, **kwargs)
