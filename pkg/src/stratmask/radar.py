"""Cognitive-radar case study: SINR waveform utility under a power budget.

The radar responds to probe t with a per-channel power vector maximizing
SINR(beta) = beta'Q beta / (beta'P_t beta + zeta) subject to the linear cost
p . beta <= gamma_t. Against an adversary reconstructing that budget, the
masking optimizer trades SINR loss for a poor reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import StratmaskError
from .functions import LinearFunction, QuadraticFractional, Vector
from .masking import CurvePoint, MaskingProblem, violation_curve
from .solvers import DEFAULT_OPTIONS, OptimumPoint, SolverOptions, maximize_concave


def sinr(signal: Vector, interference: Vector, noise_power: float, beta: Vector) -> float:
    """beta'Q beta / (beta'P beta + zeta); zero response gives exactly zero."""
    b = np.asarray(beta, dtype=float)
    return float((b @ signal @ b) / (b @ interference @ b + noise_power))


def sinr_spec(signal: Vector, interference: Vector, noise_power: float) -> QuadraticFractional:
    """House the SINR field (value + quotient-rule gradient) as a function spec."""
    return QuadraticFractional(signal, interference, noise_power)


@dataclass(frozen=True)
class RadarConfig:
    """Scenario sampling parameters; defaults reproduce the case-study setup.

    The threshold range is the one free parameter of the reproduction (the
    source setup leaves the budget levels unspecified). The default puts the
    transmit power in the SINR-saturated regime, where the value of power is
    concave in the budget; below that regime (thresholds near 1) the naive
    strategy-test margin is typically negative and there is nothing to mask.
    """

    k: int = 100
    m: int = 6
    signal_diag: float = 5.0
    interference_diag: tuple[float, float] = (1.0, 3.0)
    interference_offdiag: float = -0.05
    price_range: tuple[float, float] = (1.0, 4.0)
    threshold_range: tuple[float, float] = (16.0, 32.0)
    noise_power: float = 1.0


@dataclass(frozen=True, eq=False)
class RadarScenario:
    horizon: int
    dimension: int
    signal: NDArray[np.float64]
    interferences: tuple[NDArray[np.float64], ...]
    noise_power: float
    price: NDArray[np.float64]
    thresholds: NDArray[np.float64]

    def __post_init__(self):
        for name in ("signal", "price", "thresholds"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self, "interferences", tuple(np.array(p, dtype=float) for p in self.interferences)
        )
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")
        if np.any(self.price <= 0) or np.any(self.thresholds <= 0):
            raise ValueError("price and thresholds must be strictly positive")
        np.linalg.cholesky(self.signal)
        for p in self.interferences:
            np.linalg.cholesky(p)

    def utility(self, t: int) -> QuadraticFractional:
        return sinr_spec(self.signal, self.interferences[t], self.noise_power)

    def utilities(self) -> tuple[QuadraticFractional, ...]:
        return tuple(self.utility(t) for t in range(self.horizon))

    def budget(self) -> LinearFunction:
        return LinearFunction(self.price)


def sample_scenario(config: RadarConfig, rng: np.random.Generator) -> RadarScenario:
    """Draw a scenario: Q = signal_diag * I, diagonal-dominant P_t, random costs.

    Each interference matrix is Cholesky-verified and resampled on failure
    (the default parameters are diagonally dominant, so failures mean a
    misconfigured range).
    """
    q = config.signal_diag * np.eye(config.m)
    interferences = []
    lo, hi = config.interference_diag
    for _ in range(config.k):
        for attempt in range(100):
            p = np.full((config.m, config.m), config.interference_offdiag)
            np.fill_diagonal(p, rng.uniform(lo, hi, size=config.m))
            try:
                np.linalg.cholesky(p)
                interferences.append(p)
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise StratmaskError(
                "interference sampling failed positive-definiteness 100 times; "
                "check the configured ranges"
            )
    price = rng.uniform(*config.price_range, size=config.m)
    thresholds = rng.uniform(*config.threshold_range, size=config.k)
    return RadarScenario(
        config.k, config.m, q, tuple(interferences), config.noise_power, price, thresholds
    )


def radar_response(
    scenario: RadarScenario,
    t: int,
    gamma: float | None = None,
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> OptimumPoint:
    """Waveform power maximizing SINR at time t under p . beta <= gamma."""
    gamma = float(scenario.thresholds[t]) if gamma is None else float(gamma)
    return maximize_concave(
        scenario.utility(t), scenario.budget(), gamma, opts, dimension=scenario.dimension
    )


def monotonicity_report(
    scenario: RadarScenario,
    n_pairs: int = 1000,
    rng: np.random.Generator | None = None,
) -> dict[int, int]:
    """Violation counts of componentwise SINR monotonicity per time index.

    SINR always increases along rays from the origin (so budget constraints
    bind at the optimum), but componentwise monotonicity can fail when the
    interference diagonal is spread out: raising power on a high-interference
    channel can lower the ratio. Nonzero counts flag the scenario rather than
    invalidate it.
    """
    from .functions import spot_check_monotone

    rng = rng or np.random.default_rng(0)
    upper = float(scenario.thresholds.max()) / scenario.price
    report = {}
    for t in range(scenario.horizon):
        violations = spot_check_monotone(
            scenario.utility(t), np.zeros(scenario.dimension), upper, n_pairs, rng
        )
        report[t] = len(violations)
    return report


def masking_problem(
    scenario: RadarScenario, eta: float, opts: SolverOptions = DEFAULT_OPTIONS
) -> MaskingProblem:
    return MaskingProblem(
        utilities=scenario.utilities(),
        budget=scenario.budget(),
        thresholds=scenario.thresholds,
        eta=eta,
        dimension=scenario.dimension,
        opts=opts,
    )


@dataclass(frozen=True)
class Fig2Result:
    curve: list[CurvePoint | None]
    eta_grid: list[float]
    spearman: float
    endpoint_increase: bool
    csv_path: str | None = None
    svg_path: str | None = None


def default_eta_grid() -> list[float]:
    """0.05 .. 0.95 in steps of 0.05 (19 points)."""
    return [round(0.05 * i, 10) for i in range(1, 20)]


def run_fig2_experiment(
    config: RadarConfig,
    rng: np.random.Generator,
    eta_grid: list[float] | None = None,
    opts: SolverOptions = DEFAULT_OPTIONS,
    out_dir: str | None = None,
    csv_comments: list[str] | None = None,
) -> Fig2Result:
    """Sample a scenario, sweep the masking extent, and report the trend.

    When ``out_dir`` is given, writes curve.csv and curve.svg there (the CSV
    carries eta, violation norm, and both margins per row).
    """
    from .stats import spearman_rank_correlation

    eta_grid = default_eta_grid() if eta_grid is None else [float(e) for e in eta_grid]
    scenario = sample_scenario(config, rng)
    problem = masking_problem(scenario, eta=eta_grid[0], opts=opts)
    curve = violation_curve(problem, eta_grid)
    solved = [(e, pt) for e, pt in zip(eta_grid, curve) if pt is not None]
    if len(solved) >= 2:
        rho = spearman_rank_correlation(
            [e for e, _ in solved], [pt.violation for _, pt in solved]
        )
        endpoint = solved[-1][1].violation > solved[0][1].violation
    else:
        rho, endpoint = 0.0, False

    csv_path = svg_path = None
    if out_dir is not None:
        from pathlib import Path

        from .plotting import render_line_svg
        from .report import write_csv

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = str(out / "curve.csv")
        svg_path = str(out / "curve.svg")
        rows = []
        for e, pt in zip(eta_grid, curve):
            if pt is None:
                rows.append([e, "", "", "", "gap"])
            else:
                rows.append([e, pt.violation, pt.psi_true, pt.psi_masked, int(pt.feasible)])
        write_csv(
            csv_path,
            comments=(csv_comments or []) + [f"spearman: {rho!r}", f"endpoint_increase: {endpoint}"],
            header=["eta", "violation_norm", "psi_true", "psi_masked", "feasible"],
            rows=rows,
        )
        xs = [e for e, pt in zip(eta_grid, curve) if pt is not None]
        ys = [pt.violation for pt in curve if pt is not None]
        render_line_svg(
            xs,
            ys,
            xlabel="masking extent eta",
            ylabel="constraint violation (euclidean)",
            title="Deliberate constraint violation vs masking extent",
            path=svg_path,
        )
    return Fig2Result(curve, eta_grid, rho, endpoint, csv_path, svg_path)
