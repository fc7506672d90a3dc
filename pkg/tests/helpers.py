"""Shared builders and brute-force oracles for the test suite."""

from __future__ import annotations

import numpy as np

from stratmask.dataset import kkt_multiplier
from stratmask.functions import LinearFunction, QuadraticFractional
from stratmask.masking import MaskingProblem, masked_response
from stratmask.solvers import SolverOptions
from stratmask.utility_test import LEVEL_FLOOR, MULTIPLIER_FLOOR


def sinr_masking_problem(
    k: int,
    seed: int,
    eta: float = 0.5,
    zeta: float = 0.01,
    threshold_range: tuple[float, float] = (1.0, 2.0),
    opts: SolverOptions | None = None,
) -> MaskingProblem:
    """m=2 SINR-style masking instance with O(1) thresholds.

    zeta = 0.01 keeps the power in the saturated regime at these budget
    levels, where the naive strategy margin is positive and masking is
    nondegenerate.
    """
    rng = np.random.default_rng(seed)
    utilities = []
    for _ in range(k):
        q = np.diag(rng.uniform(2.0, 8.0, 2))
        p = np.full((2, 2), -0.05)
        np.fill_diagonal(p, rng.uniform(1.0, 3.0, 2))
        utilities.append(QuadraticFractional(q, p, zeta))
    price = rng.uniform(1.0, 4.0, 2)
    thresholds = rng.uniform(*threshold_range, k)
    if opts is None:
        opts = SolverOptions(seed=seed, n_starts=4, max_iters=2000)
    return MaskingProblem(tuple(utilities), LinearFunction(price), thresholds, eta, 2, opts)


def threshold_grid_oracle(
    problem: MaskingProblem,
    naive,
    grid_n: int = 60,
) -> tuple[float, np.ndarray]:
    """Exhaustive search over a per-axis threshold grid (K=3 only).

    Responses come from the same canonical per-threshold solve the masking
    optimizer uses, so the oracle and the solver optimize over the identical
    feasible set. Returns (best squared objective, best thresholds).
    """
    k = problem.horizon
    assert k == 3, "the exhaustive oracle is wired for K = 3"
    gam = np.asarray(problem.thresholds, dtype=float)
    target = (1.0 - problem.eta) * float(naive[1].threshold_value)
    axes = [np.linspace(2.0 * g / grid_n, 2.0 * g, grid_n) for g in gam]

    u_vals = np.empty((k, k, grid_n))  # u_vals[kk, t, i] = u_kk(response_{t,i})
    lam = np.empty((k, grid_n))
    for t in range(k):
        pts = np.stack(
            [
                masked_response(problem, t, float(axes[t][i]), naive[0][t]).point
                for i in range(grid_n)
            ]
        )
        for kk in range(k):
            u_vals[kk, t] = problem.utilities[kk].values(pts)
        for i in range(grid_n):
            lam[t, i] = kkt_multiplier(
                problem.budget.gradient(pts[i]), problem.utilities[t].gradient(pts[i])
            )

    idxs = np.arange(grid_n)
    pairs = [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)]
    best = np.inf
    best_gammas = gam.copy()
    for i1 in range(grid_n):
        for i2 in range(grid_n):
            gs = [np.full(grid_n, axes[0][i1]), np.full(grid_n, axes[1][i2]), axes[2]]
            ii = [np.full(grid_n, i1), np.full(grid_n, i2), idxs]
            margin = np.full(grid_n, np.inf)
            for j, kk in pairs:
                term = gs[j] - gs[kk] - lam[kk, ii[kk]] * (
                    u_vals[kk, j, ii[j]] - u_vals[kk, kk, ii[kk]]
                )
                margin = np.minimum(margin, term)
            feasible = margin <= target
            if not feasible.any():
                continue
            obj = (
                (gs[0][0] - gam[0]) ** 2
                + (gs[1][0] - gam[1]) ** 2
                + (axes[2][feasible] - gam[2]) ** 2
            )
            j_best = int(np.argmin(obj))
            if obj[j_best] < best:
                best = float(obj[j_best])
                i3 = int(np.flatnonzero(feasible)[j_best])
                best_gammas = np.array([axes[0][i1], axes[1][i2], axes[2][i3]])
    return best, best_gammas


def sample_afriat_witnesses(dataset, g_matrix, rng, n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Random points of the Afriat feasibility polytope (floors included).

    Multipliers are drawn above their normalization floor; levels are then
    shortest-path potentials of the induced difference-constraint graph, so
    every accepted sample satisfies the full inequality system.
    """
    k = dataset.horizon
    out: list[tuple[np.ndarray, np.ndarray]] = []
    attempts = 0
    while len(out) < n and attempts < 200 * n:
        attempts += 1
        lam = rng.uniform(MULTIPLIER_FLOOR, 4.0, size=k)
        weights = lam[:, None] * g_matrix
        dist = rng.uniform(0.0, 1.0, size=k)
        for _ in range(k + 1):
            changed = False
            for t in range(k):
                for s in range(k):
                    if s != t and dist[s] > dist[t] + weights[t, s] + 1e-15:
                        dist[s] = dist[t] + weights[t, s]
                        changed = True
            if not changed:
                break
        else:
            continue  # negative cycle: this multiplier draw admits no levels
        levels = dist - dist.min() + rng.uniform(LEVEL_FLOOR, 1.0)
        feasible = all(
            levels[s] - levels[t] - lam[t] * g_matrix[t, s] <= 1e-9
            for t in range(k)
            for s in range(k)
            if s != t
        )
        if feasible:
            out.append((levels, lam))
    return out
