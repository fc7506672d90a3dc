"""Synthetic dataset and scenario generators with analytic ground truth.

Rational datasets come from closed-form optima (no numeric maximizer in the
loop), so they are exactly rational up to floating-point rounding. Irrational
datasets perturb a rational one until the relevant axiom fails decisively,
which guarantees genuinely violating instances rather than borderline noise.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .dataset import Dataset, STRATEGY_TEST, UTILITY_TEST
from .functions import CallbackFunction, FunctionSpec, LinearFunction
from .strategy_test import transformed_dataset
from .utility_test import constraint_matrix, transitive_closure


def cobb_douglas_utility(alpha: NDArray[np.float64]) -> CallbackFunction:
    """u(beta) = prod beta_i^alpha_i with alpha on the simplex.

    Coordinates are clamped at 1e-12 inside the callbacks so values and
    gradients stay finite on the boundary of the orthant.
    """
    alpha = np.array(alpha, dtype=float)
    alpha.setflags(write=False)

    def value(beta):
        b = np.maximum(beta, 1e-12)
        return float(np.prod(b**alpha))

    def grad(beta):
        b = np.maximum(beta, 1e-12)
        return alpha * np.prod(b**alpha) / b

    def values(points):
        pts = np.maximum(points, 1e-12)
        return np.prod(pts**alpha, axis=1)

    return CallbackFunction(value, grad, monotone_hint=True, values_fn=values)


def log_linear_utility(alpha: NDArray[np.float64]) -> CallbackFunction:
    """u(beta) = sum alpha_i log beta_i (clamped away from zero)."""
    alpha = np.array(alpha, dtype=float)
    alpha.setflags(write=False)

    def value(beta):
        return float(alpha @ np.log(np.maximum(beta, 1e-12)))

    def grad(beta):
        return alpha / np.maximum(beta, 1e-12)

    def values(points):
        return np.log(np.maximum(points, 1e-12)) @ alpha

    return CallbackFunction(value, grad, monotone_hint=True, values_fn=values)


def rational_utility_dataset(
    k: int,
    m: int,
    rng: np.random.Generator,
    family: str = "cobb-douglas",
) -> tuple[Dataset, FunctionSpec]:
    """Utility-test data from exact demand under random linear budgets.

    Budgets are g_t(beta) = a_t . beta - 1 with a_t ~ Unif(0.5, 2); both
    supported families share the demand beta_t,i = alpha_i / a_t,i, which
    spends the budget exactly, so the activity precondition holds to rounding.
    """
    alpha = rng.dirichlet(np.ones(m))
    alpha = np.maximum(alpha, 0.05)
    alpha = alpha / alpha.sum()
    if family == "cobb-douglas":
        u_true: FunctionSpec = cobb_douglas_utility(alpha)
    elif family == "log-linear":
        u_true = log_linear_utility(alpha)
    else:
        raise ValueError(f"unknown utility family {family!r}")
    prices = rng.uniform(0.5, 2.0, size=(k, m))
    responses = alpha[None, :] / prices
    budgets = tuple(LinearFunction(prices[t], -1.0) for t in range(k))
    return Dataset(UTILITY_TEST, budgets, responses), u_true


def _utility_garp_strictness(d: Dataset, tol: float = 1e-9) -> float:
    """Largest strict-violation magnitude behind a GARP failure (0 if passing)."""
    g = constraint_matrix(d)
    closure = transitive_closure(g <= tol)
    strict = np.maximum(-g.T, 0.0)  # strict[t, s] = max(0, -g_s(beta_t))
    strict[~closure] = 0.0
    np.fill_diagonal(strict, 0.0)
    return float(strict.max())


def irrational_utility_dataset(
    k: int,
    m: int,
    rng: np.random.Generator,
    min_strictness: float = 1e-6,
    max_attempts: int = 1200,
) -> Dataset:
    """Perturb a rational dataset until GARP fails by at least min_strictness.

    Perturbations reshuffle the composition of each bundle (multiplicative
    Unif(0.5, 1.5) noise, or a response swap) and then rescale back onto the
    period budget line so the activity invariant survives. A base whose budget
    lines barely cross admits no violation, so a fresh base is drawn every
    round of failed attempts.
    """
    base, _ = rational_utility_dataset(k, m, rng)
    prices = np.stack([f.coeffs for f in base.functions])  # type: ignore[attr-defined]
    for attempt in range(max_attempts):
        if attempt and attempt % 60 == 0:
            base, _ = rational_utility_dataset(k, m, rng)
            prices = np.stack([f.coeffs for f in base.functions])  # type: ignore[attr-defined]
        responses = np.array(base.responses)
        if attempt % 2 == 1 and k >= 2:
            i, j = rng.choice(k, size=2, replace=False)
            responses[[i, j]] = responses[[j, i]]
        noise = rng.uniform(0.5, 1.5, size=responses.shape)
        responses = responses * noise
        responses /= np.einsum("tm,tm->t", prices, responses)[:, None]  # back onto a_t . b = 1
        candidate = Dataset(UTILITY_TEST, base.functions, responses)
        if _utility_garp_strictness(candidate) >= min_strictness:
            return candidate
    raise RuntimeError(f"no decisive GARP violation found in {max_attempts} attempts")


def rational_strategy_dataset(
    k: int,
    m: int,
    rng: np.random.Generator,
) -> tuple[Dataset, LinearFunction, NDArray[np.float64]]:
    """Strategy-test data from exact vertex optima of linear utilities.

    Utilities a_t ~ Unif(0.5, 2), common price p ~ Unif(1, 4), thresholds
    gamma_t ~ Unif(1, 2); the response concentrates the whole budget on the
    channel with the best value-per-cost ratio.
    """
    price = rng.uniform(1.0, 4.0, size=m)
    thresholds = rng.uniform(1.0, 2.0, size=k)
    coeffs = rng.uniform(0.5, 2.0, size=(k, m))
    responses = np.zeros((k, m))
    for t in range(k):
        i_star = int(np.argmax(coeffs[t] / price))
        responses[t, i_star] = thresholds[t] / price[i_star]
    utilities = tuple(LinearFunction(coeffs[t]) for t in range(k))
    return Dataset(STRATEGY_TEST, utilities, responses), LinearFunction(price), thresholds


def concave_strategy_dataset(
    k: int,
    m: int,
    rng: np.random.Generator,
) -> tuple[Dataset, LinearFunction, NDArray[np.float64]]:
    """Strategy-test data with interior optima of concave utilities.

    Cobb-Douglas utilities with per-time weights under a common linear budget
    have the closed-form demand beta_t = alpha_t * gamma_t / price, which sits
    strictly inside the orthant with exactly collinear gradients at the
    optimum. On such data the fitted multipliers are the true ones and the
    strategy margin is provably nonnegative.
    """
    price = rng.uniform(1.0, 4.0, size=m)
    thresholds = rng.uniform(1.0, 2.0, size=k)
    utilities = []
    responses = np.zeros((k, m))
    for t in range(k):
        alpha = rng.dirichlet(np.ones(m))
        alpha = np.maximum(alpha, 0.1)
        alpha = alpha / alpha.sum()
        utilities.append(cobb_douglas_utility(alpha))
        responses[t] = alpha * thresholds[t] / price
    return (
        Dataset(STRATEGY_TEST, tuple(utilities), responses),
        LinearFunction(price),
        thresholds,
    )


def _strategy_garp_strictness(d: Dataset, tol: float = 1e-9) -> float:
    return _utility_garp_strictness(transformed_dataset(d), tol)


def irrational_strategy_dataset(
    k: int,
    m: int,
    rng: np.random.Generator,
    min_strictness: float = 1e-6,
    max_attempts: int = 1200,
) -> Dataset:
    """Perturb vertex data until the transformed-data GARP fails decisively."""
    base, _, _ = rational_strategy_dataset(k, m, rng)
    for attempt in range(max_attempts):
        if attempt and attempt % 60 == 0:
            base, _, _ = rational_strategy_dataset(k, m, rng)
        responses = np.array(base.responses)
        if attempt % 2 == 1 and k >= 2:
            i, j = rng.choice(k, size=2, replace=False)
            responses[[i, j]] = responses[[j, i]]
        responses = responses * rng.uniform(0.5, 1.5, size=responses.shape)
        # spread some mass off the vertex so utilities can disagree
        responses += rng.uniform(0.0, 0.2, size=responses.shape) * responses.max(
            axis=1, keepdims=True
        )
        candidate = Dataset(STRATEGY_TEST, base.functions, responses)
        if _strategy_garp_strictness(candidate) >= min_strictness:
            return candidate
    raise RuntimeError(f"no decisive violation found in {max_attempts} attempts")


def sample_linear_scenario(
    k: int,
    m: int,
    rng: np.random.Generator,
) -> tuple[tuple[LinearFunction, ...], LinearFunction, NDArray[np.float64]]:
    """Random linear utilities over a common linear budget, for masking studies."""
    price = rng.uniform(1.0, 4.0, size=m)
    thresholds = rng.uniform(1.0, 2.0, size=k)
    utilities = tuple(LinearFunction(rng.uniform(0.5, 2.0, size=m)) for _ in range(k))
    return utilities, LinearFunction(price), thresholds
