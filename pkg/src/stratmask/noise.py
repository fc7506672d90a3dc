"""Monte Carlo study of masking under noisy utility measurements.

The decision maker only sees u_t(beta) + delta_t . beta with Gaussian
delta_t. Each trial runs the full masking pipeline against the noisy
utilities and then asks whether the margin, re-evaluated with the true
utilities, still clears (1 - eta) times the noiseless naive margin. The
empirical failure rate is compared against the normal-CDF bound built from
three empirically estimated constants: a gradient-smoothness constant, the
almost-sure range of the pairwise terms, and a gradient-ratio constant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .errors import (
    BoundHeuristicWarning,
    KappaDegenerateError,
    StratmaskError,
    StudyUnreliableError,
)
from .functions import CallbackFunction, FunctionSpec, LinearFunction, Vector
from .masking import MaskingProblem, MaskingResult, mask_strategy
from .stats import standard_normal_cdf, wilson_interval
from .strategy_test import margin_strategy

#: multiplier reported alongside the raw empirical maxima for the almost-sure
#: constants (range and gradient-ratio); the bound itself uses the raw values
SAFETY_FACTOR = 1.1


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Zero-mean Gaussian perturbation of the utility gradient, cov Sigma."""

    covariance: NDArray[np.float64]
    seed: int = 0

    def __post_init__(self):
        cov = np.array(self.covariance, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be a square matrix")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals.min() < -1e-10:
            raise ValueError("covariance must be positive semidefinite")
        if np.trace(cov) <= 0:
            raise ValueError("covariance must have positive trace")
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def isotropic(cls, sigma2: float, dimension: int, seed: int = 0) -> "NoiseModel":
        return cls(sigma2 * np.eye(dimension), seed)

    @property
    def dimension(self) -> int:
        return self.covariance.shape[0]

    @property
    def is_isotropic(self) -> bool:
        scale = np.trace(self.covariance) / self.dimension
        return bool(np.allclose(self.covariance, scale * np.eye(self.dimension), atol=1e-12))

    def factor(self) -> NDArray[np.float64]:
        """A matrix F with F F' = Sigma (eigendecomposition, PSD-safe)."""
        vals, vecs = np.linalg.eigh(self.covariance)
        return vecs * np.sqrt(np.maximum(vals, 0.0))

    def draw(self, rng: np.random.Generator, k: int) -> NDArray[np.float64]:
        """k independent draws, one per time index."""
        return rng.standard_normal((k, self.dimension)) @ self.factor().T


def perturb_utility(u: FunctionSpec, delta: Vector) -> FunctionSpec:
    """u(beta) + delta . beta, with the gradient shifted by delta."""
    delta = np.array(delta, dtype=float)
    delta.setflags(write=False)
    if isinstance(u, LinearFunction):
        return LinearFunction(u.coeffs + delta, u.offset)
    return CallbackFunction(
        lambda b: u.value(b) + float(delta @ b),
        lambda b: u.gradient(b) + delta,
        values_fn=lambda pts: u.values(pts) + pts @ delta,
    )


def margin_range(threshold_terms: NDArray[np.float64]) -> float:
    """Spread (max - min) of the off-diagonal pairwise terms."""
    k = threshold_terms.shape[0]
    mask = ~np.eye(k, dtype=bool)
    vals = threshold_terms[mask]
    return float(vals.max() - vals.min())


def kappa_constant(
    responses: NDArray[np.float64],
    utilities: tuple[FunctionSpec, ...],
    budget: FunctionSpec,
    degenerate_tol: float = 1e-12,
) -> float:
    """Gradient-ratio constant for one draw.

    Numerator: max_k |grad u_k(b_k)|^2 / |grad g(b_k)|. Denominator:
    min_{j != k} |grad u_k(b_k) - grad u_k(b_j)|^2. Utilities whose gradient
    does not vary across the drawn responses (linear ones, in particular)
    make the denominator vanish and raise KappaDegenerateError.
    """
    k = len(utilities)
    grads_at_own = [utilities[t].gradient(responses[t]) for t in range(k)]
    numerator = max(
        float(g @ g) / float(np.linalg.norm(budget.gradient(responses[t])))
        for t, g in enumerate(grads_at_own)
    )
    denominator = np.inf
    worst_pair = (0, 0)
    for kk in range(k):
        for j in range(k):
            if j == kk:
                continue
            diff = grads_at_own[kk] - utilities[kk].gradient(responses[j])
            val = float(diff @ diff)
            if val < denominator:
                denominator = val
                worst_pair = (j, kk)
    if denominator < degenerate_tol:
        raise KappaDegenerateError(
            f"gradient difference vanishes for pair (j={worst_pair[0]}, k={worst_pair[1]}); "
            "identical gradients across times make the ratio constant unbounded",
            pair=worst_pair,
        )
    return numerator / denominator


def lipschitz_gradient_constant(
    utilities: tuple[FunctionSpec, ...],
    box_upper: Vector,
    n_pairs: int = 500,
    rng: np.random.Generator | None = None,
) -> float:
    """Empirical gradient-smoothness constant over a box: sup of
    |grad u(x) - grad u(y)| / |x - y| across sampled pairs and utilities."""
    rng = rng or np.random.default_rng(0)
    upper = np.asarray(box_upper, dtype=float)
    best = 0.0
    for u in utilities:
        for _ in range(n_pairs):
            x = rng.uniform(0.0, upper)
            y = rng.uniform(0.0, upper)
            dist = float(np.linalg.norm(x - y))
            if dist < 1e-12:
                continue
            gap = float(np.linalg.norm(u.gradient(x) - u.gradient(y)))
            best = max(best, gap / dist)
    return best


def analytic_bound(
    lipschitz: float,
    delta_max: float,
    kappa: float,
    covariance: NDArray[np.float64],
    k: int,
) -> float:
    """Phi(2 L Delta_max kappa / sqrt(Tr Sigma)) ** K."""
    if k < 1:
        raise ValueError("need K >= 1")
    if lipschitz < 0 or delta_max < 0 or kappa < 0:
        raise ValueError("constants must be nonnegative")
    trace = float(np.trace(np.asarray(covariance, dtype=float)))
    if trace <= 0.0:
        raise ZeroDivisionError("Tr(Sigma) must be positive; the bound is undefined without noise")
    arg = 2.0 * lipschitz * delta_max * kappa / np.sqrt(trace)
    return standard_normal_cdf(arg) ** k


def _budget_box(problem: MaskingProblem) -> NDArray[np.float64]:
    """Componentwise upper corner of the feasible region across thresholds."""
    gamma_max = float(problem.thresholds.max())
    g = problem.budget
    if isinstance(g, LinearFunction) and np.all(g.coeffs > 0):
        return (gamma_max - g.offset) / g.coeffs
    uppers = np.empty(problem.dimension)
    for i in range(problem.dimension):
        e = np.zeros(problem.dimension)
        e[i] = 1.0
        hi = 1.0
        for _ in range(200):
            if g.value(hi * e) > gamma_max:
                break
            hi *= 2.0
        uppers[i] = hi
    return uppers


@dataclass(frozen=True, eq=False)
class NoiseStudy:
    """Results of one Monte Carlo run, constants estimated on the same draws."""

    n_trials: int
    n_valid: int
    exceed_bits: NDArray[np.bool_]
    margins: NDArray[np.float64]
    p_err: float
    wilson_low: float
    wilson_high: float
    psi_true: float
    target: float
    eta: float
    lipschitz_hat: float
    delta_max_hat: float
    kappa_hat: float
    bound: float
    bound_safe: float
    eq8_literal: bool
    deltas: NDArray[np.float64]  # (n_valid, K, m)
    responses: NDArray[np.float64]  # (n_valid, K, m)
    masked_thresholds: NDArray[np.float64]  # (n_valid, K)

    def __post_init__(self):
        for name in ("exceed_bits", "margins", "deltas", "responses", "masked_thresholds"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not 0.0 <= self.p_err <= 1.0:
            raise ValueError("empirical error probability must lie in [0, 1]")


def _run_noisy_trial(
    problem: MaskingProblem,
    noise: NoiseModel,
    trial_seed: np.random.SeedSequence,
) -> tuple[NDArray[np.float64], MaskingResult] | None:
    """One draw of the full pipeline against noisy utilities; None on failure."""
    rng = np.random.default_rng(trial_seed)
    deltas = noise.draw(rng, problem.horizon)
    noisy = replace(
        problem,
        utilities=tuple(
            perturb_utility(u, deltas[t]) for t, u in enumerate(problem.utilities)
        ),
    )
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = mask_strategy(noisy)
    except StratmaskError:
        return None
    return deltas, result


def empirical_error_probability(
    problem: MaskingProblem,
    noise: NoiseModel,
    n_trials: int,
    eq8_literal: bool = False,
    estimate_lipschitz_pairs: int = 500,
) -> NoiseStudy:
    """Estimate the probability that noisy-utility masking misses its target.

    Default semantics follow the noisy pipeline: the drawn utilities drive
    both the responses and the perturbed thresholds, and the margin of that
    data is re-evaluated under the true utilities. With ``eq8_literal`` the
    noiseless masked responses and thresholds are kept fixed and only the
    margin evaluation uses the noisy utilities.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    if noise.dimension != problem.dimension:
        raise ValueError("noise dimension must match the response dimension")
    if not noise.is_isotropic:
        warnings.warn(
            "anisotropic noise covariance: the analytic bound is heuristic",
            BoundHeuristicWarning,
            stacklevel=2,
        )

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        noiseless = mask_strategy(problem)
    psi_true = noiseless.psi_true
    target = (1.0 - problem.eta) * psi_true

    seeds = np.random.SeedSequence(noise.seed).spawn(n_trials)
    exceed: list[bool] = []
    margins: list[float] = []
    deltas_all: list[NDArray[np.float64]] = []
    responses_all: list[NDArray[np.float64]] = []
    thresholds_all: list[NDArray[np.float64]] = []
    delta_max_hat = 0.0
    kappa_hat = 0.0
    n_invalid = 0

    for trial_seed in seeds:
        outcome = _run_noisy_trial(problem, noise, trial_seed)
        if outcome is None:
            n_invalid += 1
            continue
        deltas, result = outcome
        responses = np.stack([p.point for p in result.masked_points])
        thresholds = result.thresholds_masked
        noisy_utilities = tuple(
            perturb_utility(u, deltas[t]) for t, u in enumerate(problem.utilities)
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if eq8_literal:
                margin = float(
                    margin_strategy(
                        np.stack([p.point for p in noiseless.masked_points]),
                        noisy_utilities,
                        noiseless.thresholds_masked,
                        problem.budget,
                    ).threshold_value
                )
            else:
                margin = float(
                    margin_strategy(
                        responses, problem.utilities, thresholds, problem.budget
                    ).threshold_value
                )
            noisy_terms = margin_strategy(
                responses, noisy_utilities, thresholds, problem.budget
            ).threshold_terms
        delta_max_hat = max(delta_max_hat, margin_range(noisy_terms))
        kappa_hat = max(
            kappa_hat, kappa_constant(responses, problem.utilities, problem.budget)
        )
        margins.append(margin)
        exceed.append(margin >= target)
        deltas_all.append(deltas)
        responses_all.append(responses)
        thresholds_all.append(np.array(thresholds))

    n_valid = len(exceed)
    if n_valid < max(1, int(0.9 * n_trials)):
        raise StudyUnreliableError(
            f"{n_invalid} of {n_trials} trials failed; more than 10% invalid"
        )

    lipschitz_hat = lipschitz_gradient_constant(
        problem.utilities,
        _budget_box(problem),
        n_pairs=estimate_lipschitz_pairs,
        rng=np.random.default_rng(np.random.SeedSequence((noise.seed, 0x11F)).entropy),
    )
    successes = int(np.sum(exceed))
    low, high = wilson_interval(successes, n_valid)
    bound = analytic_bound(
        lipschitz_hat, delta_max_hat, kappa_hat, noise.covariance, problem.horizon
    )
    bound_safe = analytic_bound(
        lipschitz_hat,
        SAFETY_FACTOR * delta_max_hat,
        SAFETY_FACTOR * kappa_hat,
        noise.covariance,
        problem.horizon,
    )
    return NoiseStudy(
        n_trials=n_trials,
        n_valid=n_valid,
        exceed_bits=np.array(exceed, dtype=bool),
        margins=np.array(margins),
        p_err=successes / n_valid,
        wilson_low=low,
        wilson_high=high,
        psi_true=psi_true,
        target=target,
        eta=problem.eta,
        lipschitz_hat=lipschitz_hat,
        delta_max_hat=delta_max_hat,
        kappa_hat=kappa_hat,
        bound=bound,
        bound_safe=bound_safe,
        eq8_literal=eq8_literal,
        deltas=np.stack(deltas_all),
        responses=np.stack(responses_all),
        masked_thresholds=np.stack(thresholds_all),
    )


def estimate_constants(
    problem: MaskingProblem,
    noise: NoiseModel,
    n_samples: int,
) -> tuple[float, float, float]:
    """(L, Delta_max, kappa) estimated from n_samples pipeline draws.

    The range and ratio constants are empirical maxima over the same Monte
    Carlo draws the error study uses; the smoothness constant is sampled from
    gradient differences of the true utilities over the feasible box.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    study = empirical_error_probability(problem, noise, n_samples)
    return study.lipschitz_hat, study.delta_max_hat, study.kappa_hat
