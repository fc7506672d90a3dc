import numpy as np
import pytest

from helpers import sinr_masking_problem
from stratmask.errors import BoundHeuristicWarning, KappaDegenerateError
from stratmask.functions import CallbackFunction, LinearFunction, finite_difference_gradient
from stratmask.generators import cobb_douglas_utility
from stratmask.noise import (
    NoiseModel,
    analytic_bound,
    empirical_error_probability,
    estimate_constants,
    kappa_constant,
    lipschitz_gradient_constant,
    margin_range,
    perturb_utility,
)
from stratmask.stats import spearman_rank_correlation, standard_normal_cdf, wilson_interval


def test_noise_model_invariants():
    with pytest.raises(ValueError):
        NoiseModel(np.array([[1.0, 0.5], [0.4, 1.0]]))  # asymmetric
    with pytest.raises(ValueError):
        NoiseModel(np.array([[1.0, 2.0], [2.0, 1.0]]))  # indefinite
    with pytest.raises(ValueError):
        NoiseModel(np.zeros((2, 2)))  # zero trace
    model = NoiseModel.isotropic(0.04, 3, seed=1)
    assert model.is_isotropic
    assert model.dimension == 3


def test_noise_draw_covariance_within_ten_percent():
    model = NoiseModel.isotropic(0.25, 2, seed=0)
    rng = np.random.default_rng(123)
    draws = model.draw(rng, 5000).reshape(-1, 2)
    sample_cov = np.cov(draws.T, bias=True)
    gap = np.linalg.norm(sample_cov - model.covariance, ord="fro")
    assert gap <= 0.1 * np.linalg.norm(model.covariance, ord="fro")


def test_perturb_identity_and_linear_closed_form():
    u = LinearFunction([1.0, 2.0], 0.3)
    unchanged = perturb_utility(u, np.zeros(2))
    assert unchanged.value(np.array([0.4, 0.6])) == u.value(np.array([0.4, 0.6]))
    shifted = perturb_utility(u, np.array([0.5, -0.25]))
    assert isinstance(shifted, LinearFunction)
    np.testing.assert_allclose(shifted.coeffs, [1.5, 1.75])


def test_perturb_gradient_matches_finite_differences():
    u = cobb_douglas_utility(np.array([0.4, 0.6]))
    rng = np.random.default_rng(6)
    perturbed = perturb_utility(u, rng.normal(size=2))
    for _ in range(20):
        beta = rng.uniform(0.2, 2.0, 2)
        fd = finite_difference_gradient(perturbed, beta)
        an = perturbed.gradient(beta)
        assert np.max(np.abs(fd - an)) / max(1.0, np.max(np.abs(an))) < 1e-5


def test_margin_range_k2_single_pair():
    terms = np.array([[0.0, 0.4], [-0.2, 0.0]])
    assert margin_range(terms) == pytest.approx(abs(0.4 - (-0.2)))


def test_kappa_degenerate_for_linear_utilities():
    utilities = (LinearFunction([1.0, 2.0]), LinearFunction([2.0, 1.0]))
    responses = np.array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(KappaDegenerateError) as err:
        kappa_constant(responses, utilities, LinearFunction([1.0, 1.0]))
    assert err.value.pair is not None


def test_lipschitz_constant_of_quadratic():
    # u = x'Ax has gradient 2Ax, so the smoothness constant is 2 ||A||_2
    a = np.array([[2.0, 0.3], [0.3, 1.0]])
    u = CallbackFunction(lambda b: float(b @ a @ b), lambda b: 2.0 * a @ b)
    expected = 2.0 * np.linalg.norm(a, ord=2)
    est = lipschitz_gradient_constant((u,), np.ones(2) * 3.0, n_pairs=500,
                                      rng=np.random.default_rng(0))
    assert est <= expected + 1e-9
    assert est >= 0.95 * expected


def test_analytic_bound_shapes():
    cov = 0.01 * np.eye(2)
    assert analytic_bound(0.0, 1.0, 1.0, cov, 5) == pytest.approx(0.5**5)
    assert analytic_bound(1.0, 1.0, 1.0, 1e-30 * np.eye(2), 3) == pytest.approx(1.0)
    k5 = analytic_bound(1.0, 0.5, 0.5, cov, 5)
    k10 = analytic_bound(1.0, 0.5, 0.5, cov, 10)
    assert 0.0 < k10 < k5 < 1.0
    with pytest.raises(ZeroDivisionError):
        analytic_bound(1.0, 1.0, 1.0, np.zeros((2, 2)), 5)


def test_wilson_and_cdf_helpers():
    assert standard_normal_cdf(0.0) == pytest.approx(0.5)
    assert standard_normal_cdf(8.0) == pytest.approx(1.0, abs=1e-12)
    low, high = wilson_interval(0, 100)
    assert low == pytest.approx(0.0, abs=1e-15) and 0.0 < high < 0.05
    low, high = wilson_interval(50, 100)
    assert low < 0.5 < high
    assert spearman_rank_correlation([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman_rank_correlation([1, 2, 3], [30, 20, 10]) == pytest.approx(-1.0)


def noise_problem(seed=0, k=3):
    from stratmask.solvers import SolverOptions

    opts = SolverOptions(seed=seed, n_starts=2, max_iters=800,
                         cs_step_min=1e-3, cs_max_passes=12)
    return sinr_masking_problem(k, seed=seed, eta=0.5, opts=opts)


def test_single_trial_error_probability_binary():
    problem = noise_problem(seed=1)
    study = empirical_error_probability(problem, NoiseModel.isotropic(0.01, 2, seed=3), 1)
    assert study.p_err in (0.0, 1.0)
    assert study.n_valid == 1


def test_study_deterministic_and_vanishing_noise():
    problem = noise_problem(seed=2)
    tiny = NoiseModel.isotropic(1e-12, 2, seed=11)
    a = empirical_error_probability(problem, tiny, 10)
    b = empirical_error_probability(problem, tiny, 10)
    assert np.array_equal(a.margins, b.margins)
    assert np.array_equal(a.exceed_bits, b.exceed_bits)
    assert a.bound == b.bound
    # margins collapse onto the noiseless masked margin as the noise vanishes
    from stratmask.masking import mask_strategy

    noiseless = mask_strategy(problem)
    assert np.max(np.abs(a.margins - noiseless.psi_masked)) < 1e-4


def test_study_dominated_by_bound_and_sane():
    problem = noise_problem(seed=0)
    study = empirical_error_probability(problem, NoiseModel.isotropic(0.01, 2, seed=5), 60)
    assert 0.0 <= study.p_err <= 1.0
    assert study.wilson_low <= study.p_err <= study.wilson_high
    assert study.wilson_high <= study.bound
    assert study.bound <= study.bound_safe <= 1.0
    assert study.delta_max_hat >= 0
    assert study.kappa_hat > 0


def test_noise_terms_independent_across_times():
    # delta_k . grad g(beta_k) has zero mean; check a 3 sigma / sqrt(n) band
    problem = noise_problem(seed=4)
    noise = NoiseModel.isotropic(0.01, 2, seed=9)
    study = empirical_error_probability(problem, noise, 60)
    grad = problem.budget.gradient(np.zeros(2))
    for t in range(problem.horizon):
        dots = study.deltas[:, t, :] @ grad
        sigma = np.sqrt(0.01 * float(grad @ grad))
        assert abs(dots.mean()) <= 3.0 * sigma / np.sqrt(len(dots))


def test_estimate_constants_runs_and_matches_study():
    problem = noise_problem(seed=3)
    noise = NoiseModel.isotropic(0.01, 2, seed=7)
    lips, delta_max, kappa = estimate_constants(problem, noise, 12)
    study = empirical_error_probability(problem, noise, 12)
    assert lips == study.lipschitz_hat
    assert delta_max == study.delta_max_hat
    assert kappa == study.kappa_hat


def test_eq8_literal_flag_changes_margins():
    problem = noise_problem(seed=6)
    noise = NoiseModel.isotropic(0.05, 2, seed=13)
    pipeline = empirical_error_probability(problem, noise, 8)
    literal = empirical_error_probability(problem, noise, 8, eq8_literal=True)
    assert pipeline.margins.shape == literal.margins.shape
    assert not np.allclose(pipeline.margins, literal.margins)


def test_anisotropic_covariance_warns():
    problem = noise_problem(seed=7)
    cov = np.array([[0.02, 0.0], [0.0, 0.005]])
    with pytest.warns(BoundHeuristicWarning):
        empirical_error_probability(problem, NoiseModel(cov, seed=15), 4)


def test_dimension_mismatch_rejected():
    problem = noise_problem(seed=8)
    with pytest.raises(ValueError):
        empirical_error_probability(problem, NoiseModel.isotropic(0.01, 3, seed=1), 4)
