from dataclasses import replace

import numpy as np
import pytest

from helpers import sinr_masking_problem, threshold_grid_oracle
from stratmask.errors import DegenerateMarginWarning, SchemaError
from stratmask.functions import LinearFunction
from stratmask.generators import sample_linear_scenario
from stratmask.masking import (
    MaskingProblem,
    load_scenario,
    mask_strategy,
    naive_responses,
    save_scenario,
    scenario_from_dict,
    verify_masking,
    violation_curve,
)
from stratmask.solvers import SolverOptions, grid_oracle_maximize
from stratmask.strategy_test import margin_strategy


def linear_problem(seed=0, k=3, m=5, eta=0.5):
    rng = np.random.default_rng(seed)
    utilities, budget, thresholds = sample_linear_scenario(k, m, rng)
    return MaskingProblem(utilities, budget, thresholds, eta, m, SolverOptions(seed=seed))


def test_problem_invariants():
    utilities, budget, thresholds = sample_linear_scenario(3, 2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        MaskingProblem(utilities, budget, thresholds, 1.5, 2)
    with pytest.raises(ValueError):
        MaskingProblem(utilities[:1], budget, thresholds[:1], 0.5, 2)
    with pytest.raises(ValueError):
        MaskingProblem(utilities, budget, np.array([1.0, -1.0, 1.0]), 0.5, 2)


def test_naive_linear_responses_are_vertices():
    problem = linear_problem(seed=1)
    points, _ = naive_responses(problem)
    price = problem.budget.coeffs
    for t, point in enumerate(points):
        coeffs = problem.utilities[t].coeffs
        i_star = int(np.argmax(coeffs / price))
        expected = np.zeros(problem.dimension)
        expected[i_star] = problem.thresholds[t] / price[i_star]
        np.testing.assert_allclose(point.point, expected, atol=1e-12)


def test_naive_identical_times_zero_margin():
    u = LinearFunction([2.0, 1.0])
    problem = MaskingProblem(
        (u, u), LinearFunction([1.0, 1.0]), np.array([1.0, 1.0]), 0.5, 2
    )
    points, margin = naive_responses(problem)
    np.testing.assert_allclose(points[0].point, points[1].point)
    assert margin.threshold_value == pytest.approx(0.0, abs=1e-12)


def test_naive_radar_m2_matches_grid_oracle():
    problem = sinr_masking_problem(3, seed=5)
    points, _ = naive_responses(problem)
    for t in range(problem.horizon):
        oracle = grid_oracle_maximize(
            problem.utilities[t], problem.budget, float(problem.thresholds[t]),
            grid_n=250, dimension=2,
        )
        rel = abs(points[t].objective - oracle.objective) / abs(oracle.objective)
        assert rel < 1e-3


def test_mask_eta_zero_is_identity():
    problem = sinr_masking_problem(3, seed=2, eta=0.0)
    result = mask_strategy(problem)
    assert result.violation_sq == 0.0
    np.testing.assert_array_equal(result.thresholds_masked, problem.thresholds)
    for naive, masked in zip(result.naive_points, result.masked_points):
        np.testing.assert_allclose(naive.point, masked.point, atol=1e-6)
    assert result.feasible


def test_mask_eta_one_kills_the_margin():
    problem = sinr_masking_problem(3, seed=4, eta=1.0)
    result = mask_strategy(problem)
    assert result.psi_true > 0
    assert result.psi_masked <= 1e-9
    assert result.violation_sq > 0
    assert result.feasible


def test_mask_respects_target_and_verifies():
    problem = sinr_masking_problem(4, seed=8, eta=0.6)
    result = mask_strategy(problem)
    target = (1.0 - problem.eta) * result.psi_true
    assert result.psi_masked <= target + 1e-9
    assert result.feasible
    check = verify_masking(result, problem)
    assert check.ok
    assert check.psi_masked == pytest.approx(result.psi_masked, abs=1e-9)


def test_masked_points_stay_on_their_budgets():
    problem = sinr_masking_problem(3, seed=6, eta=0.7)
    result = mask_strategy(problem)
    for t, point in enumerate(result.masked_points):
        gap = problem.budget.value(point.point) - result.thresholds_masked[t]
        assert gap <= 1e-6
        assert point.active


def test_mask_degenerate_margin_warns_and_returns_identity():
    # linear utilities at m=2 with K=3 share budget-line vertices, which makes
    # the naive margin nonpositive: nothing to mask
    problem = linear_problem(seed=3, k=3, m=2, eta=0.5)
    _, margin = naive_responses(problem)
    assert margin.threshold_value <= 0
    with pytest.warns(DegenerateMarginWarning):
        result = mask_strategy(problem)
    assert result.violation_sq == 0.0
    assert result.feasible


def test_mask_matches_threshold_grid_oracle():
    problem = sinr_masking_problem(3, seed=1, eta=0.5)
    naive = naive_responses(problem)
    result = mask_strategy(problem, naive=naive)
    grid_best, _ = threshold_grid_oracle(problem, naive, grid_n=60)
    assert result.violation_sq <= grid_best + 1e-3


def test_mask_deterministic_given_seed():
    a = mask_strategy(sinr_masking_problem(3, seed=9, eta=0.5))
    b = mask_strategy(sinr_masking_problem(3, seed=9, eta=0.5))
    np.testing.assert_array_equal(a.thresholds_masked, b.thresholds_masked)
    assert a.psi_masked == b.psi_masked
    assert a.violation_sq == b.violation_sq


def test_violation_curve_single_zero_eta():
    problem = sinr_masking_problem(3, seed=2, eta=0.0)
    curve = violation_curve(problem, [0.0])
    assert len(curve) == 1
    point = curve[0]
    assert point.violation == 0.0
    assert point.psi_masked == pytest.approx(point.psi_true)


def test_violation_curve_monotone_and_ordered():
    problem = sinr_masking_problem(3, seed=12, eta=0.5)
    grid = [0.2, 0.5, 0.8]
    curve = violation_curve(problem, grid)
    assert all(pt is not None and pt.feasible for pt in curve)
    viols = [pt.violation for pt in curve]
    assert viols[0] <= viols[1] + 1e-9 <= viols[2] + 2e-9
    # feasible set shrinks with eta, so the grid-oracle optimum grows too
    naive = naive_responses(problem)
    small, _ = threshold_grid_oracle(replace(problem, eta=0.2), naive, grid_n=40)
    large, _ = threshold_grid_oracle(replace(problem, eta=0.8), naive, grid_n=40)
    assert small <= large + 1e-12


def test_violation_curve_preserves_input_order():
    problem = sinr_masking_problem(3, seed=13, eta=0.5)
    grid = [0.6, 0.2]
    curve = violation_curve(problem, grid)
    assert curve[0].eta == 0.6
    assert curve[1].eta == 0.2
    assert curve[1].violation <= curve[0].violation + 1e-9


def test_verify_rejects_unmasked_thresholds():
    problem = sinr_masking_problem(3, seed=4, eta=0.8)
    result = mask_strategy(problem)
    assert result.psi_true > 0
    fake = replace(result, thresholds_masked=problem.thresholds)
    check = verify_masking(fake, problem)
    assert not check.ok


def test_verify_hand_shifted_instance():
    # vertex instance with hand margins: psi_true = 3/5; shifting thresholds
    # to (0.9, 1.0) gives pair terms 0.56 and 0.58, so psi_masked = 0.56
    utilities = (LinearFunction([2.0, 1.0]), LinearFunction([1.0, 2.0]))
    budget = LinearFunction([1.0, 1.0])
    thresholds = np.array([1.0, 1.0])
    shifted = np.array([0.9, 1.0])
    responses = np.stack([shifted[0] * np.eye(2)[0], shifted[1] * np.eye(2)[1]])
    report = margin_strategy(responses, utilities, shifted, budget)
    assert report.threshold_value == pytest.approx(0.56, abs=1e-12)

    problem = MaskingProblem(utilities, budget, thresholds, 0.05, 2)
    naive = naive_responses(problem)
    assert naive[1].threshold_value == pytest.approx(0.6, abs=1e-12)
    base = mask_strategy(problem)
    fake = replace(base, thresholds_masked=shifted)
    # 0.56 <= (1 - 0.05) * 0.6 = 0.57: the shifted thresholds pass at eta 0.05
    assert verify_masking(fake, problem).ok
    # 0.56 > (1 - 0.2) * 0.6 = 0.48: and fail at eta 0.2
    assert not verify_masking(fake, replace(problem, eta=0.2)).ok


def test_scenario_round_trip(tmp_path):
    problem = linear_problem(seed=5, k=4, m=3, eta=0.35)
    path = tmp_path / "scenario.json"
    save_scenario(problem, path)
    again = load_scenario(path, opts=problem.opts)
    assert again.eta == problem.eta
    assert again.dimension == problem.dimension
    np.testing.assert_array_equal(again.thresholds, problem.thresholds)
    assert again.utilities == problem.utilities
    assert again.budget == problem.budget


def test_scenario_schema_errors(tmp_path):
    with pytest.raises(SchemaError):
        scenario_from_dict({"schema": "something.else"})
    path = tmp_path / "bad.json"
    path.write_text("not json at all")
    with pytest.raises(SchemaError):
        load_scenario(path)
