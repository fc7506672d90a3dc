import numpy as np
import pytest

from stratmask.dataset import (
    Dataset,
    UTILITY_TEST,
    STRATEGY_TEST,
    dataset_from_dict,
    dataset_to_dict,
    kkt_multiplier,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from stratmask.errors import DegenerateGradientError, NonMonotoneDataWarning, SchemaError
from stratmask.functions import LinearFunction
from stratmask.generators import rational_utility_dataset


def simple_dataset(beta):
    return Dataset(UTILITY_TEST, (LinearFunction([1.0, 1.0], -1.0),), np.array([beta]))


def test_validate_active_constraint_passes():
    # g(b) = b1 + b2 - 1 is exactly active at (0.5, 0.5)
    assert validate_dataset(simple_dataset([0.5, 0.5])) == []


def test_validate_reports_activity_residual():
    violations = validate_dataset(simple_dataset([0.3, 0.3]))
    assert len(violations) == 1
    v = violations[0]
    assert v.kind == "inactive-constraint"
    assert v.index == 0
    assert v.magnitude == pytest.approx(-0.4)


def test_validate_cobb_douglas_data_is_active():
    d, _ = rational_utility_dataset(6, 3, np.random.default_rng(0))
    assert validate_dataset(d) == []


def test_strategy_mode_skips_activity():
    d = Dataset(STRATEGY_TEST, (LinearFunction([1.0, 1.0]),), np.array([[0.3, 0.3]]))
    assert validate_dataset(d) == []


def test_kkt_multiplier_examples():
    assert kkt_multiplier([2.0, 2.0], [1.0, 1.0]) == pytest.approx(2.0)
    assert kkt_multiplier([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)
    # least squares by hand: minimize ||lam (1,1) - (3,1)||^2 => lam = (3+1)/2
    assert kkt_multiplier([3.0, 1.0], [1.0, 1.0]) == pytest.approx(2.0)


def test_kkt_multiplier_errors_and_warning():
    with pytest.raises(DegenerateGradientError):
        kkt_multiplier([1.0, 1.0], [0.0, 0.0])
    with pytest.warns(NonMonotoneDataWarning):
        lam = kkt_multiplier([-1.0, -1.0], [1.0, 1.0])
    assert lam < 0


def test_round_trip_identity(tmp_path):
    d, _ = rational_utility_dataset(4, 2, np.random.default_rng(1))
    path = tmp_path / "ds.json"
    save_dataset(d, path)
    again = load_dataset(path)
    assert again == d
    assert np.array_equal(again.responses, d.responses)  # bit-exact


def test_schema_rejects_empty_and_negative(tmp_path):
    d, _ = rational_utility_dataset(2, 2, np.random.default_rng(2))
    payload = dataset_to_dict(d)

    bad = dict(payload, entries=[])
    with pytest.raises(SchemaError):
        dataset_from_dict(bad)

    bad = dict(payload)
    bad["entries"] = [dict(e) for e in payload["entries"]]
    bad["entries"][0]["response"] = [-0.1, 0.2]
    with pytest.raises(SchemaError):
        dataset_from_dict(bad)

    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_schema_rejects_dimension_mismatch():
    d, _ = rational_utility_dataset(2, 2, np.random.default_rng(3))
    payload = dataset_to_dict(d)
    payload["entries"] = [dict(e) for e in payload["entries"]]
    payload["entries"][1]["response"] = [0.1, 0.2, 0.3]
    with pytest.raises(SchemaError):
        dataset_from_dict(payload)
    payload2 = dataset_to_dict(d)
    payload2["k"] = 7
    with pytest.raises(SchemaError):
        dataset_from_dict(payload2)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset("other-mode", (LinearFunction([1.0]),), np.array([[1.0]]))
    with pytest.raises(ValueError):
        Dataset(UTILITY_TEST, (), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        Dataset(UTILITY_TEST, (LinearFunction([1.0, 1.0]),), np.zeros((2, 2)))


def test_budget_spec_invariants():
    from stratmask.dataset import BudgetSpec

    base = LinearFunction([1.0, 2.0])
    spec = BudgetSpec(base, np.array([1.0, 1.5]))
    assert spec.feasible_at_origin(2)
    with pytest.raises(ValueError):
        BudgetSpec(base, np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        BudgetSpec(base, np.array([]))
    # positive offset can push the origin outside every budget set
    shifted = BudgetSpec(LinearFunction([1.0, 1.0], 5.0), np.array([1.0]))
    assert not shifted.feasible_at_origin(2)


def test_margin_report_extremum_reproducible():
    from stratmask.dataset import MarginReport, offdiag_extremum

    terms = np.array([[0.0, -0.3, 0.2], [0.1, 0.0, -0.6], [0.4, 0.05, 0.0]])
    report = MarginReport(offdiag_extremum(terms, "max"), terms, np.ones(3), "max")
    mask = ~np.eye(3, dtype=bool)
    assert report.value == terms[mask].max()
    assert offdiag_extremum(terms, "min") == terms[mask].min()
    with pytest.raises(ValueError):
        offdiag_extremum(np.zeros((1, 1)), "max")
