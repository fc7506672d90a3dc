"""Probe/response datasets, their invariants, and the shared multiplier fit.

A dataset is a time-indexed sequence of (function, response) pairs read in one
of two modes:

- ``utility-test``: the functions are known budget constraints g_t with
  g_t(response_t) = 0 (active), and the question is whether some monotone
  utility rationalizes the responses.
- ``strategy-test``: the functions are known utilities u_t, and the question
  is whether some common budget with per-time thresholds rationalizes them.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateGradientError, NonMonotoneDataWarning, SchemaError
from .functions import FunctionSpec, Vector, function_from_dict

UTILITY_TEST = "utility-test"
STRATEGY_TEST = "strategy-test"

#: schema tag written into every dataset file
DATASET_SCHEMA = "stratmask.dataset.v1"

#: default absolute tolerance for "the constraint is active at the response"
ACTIVITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Dataset:
    """K (function, response) pairs sharing one response dimension m."""

    mode: str
    functions: tuple[FunctionSpec, ...]
    responses: NDArray[np.float64]  # (K, m)

    def __post_init__(self):
        if self.mode not in (UTILITY_TEST, STRATEGY_TEST):
            raise ValueError(f"unknown dataset mode {self.mode!r}")
        object.__setattr__(self, "functions", tuple(self.functions))
        resp = np.array(self.responses, dtype=float)
        if resp.ndim != 2:
            raise ValueError("responses must be a (K, m) array")
        if resp.shape[0] < 1 or resp.shape[1] < 1:
            raise ValueError("need K >= 1 responses of dimension m >= 1")
        if len(self.functions) != resp.shape[0]:
            raise ValueError("one function per response is required")
        resp.setflags(write=False)
        object.__setattr__(self, "responses", resp)

    @property
    def horizon(self) -> int:
        return self.responses.shape[0]

    @property
    def dimension(self) -> int:
        return self.responses.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.mode == other.mode
            and self.functions == other.functions
            and np.array_equal(self.responses, other.responses)
        )


@dataclass(frozen=True)
class Violation:
    """One failed dataset invariant, with where and by how much."""

    index: int | None
    kind: str
    magnitude: float
    message: str


def validate_dataset(d: Dataset, tol: float = ACTIVITY_TOL) -> list[Violation]:
    """Check every dataset invariant; empty list means valid at tolerance ``tol``.

    Nonnegativity of responses is always checked. Constraint activity
    |g_t(response_t)| <= tol is checked in utility-test mode only, since in
    strategy-test mode the functions are utilities, not constraints.
    """
    violations: list[Violation] = []
    for t in range(d.horizon):
        beta = d.responses[t]
        neg = beta.min()
        if neg < -tol:
            violations.append(
                Violation(t, "negative-response", float(neg),
                          f"response {t} has a negative coordinate ({neg:.3g})")
            )
    if d.mode == UTILITY_TEST:
        for t, (g, beta) in enumerate(zip(d.functions, d.responses)):
            residual = g.value(beta)
            if abs(residual) > tol:
                violations.append(
                    Violation(t, "inactive-constraint", float(residual),
                              f"constraint {t} is not active: g_t(beta_t) = {residual:.6g}")
                )
    return violations


def kkt_multiplier(grad_target: Vector, grad_source: Vector) -> float:
    """Least-squares scalar solving lam * grad_source ~= grad_target.

    Exact when the gradients are collinear, which is the first-order condition
    at an interior optimum on an active constraint. A non-positive result is
    returned as computed but flagged with ``NonMonotoneDataWarning``.
    """
    src = np.asarray(grad_source, dtype=float)
    tgt = np.asarray(grad_target, dtype=float)
    denom = float(src @ src)
    if denom <= 1e-300 or not np.isfinite(denom):
        raise DegenerateGradientError("source gradient is numerically zero")
    lam = float(src @ tgt) / denom
    if lam <= 0.0:
        warnings.warn(
            f"non-positive multiplier {lam:.3g}; the data may not be monotone",
            NonMonotoneDataWarning,
            stacklevel=2,
        )
    return lam


@dataclass(frozen=True, eq=False)
class BudgetSpec:
    """A common budget base g with per-time thresholds gamma_t."""

    base: FunctionSpec
    thresholds: NDArray[np.float64]

    def __post_init__(self):
        thr = np.array(self.thresholds, dtype=float)
        if thr.ndim != 1 or thr.size < 1:
            raise ValueError("thresholds must be a nonempty vector")
        if np.any(thr <= 0):
            raise ValueError("thresholds must be strictly positive")
        thr.setflags(write=False)
        object.__setattr__(self, "thresholds", thr)

    def feasible_at_origin(self, dimension: int) -> bool:
        """True when {beta >= 0, g(beta) <= gamma_t} contains the origin for all t."""
        g0 = self.base.value(np.zeros(dimension))
        return bool(np.all(g0 <= self.thresholds))

    def __eq__(self, other):
        return (
            isinstance(other, BudgetSpec)
            and self.base == other.base
            and np.array_equal(self.thresholds, other.thresholds)
        )


@dataclass(frozen=True, eq=False)
class MarginReport:
    """An extremal pairwise margin plus the terms it was taken over.

    ``pair_terms[j, k]`` holds the (j, k) term; the diagonal is identically
    zero and excluded from the extremum. For strategy margins the threshold
    form of the terms is carried alongside the budget-value form.
    """

    value: float
    pair_terms: NDArray[np.float64]  # (K, K)
    multipliers: NDArray[np.float64]  # (K,)
    extremum: str  # "max" | "min"
    threshold_value: float | None = None
    threshold_terms: NDArray[np.float64] | None = None

    def __post_init__(self):
        terms = np.array(self.pair_terms, dtype=float)
        terms.setflags(write=False)
        object.__setattr__(self, "pair_terms", terms)
        mult = np.array(self.multipliers, dtype=float)
        mult.setflags(write=False)
        object.__setattr__(self, "multipliers", mult)
        if self.threshold_terms is not None:
            tt = np.array(self.threshold_terms, dtype=float)
            tt.setflags(write=False)
            object.__setattr__(self, "threshold_terms", tt)


def offdiag_extremum(terms: NDArray[np.float64], extremum: str) -> float:
    """Extremum of a square matrix over its off-diagonal entries."""
    k = terms.shape[0]
    if k < 2:
        raise ValueError("need at least a 2x2 matrix for an off-diagonal extremum")
    mask = ~np.eye(k, dtype=bool)
    vals = terms[mask]
    return float(vals.max() if extremum == "max" else vals.min())


def dataset_to_dict(d: Dataset) -> dict:
    return {
        "schema": DATASET_SCHEMA,
        "mode": d.mode,
        "k": d.horizon,
        "m": d.dimension,
        "entries": [
            {"function": f.to_dict(), "response": beta.tolist()}
            for f, beta in zip(d.functions, d.responses)
        ],
    }


def dataset_from_dict(payload: dict) -> Dataset:
    if not isinstance(payload, dict):
        raise SchemaError("dataset file must contain a JSON object")
    if payload.get("schema") != DATASET_SCHEMA:
        raise SchemaError(f"unknown schema tag {payload.get('schema')!r}")
    mode = payload.get("mode")
    if mode not in (UTILITY_TEST, STRATEGY_TEST):
        raise SchemaError(f"unknown mode {mode!r}")
    entries = payload.get("entries")
    if not isinstance(entries, list) or len(entries) < 1:
        raise SchemaError("'entries' must be a nonempty list (K >= 1)")
    functions = []
    rows = []
    for i, entry in enumerate(entries):
        try:
            functions.append(function_from_dict(entry["function"]))
            rows.append(np.array(entry["response"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"entry {i}: {exc}") from exc
    m = rows[0].size
    for i, row in enumerate(rows):
        if row.ndim != 1 or row.size != m:
            raise SchemaError(f"entry {i}: response dimension {row.size} != {m}")
        if np.any(row < 0):
            raise SchemaError(f"entry {i}: negative response coordinate")
    declared_k, declared_m = payload.get("k"), payload.get("m")
    if declared_k is not None and declared_k != len(rows):
        raise SchemaError(f"declared k={declared_k} but file has {len(rows)} entries")
    if declared_m is not None and declared_m != m:
        raise SchemaError(f"declared m={declared_m} but responses have dimension {m}")
    return Dataset(mode, tuple(functions), np.vstack(rows))


def save_dataset(d: Dataset, path: str | Path) -> None:
    """Write a dataset as documented JSON (schema v1, full-precision decimals)."""
    Path(path).write_text(json.dumps(dataset_to_dict(d), indent=2) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset file; raises SchemaError on any malformed content."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON (line {exc.lineno}, col {exc.colno})") from exc
    return dataset_from_dict(payload)
