"""Evaluatable scalar fields on the nonnegative orthant.

Every utility and budget handled by this package is one of four kinds:

- ``LinearFunction``: a'beta + offset.
- ``QuadraticFractional``: beta'Q beta / (beta'P beta + noise_power), the
  SINR-style objective of the radar case study.
- ``EnvelopeFunction``: pointwise min or max of affine transforms of base
  functions; this is the shape of every reconstructed utility or budget.
- ``CallbackFunction``: arbitrary value/gradient callables, optionally
  registered under a string id so they survive serialization.

All kinds expose ``value``, ``gradient`` and a batched ``values`` used by the
grid oracle and the pairwise margin computations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import SchemaError

Vector = NDArray[np.float64]


def _as_readonly(a, ndim: int) -> Vector:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class FunctionSpec:
    """Base interface: a scalar field with an analytic gradient."""

    #: True / False when monotonicity is known, None when it must be spot-checked.
    monotone: bool | None = None

    def value(self, beta: Vector) -> float:
        raise NotImplementedError

    def gradient(self, beta: Vector) -> Vector:
        raise NotImplementedError

    def values(self, points: Vector) -> Vector:
        """Evaluate at each row of ``points`` (n, m). Subclasses vectorize."""
        return np.array([self.value(p) for p in np.asarray(points, dtype=float)])

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __call__(self, beta: Vector) -> float:
        return self.value(beta)


@dataclass(frozen=True, eq=False)
class LinearFunction(FunctionSpec):
    """a'beta + offset."""

    coeffs: Vector
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_readonly(self.coeffs, 1))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def monotone(self) -> bool:  # type: ignore[override]
        return bool(np.all(self.coeffs >= 0.0))

    def value(self, beta):
        return float(self.coeffs @ np.asarray(beta, dtype=float) + self.offset)

    def gradient(self, beta):
        return self.coeffs.copy()

    def values(self, points):
        return np.asarray(points, dtype=float) @ self.coeffs + self.offset

    def to_dict(self):
        return {"kind": "linear", "coeffs": self.coeffs.tolist(), "offset": self.offset}

    def __eq__(self, other):
        return (
            isinstance(other, LinearFunction)
            and np.array_equal(self.coeffs, other.coeffs)
            and self.offset == other.offset
        )


@dataclass(frozen=True, eq=False)
class QuadraticFractional(FunctionSpec):
    """beta'Q beta / (beta'P beta + noise_power).

    The denominator is bounded below by ``noise_power`` > 0 on the nonnegative
    orthant whenever P is positive semidefinite, so the field is smooth
    everywhere it is used.
    """

    signal: Vector
    interference: Vector
    noise_power: float
    monotone_hint: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "signal", _as_readonly(self.signal, 2))
        object.__setattr__(self, "interference", _as_readonly(self.interference, 2))
        object.__setattr__(self, "noise_power", float(self.noise_power))
        if self.noise_power <= 0:
            raise ValueError("noise_power must be strictly positive")
        if self.signal.shape != self.interference.shape or self.signal.shape[0] != self.signal.shape[1]:
            raise ValueError("signal and interference must be square matrices of equal shape")

    @property
    def monotone(self) -> bool | None:  # type: ignore[override]
        return self.monotone_hint

    def value(self, beta):
        b = np.asarray(beta, dtype=float)
        num = b @ self.signal @ b
        den = b @ self.interference @ b + self.noise_power
        return float(num / den)

    def gradient(self, beta):
        b = np.asarray(beta, dtype=float)
        qb = self.signal @ b
        pb = self.interference @ b
        num = b @ qb
        den = b @ pb + self.noise_power
        return (2.0 * qb * den - num * 2.0 * pb) / (den * den)

    def values(self, points):
        pts = np.asarray(points, dtype=float)
        num = np.einsum("ij,jk,ik->i", pts, self.signal, pts)
        den = np.einsum("ij,jk,ik->i", pts, self.interference, pts) + self.noise_power
        return num / den

    def to_dict(self):
        return {
            "kind": "quadratic_fractional",
            "signal": self.signal.tolist(),
            "interference": self.interference.tolist(),
            "noise_power": self.noise_power,
            "monotone_hint": self.monotone_hint,
        }

    def __eq__(self, other):
        return (
            isinstance(other, QuadraticFractional)
            and np.array_equal(self.signal, other.signal)
            and np.array_equal(self.interference, other.interference)
            and self.noise_power == other.noise_power
        )


@dataclass(frozen=True, eq=False)
class EnvelopePiece:
    """One affine-in-base piece: level + multiplier * base(beta)."""

    level: float
    multiplier: float
    base: FunctionSpec
    anchor: Vector

    def __post_init__(self):
        object.__setattr__(self, "level", float(self.level))
        object.__setattr__(self, "multiplier", float(self.multiplier))
        object.__setattr__(self, "anchor", _as_readonly(self.anchor, 1))

    def value(self, beta) -> float:
        return self.level + self.multiplier * self.base.value(beta)

    def gradient(self, beta) -> Vector:
        return self.multiplier * self.base.gradient(beta)

    def to_dict(self):
        return {
            "level": self.level,
            "multiplier": self.multiplier,
            "anchor": self.anchor.tolist(),
            "base": self.base.to_dict(),
        }

    def __eq__(self, other):
        return (
            isinstance(other, EnvelopePiece)
            and self.level == other.level
            and self.multiplier == other.multiplier
            and np.array_equal(self.anchor, other.anchor)
            and self.base == other.base
        )


@dataclass(frozen=True, eq=False)
class EnvelopeFunction(FunctionSpec):
    """Pointwise min (reconstructed utility) or max (reconstructed budget) of pieces.

    The gradient at a point is the gradient of the first piece attaining the
    extremum; envelope kinks have measure zero, so finite-difference checks
    sample away from them.
    """

    pieces: tuple[EnvelopePiece, ...]
    mode: str  # "min" | "max"

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if self.mode not in ("min", "max"):
            raise ValueError("mode must be 'min' or 'max'")
        if not self.pieces:
            raise ValueError("an envelope needs at least one piece")

    @property
    def monotone(self) -> bool | None:  # type: ignore[override]
        flags = [p.base.monotone for p in self.pieces]
        if all(f is True for f in flags) and all(p.multiplier >= 0 for p in self.pieces):
            return True
        return None

    def piece_values(self, beta) -> Vector:
        return np.array([p.value(beta) for p in self.pieces])

    def value(self, beta):
        vals = self.piece_values(beta)
        return float(vals.min() if self.mode == "min" else vals.max())

    def gradient(self, beta):
        vals = self.piece_values(beta)
        idx = int(np.argmin(vals) if self.mode == "min" else np.argmax(vals))
        return self.pieces[idx].gradient(beta)

    def values(self, points):
        stacked = np.stack([
            p.level + p.multiplier * p.base.values(points) for p in self.pieces
        ])
        return stacked.min(axis=0) if self.mode == "min" else stacked.max(axis=0)

    def to_dict(self):
        return {
            "kind": "envelope",
            "mode": self.mode,
            "pieces": [p.to_dict() for p in self.pieces],
        }

    def __eq__(self, other):
        return (
            isinstance(other, EnvelopeFunction)
            and self.mode == other.mode
            and self.pieces == other.pieces
        )


#: Registry of named callback functions, keyed by id, for serializable callbacks.
_CALLBACK_REGISTRY: dict[str, "CallbackFunction"] = {}


@dataclass(frozen=True, eq=False)
class CallbackFunction(FunctionSpec):
    """A scalar field defined by user callables.

    Instances with a ``callback_id`` can be serialized; loading resolves the id
    against the registry (see :func:`register_callback`). Anonymous instances
    (id None) are evaluation-only.
    """

    value_fn: Callable[[Vector], float]
    grad_fn: Callable[[Vector], Vector]
    callback_id: str | None = None
    monotone_hint: bool | None = None
    values_fn: Callable[[Vector], Vector] | None = field(default=None, repr=False)

    @property
    def monotone(self) -> bool | None:  # type: ignore[override]
        return self.monotone_hint

    def value(self, beta):
        return float(self.value_fn(np.asarray(beta, dtype=float)))

    def gradient(self, beta):
        return np.asarray(self.grad_fn(np.asarray(beta, dtype=float)), dtype=float)

    def values(self, points):
        if self.values_fn is not None:
            return np.asarray(self.values_fn(np.asarray(points, dtype=float)), dtype=float)
        return super().values(points)

    def to_dict(self):
        if self.callback_id is None:
            raise SchemaError("cannot serialize an anonymous callback function")
        return {"kind": "callback", "callback_id": self.callback_id}

    def __eq__(self, other):
        return (
            isinstance(other, CallbackFunction)
            and self.callback_id is not None
            and self.callback_id == other.callback_id
        )


def register_callback(
    callback_id: str,
    value_fn: Callable[[Vector], float],
    grad_fn: Callable[[Vector], Vector],
    monotone: bool | None = None,
    values_fn: Callable[[Vector], Vector] | None = None,
) -> CallbackFunction:
    """Register a named callback so datasets referencing it can round-trip."""
    spec = CallbackFunction(value_fn, grad_fn, callback_id, monotone, values_fn)
    _CALLBACK_REGISTRY[callback_id] = spec
    return spec


def function_from_dict(d: dict) -> FunctionSpec:
    """Inverse of ``FunctionSpec.to_dict``; raises SchemaError on malformed input."""
    if not isinstance(d, dict) or "kind" not in d:
        raise SchemaError(f"function spec must be an object with a 'kind' tag, got {d!r}")
    kind = d["kind"]
    try:
        if kind == "linear":
            return LinearFunction(np.array(d["coeffs"], dtype=float), float(d.get("offset", 0.0)))
        if kind == "quadratic_fractional":
            return QuadraticFractional(
                np.array(d["signal"], dtype=float),
                np.array(d["interference"], dtype=float),
                float(d["noise_power"]),
                d.get("monotone_hint"),
            )
        if kind == "envelope":
            pieces = tuple(
                EnvelopePiece(
                    float(p["level"]),
                    float(p["multiplier"]),
                    function_from_dict(p["base"]),
                    np.array(p["anchor"], dtype=float),
                )
                for p in d["pieces"]
            )
            return EnvelopeFunction(pieces, d["mode"])
        if kind == "callback":
            cid = d["callback_id"]
            if cid not in _CALLBACK_REGISTRY:
                raise SchemaError(f"callback id {cid!r} is not registered")
            return _CALLBACK_REGISTRY[cid]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed {kind!r} function spec: {exc}") from exc
    raise SchemaError(f"unknown function kind {kind!r}")


def finite_difference_gradient(spec: FunctionSpec, beta: Vector, h: float = 1e-6) -> Vector:
    """Central finite differences of ``spec.value`` at ``beta``."""
    b = np.asarray(beta, dtype=float)
    grad = np.empty_like(b)
    for i in range(b.size):
        step = np.zeros_like(b)
        step[i] = h * max(1.0, abs(b[i]))
        grad[i] = (spec.value(b + step) - spec.value(b - step)) / (2.0 * step[i])
    return grad


def spot_check_monotone(
    spec: FunctionSpec,
    lower: Vector,
    upper: Vector,
    n_pairs: int = 100,
    rng: np.random.Generator | None = None,
    tol: float = 1e-9,
) -> list[tuple[Vector, Vector, float]]:
    """Sample ordered pairs in [lower, upper] and report monotonicity violations.

    Returns a list of (beta, beta_prime, drop) triples where beta' >= beta
    componentwise but value decreased by more than ``tol``.
    """
    rng = rng or np.random.default_rng(0)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    violations = []
    for _ in range(n_pairs):
        a = rng.uniform(lower, upper)
        b = rng.uniform(a, upper)
        drop = spec.value(a) - spec.value(b)
        if drop > tol:
            violations.append((a, b, drop))
    return violations
