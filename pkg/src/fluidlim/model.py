"""Scaled pure-jump chain models and their scaling assumptions.

A model is a discrete-time chain on a subset of R^d with state-dependent
increment law, run on an exponential clock of state-dependent rate. States
are 1-D float arrays.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "InvariantError",
    "JumpModel",
    "ScalingAssumptions",
    "ScalingReport",
    "as_state",
    "drift",
    "restrict",
    "HalfSpace",
    "Intersection",
    "validate_scaling",
    "lattice_probes",
]


class DomainError(ValueError):
    """A state lies outside the set where an operation is defined."""


class InvariantError(RuntimeError):
    """A model or simulation broke one of its own invariants."""


def as_state(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce `x` to a finite 1-D float array, optionally checking its length."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"state must be a non-empty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ValueError(f"expected state of dimension {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"state has non-finite coordinates: {arr}")
    return arr


def _always(x) -> bool:
    return True


def _identity(x):
    return x


@dataclass(frozen=True)
class JumpModel:
    """A scaled chain together with its exponential clock.

    Parameters
    ----------
    dim : int
        Dimension of the state space.
    scale_N : int
        Scale parameter N.
    rate : callable
        ``rate(x)``, the jump rate c_N[x] (events per unit time).
    sample_increment : callable
        ``sample_increment(x, rng)``, one draw of X_{n+1} - X_n given X_n = x.
    mean_increment : callable
        ``mean_increment(x)``, the analytic mean mu_N[x] of the increment.
    second_moment_bound : callable
        ``second_moment_bound(x)``, Trace Sigma_N[x] + |mu_N[x]|^2.
    in_D, in_S : callable
        Membership predicates for the closed set D and the relatively open S.
    rate_bound : float, optional
        kappa_2, a bound on rate(x) / N over S. Used for default jump caps.
    snap : callable, optional
        Applied to every post-jump state, e.g. to keep lattice states exactly
        on the lattice.
    """

    dim: int
    scale_N: int
    rate: Callable[[np.ndarray], float]
    sample_increment: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    mean_increment: Callable[[np.ndarray], np.ndarray]
    second_moment_bound: Callable[[np.ndarray], float]
    in_D: Callable[[np.ndarray], bool] = _always
    in_S: Callable[[np.ndarray], bool] = _always
    rate_bound: Optional[float] = None
    snap: Callable[[np.ndarray], np.ndarray] = _identity
    name: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.scale_N < 1:
            raise ValueError("scale_N must be >= 1")


def drift(model: JumpModel, x) -> np.ndarray:
    """Return b_N[x] = c_N[x] * mu_N[x]."""
    x = as_state(x, model.dim)
    if not model.in_D(x):
        raise DomainError(f"state {x} is outside D")
    return float(model.rate(x)) * np.asarray(model.mean_increment(x), dtype=float)


@dataclass(frozen=True)
class HalfSpace:
    """Predicate ``x[coord] < bound`` (strict, so the set is open)."""

    coord: int
    bound: float

    def __call__(self, x) -> bool:
        return bool(x[self.coord] < self.bound)


@dataclass(frozen=True)
class Intersection:
    """Predicate true where both ``first`` and ``second`` hold."""

    first: Callable
    second: Callable

    def __call__(self, x) -> bool:
        return bool(self.first(x)) and bool(self.second(x))


def restrict(model: JumpModel, predicate: Callable) -> JumpModel:
    """Shrink S to ``S ∩ {predicate}``; D and the dynamics are unchanged."""
    return dataclasses.replace(model, in_S=Intersection(model.in_S, predicate))


@dataclass(frozen=True)
class ScalingAssumptions:
    """Constants of the hydrodynamic scaling hypotheses.

    ``kappa1(delta)`` bounds N * P[|Y_0 - a| > delta]; ``kappa2`` bounds
    rate / N on S; ``kappa3`` bounds N^2 * (Trace Sigma_N + |mu_N|^2) on S.
    """

    kappa1: Callable[[float], float]
    kappa2: float
    kappa3: float
    limit_point_a: np.ndarray

    def __post_init__(self):
        for name in ("kappa2", "kappa3"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        object.__setattr__(self, "limit_point_a", as_state(self.limit_point_a))


@dataclass(frozen=True)
class Violation:
    index: int
    probe: np.ndarray
    rate_ratio: float
    moment_ratio: float


@dataclass(frozen=True)
class ScalingReport:
    rate_ratio: float
    moment_ratio: float
    worst_rate_probe: int
    worst_moment_probe: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _ratio(value: float, scale: float) -> float:
    if scale > 0:
        return value / scale
    return 0.0 if value <= 0 else np.inf


def validate_scaling(
    model: JumpModel, assumptions: ScalingAssumptions, probes: Sequence
) -> ScalingReport:
    """Worst-case ratios rate/(kappa2 N) and moment/(kappa3 N^-2) over probes.

    Probes exceeding either bound are listed in ``violations`` rather than
    raised.
    """
    if len(probes) == 0:
        raise ValueError("probes must be non-empty")
    N = model.scale_N
    rate_scale = assumptions.kappa2 * N
    moment_scale = assumptions.kappa3 / N**2
    rate_ratios, moment_ratios, violations = [], [], []
    for i, p in enumerate(probes):
        x = as_state(p, model.dim)
        if not model.in_S(x):
            raise DomainError(f"probe {i} ({x}) is not in S")
        rr = _ratio(float(model.rate(x)), rate_scale)
        mr = _ratio(float(model.second_moment_bound(x)), moment_scale)
        rate_ratios.append(rr)
        moment_ratios.append(mr)
        if rr > 1 or mr > 1:
            violations.append(Violation(i, x, rr, mr))
    return ScalingReport(
        rate_ratio=max(rate_ratios),
        moment_ratio=max(moment_ratios),
        worst_rate_probe=int(np.argmax(rate_ratios)),
        worst_moment_probe=int(np.argmax(moment_ratios)),
        violations=violations,
    )


def lattice_probes(lower, upper, points_per_axis: int, in_S: Callable) -> list:
    """Uniform lattice over the box [lower, upper], keeping points in S."""
    lower = as_state(lower)
    upper = as_state(upper, lower.size)
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(lower, upper)]
    return [p for p in (np.array(c) for c in itertools.product(*axes)) if in_S(p)]
