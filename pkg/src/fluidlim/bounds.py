"""Quantitative bounds: Gamma minorisation of jump times, the martingale
maximal inequality, its hydrodynamic specialisation, and the Gronwall envelope.

The regularised incomplete gamma function is computed with the usual split:
power series for x < a + 1, Lentz continued fraction otherwise. The common
prefactor x^a e^-x / Gamma(a) is evaluated in Loader's saddle-point form so
that large shapes do not lose digits to cancellation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ScalingAssumptions

__all__ = [
    "BoundInputs",
    "MaximalBound",
    "HydrodynamicBound",
    "regularized_lower_gamma",
    "regularized_upper_gamma",
    "gamma_tail_cdf",
    "gamma_cdf_ladder",
    "erlang_display_envelope",
    "maximal_inequality_bound",
    "default_n_max",
    "hydrodynamic_bound",
    "gronwall_envelope",
]

_EPS = 1e-16
_TINY = 1e-300
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
_ANCHOR = 64


def _stirlerr(a: float) -> float:
    """log Gamma(a) - [(a - 1/2) log a - a + log(2 pi)/2]."""
    if a <= 15.0:
        return math.lgamma(a) - (a - 0.5) * math.log(a) + a - _HALF_LOG_2PI
    a2 = a * a
    return (1 / 12 - (1 / 360 - (1 / 1260 - (1 / 1680 - 1 / (1188 * a2)) / a2) / a2) / a2) / a


def _bd0(u: float, m: float) -> float:
    """u log(u/m) + m - u without cancellation when u is close to m."""
    if abs(u - m) < 0.1 * (u + m):
        v = (u - m) / (u + m)
        s = (u - m) * v
        ej = 2 * u * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return u * math.log(u / m) + m - u


def _log_prefactor(a: float, x: float) -> float:
    """log(x^a e^-x / Gamma(a))."""
    return -_bd0(a, x) + 0.5 * math.log(a) - _HALF_LOG_2PI - _stirlerr(a)


def _max_iter(a: float) -> int:
    return 1000 + int(50 * math.sqrt(a))


def _series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(_max_iter(a)):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(_log_prefactor(a, x))
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _continued_fraction(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _max_iter(a)):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(_log_prefactor(a, x)) * h
    raise ArithmeticError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a) for a > 0, x >= 0."""
    if not a > 0:
        raise ValueError("shape a must be > 0")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(_series(a, x), 1.0)
    return max(1.0 - _continued_fraction(a, x), 0.0)


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = 1 - P(a, x), accurate when it is the small tail."""
    if not a > 0:
        raise ValueError("shape a must be > 0")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(1.0 - _series(a, x), 0.0)
    return min(_continued_fraction(a, x), 1.0)


def gamma_tail_cdf(n: int, rate: float, t: float) -> float:
    """P[xi_n <= t] for xi_n ~ Gamma(shape n, mean n / rate)."""
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    if not rate > 0:
        raise ValueError("rate must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    return regularized_lower_gamma(float(n), rate * t)


def gamma_cdf_ladder(n_max: int, rate: float, t: float) -> np.ndarray:
    """P[xi_n <= t] for n = 0..n_max, indexed by n (P[xi_0 <= t] = 1).

    Consecutive shapes differ by a Poisson weight, P(n) - P(n + 1) =
    x^n e^-x / n!. Below x the small upper tails Q(n + 1) = Q(n) + weight are
    accumulated upward, above x the small lower tails P(n) = P(n + 1) + weight
    downward, so only positive terms are ever added to the small side.
    Every ``_ANCHOR`` entries the running value is reset to a pointwise one.
    """
    if n_max < 1 or int(n_max) != n_max:
        raise ValueError("n_max must be a positive integer")
    if not rate > 0:
        raise ValueError("rate must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    x = rate * t
    out = np.zeros(n_max + 1)
    out[0] = 1.0
    if x == 0:
        return out

    def weight(n):
        # x^n e^-x / n!, in saddle-point form to keep large n accurate
        return math.exp(_log_prefactor(n + 1.0, x)) / x

    m = min(n_max, int(x))
    q = 0.0
    for n in range(1, m + 1):
        q = regularized_upper_gamma(n, x) if (n - 1) % _ANCHOR == 0 else q + weight(n - 1)
        out[n] = 1.0 - q
    p = 0.0
    for n in range(n_max, m, -1):
        p = regularized_lower_gamma(n, x) if (n_max - n) % _ANCHOR == 0 else p + weight(n)
        out[n] = p
    return np.clip(out, 0.0, 1.0)


def erlang_display_envelope(n: int, rate: float, t: float) -> float:
    """The polynomial envelope (rate t)^(n-2) / (n-1)! for P[xi_n <= t], n > 1.

    A quick closed-form majorant, valid but loose: with x = rate t, bound
    z^(n-1) by x^(n-2) z on [0, x]; the remaining integral of z e^-z is < 1.
    Diagnostic only; ``gamma_tail_cdf`` is authoritative.
    """
    if n < 2:
        raise ValueError("envelope needs n >= 2")
    x = rate * t
    if x == 0:
        return 0.0 if n > 2 else 1.0
    return math.exp((n - 2) * math.log(x) - math.lgamma(n))


@dataclass(frozen=True)
class BoundInputs:
    C1: float
    C2: float
    u: float
    delta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.C1, self.C2, self.u, self.delta)):
            raise ValueError("bound inputs must be finite")
        if self.C1 < 0:
            raise ValueError("C1 must be >= 0")
        if not self.C2 > 0:
            raise ValueError("C2 must be > 0")
        if not self.u > 0:
            raise ValueError("u must be > 0")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")


@dataclass(frozen=True)
class MaximalBound:
    bound: float  # clamped to [0, 1]
    raw: float
    argmin_n: int


def default_n_max(C2: float, u: float) -> int:
    return math.ceil(10 * C2 * u) + 10


def maximal_inequality_bound(inputs: BoundInputs, n_max: Optional[int] = None) -> MaximalBound:
    """min over 2 <= n <= n_max of P[xi_n < u] + n C1 / delta."""
    if n_max is None:
        n_max = default_n_max(inputs.C2, inputs.u)
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    cdf = gamma_cdf_ladder(n_max, inputs.C2, inputs.u)[2:]
    n = np.arange(2, n_max + 1)
    values = cdf + n * inputs.C1 / inputs.delta
    k = int(np.argmin(values))
    raw = float(values[k])
    return MaximalBound(bound=min(max(raw, 0.0), 1.0), raw=raw, argmin_n=int(n[k]))


@dataclass(frozen=True)
class HydrodynamicBound:
    n: int
    gamma_term: float  # exact P[xi_n < u]
    chebyshev_term: float  # Chebyshev bound on the same probability, capped at 1
    moment_term: float  # n C1 / delta
    bound: float  # gamma_term + moment_term

    @property
    def chebyshev_bound(self) -> float:
        return self.chebyshev_term + self.moment_term


def hydrodynamic_bound(
    assumptions: ScalingAssumptions,
    N: int,
    u: float,
    delta: float,
    kappa: Optional[float] = None,
) -> HydrodynamicBound:
    """Maximal-inequality bound with C1 = kappa3/N^2, C2 = kappa2 N, n = ceil(u kappa N).

    With kappa > kappa2 the Gamma variable has mean u kappa / kappa2 > u and
    variance O(1/N), so both terms are O(1/N). ``kappa`` defaults to 2 kappa2.
    """
    k2, k3 = assumptions.kappa2, assumptions.kappa3
    if kappa is None:
        kappa = 2 * k2
    if not kappa > k2:
        raise ValueError(f"kappa ({kappa}) must exceed kappa2 ({k2})")
    if N < 1:
        raise ValueError("N must be >= 1")
    if not (u > 0 and delta > 0):
        raise ValueError("u and delta must be > 0")
    C1 = k3 / N**2
    C2 = k2 * N
    n = math.ceil(u * kappa * N)
    moment = n * C1 / delta
    if C2 == 0:
        gamma_term = cheb = 0.0
    else:
        gamma_term = gamma_tail_cdf(n, C2, u)
        mean, var = n / C2, n / C2**2
        cheb = min(1.0, var / (mean - u) ** 2)
    return HydrodynamicBound(
        n=n, gamma_term=gamma_term, chebyshev_term=cheb, moment_term=moment, bound=gamma_term + moment
    )


def gronwall_envelope(kappa: float, lam: float, t: float) -> float:
    """kappa * exp(lam * t)."""
    if kappa < 0 or lam < 0 or t < 0:
        raise ValueError("arguments must be non-negative")
    return kappa * math.exp(lam * t)
