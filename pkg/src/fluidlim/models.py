"""Built-in models: the heavy/light multitype particle system and the rescaled random walk.

Particle system
---------------
A chamber holds B particles (B divisible by w). Heavy particles are inert or
excited; at each step a uniformly chosen heavy particle is replaced by a light
one, and each time the cumulative number of inert removals reaches a multiple
of w - 1 another inert particle becomes excited. The chain lives in R^3 as

    (B / N, inert_removed / N, steps / N)

and is driven by an exponential clock whose rate is the heavy count. The
state is a lattice point; all counting (including the floor) is done on
integers recovered from the coordinates.

Two bookkeeping conventions are offered. ``"exact"`` starts from B - 1 inert
and one excited particle. ``"displayed"`` uses the asymptotic formulas
I_n = N(x0 - x1) - floor(N x1 / (w - 1)), E_n = N(x1 - x2) + floor(...),
which start with no excited particle and force the first removal to be
inert. The two differ by O(1) counts, i.e. O(1/N) in rescaled units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .fluid import VectorField
from .model import InvariantError, JumpModel, ScalingAssumptions, as_state

__all__ = [
    "ParticleSystemParams",
    "ParticleState",
    "ParticleChain",
    "ParticleFluid",
    "ParticleFamily",
    "draw_particle_count",
    "particle_model",
    "particle_limit_field",
    "particle_closed_form",
    "particle_scaling",
    "heavy_parameterised",
    "reconstruct_counts",
    "particle_counts",
    "BernoulliIncrement",
    "NormalIncrement",
    "ConstantIncrement",
    "WalkChain",
    "WalkFamily",
    "walk_sampler",
    "random_walk_model",
    "random_walk_limit_field",
    "random_walk_scaling",
    "TwoStateChain",
    "two_state_model",
]

_TOL = 1e-12
BOOKKEEPING = ("exact", "displayed")


@dataclass(frozen=True)
class ParticleSystemParams:
    w: int = 2
    mu: float = 1.0
    sigma2: float = 0.0
    kappa: float = 2.0
    N: int = 100
    bookkeeping: str = "exact"

    def __post_init__(self):
        if int(self.w) != self.w or self.w < 2:
            raise ValueError("w must be an integer >= 2")
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if not self.kappa > self.mu:
            raise ValueError("kappa must exceed mu")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.bookkeeping not in BOOKKEEPING:
            raise ValueError(f"bookkeeping must be one of {BOOKKEEPING}")

    def with_N(self, N: int) -> "ParticleSystemParams":
        return ParticleSystemParams(self.w, self.mu, self.sigma2, self.kappa, N, self.bookkeeping)


@dataclass(frozen=True)
class ParticleState:
    """Integer counters of the particle chain."""

    B_count: int
    inert_removed: int
    step_n: int

    @property
    def heavy(self) -> int:
        return self.B_count - self.step_n

    def coords(self, N: int) -> np.ndarray:
        return np.array([self.B_count, self.inert_removed, self.step_n], dtype=float) / N

    @classmethod
    def from_coords(cls, x, N: int) -> "ParticleState":
        B, r, n = (int(round(v * N)) for v in x)
        return cls(B, r, n)


def _floats(x) -> list:
    return x.tolist() if isinstance(x, np.ndarray) else [float(v) for v in x]


def _excitations(B, r, w, bookkeeping):
    exc = r // (w - 1)
    if bookkeeping == "exact":
        # the last inert particle cannot excite "some other" inert one
        cap = B - 1 - r
        exc = np.minimum(exc, cap) if isinstance(exc, np.ndarray) else min(exc, cap)
    return exc


def _inert_excited(B, r, n, w, bookkeeping):
    exc = _excitations(B, r, w, bookkeeping)
    if bookkeeping == "exact":
        return B - 1 - r - exc, 1 + r - n + exc
    return B - r - exc, r - n + exc


def reconstruct_counts(state: ParticleState, params: ParticleSystemParams) -> tuple[int, int]:
    """(I_n, E_n), the inert and excited heavy counts, from the integer counters."""
    B, r, n = state.B_count, state.inert_removed, state.step_n
    inert, excited = _inert_excited(B, r, n, params.w, params.bookkeeping)
    inert, excited = int(inert), int(excited)
    if inert < 0 or excited < 0 or state.heavy < 0:
        raise InvariantError(f"negative particle count at {state}: I={inert}, E={excited}")
    if inert + excited != state.heavy:
        raise InvariantError(f"heavy-particle conservation broken at {state}")
    return inert, excited


def particle_counts(states: np.ndarray, params: ParticleSystemParams) -> dict[str, np.ndarray]:
    """Vectorised counts along a trajectory: heavy, inert, excited (integers)."""
    ints = np.rint(np.asarray(states) * params.N).astype(np.int64)
    B, r, n = ints[:, 0], ints[:, 1], ints[:, 2]
    inert, excited = _inert_excited(B, r, n, params.w, params.bookkeeping)
    return {"heavy": B - n, "inert": inert, "excited": excited}


@dataclass(frozen=True)
class ParticleChain:
    """Transition mechanism of the particle chain at scale N."""

    w: int
    N: int
    kappa: float
    bookkeeping: str = "exact"

    def _ints(self, x):
        N = self.N
        x0, x1, x2 = _floats(x)
        return round(x0 * N), round(x1 * N), round(x2 * N)

    def inert_probability(self, x) -> float:
        """Probability that the next removed heavy particle is inert."""
        B, r, n = self._ints(x)
        heavy = B - n
        if heavy <= 0:
            return 0.0
        inert, _ = _inert_excited(B, r, n, self.w, self.bookkeeping)
        p = inert / heavy
        if not 0.0 <= p <= 1.0:
            raise InvariantError(f"inert probability {p} outside [0, 1] at {x}")
        return p

    def displayed_probability(self, x) -> float:
        """The asymptotic form (x0 - x1 - floor(N x1/(w-1))/N) / (x0 - x2), on integers."""
        B, r, n = self._ints(x)
        return (B - r - r // (self.w - 1)) / (B - n)

    def rate(self, x) -> float:
        B, _, n = self._ints(x)
        return float(max(B - n, 0))

    def sample_increment(self, x, rng) -> np.ndarray:
        inert = rng.random() < self.inert_probability(x)
        return np.array([0.0, inert / self.N, 1.0 / self.N])

    def mean_increment(self, x) -> np.ndarray:
        return np.array([0.0, self.inert_probability(x) / self.N, 1.0 / self.N])

    def second_moment_bound(self, x) -> float:
        # p(1-p)/N^2 + (p^2 + 1)/N^2
        return (self.inert_probability(x) + 1.0) / self.N**2

    def in_D(self, x) -> bool:
        w = self.w
        x0, x1, x2 = _floats(x)
        return x0 * (w - 1) - x1 * w >= -_TOL and x0 - x2 >= -_TOL

    def in_S(self, x) -> bool:
        return self.in_D(x) and float(x[0]) < self.kappa

    def reachable(self, x) -> bool:
        """True for lattice states of D whose reconstructed counts are non-negative.

        D also contains states no path visits (e.g. more steps than there
        were excited particles to remove); the probabilities are only
        meaningful on the reachable part.
        """
        if not self.in_D(x):
            return False
        B, r, n = self._ints(x)
        inert, excited = _inert_excited(B, r, n, self.w, self.bookkeeping)
        return B >= 1 and inert >= 0 and excited >= 0

    def snap(self, x) -> np.ndarray:
        return np.rint(x * self.N) / self.N


def draw_particle_count(params: ParticleSystemParams, rng: np.random.Generator) -> int:
    """B: nearest multiple of w to a Normal(mu N, sigma2 N) draw, at least w."""
    w = params.w
    z = params.mu * params.N
    if params.sigma2 > 0:
        z = rng.normal(z, math.sqrt(params.sigma2 * params.N))
    return max(w * math.floor(z / w + 0.5), w)


def particle_model(params: ParticleSystemParams, rng: np.random.Generator) -> tuple[JumpModel, np.ndarray]:
    """Build the particle chain and draw its initial state (B/N, 0, 0)."""
    chain = ParticleChain(params.w, params.N, params.kappa, params.bookkeeping)
    model = JumpModel(
        dim=3,
        scale_N=params.N,
        rate=chain.rate,
        sample_increment=chain.sample_increment,
        mean_increment=chain.mean_increment,
        second_moment_bound=chain.second_moment_bound,
        in_D=chain.in_D,
        in_S=chain.in_S,
        rate_bound=params.kappa,
        snap=chain.snap,
        name="particle",
    )
    B = draw_particle_count(params, rng)
    return model, np.array([B / params.N, 0.0, 0.0])


@dataclass(frozen=True)
class ParticleFamily:
    """N -> (model, x0) for a fixed parameter set; picklable."""

    params: ParticleSystemParams

    def __call__(self, N: int, rng: np.random.Generator):
        return particle_model(self.params.with_N(N), rng)


class ParticleFluid(NamedTuple):
    y0: float
    y1: float
    y2: float
    h: float
    e: float


def particle_closed_form(params: ParticleSystemParams, t) -> ParticleFluid:
    """Fluid limit from a = (mu, 0, 0); h is the heavy fraction, e the excited one."""
    w, mu = params.w, params.mu
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    r = w / (w - 1)
    y0 = np.full_like(t, mu)
    y1 = mu * (1 - np.exp(-t * r)) / r
    y2 = mu * (1 - np.exp(-t))
    h = mu * np.exp(-t)
    e = mu * (np.exp(-t) - np.exp(-t * r))
    return ParticleFluid(y0, y1, y2, h, e)


def heavy_parameterised(params: ParticleSystemParams, h) -> tuple:
    """(excited, inert) fluid fractions as functions of the heavy fraction h."""
    r = params.w / (params.w - 1)
    inert = params.mu * (np.asarray(h, dtype=float) / params.mu) ** r
    return h - inert, inert


@dataclass(frozen=True)
class _LinearField:
    matrix: np.ndarray

    def __call__(self, x):
        return self.matrix @ np.asarray(x, dtype=float)


@dataclass(frozen=True)
class _ParticleClosedForm:
    params: ParticleSystemParams

    def __call__(self, t):
        f = particle_closed_form(self.params, t)
        return np.stack([f.y0, f.y1, f.y2], axis=-1)


def particle_limit_field(params: ParticleSystemParams) -> VectorField:
    """b(x) = (0, x0 - x1 w/(w-1), x0 - x2), with its spectral-norm Lipschitz constant."""
    r = params.w / (params.w - 1)
    A = np.array([[0.0, 0.0, 0.0], [1.0, -r, 0.0], [1.0, 0.0, -1.0]])
    return VectorField(
        dim=3,
        b=_LinearField(A),
        lipschitz_lambda=float(np.linalg.norm(A, 2)),
        closed_form=_ParticleClosedForm(params),
    )


@dataclass(frozen=True)
class _ParticleKappa1:
    sigma2: float
    w: int

    def __call__(self, delta: float) -> float:
        # Chebyshev at delta/2 once N >= w/delta; trivial bound below that
        return 4 * self.sigma2 / delta**2 + self.w / delta


def particle_scaling(params: ParticleSystemParams) -> ScalingAssumptions:
    """Constants for the particle system: kappa2 = kappa, kappa3 = 2 (p + 1 <= 2)."""
    return ScalingAssumptions(
        kappa1=_ParticleKappa1(params.sigma2, params.w),
        kappa2=params.kappa,
        kappa3=2.0,
        limit_point_a=np.array([params.mu, 0.0, 0.0]),
    )


# -- random walk -------------------------------------------------------------


@dataclass(frozen=True)
class BernoulliIncrement:
    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return self.p

    @property
    def variance(self) -> float:
        return self.p * (1 - self.p)

    uniforms_per_draw = 1

    def __call__(self, rng) -> float:
        return float(rng.random() < self.p)

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return (u < self.p).astype(float)

    def draw(self, rng, size: int) -> np.ndarray:
        return self.from_uniform(rng.random(size))


@dataclass(frozen=True)
class NormalIncrement:
    mean: float
    variance: float

    def __call__(self, rng) -> float:
        return float(rng.normal(self.mean, math.sqrt(self.variance)))

    def draw(self, rng, size: int) -> np.ndarray:
        return rng.normal(self.mean, math.sqrt(self.variance), size)


@dataclass(frozen=True)
class ConstantIncrement:
    mean: float

    @property
    def variance(self) -> float:
        return 0.0

    uniforms_per_draw = 0

    def __call__(self, rng) -> float:
        return self.mean

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return np.full(len(u), float(self.mean))

    def draw(self, rng, size: int) -> np.ndarray:
        return np.full(size, float(self.mean))


@dataclass(frozen=True)
class WalkChain:
    """Random walk with increments U/N on a rate-N Poisson clock."""

    N: int
    mu: float
    sigma2: float
    sampler: object

    def rate(self, x) -> float:
        return float(self.N)

    def sample_increment(self, x, rng) -> np.ndarray:
        return np.array([self.sampler(rng) / self.N])

    def mean_increment(self, x) -> np.ndarray:
        return np.array([self.mu / self.N])

    def second_moment_bound(self, x) -> float:
        return (self.sigma2 + self.mu**2) / self.N**2


def walk_sampler(mu: float, sigma2: float, sampler=None):
    """Default increment sampler (constant or normal), or check a given one.

    Samplers exposing ``mean``/``variance`` must match mu/sigma2.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    if sampler is None:
        return ConstantIncrement(mu) if sigma2 == 0 else NormalIncrement(mu, sigma2)
    for attr, want in (("mean", mu), ("variance", sigma2)):
        have = getattr(sampler, attr, None)
        if have is not None and not math.isclose(have, want, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(f"sampler {attr} {have} does not match {want}")
    return sampler


def random_walk_model(mu: float, sigma2: float, increment_sampler=None, N: int = 100):
    """(model, x0) for Y_t = N^-1 X_{nu[Nt]} on a rate-N clock, with x0 = 0.

    ``increment_sampler(rng)`` draws U; it defaults to Normal(mu, sigma2)
    (constant mu when sigma2 = 0).
    """
    increment_sampler = walk_sampler(mu, sigma2, increment_sampler)
    chain = WalkChain(N, mu, sigma2, increment_sampler)
    model = JumpModel(
        dim=1,
        scale_N=N,
        rate=chain.rate,
        sample_increment=chain.sample_increment,
        mean_increment=chain.mean_increment,
        second_moment_bound=chain.second_moment_bound,
        rate_bound=1.0,
        name="walk",
    )
    return model, np.zeros(1)


@dataclass(frozen=True)
class WalkFamily:
    mu: float
    sigma2: float
    sampler: object = None

    def __call__(self, N: int, rng: np.random.Generator):
        return random_walk_model(self.mu, self.sigma2, self.sampler, N)


@dataclass(frozen=True)
class _Constant:
    value: np.ndarray

    def __call__(self, x):
        return self.value


@dataclass(frozen=True)
class _Ramp:
    mu: float

    def __call__(self, t):
        return np.asarray(t, dtype=float)[..., None] * self.mu


def random_walk_limit_field(mu: float) -> VectorField:
    return VectorField(dim=1, b=_Constant(np.array([float(mu)])), lipschitz_lambda=0.0, closed_form=_Ramp(mu))


def random_walk_scaling(mu: float, sigma2: float) -> ScalingAssumptions:
    return ScalingAssumptions(
        kappa1=_Constant(0.0), kappa2=1.0, kappa3=sigma2 + mu**2, limit_point_a=np.zeros(1)
    )


# -- two-state chain ---------------------------------------------------------


@dataclass(frozen=True)
class TwoStateChain:
    """Flip between 0 and h: up at ``rate0`` from 0, down at ``rate1`` from h.

    Increments are deterministic, so Trace Sigma = 0 and |mu|^2 = h^2.
    """

    h: float
    rate0: float
    rate1: float

    def _high(self, x) -> bool:
        return bool(x[0] > 0.5 * self.h)

    def rate(self, x) -> float:
        return self.rate1 if self._high(x) else self.rate0

    def mean_increment(self, x) -> np.ndarray:
        return np.array([-self.h if self._high(x) else self.h])

    def sample_increment(self, x, rng) -> np.ndarray:
        return self.mean_increment(x)

    def second_moment_bound(self, x) -> float:
        return self.h**2

    def in_D(self, x) -> bool:
        return bool(abs(x[0]) < _TOL or abs(x[0] - self.h) < _TOL)

    def snap(self, x) -> np.ndarray:
        return np.array([self.h if self._high(x) else 0.0])

    @property
    def C1(self) -> float:
        return self.h**2

    @property
    def C2(self) -> float:
        return max(self.rate0, self.rate1)


def two_state_model(h: float, rate0: float, rate1: float, x0: Optional[float] = None):
    chain = TwoStateChain(h, rate0, rate1)
    model = JumpModel(
        dim=1,
        scale_N=1,
        rate=chain.rate,
        sample_increment=chain.sample_increment,
        mean_increment=chain.mean_increment,
        second_moment_bound=chain.second_moment_bound,
        in_D=chain.in_D,
        in_S=chain.in_D,
        rate_bound=chain.C2,
        snap=chain.snap,
        name="two-state",
    )
    return model, as_state([0.0 if x0 is None else x0])
