"""Monte Carlo checks of fluid-limit convergence: sup-deviation, exceedance, exit times."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fluid import DEFAULT_STEP, FluidSolution, VectorField, integrate
from .model import restrict
from .models import random_walk_limit_field, random_walk_model, walk_sampler
from .simulate import EXITED_S, SimConfig, Trajectory, exit_time, replicate_rng, simulate

__all__ = [
    "DeviationSample",
    "NStats",
    "ConvergenceReport",
    "ExitStats",
    "ExitReport",
    "WLLNStats",
    "WLLNReport",
    "RestrictedFamily",
    "wilson_interval",
    "loglog_slope",
    "sup_deviation",
    "run_ladder",
    "exit_time_convergence",
    "wlln_check",
]

Z95 = 1.959963984540054
MIN_REPLICATES = 100
MODES = ("stopped", "unstopped", "process-stopped")


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # the endpoints are exact at 0 and n successes; avoid round-off residue
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log y against log x; None with < 3 usable points."""
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y is not None and y > 0 and math.isfinite(y)]
    if len(pts) < 3 or len(pts) != len(xs):
        return None
    lx, ly = np.log(np.array(pts).T)
    return float(np.polyfit(lx, ly, 1)[0])


def _norms(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=-1))


def sup_deviation(traj: Trajectory, sol: FluidSolution, u: float, mode: str = "stopped") -> float:
    """Sup-norm distance between the jump process and the fluid limit on [0, u].

    ``mode`` selects what is stopped at the exit time sigma_N:

    * ``"stopped"``: sup_t |Y(t ^ sigma) - y(t ^ sigma)|
    * ``"unstopped"``: sup_t |Y(t) - y(t)|, needs a path not cut at exit
    * ``"process-stopped"``: sup_t |Y(t ^ sigma) - y(t)|

    Candidate times are the jump times (with left limits), the ODE grid
    points and the end point, which is exact up to the interpolation error of
    ``sol`` since Y is piecewise constant.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if traj.dim != sol.dim:
        raise ValueError(f"dimension mismatch: trajectory {traj.dim}, fluid {sol.dim}")
    sigma = exit_time(traj)
    if mode == "unstopped":
        if traj.terminated_reason == EXITED_S and u > traj.jump_times[-1]:
            raise ValueError("trajectory was cut at its exit time; rerun with stop_on_exit=False")
        t_proc = t_fluid = u
    elif mode == "stopped":
        t_proc = t_fluid = u if sigma is None else min(u, sigma)
    else:
        t_proc = u if sigma is None else min(u, sigma)
        t_fluid = u
    if t_fluid > sol.t_end * (1 + 1e-12):
        raise ValueError(f"fluid solution only reaches t={sol.t_end}, need {t_fluid}")
    t_fluid = min(t_fluid, sol.t_end)
    t_proc = min(t_proc, t_fluid)

    jt = traj.jump_times
    k = int(np.searchsorted(jt, t_proc, side="right"))
    y_jumps = sol(jt[:k])
    right = _norms(traj.states[:k] - y_jumps)
    left = _norms(traj.states[: k - 1] - y_jumps[1:])
    g = sol.grid_times[sol.grid_times <= t_fluid]
    tt = np.append(g, t_fluid)
    rest = _norms(traj.value_at(np.minimum(tt, t_proc)) - sol(tt))
    return float(max(right.max(initial=0.0), left.max(initial=0.0), rest.max()))


@dataclass(frozen=True)
class DeviationSample:
    N: int
    replicate: int
    sup_dev: float
    sigma_N: Optional[float]
    exited: bool


@dataclass(frozen=True)
class NStats:
    N: int
    median_sup_dev: float
    mean_sup_dev: float
    exceedance: float
    wilson_lo: float
    wilson_hi: float
    exit_prob: float
    median_sigma: Optional[float]


@dataclass(frozen=True)
class ConvergenceReport:
    model: str
    params: dict
    u: float
    delta: float
    replicates: int
    master_seed: int
    N_ladder: list
    per_N: list
    slope_median_dev: Optional[float]
    slope_exceedance: Optional[float]
    zeta: Optional[float]
    samples: list = field(default_factory=list, compare=False, repr=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("samples")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConvergenceReport":
        d = dict(d)
        d["per_N"] = [NStats(**row) for row in d["per_N"]]
        d["N_ladder"] = list(d["N_ladder"])
        return cls(**d)


def _median_or_none(values) -> Optional[float]:
    if len(values) == 0:
        return None
    m = float(np.median(values))
    return m if math.isfinite(m) else None


@dataclass(frozen=True)
class RestrictedFamily:
    """Wrap a model family so that every model's S is cut down by ``predicate``."""

    family: Callable
    predicate: Callable

    def __call__(self, N, rng):
        model, x0 = self.family(N, rng)
        return restrict(model, self.predicate), x0


def _one_replicate(family, sol, cfg, N, rep, mode):
    rng = replicate_rng(cfg.master_seed, N, rep)
    model, x0 = family(N, rng)
    traj = simulate(model, x0, cfg, rng)
    sigma = exit_time(traj)
    return DeviationSample(N, rep, sup_deviation(traj, sol, cfg.horizon_u, mode), sigma, sigma is not None)


def _run_chunk(args):
    family, sol, cfg, N, reps, mode = args
    return [_one_replicate(family, sol, cfg, N, r, mode) for r in reps]


def _collect(family, sol, cfg, N_ladder, replicates, mode, workers):
    jobs = []
    chunk = max(1, replicates // max(workers, 1))
    for N in N_ladder:
        for start in range(0, replicates, chunk):
            jobs.append((family, sol, cfg, N, range(start, min(start + chunk, replicates)), mode))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    by_N = {N: [] for N in N_ladder}
    for part in parts:
        for s in part:
            by_N[s.N].append(s)
    return by_N


def _check_ladder(N_ladder, replicates):
    if len(N_ladder) == 0 or any(b <= a for a, b in zip(N_ladder, N_ladder[1:])):
        raise ValueError("N_ladder must be non-empty and strictly increasing")
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates, got {replicates}")


def run_ladder(
    model_family: Callable,
    field: VectorField,
    a,
    cfg: SimConfig,
    N_ladder: Sequence[int],
    replicates: int,
    delta: float,
    in_S: Optional[Callable] = None,
    step: float = DEFAULT_STEP,
    mode: str = "stopped",
    workers: int = 1,
    model_name: str = "custom",
    params: Optional[dict] = None,
) -> ConvergenceReport:
    """Sup-deviation statistics against one fluid solution, for each N.

    ``model_family(N, rng)`` returns ``(model, x0)``; replicate ``r`` at
    scale ``N`` uses the stream ``replicate_rng(cfg.master_seed, N, r)``, so
    results do not depend on ``workers``.
    """
    N_ladder = [int(n) for n in N_ladder]
    _check_ladder(N_ladder, replicates)
    if not delta > 0:
        raise ValueError("delta must be > 0")
    u = cfg.horizon_u
    sol = integrate(field, a, u, step, in_S)
    if sol.zeta is not None and sol.zeta < u:
        raise ValueError(f"horizon {u} exceeds the fluid exit time {sol.zeta}")
    by_N = _collect(model_family, sol, cfg, N_ladder, replicates, mode, workers)

    per_N, samples = [], []
    for N in N_ladder:
        rows = by_N[N]
        samples.extend(rows)
        devs = np.array([s.sup_dev for s in rows])
        k = int(np.sum(devs > delta))
        lo, hi = wilson_interval(k, len(rows))
        sig = [s.sigma_N if s.exited else math.inf for s in rows]
        per_N.append(
            NStats(
                N=N,
                median_sup_dev=float(np.median(devs)),
                mean_sup_dev=float(np.mean(devs)),
                exceedance=k / len(rows),
                wilson_lo=lo,
                wilson_hi=hi,
                exit_prob=sum(s.exited for s in rows) / len(rows),
                median_sigma=_median_or_none(sig),
            )
        )
    exceed = [r.exceedance for r in per_N]
    return ConvergenceReport(
        model=model_name,
        params=dict(params or {}),
        u=float(u),
        delta=float(delta),
        replicates=int(replicates),
        master_seed=int(cfg.master_seed),
        N_ladder=N_ladder,
        per_N=per_N,
        slope_median_dev=loglog_slope(N_ladder, [r.median_sup_dev for r in per_N]),
        slope_exceedance=loglog_slope(N_ladder, exceed) if all(e > 0 for e in exceed) else None,
        zeta=sol.zeta,
        samples=samples,
    )


@dataclass(frozen=True)
class ExitStats:
    N: int
    prob: float
    wilson_lo: float
    wilson_hi: float
    median_sigma: Optional[float]
    censored: int


@dataclass(frozen=True)
class ExitReport:
    zeta: float
    delta: float
    horizon: float
    per_N: list
    sigmas: dict = field(default_factory=dict, compare=False, repr=False)


def exit_time_convergence(
    model_family: Callable,
    field: VectorField,
    a,
    in_S: Callable,
    cfg: SimConfig,
    N_ladder: Sequence[int],
    replicates: int,
    delta: float,
    step: float = DEFAULT_STEP,
) -> ExitReport:
    """Estimate P[|sigma_N - zeta| > delta] for each N.

    ``in_S`` is the fluid's region and should match the models' S. Paths that
    have not left S by the horizon are censored there: they count as
    exceedances only when ``horizon - zeta > delta``.
    """
    N_ladder = [int(n) for n in N_ladder]
    _check_ladder(N_ladder, replicates)
    sol = integrate(field, a, cfg.horizon_u, step, in_S)
    if sol.zeta is None:
        raise ValueError(f"fluid limit does not leave S before t={cfg.horizon_u}")
    zeta = sol.zeta
    cfg = dataclasses.replace(cfg, stop_on_exit=True)
    per_N, sigmas = [], {}
    for N in N_ladder:
        sig = []
        for rep in range(replicates):
            rng = replicate_rng(cfg.master_seed, N, rep)
            model, x0 = model_family(N, rng)
            s = exit_time(simulate(model, x0, cfg, rng))
            sig.append(math.inf if s is None else s)
        sig = np.array(sig)
        censored = int(np.sum(np.isinf(sig)))
        k = int(np.sum(np.abs(np.minimum(sig, cfg.horizon_u) - zeta) > delta))
        lo, hi = wilson_interval(k, replicates)
        per_N.append(ExitStats(N, k / replicates, lo, hi, _median_or_none(sig), censored))
        sigmas[N] = sig
    return ExitReport(zeta=zeta, delta=float(delta), horizon=cfg.horizon_u, per_N=per_N, sigmas=sigmas)


@dataclass(frozen=True)
class WLLNStats:
    N: int
    exceedance: float
    wilson_lo: float
    wilson_hi: float
    bound: float  # sigma^2 / (N delta^2)
    dominated: bool  # exceedance <= bound + 3 Wilson half-widths


@dataclass(frozen=True)
class WLLNReport:
    mu: float
    sigma2: float
    delta: float
    clock: str
    per_N: list


def _walk_path_fast(sampler, N, rng):
    """Poisson-clock walk on [0, 1], consuming ``rng`` exactly as ``simulate`` does."""
    m = sampler.uniforms_per_draw
    block = N + 10 * int(math.sqrt(N)) + 50
    taus, incs = [], []
    t = 0.0
    while True:
        u = rng.random(block * (1 + m)).reshape(block, 1 + m)
        # math.log, not np.log: the two can differ in the last ulp
        waits = -np.array([math.log(1.0 - v) for v in u[:, 0].tolist()]) / N
        # cumsum from t keeps the same left-to-right rounding as the event loop
        tau = np.cumsum(np.concatenate([[t], waits]))[1:]
        inc = sampler.from_uniform(u[:, 1] if m else u[:, :0]) / N
        k = int(np.searchsorted(tau, 1.0, side="right"))
        taus.append(tau[:k])
        incs.append(inc[:k])
        if k < block:
            break
        t = float(tau[-1])
    tau = np.concatenate([[0.0]] + taus)
    y = np.cumsum(np.concatenate([[0.0]] + incs))
    return tau, y


def _walk_max_dev(tau, y, mu):
    right = np.abs(y - mu * tau)
    left = np.abs(y[:-1] - mu * tau[1:])
    return max(right.max(), left.max(initial=0.0), abs(y[-1] - mu))


def wlln_check(
    mu: float,
    sigma2: float,
    N_ladder: Sequence[int],
    replicates: int,
    delta: float,
    sampler=None,
    master_seed: int = 0,
    clock: str = "poisson",
) -> WLLNReport:
    """Exceedance of max_{t<=1} |Y_t - t mu| >= delta against sigma^2/(N delta^2).

    ``clock="poisson"`` runs the rate-N jump process; ``clock="discrete"``
    looks at the plain walk N^-1 X_{Nt} at t in {0, 1/N, ..., 1}. Samplers
    with a ``from_uniform`` method take a vectorised path that reproduces
    ``simulate`` draw for draw.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    if clock not in ("poisson", "discrete"):
        raise ValueError("clock must be 'poisson' or 'discrete'")
    sampler = walk_sampler(mu, sigma2, sampler)
    sol = None
    per_N = []
    for N in N_ladder:
        hits = 0
        for rep in range(replicates):
            rng = replicate_rng(master_seed, N, rep)
            if clock == "discrete":
                x = np.concatenate([[0.0], np.cumsum(sampler.draw(rng, N)) / N])
                dev = float(np.max(np.abs(x - mu * np.arange(N + 1) / N)))
            elif hasattr(sampler, "from_uniform"):
                dev = _walk_max_dev(*_walk_path_fast(sampler, N, rng), mu)
            else:
                if sol is None:
                    sol = integrate(random_walk_limit_field(mu), [0.0], 1.0, 1.0)
                model, x0 = random_walk_model(mu, sigma2, sampler, N)
                traj = simulate(model, x0, SimConfig(1.0, master_seed), rng)
                dev = sup_deviation(traj, sol, 1.0)
            hits += dev >= delta
        lo, hi = wilson_interval(hits, replicates)
        p = hits / replicates
        bound = sigma2 / (N * delta**2)
        half = 0.5 * (hi - lo)
        per_N.append(WLLNStats(N, p, lo, hi, bound, p <= bound + 3 * half))
    return WLLNReport(mu=mu, sigma2=sigma2, delta=delta, clock=clock, per_N=per_N)
