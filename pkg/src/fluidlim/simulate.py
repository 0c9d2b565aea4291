"""Pure jump process Y_t = X_{nu[t]}: simulation, exit times, compensator, martingale."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import DomainError, InvariantError, JumpModel, as_state

__all__ = [
    "SimConfig",
    "Trajectory",
    "PiecewiseLinearPath",
    "replicate_rng",
    "default_max_jumps",
    "simulate",
    "exit_time",
    "compensator_path",
    "martingale_path",
]

HORIZON_REACHED = "horizon-reached"
EXITED_S = "exited-S"
RATE_VANISHED = "rate-vanished"

_FALLBACK_MAX_JUMPS = 10_000_000


def replicate_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``(master_seed, *keys)``.

    Streams for distinct key tuples never overlap, so replicates can be run in
    any order or in parallel with identical results.
    """
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


def default_max_jumps(kappa2: float, N: int, horizon: float) -> int:
    return math.ceil(4 * kappa2 * N * horizon) + 1000


@dataclass(frozen=True)
class SimConfig:
    horizon_u: float
    master_seed: int = 0
    stop_on_exit: bool = True
    max_jumps: Optional[int] = None

    def __post_init__(self):
        if not self.horizon_u > 0:
            raise ValueError("horizon_u must be > 0")
        if self.max_jumps is not None and self.max_jumps < 1:
            raise ValueError("max_jumps must be >= 1")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A simulated path: Y_t = states[n] for jump_times[n] <= t < jump_times[n+1]."""

    jump_times: np.ndarray
    states: np.ndarray
    horizon: float
    exited_S_at: Optional[int]
    terminated_reason: str

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times) - 1

    def index_at(self, t):
        return np.searchsorted(self.jump_times, t, side="right") - 1

    def value_at(self, t) -> np.ndarray:
        """Y_t (right-continuous); vectorised over ``t``."""
        return self.states[self.index_at(t)]

    def same_as(self, other: "Trajectory") -> bool:
        return (
            self.horizon == other.horizon
            and self.exited_S_at == other.exited_S_at
            and self.terminated_reason == other.terminated_reason
            and self.jump_times.tobytes() == other.jump_times.tobytes()
            and self.states.tobytes() == other.states.tobytes()
        )


def simulate(model: JumpModel, x0, cfg: SimConfig, rng: np.random.Generator) -> Trajectory:
    """Run the chain on its exponential clock up to ``cfg.horizon_u``.

    Waiting times are ``-log(U) / rate`` with U uniform on (0, 1]. The run
    stops at the horizon, when the rate vanishes, or (if ``cfg.stop_on_exit``)
    at the first state outside S. Exceeding ``max_jumps`` raises.
    """
    x = as_state(x0, model.dim)
    if not model.in_D(x):
        raise DomainError(f"initial state {x} is outside D")
    max_jumps = cfg.max_jumps
    if max_jumps is None:
        if model.rate_bound is not None:
            max_jumps = default_max_jumps(model.rate_bound, model.scale_N, cfg.horizon_u)
        else:
            max_jumps = _FALLBACK_MAX_JUMPS

    horizon = float(cfg.horizon_u)
    rate, step, snap = model.rate, model.sample_increment, model.snap
    in_D, in_S = model.in_D, model.in_S
    times = [0.0]
    states = [x]
    exited = None if in_S(x) else 0
    reason = HORIZON_REACHED
    t = 0.0
    if exited is not None and cfg.stop_on_exit:
        reason = EXITED_S
    else:
        while True:
            c = rate(x)
            if not c > 0:
                reason = RATE_VANISHED
                break
            t += -math.log(1.0 - rng.random()) / c
            if t > horizon:
                break
            if len(times) > max_jumps:
                raise InvariantError(
                    f"more than {max_jumps} jumps before t={horizon}; rates look mis-scaled"
                )
            x = snap(x + step(x, rng))
            if not in_D(x):
                raise InvariantError(f"sampler left D: state {x} at t={t}")
            times.append(t)
            states.append(x)
            if exited is None and not in_S(x):
                exited = len(states) - 1
                if cfg.stop_on_exit:
                    reason = EXITED_S
                    break
    return Trajectory(
        jump_times=np.array(times),
        states=np.array(states, dtype=float).reshape(len(states), model.dim),
        horizon=horizon,
        exited_S_at=exited,
        terminated_reason=reason,
    )


def exit_time(traj: Trajectory, model: Optional[JumpModel] = None) -> Optional[float]:
    """sigma_N, the first time Y leaves S, or None if it never did.

    Y is piecewise constant, so the exit happens at a jump time and is exact.
    When ``model`` is given, S-membership is recomputed from its predicate
    rather than read from the trajectory.
    """
    if model is None:
        idx = traj.exited_S_at
    else:
        idx = next((i for i, s in enumerate(traj.states) if not model.in_S(s)), None)
    return None if idx is None else float(traj.jump_times[idx])


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    """Path equal to ``values[n] + (t - times[n]) * slopes[n]`` on [times[n], times[n+1])."""

    times: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        if np.any(idx < 0):
            raise ValueError("path evaluated before time 0")
        dt = (t - self.times[idx])[..., None]
        return self.values[idx] + dt * self.slopes[idx]

    def left_limits(self) -> np.ndarray:
        """Values approached from the left at times[1:]."""
        return self.values[:-1] + np.diff(self.times)[:, None] * self.slopes[:-1]

    def sup_norm(self, u: float) -> float:
        """sup_{t <= u} of the Euclidean norm, exact for a piecewise-linear path.

        The norm is convex on each linear piece, so only piece endpoints
        (including left limits at the breakpoints) and ``u`` are candidates.
        """
        k = int(np.searchsorted(self.times, u, side="right"))
        cands = [self.values[:k], self.left_limits()[: max(k - 1, 0)], self(u)[None, :]]
        return float(np.max(np.linalg.norm(np.concatenate(cands), axis=1)))


def _field_values(traj: Trajectory, field: Callable) -> np.ndarray:
    return np.array([field(s) for s in traj.states], dtype=float).reshape(traj.states.shape)


def compensator_path(traj: Trajectory, field: Callable) -> PiecewiseLinearPath:
    """A_t = Y_0 + int_0^t field(Y_{s-}) ds, integrated exactly along the path."""
    f = _field_values(traj, field)
    dt = np.diff(traj.jump_times)[:, None]
    knots = np.vstack([np.zeros((1, traj.dim)), np.cumsum(dt * f[:-1], axis=0)])
    return PiecewiseLinearPath(traj.jump_times, traj.states[0] + knots, f)


def martingale_path(traj: Trajectory, field: Callable) -> PiecewiseLinearPath:
    """M_t = Y_t - A_t; between jumps M drifts with slope -field(X_n)."""
    a = compensator_path(traj, field)
    return PiecewiseLinearPath(traj.jump_times, traj.states - a.values, -a.slopes)
