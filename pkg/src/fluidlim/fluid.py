"""Fixed-step RK4 integration of the fluid limit with Hermite dense output and exit detection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import InvariantError, as_state

__all__ = [
    "VectorField",
    "FluidSolution",
    "integrate",
    "detect_exit",
    "eval_solution",
    "with_time_coordinate",
    "lipschitz_spot_check",
]

DEFAULT_STEP = 1e-3
DEFAULT_EXIT_TOL = 1e-10


@dataclass(frozen=True)
class VectorField:
    """Limiting drift b, with an optional Lipschitz constant and analytic solution.

    ``closed_form(t)`` returns y[t] for the field's canonical initial condition.
    """

    dim: int
    b: Callable[[np.ndarray], np.ndarray]
    lipschitz_lambda: Optional[float] = None
    closed_form: Optional[Callable[[float], np.ndarray]] = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.b(x), dtype=float)


@dataclass(frozen=True, eq=False)
class FluidSolution:
    grid_times: np.ndarray
    grid_states: np.ndarray
    grid_derivs: np.ndarray
    horizon: float
    zeta: Optional[float] = None

    @property
    def t_end(self) -> float:
        """Largest time at which the solution may be evaluated."""
        return self.horizon if self.zeta is None else min(self.zeta, self.horizon)

    @property
    def dim(self) -> int:
        return self.grid_states.shape[1]

    def __call__(self, t):
        return eval_solution(self, t)


def _hermite(t0, t1, y0, y1, f0, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    # increment form (h00 = 1 - h01): constants are reproduced exactly
    return y0 + h01 * (y1 - y0) + h10 * h * f0 + h11 * h * f1


def _checked(field, y, t) -> np.ndarray:
    f = field(y)
    if not np.all(np.isfinite(f)):
        raise InvariantError(f"vector field is non-finite at t={t}, y={y}")
    return f


def _bisect(t0, t1, y0, y1, f0, f1, in_S, tol) -> float:
    lo, hi = t0, t1
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if in_S(_hermite(t0, t1, y0, y1, f0, f1, mid)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def integrate(
    field: VectorField,
    a,
    horizon: float,
    step: float = DEFAULT_STEP,
    in_S: Optional[Callable] = None,
    tol: float = DEFAULT_EXIT_TOL,
) -> FluidSolution:
    """Solve y' = b(y), y[0] = a on [0, horizon] with classical RK4.

    Grid times are ``k * step`` (the last one clipped to ``horizon``). If
    ``in_S`` is given, integration stops at the first grid point outside S
    and the exit time zeta is localised to ``tol`` by bisection on the dense
    output.
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    y = as_state(a, field.dim)
    f = _checked(field, y, 0.0)
    times, states, derivs = [0.0], [y], [f]
    zeta = None
    if in_S is not None and not in_S(y):
        zeta = 0.0
    else:
        n_steps = max(math.ceil(horizon / step - 1e-9), 0)
        for k in range(n_steps):
            t0 = times[-1]
            t1 = min((k + 1) * step, horizon)
            h = t1 - t0
            k1 = f
            k2 = _checked(field, y + 0.5 * h * k1, t0)
            k3 = _checked(field, y + 0.5 * h * k2, t0)
            k4 = _checked(field, y + h * k3, t0)
            y_new = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            f_new = _checked(field, y_new, t1)
            times.append(t1)
            states.append(y_new)
            derivs.append(f_new)
            if in_S is not None and not in_S(y_new):
                zeta = _bisect(t0, t1, y, y_new, f, f_new, in_S, tol)
                break
            y, f = y_new, f_new
    return FluidSolution(
        grid_times=np.array(times),
        grid_states=np.array(states),
        grid_derivs=np.array(derivs),
        horizon=float(horizon),
        zeta=zeta,
    )


def eval_solution(sol: FluidSolution, t):
    """Cubic Hermite interpolant of the solution; vectorised over ``t``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > sol.t_end):
        raise ValueError(f"t outside [0, {sol.t_end}]")
    if len(sol.grid_times) == 1:
        out = np.broadcast_to(sol.grid_states[0], t_arr.shape + (sol.dim,)).copy()
        return out
    idx = np.clip(np.searchsorted(sol.grid_times, t_arr, side="right") - 1, 0, len(sol.grid_times) - 2)
    tt = t_arr[..., None]
    out = _hermite(
        sol.grid_times[idx][..., None],
        sol.grid_times[idx + 1][..., None],
        sol.grid_states[idx],
        sol.grid_states[idx + 1],
        sol.grid_derivs[idx],
        sol.grid_derivs[idx + 1],
        tt,
    )
    # grid points (including the last) return the stored states exactly
    return np.where((sol.grid_times[idx + 1] == t_arr)[..., None], sol.grid_states[idx + 1], out)


def detect_exit(sol: FluidSolution, in_S: Callable, tol: float = DEFAULT_EXIT_TOL) -> Optional[float]:
    """First exit time from S of a computed solution, or None.

    Membership is checked at grid points; the first flip is bisected on the
    interpolant. An exit and re-entry within one step is not seen.
    """
    for k, y in enumerate(sol.grid_states):
        if sol.grid_times[k] > sol.horizon:
            break
        if not in_S(y):
            if k == 0:
                return 0.0
            return _bisect(
                sol.grid_times[k - 1], sol.grid_times[k],
                sol.grid_states[k - 1], y,
                sol.grid_derivs[k - 1], sol.grid_derivs[k],
                in_S, tol,
            )
    return None


@dataclass(frozen=True)
class _TimeAugmented:
    inner: Callable

    def __call__(self, x):
        return np.append(np.asarray(self.inner(x[:-1]), dtype=float), 1.0)


def with_time_coordinate(field: VectorField) -> VectorField:
    """Append time as a last coordinate with unit drift."""
    lam = field.lipschitz_lambda
    return VectorField(dim=field.dim + 1, b=_TimeAugmented(field.b), lipschitz_lambda=lam)


def lipschitz_spot_check(field: VectorField, points, rng: np.random.Generator, n_pairs: int = 1000) -> float:
    """Largest observed |b(x) - b(y)| / |x - y| over random pairs of ``points``."""
    pts = np.asarray(points, dtype=float)
    worst = 0.0
    for _ in range(n_pairs):
        i, j = rng.integers(len(pts), size=2)
        d = np.linalg.norm(pts[i] - pts[j])
        if d > 0:
            worst = max(worst, float(np.linalg.norm(field(pts[i]) - field(pts[j])) / d))
    return worst
