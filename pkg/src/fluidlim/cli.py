"""Command-line front end: ``fluidlim {simulate,fluid,verify,exit,bounds}``.

Exit codes: 0 ok, 2 usage or invalid parameters, 3 I/O failure,
4 simulation invariant breach.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import io
from .bounds import BoundInputs, hydrodynamic_bound, maximal_inequality_bound
from .fluid import DEFAULT_STEP, VectorField, integrate
from .lab import RestrictedFamily, exit_time_convergence, run_ladder
from .model import HalfSpace, Intersection, InvariantError, ScalingAssumptions
from .models import (
    BernoulliIncrement,
    ConstantIncrement,
    NormalIncrement,
    ParticleChain,
    ParticleFamily,
    ParticleSystemParams,
    WalkFamily,
    particle_counts,
    particle_limit_field,
    particle_scaling,
    random_walk_limit_field,
    random_walk_scaling,
)
from .simulate import SimConfig, replicate_rng, simulate

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4


class UsageError(ValueError):
    pass


@dataclass
class ModelSetup:
    """Everything the subcommands need to know about a named model."""

    name: str
    params: dict
    family: Callable
    field: VectorField
    a: np.ndarray
    in_S: Optional[Callable]
    scaling: ScalingAssumptions
    exit_coord: int
    trajectory_columns: Optional[Callable] = None
    fluid_columns: Optional[Callable] = None


@dataclass(frozen=True)
class _ParticleColumns:
    params: ParticleSystemParams

    def __call__(self, states):
        cols = particle_counts(states, self.params)
        cols["h"] = states[:, 0] - states[:, 2]
        cols["e"] = cols["excited"] / self.params.N
        return cols


@dataclass(frozen=True)
class _ParticleFluidColumns:
    w: int

    def __call__(self, states):
        return {
            "h": states[:, 0] - states[:, 2],
            "e": states[:, 1] * self.w / (self.w - 1) - states[:, 2],
        }


def _particle_setup(args) -> ModelSetup:
    mu = args.mu if args.mu is not None else 1.0
    kappa = args.kappa if args.kappa is not None else 2.0 * mu
    sigma2 = args.sigma2 if args.sigma2 is not None else 0.0
    N = args.N if getattr(args, "N", None) else 100
    params = ParticleSystemParams(args.w, mu, sigma2, kappa, N, args.bookkeeping)
    return ModelSetup(
        name="particle",
        params={"w": args.w, "mu": mu, "sigma2": sigma2, "kappa": kappa, "bookkeeping": args.bookkeeping},
        family=ParticleFamily(params),
        field=particle_limit_field(params),
        a=np.array([mu, 0.0, 0.0]),
        in_S=ParticleChain(params.w, params.N, params.kappa, params.bookkeeping).in_S,
        scaling=particle_scaling(params),
        exit_coord=2,
        trajectory_columns=_ParticleColumns(params),
        fluid_columns=_ParticleFluidColumns(params.w),
    )


def _walk_setup(args) -> ModelSetup:
    mu = args.mu if args.mu is not None else 0.5
    kind = args.increment
    if kind == "bernoulli":
        if not 0 <= mu <= 1:
            raise UsageError("bernoulli increments need 0 <= mu <= 1")
        sampler = BernoulliIncrement(mu)
    elif kind == "constant":
        sampler = ConstantIncrement(mu)
    else:
        sampler = NormalIncrement(mu, args.sigma2 if args.sigma2 is not None else 1.0)
    sigma2 = sampler.variance
    if args.sigma2 is not None and abs(args.sigma2 - sigma2) > 1e-12:
        raise UsageError(f"--sigma2 {args.sigma2} is inconsistent with {kind} increments (variance {sigma2})")
    return ModelSetup(
        name="walk",
        params={"mu": mu, "sigma2": sigma2, "increment": kind},
        family=WalkFamily(mu, sigma2, sampler),
        field=random_walk_limit_field(mu),
        a=np.zeros(1),
        in_S=None,
        scaling=random_walk_scaling(mu, sigma2),
        exit_coord=0,
    )


MODELS = {"particle": _particle_setup, "walk": _walk_setup}


def _threads() -> int:
    raw = os.environ.get("FLUIDLIM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FLUIDLIM_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise UsageError("FLUIDLIM_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _ladder(text: str) -> list:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad N ladder {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("ladder entries must be positive integers")
    return vals


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _emit_rows(header, rows, path: Optional[str]) -> None:
    if path is None or path == "-":
        io.dump_rows(sys.stdout, header, rows)
    else:
        with open(path, "w", newline="") as fh:
            io.dump_rows(fh, header, rows)


def _exit_predicate(setup: ModelSetup, args):
    coord = setup.exit_coord if args.exit_coord is None else args.exit_coord
    if not 0 <= coord < setup.field.dim:
        raise UsageError(f"--exit-coord must be in [0, {setup.field.dim})")
    return HalfSpace(coord, args.exit_bound)


def _fluid_region(setup: ModelSetup, extra=None):
    if setup.in_S is None:
        return extra
    if extra is None:
        return setup.in_S
    return Intersection(setup.in_S, extra)


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    setup = MODELS[args.model](args)
    rng = replicate_rng(args.seed, args.N, 0)
    family = setup.family
    if args.exit_bound is not None:
        family = RestrictedFamily(family, _exit_predicate(setup, args))
    model, x0 = family(args.N, rng)
    cfg = SimConfig(args.horizon, args.seed, stop_on_exit=args.stop_on_exit)
    traj = simulate(model, x0, cfg, rng)
    extra = setup.trajectory_columns(traj.states) if setup.trajectory_columns else None
    _emit_rows(*io.trajectory_rows(traj, extra), args.out)
    if args.svg:
        series = []
        for i in range(traj.dim):
            t, v = io.step_series(traj.jump_times, traj.states[:, i], traj.horizon)
            series.append({"t": t, "y": v, "label": f"x{i} (N={args.N})"})
        if args.overlay_fluid:
            sol = integrate(setup.field, setup.a, traj.horizon, args.step)
            tt = np.linspace(0, sol.t_end, 400)
            yy = sol(tt)
            for i in range(traj.dim):
                series.append({"t": tt, "y": yy[:, i], "label": f"y{i} fluid", "dashed": True,
                               "color": io.PALETTE[i % len(io.PALETTE)]})
        io.svg_plot(args.svg, series, title=f"{setup.name} model, N={args.N}")
    return EXIT_OK


def cmd_fluid(args) -> int:
    setup = MODELS[args.model](args)
    extra = _exit_predicate(setup, args) if args.exit_bound is not None else None
    sol = integrate(setup.field, setup.a, args.horizon, args.step, _fluid_region(setup, extra))
    _emit_rows(*io.fluid_rows(sol, setup.fluid_columns), args.out)
    if args.svg:
        tt = np.linspace(0, sol.t_end, 400) if sol.t_end > 0 else np.zeros(1)
        yy = sol(tt)
        io.svg_plot(args.svg, [{"t": tt, "y": yy[:, i], "label": f"y{i}"} for i in range(sol.dim)],
                    title=f"{setup.name} fluid limit")
    return EXIT_OK


def cmd_verify(args) -> int:
    setup = MODELS[args.model](args)
    if len(args.N_ladder) < 2:
        raise UsageError("--N-ladder needs at least two values")
    cfg = SimConfig(args.horizon, args.seed, stop_on_exit=True)
    report = run_ladder(
        setup.family, setup.field, setup.a, cfg, args.N_ladder, args.replicates, args.delta,
        in_S=setup.in_S, step=args.step, workers=_threads(),
        model_name=setup.name, params=setup.params,
    )
    _emit(io.report_json(report), args.out)
    for row in report.per_N:
        print(f"N={row.N}: median sup_dev {row.median_sup_dev:.6g}, "
              f"P[sup_dev > {report.delta:g}] = {row.exceedance:.6g} "
              f"[{row.wilson_lo:.6g}, {row.wilson_hi:.6g}]", file=sys.stderr)
    if report.slope_median_dev is not None:
        print(f"slope of log median sup_dev vs log N: {report.slope_median_dev:.6g}", file=sys.stderr)
    if args.csv:
        io.write_samples_csv(args.csv, report.samples)
    return EXIT_OK


def cmd_exit(args) -> int:
    setup = MODELS[args.model](args)
    pred = _exit_predicate(setup, args)
    cfg = SimConfig(args.horizon, args.seed, stop_on_exit=True)
    rep = exit_time_convergence(
        RestrictedFamily(setup.family, pred), setup.field, setup.a, _fluid_region(setup, pred),
        cfg, args.N_ladder, args.replicates, args.delta, step=args.step,
    )
    out = {
        "model": setup.name,
        "params": setup.params,
        "exit_coord": pred.coord,
        "exit_bound": pred.bound,
        "zeta": rep.zeta,
        "delta": rep.delta,
        "horizon": rep.horizon,
        "per_N": [vars(s) for s in rep.per_N],
    }
    _emit(json.dumps(out, indent=2, allow_nan=False) + "\n", args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    setup = MODELS[args.model](args)
    sc = setup.scaling
    kappa = args.bound_kappa if args.bound_kappa is not None else 2 * sc.kappa2
    hb = hydrodynamic_bound(sc, args.N, args.horizon, args.delta, kappa)
    best = maximal_inequality_bound(BoundInputs(sc.kappa3 / args.N**2, sc.kappa2 * args.N, args.horizon, args.delta))
    out = {
        "N": args.N,
        "u": args.horizon,
        "delta": args.delta,
        "kappa": kappa,
        "bound": best.bound,
        "argmin_n": best.argmin_n,
        "chebyshev_term": hb.chebyshev_term,
        "moment_term": hb.moment_term,
        "gamma_term": hb.gamma_term,
        "n": hb.n,
        "substituted_bound": hb.bound,
    }
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_model_flags(p):
    p.add_argument("--model", required=True, choices=sorted(MODELS))
    p.add_argument("--w", type=int, default=2, help="quantisation constant (particle)")
    p.add_argument("--mu", type=float, help="mean of B/N (particle) or of increments (walk)")
    p.add_argument("--sigma2", type=_nonneg_float, help="variance parameter")
    p.add_argument("--kappa", type=float, help="bound on x0 defining S (particle; default 2 mu)")
    p.add_argument("--bookkeeping", choices=("exact", "displayed"), default="exact")
    p.add_argument("--increment", choices=("bernoulli", "normal", "constant"), default="bernoulli",
                   help="increment law (walk)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=_positive_float, default=DEFAULT_STEP)
    p.add_argument("--out")


def _add_exit_flags(p, bound_default=None):
    p.add_argument("--exit-coord", type=int, help="coordinate of the half-space x[i] < bound cut from S")
    p.add_argument("--exit-bound", type=float, default=bound_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluidlim",
        description="Simulate rescaled pure jump Markov processes and check them against their fluid limits.",
        epilog="exit codes: 0 ok, 2 usage, 3 I/O failure, 4 simulation invariant breach",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one trajectory, write CSV")
    _add_model_flags(p)
    _add_exit_flags(p)
    p.add_argument("--N", type=_positive_int, required=True)
    p.add_argument("--horizon", type=_positive_float, default=1.0)
    p.add_argument("--stop-on-exit", action="store_true")
    p.add_argument("--svg")
    p.add_argument("--overlay-fluid", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fluid", help="integrate the fluid limit, write CSV")
    _add_model_flags(p)
    _add_exit_flags(p)
    p.add_argument("--N", type=_positive_int, default=100, help=argparse.SUPPRESS)
    p.add_argument("--horizon", type=_nonneg_float, default=1.0)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_fluid)

    p = sub.add_parser("verify", help="Monte Carlo convergence ladder, write JSON")
    _add_model_flags(p)
    p.add_argument("--N-ladder", type=_ladder, required=True)
    p.add_argument("--horizon", type=_positive_float, default=1.0)
    p.add_argument("--delta", type=_positive_float, default=0.05)
    p.add_argument("--replicates", type=_positive_int, default=500)
    p.add_argument("--csv", help="per-replicate deviation samples")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("exit", help="exit-time convergence, write JSON")
    _add_model_flags(p)
    _add_exit_flags(p, bound_default=0.5)
    p.add_argument("--N-ladder", type=_ladder, required=True)
    p.add_argument("--horizon", type=_positive_float, default=2.0)
    p.add_argument("--delta", type=_positive_float, default=0.1)
    p.add_argument("--replicates", type=_positive_int, default=500)
    p.set_defaults(func=cmd_exit)

    p = sub.add_parser("bounds", help="evaluate the martingale maximal-inequality bounds, write JSON")
    _add_model_flags(p)
    p.add_argument("--N", type=_positive_int, required=True)
    p.add_argument("--horizon", type=_positive_float, default=1.0)
    p.add_argument("--delta", type=_positive_float, default=0.05)
    p.add_argument("--bound-kappa", type=float, help="substitution constant, must exceed kappa2")
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"fluidlim: invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"fluidlim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"fluidlim: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
