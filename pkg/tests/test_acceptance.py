"""End-to-end acceptance checks, one test per numbered criterion.

Run on its own with ``pytest tests/test_acceptance.py`` (or execute this
file); a PASS/FAIL line per criterion is printed in the terminal summary.
"""
import math
import os
import sys

import numpy as np
import pytest

from fluidlim import cli
from fluidlim.bounds import gamma_tail_cdf, maximal_inequality_bound, BoundInputs
from fluidlim.fluid import integrate
from fluidlim.lab import RestrictedFamily, exit_time_convergence, run_ladder, wlln_check
from fluidlim.model import HalfSpace, Intersection, drift
from fluidlim.models import (
    BernoulliIncrement,
    ParticleChain,
    ParticleFamily,
    ParticleSystemParams,
    particle_closed_form,
    particle_counts,
    particle_limit_field,
    particle_model,
    two_state_model,
)
from fluidlim.simulate import (
    RATE_VANISHED,
    SimConfig,
    compensator_path,
    martingale_path,
    replicate_rng,
    simulate,
)

LADDER = [100, 400, 1600, 6400]


def _closed_form_error(w, step, horizon, ts=None):
    p = ParticleSystemParams(w=w, mu=1.0)
    sol = integrate(particle_limit_field(p), [1.0, 0.0, 0.0], horizon, step)
    if ts is None:
        ts = sol.grid_times
    cf = particle_closed_form(p, ts)
    exact = np.column_stack([cf.y0, cf.y1, cf.y2])
    return float(np.max(np.abs(sol(ts) - exact)))


def _monotone_with_overlap(rows):
    """Each exceedance is <= its predecessor, or their Wilson intervals overlap."""
    for prev, cur in zip(rows, rows[1:]):
        if cur.exceedance > prev.exceedance and cur.wilson_lo > prev.wilson_hi:
            return False
    return True


@pytest.mark.acceptance(1, "fluid ODE matches closed forms to 1e-8 on [0, 5] (w = 2, 3, 5)")
@pytest.mark.parametrize("w", [2, 3, 5])
def test_fluid_limit_oracle(w):
    # grid points plus off-grid points exercising the dense output
    ts = np.union1d(np.linspace(0.0, 5.0, 5001), np.linspace(0.0, 5.0, 3331))
    err = _closed_form_error(w, 1e-3, 5.0, ts)
    print(f"w={w}: sup error {err:.3e}")
    assert err <= 1e-8


@pytest.mark.acceptance(2, "RK4 order: halving the step cuts the error by 12-20x")
def test_rk4_order():
    coarse = _closed_form_error(2, 1e-2, 2.0)
    fine = _closed_form_error(2, 5e-3, 2.0)
    ratio = coarse / fine
    print(f"errors {coarse:.3e} -> {fine:.3e}, ratio {ratio:.2f}")
    assert 12 <= ratio <= 20


@pytest.mark.acceptance(3, "E[M_u] = 0 within 4 standard errors (N = 100, 2000 replicates)")
def test_martingale_zero_mean():
    params = ParticleSystemParams(w=2, mu=1.0, N=100)
    cfg = SimConfig(1.0, master_seed=303)
    ends = []
    for rep in range(2000):
        rng = replicate_rng(cfg.master_seed, params.N, rep)
        model, x0 = particle_model(params, rng)
        traj = simulate(model, x0, cfg, rng)
        M = martingale_path(traj, lambda x, m=model: drift(m, x))
        ends.append(M(1.0))
    ends = np.array(ends)
    mean = ends.mean(axis=0)
    se = ends.std(axis=0, ddof=1) / math.sqrt(len(ends))
    print(f"mean M_u {mean}, standard errors {se}")
    for m, s in zip(mean, se):
        if s == 0:
            assert m == 0.0
        else:
            assert abs(m) <= 4 * s


@pytest.mark.acceptance(4, "A_t + M_t = Y_t to 1e-12 at 100 random times on 100 paths")
def test_path_identity():
    params = ParticleSystemParams(w=2, mu=1.0, N=100)
    cfg = SimConfig(1.0, master_seed=404)
    checker = np.random.default_rng(4)
    worst = 0.0
    for rep in range(100):
        rng = replicate_rng(cfg.master_seed, params.N, rep)
        model, x0 = particle_model(params, rng)
        traj = simulate(model, x0, cfg, rng)
        field = lambda x, m=model: drift(m, x)
        A, M = compensator_path(traj, field), martingale_path(traj, field)
        ts = checker.uniform(0.0, 1.0, 100)
        worst = max(worst, float(np.max(np.abs(A(ts) + M(ts) - traj.value_at(ts)))))
    print(f"worst |A + M - Y| = {worst:.3e}")
    assert worst <= 1e-12


@pytest.fixture(scope="module")
def particle_ladder():
    params = ParticleSystemParams(w=2, mu=1.0, N=100)
    chain = ParticleChain(params.w, params.N, params.kappa)
    return run_ladder(
        ParticleFamily(params), particle_limit_field(params), [1.0, 0.0, 0.0],
        SimConfig(1.0, master_seed=2024), LADDER, 500, 0.05, in_S=chain.in_S,
    )


@pytest.mark.acceptance(5, "log median sup-deviation slope in [-0.65, -0.35]; exceedance monotone")
def test_deviation_scaling(particle_ladder):
    rep = particle_ladder
    for row in rep.per_N:
        print(f"N={row.N}: median {row.median_sup_dev:.4g}, exceedance {row.exceedance:.3f} "
              f"[{row.wilson_lo:.3f}, {row.wilson_hi:.3f}]")
    print(f"slope {rep.slope_median_dev:.4f}")
    assert -0.65 <= rep.slope_median_dev <= -0.35
    assert _monotone_with_overlap(rep.per_N)


@pytest.mark.acceptance(6, "median exit time within 0.05 of ln 2 at N = 6400; P[|sigma - zeta| > 0.1] decreasing")
def test_exit_time_convergence():
    params = ParticleSystemParams(w=2, mu=1.0, N=100)
    chain = ParticleChain(params.w, params.N, params.kappa)
    cut = HalfSpace(2, 0.5)
    rep = exit_time_convergence(
        RestrictedFamily(ParticleFamily(params), cut), particle_limit_field(params), [1.0, 0.0, 0.0],
        Intersection(chain.in_S, cut), SimConfig(2.0, master_seed=2024), LADDER, 500, 0.1,
    )
    probs = [row.prob for row in rep.per_N]
    for row in rep.per_N:
        print(f"N={row.N}: median sigma {row.median_sigma:.5f}, P[|sigma - zeta| > 0.1] = {row.prob:.3f}")
    assert abs(rep.zeta - math.log(2)) < 1e-9
    assert abs(rep.per_N[-1].median_sigma - math.log(2)) < 0.05
    assert all(b <= a for a, b in zip(probs, probs[1:]))
    assert probs[-1] < probs[0]


@pytest.mark.acceptance(7, "WLLN exceedance dominated by sigma^2/(N delta^2) + 3 Wilson half-widths")
def test_wlln_domination():
    rep = wlln_check(0.5, 0.25, [250, 1000, 4000], 2000, 0.2, sampler=BernoulliIncrement(0.5), master_seed=7)
    for row in rep.per_N:
        half = 0.5 * (row.wilson_hi - row.wilson_lo)
        print(f"N={row.N}: exceedance {row.exceedance:.4f}, bound {row.bound:.5f} + 3 x {half:.5f}")
        assert row.exceedance <= row.bound + 3 * half
        assert row.dominated


@pytest.mark.acceptance(8, "maximal inequality dominates a 2-state chain; gamma CDF = Erlang to 1e-12")
def test_maximal_inequality_domination():
    # pairs chosen so that each bound is < 1 and each event has visible mass
    h, rate0, rate1 = 0.2, 2.0, 2.0
    model, x0 = two_state_model(h, rate0, rate1)
    C1, C2 = h * h, max(rate0, rate1)
    field = lambda x: drift(model, x)
    pairs = [(1.0, 0.32), (2.0, 0.32), (2.0, 0.64), (4.0, 0.64), (4.0, 1.28)]
    reps = 10_000
    horizon = max(u for u, _ in pairs)
    sups = {u: np.empty(reps) for u, _ in pairs}
    cfg = SimConfig(horizon, master_seed=88)
    for r in range(reps):
        rng = replicate_rng(cfg.master_seed, 1, r)
        M = martingale_path(simulate(model, x0, cfg, rng), field)
        for u in sups:
            sups[u][r] = M.sup_norm(u)
    for u, delta in pairs:
        p = float(np.mean(sups[u] ** 2 >= delta))
        se = math.sqrt(p * (1 - p) / reps)
        b = maximal_inequality_bound(BoundInputs(C1, C2, u, delta))
        print(f"u={u}, delta={delta}: bound {b.bound:.4f} (n={b.argmin_n}) vs empirical {p:.4f} +- {se:.4f}")
        assert b.bound < 1.0 and p > 0.0
        assert b.bound >= p - 3 * se

    for rate, t in [(1.0, 1.0), (0.5, 3.0), (2.0, 0.1), (4.0, 2.5), (1.0, 30.0)]:
        x = rate * t
        erlang = [
            1 - math.exp(-x),
            1 - math.exp(-x) * (1 + x),
            1 - math.exp(-x) * (1 + x + x * x / 2),
        ]
        for n, want in enumerate(erlang, start=1):
            got = gamma_tail_cdf(n, rate, t)
            assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


@pytest.mark.acceptance(9, "bookkeeping conservation over 10^6 particle steps")
def test_bookkeeping_conservation():
    rows = {(0, -1), (-2, 1), (-1, 0)}
    steps = 0
    rep = 0
    while steps < 1_000_000:
        w = (2, 3, 5)[rep % 3]
        params = ParticleSystemParams(w=w, mu=1.0, sigma2=0.5, kappa=3.0, N=1000)
        rng = replicate_rng(909, w, rep)
        model, x0 = particle_model(params, rng)
        traj = simulate(model, x0, SimConfig(60.0, master_seed=909), rng)
        assert traj.terminated_reason == RATE_VANISHED
        c = particle_counts(traj.states, params)
        heavy, inert, excited = c["heavy"], c["inert"], c["excited"]
        assert np.array_equal(inert + excited, heavy)
        assert np.all(inert >= 0) and np.all(excited >= 0)
        live = heavy > 0
        p = inert[live] / heavy[live]
        assert np.all((p >= 0) & (p <= 1))
        seen = set(zip(np.diff(inert).tolist(), np.diff(excited).tolist()))
        assert seen <= rows, seen - rows
        assert np.all(np.diff(heavy) == -1)
        steps += traj.n_jumps
        rep += 1
    print(f"{steps} steps over {rep} replicates")


@pytest.mark.acceptance(10, "verify is byte-for-byte reproducible")
def test_verify_determinism(tmp_path, monkeypatch):
    argv = ["verify", "--model", "particle", "--w", "2", "--mu", "1.0", "--N-ladder", "100,200,400",
            "--horizon", "1", "--delta", "0.05", "--replicates", "100", "--seed", "99"]
    outputs = []
    for i, threads in enumerate(["1", "1", "2"]):
        monkeypatch.setenv("FLUIDLIM_THREADS", threads)
        path = tmp_path / f"report{i}.json"
        assert cli.main(argv + ["--out", str(path)]) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


if __name__ == "__main__":
    sys.exit(pytest.main([os.path.abspath(__file__), "-q"]))
