"""Acceptance suite: each test checks one numbered criterion at its stated
tolerance and reports a PASS/FAIL line in the terminal summary.

The long runs are shared through module-scoped fixtures that keep only the
numbers the criteria need.  Criterion 11 takes about an hour and only runs
with ``DPM_NIGHTLY=1``.
"""
import gc
import os
import time

import numpy as np
import pytest

from dpm3d import diagnostics as dg
from dpm3d import dpm
from dpm3d.mesh import Region, Sphere, build_grid, classify_points
from dpm3d.poisson import make_plan
from dpm3d.runner import RunConfig, Simulation

from conftest import report_criterion
from oracles import dense_constrained_solve, reduced_bep_density

pytestmark = pytest.mark.slow

DT_SPACE = 1e-8
T_SPACE = 1e-6
SPACE_NS = (36, 68, 132)
REF_N = 260
# DD runs whose inner spacing equals the single-domain spacing of SPACE_NS
DD_MATCH = {36: (20, 20), 68: (36, 36), 132: (68, 68)}

TABLE_RHO = (1.4046e+00, 3.6990e-01, 1.2224e-01)
TABLE_C = (5.6759e+00, 1.4766e+00, 3.5615e-01)
TABLE_EREL = (1.0196e-01, 2.6378e-02, 6.3461e-03)


def _within(value, target, tol=0.25):
    return abs(value - target) <= tol * abs(target)


def _fmt(xs):
    return "[" + ", ".join(f"{x:.4e}" for x in xs) + "]"


def _max_trace(rep):
    return np.array([r.max_rho for r in rep.records[1:]])


# ---------------------------------------------------------------- shared runs

@pytest.fixture(scope="module")
def space_study():
    """Single-domain and matching two-domain Test A runs against the N=260 reference."""
    cfg = dict(test="A", t_final=T_SPACE, dt=DT_SPACE, full_diagnostics=False)
    sim = Simulation(RunConfig(mode="sd", n=REF_N, **cfg))
    rep = sim.run()
    sub = sim.subdomains[0]
    ref = dict(grid=sub.grid, valid=sub.cls.nplus, rho=rep.state.rho[0], c=rep.state.c[0],
               trace=_max_trace(rep), wall=rep.wall_time)
    del sim, rep
    gc.collect()

    out = {"ref_wall": ref["wall"], "sd": {}, "dd": {}}
    for n in SPACE_NS:
        sim = Simulation(RunConfig(mode="sd", n=n, **cfg))
        rep = sim.run()
        s = sim.subdomains[0]
        out["sd"][n] = dict(
            e_rho=dg.error_inf(rep.state.rho[0], s.grid, s.cls.mplus, ref["rho"], ref["grid"], ref["valid"]),
            e_c=dg.error_inf(rep.state.c[0], s.grid, s.cls.mplus, ref["c"], ref["grid"], ref["valid"]),
            trace=_max_trace(rep), min_rho=min(m[0] for m in rep.min_values),
            min_c=min(m[1] for m in rep.min_values))
        n1, n2 = DD_MATCH[n]
        rep = Simulation(RunConfig(mode="dd-case1", n1=n1, n2=n2, **cfg)).run()
        out["dd"][n] = dict(trace=_max_trace(rep))
    for n in SPACE_NS:
        for kind in ("sd", "dd"):
            run = out[kind][n]
            run["e_rel"] = dg.error_rel_timeseries(run["trace"], ref["trace"], DT_SPACE)
    return out


@pytest.fixture(scope="module")
def blowup_a_coarse():
    """Test A, DD 63/31 with the adaptive step, to the stoppage criterion."""
    return Simulation(RunConfig(test="A", mode="dd-case1", n1=63, n2=31, t_final=1e-4)).run()


@pytest.fixture(scope="module")
def blowup_a_fine():
    """Test A, DD 127/63 with the adaptive step, to the stoppage criterion."""
    return Simulation(RunConfig(test="A", mode="dd-case1", n1=127, n2=63, t_final=1e-4,
                                full_diagnostics=False)).run()


# ---------------------------------------------------------------- 1-3: space

def test_criterion_01_space_convergence_rho(space_study):
    errs = [space_study["sd"][n]["e_rho"] for n in SPACE_NS]
    rates = dg.observed_rates(errs)
    ok = (all(1.5 <= r <= 2.5 for r in rates)
          and all(_within(e, t) for e, t in zip(errs, TABLE_RHO)))
    report_criterion(1, "space convergence of rho (Test A)", ok,
                     f"E_inf={_fmt(errs)} rates={np.round(rates, 2).tolist()} "
                     f"reference run {space_study['ref_wall']:.0f}s")
    assert ok


def test_criterion_02_space_convergence_c(space_study):
    errs = [space_study["sd"][n]["e_c"] for n in SPACE_NS]
    rates = dg.observed_rates(errs)
    ok = (all(1.5 <= r <= 2.5 for r in rates)
          and all(_within(e, t) for e, t in zip(errs, TABLE_C)))
    report_criterion(2, "space convergence of c (Test A)", ok,
                     f"E_inf={_fmt(errs)} rates={np.round(rates, 2).tolist()}")
    assert ok


def test_criterion_03_relative_max_density_error(space_study):
    sd = [space_study["sd"][n]["e_rel"] for n in SPACE_NS]
    dd = [space_study["dd"][n]["e_rel"] for n in SPACE_NS]
    agree = all(abs(a - b) <= 1e-6 * abs(a) for a, b in zip(sd, dd))
    match = all(_within(e, t) for e, t in zip(sd, TABLE_EREL))
    ok = agree and match
    report_criterion(3, "E_rel of the max density, SD and DD(h1=h)", ok,
                     f"SD={_fmt(sd)} DD={_fmt(dd)} rates={np.round(dg.observed_rates(sd), 2).tolist()}")
    assert ok


# ---------------------------------------------------------------- 4: time

def test_criterion_04_time_convergence():
    n, t_final = 63, 1e-6
    taus = (16, 32, 64, 128)
    fields, mask = {}, None
    t0 = time.perf_counter()
    for tau in taus + (512,):
        sim = Simulation(RunConfig(test="A", mode="sd", n=n, t_final=t_final, dt=1e-7 / tau,
                                   full_diagnostics=False))
        rep = sim.run()
        fields[tau] = rep.state.rho[0]
        mask = sim.subdomains[0].cls.mplus
    wall = time.perf_counter() - t0
    errs = [dg.error_time(fields[t], fields[512], mask) for t in taus]
    rates = dg.observed_rates(errs)
    ok = all(0.8 <= r <= 1.8 for r in rates)
    report_criterion(4, "time convergence (N=63, reference tau=512)", ok,
                     f"E_t={_fmt(errs)} rates={np.round(rates, 2).tolist()} wall={wall:.0f}s")
    assert ok


# ---------------------------------------------------------------- 5: positivity

def _positivity_runs(blowup_a_coarse, blowup_a_fine, space_study):
    runs = {
        "A sd 36/68/132 T=1e-6": (min(space_study["sd"][n]["min_rho"] for n in SPACE_NS),
                                  min(space_study["sd"][n]["min_c"] for n in SPACE_NS), None),
        "A dd 63/31": blowup_a_coarse,
        "A dd 127/63": blowup_a_fine,
    }
    extra = [
        ("A sd 36", RunConfig(test="A", mode="sd", n=36, t_final=1e-4)),
        ("B sd 36", RunConfig(test="B", mode="sd", n=36, harmonics=60, t_final=0.2)),
        ("B dd-case2 63/31", RunConfig(test="B", mode="dd-case2", n1=63, n2=31, harmonics=60,
                                       t_final=0.2, full_diagnostics=False)),
    ]
    for name, cfg in extra:
        runs[name] = Simulation(cfg).run()
    return runs


def test_criterion_05_positivity(blowup_a_coarse, blowup_a_fine, space_study):
    runs = _positivity_runs(blowup_a_coarse, blowup_a_fine, space_study)
    lines, ok = [], True
    for name, rep in runs.items():
        if isinstance(rep, tuple):
            mr, mc, _ = rep
            lines.append(f"{name}: min rho={mr:.2e} min c={mc:.2e}")
        else:
            mr = min(m[0] for m in rep.min_values)
            mc = min(m[1] for m in rep.min_values)
            clamp = max(r.clamp / r.max_rho for r in rep.records[1:])
            lines.append(f"{name} ({rep.cause} t={rep.t:.4e}): min rho={mr:.2e} min c={mc:.2e} "
                         f"max clamp/max_rho={clamp:.1e}")
            ok &= rep.cause in ("blow_up", "t_final")
        ok &= mr >= 0.0 and mc >= 0.0
    report_criterion(5, "positivity through stoppage", ok, "; ".join(lines))
    assert ok


# ---------------------------------------------------------------- 6-8: oracles

def _small(n, dt=1e-3):
    grid = build_grid(0.5, n)
    cls = classify_points(grid, Region((Sphere((0.0, 0.0, 0.0), 0.5),)))
    return grid, cls, make_plan(n, grid.h, dt)


def test_criterion_06_greens_formula_matches_dense_solve():
    rng = np.random.default_rng(6)
    worst = 0.0
    for n in (10, 12):
        grid, cls, plan = _small(n)
        for _ in range(5):
            f = rng.random(grid.shape)
            u_ex = rng.random(int(cls.gamma_ex.sum()))
            u, *_ = reduced_bep_density(plan, cls, f, u_ex)
            got = dpm.greens_formula(plan, dpm.BoundaryDensity(cls.indices("gamma"), u), f, cls)
            want = dense_constrained_solve(n, grid.h, plan.dt, cls, f, u_ex)
            worst = max(worst, float(np.max(np.abs(got - want)[cls.mplus])))
    ok = worst <= 1e-9
    report_criterion(6, "Green's formula equals the dense constrained solve", ok,
                     f"max difference on M+ {worst:.2e}")
    assert ok


def test_criterion_07_rank_of_boundary_operator():
    found = []
    for n in (10, 12):
        _, cls, plan = _small(n)
        op = np.eye(int(cls.gamma.sum())) - dpm.projection_matrix(plan, cls)
        s = np.linalg.svd(op, compute_uv=False)
        found.append((int(np.sum(s > 1e-8 * s[0])), int(cls.gamma_in.sum())))
    ok = all(a == b for a, b in found)
    report_criterion(7, "rank of I - P equals |gamma_in|", ok,
                     ", ".join(f"rank {a} vs {b}" for a, b in found))
    assert ok


def test_criterion_08_reduced_equations_imply_full():
    rng = np.random.default_rng(8)
    worst = 0.0
    for trial in range(20):
        n = 10 if trial % 2 else 12
        grid, cls, plan = _small(n, dt=10.0 ** rng.uniform(-4, -2))
        f = rng.random(grid.shape)
        u_ex = rng.random(int(cls.gamma_ex.sum()))
        u, op, gf, inside = reduced_bep_density(plan, cls, f, u_ex)
        res = op @ u - gf
        assert np.max(np.abs(res[inside])) < 1e-9
        worst = max(worst, float(np.max(np.abs(res[~inside]))))
    ok = worst <= 1e-9
    report_criterion(8, "reduced boundary equations imply the full set", ok,
                     f"worst gamma_ex residual over 20 trials {worst:.2e}")
    assert ok


# ---------------------------------------------------------------- 9-11: blow-up

def test_criterion_09_free_energy_decrease(blowup_a_coarse):
    fe = [r.free_energy for r in blowup_a_coarse.records]
    steps = list(zip(fe, fe[1:]))
    good = sum(b <= a + 1e-9 * abs(a) for a, b in steps)
    frac = good / len(steps)
    ok = frac >= 0.99
    report_criterion(9, "free energy non-increasing (Test A, DD 63/31)", ok,
                     f"{good}/{len(steps)} steps ({100 * frac:.1f}%), run ended by "
                     f"{blowup_a_coarse.cause} at t={blowup_a_coarse.t:.4e}")
    assert ok


def test_criterion_10_blow_up_time_test_a(blowup_a_fine):
    rep = blowup_a_fine
    t_hit = rep.bracket[1] if rep.bracket else float("nan")
    ok = rep.cause == "blow_up" and 4e-5 <= t_hit <= 8e-5
    report_criterion(10, "stoppage time of Test A on DD 127/63", ok,
                     f"cause={rep.cause} bracket={rep.bracket} steps={rep.steps} "
                     f"max_rho={rep.records[-1].max_rho:.4e} dt={rep.records[-1].dt:.3e}")
    assert ok


@pytest.mark.nightly
@pytest.mark.skipif(os.environ.get("DPM_NIGHTLY") != "1", reason="about one hour; set DPM_NIGHTLY=1")
def test_criterion_11_blow_up_at_north_pole():
    sim = Simulation(RunConfig(test="B", mode="dd-case2", n1=127, n2=127, harmonics=299,
                               t_final=0.2, full_diagnostics=False))
    rep = sim.run()
    best, where, h = -1.0, None, None
    for sub, rho in zip(sim.subdomains, rep.state.rho):
        flat = sub.mplus_flat[np.argmax(rho.reshape(-1)[sub.mplus_flat])]
        if rho.reshape(-1)[flat] > best:
            best = rho.reshape(-1)[flat]
            where, h = sub.grid.coords_of(np.array([flat]))[0], sub.h
    dist = float(np.linalg.norm(where - np.array([0.0, 0.0, 0.5])))
    t_hit = rep.bracket[1] if rep.bracket else float("nan")
    ok = rep.cause == "blow_up" and 0.075 <= t_hit <= 0.085 and dist <= 3 * h
    report_criterion(11, "Test B stoppage at the north pole (DD 127/127)", ok,
                     f"cause={rep.cause} bracket={rep.bracket} argmax distance={dist:.3e} (3h={3 * h:.3e})")
    assert ok


# ---------------------------------------------------------------- 12-13

def test_criterion_12_dd_matches_sd(space_study):
    worst = 0.0
    for n in SPACE_NS:
        a = space_study["sd"][n]["trace"]
        b = space_study["dd"][n]["trace"]
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(a))))
    ok = worst <= 1e-6
    report_criterion(12, "max-density traces of SD(N) and DD(h1=h)", ok,
                     f"worst relative difference {worst:.2e} over N={list(SPACE_NS)}")
    assert ok


def test_criterion_13_speedup():
    cfg = dict(test="A", t_final=2e-7, dt=1e-8, full_diagnostics=False)

    def wall(**kw):
        t0 = time.perf_counter()
        Simulation(RunConfig(**cfg, **kw)).run()
        return time.perf_counter() - t0

    t_dd = wall(mode="dd-case1", n1=63, n2=31)
    t_sd = wall(mode="sd", n=127)
    ratio = t_sd / t_dd
    ok = ratio > 1.5
    report_criterion(13, "speed-up of DD 63/31 over SD 127", ok,
                     f"SD {t_sd:.2f}s, DD {t_dd:.2f}s, R_S={ratio:.2f}")
    assert ok
