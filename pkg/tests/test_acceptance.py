"""One test per acceptance criterion; each appends a PASS/FAIL line to the summary."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fracperim.cli import main
from fracperim.energies import (Capped, H0_perimeter, H_energy, J_energy, riesz_interaction,
                                table_for)
from fracperim.geometry import (Ball, DensityGrid, GridDomain, IndicatorGrid, random_blob,
                                random_density, rasterize)
from fracperim.harness import (IsoConfig, SweepConfig, _rate_slack, isoperimetric_experiment,
                               property_suite, sweep_sigma_continuity)
from fracperim.kernels import RenormMode
from fracperim.rearrangement import build_plan, rearrange

A, D = RenormMode.ANALYTIC, RenormMode.DISCRETE


def report(n, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def unit_interval(n):
    dom = GridDomain(1, (n + 8,), 1.0 / n, (-4.0 / n,))
    cells = np.zeros(n + 8, bool)
    cells[4:4 + n] = True
    return IndicatorGrid(dom, cells)


@pytest.fixture(scope="module")
def interval():
    return unit_interval(2 ** 11)


@pytest.fixture(scope="module")
def suite():
    return property_suite(seed=42, dims=(1, 2), trials=100)


def verdict_line(rec, ids):
    parts = []
    for vid in ids:
        v = rec.verdict(vid)
        parts.append(f"{vid} {v.checked} checks {v.violations} violations "
                     f"worst margin {v.worst_margin:.3g}")
    return "; ".join(parts)


def test_criterion_01_fractional_perimeter(interval):
    t0 = time.perf_counter()
    table = table_for(interval, 0.5, threads=1)
    value = H_energy(interval, table, math.inf, A, threads=1).value
    elapsed = time.perf_counter() - t0
    ok = rel(value, 4.0) < 0.01 and elapsed < 10
    report(1, ok, f"value {value:.6f} vs 4.0 (rel {rel(value, 4.0):.2e}), {elapsed:.2f} s")


def test_criterion_02_zero_perimeter(interval):
    table = table_for(interval, 0.0, min_reach=1.0)
    sum_path = H0_perimeter(interval, table).value
    renorm_path = H_energy(interval, table, math.inf, D).value
    analytic = H_energy(interval, table, math.inf, A).value
    agree = rel(sum_path, renorm_path)
    ok = rel(sum_path, 2.0) < 0.01 and rel(analytic, 2.0) < 0.01 and agree < 1e-12
    report(2, ok, f"H1+J1 {sum_path:.6f}, discrete R=inf {renorm_path:.6f} "
                  f"(rel gap {agree:.1e}), analytic R=inf {analytic:.6f}")


def test_criterion_03_riesz_closed_form(interval):
    table = table_for(interval, -0.5)
    value = J_energy(interval, table, 0.0).value
    report(3, rel(value, -8 / 3) < 0.01, f"value {value:.6f} vs -8/3 (rel {rel(value, -8 / 3):.2e})")


def test_criterion_04_rho_invariance(suite):
    v = suite.verdict("fon_rho_invariance")
    per_dim = v.checked // 2 // 3
    ok = v.passed and per_dim >= 100
    report(4, ok, f"{per_dim} sets per dimension x 3 sigmas, worst relative spread "
                  f"{-v.worst_margin:.1e}")


def test_criterion_05_rate_bound():
    sets = [unit_interval(256)]
    dom = GridDomain(1, (128,), 1 / 32, (0.0,))
    rng = np.random.default_rng(5)
    sets += [random_blob(dom, rng, fill=rng.uniform(0.1, 0.5), smoothing=rng.uniform(1, 4))
             for _ in range(20)]
    worst, checked = math.inf, 0
    for E in sets:
        vol, d = E.count * E.domain.cell_size, 1
        for s in (-0.5, -0.9, 0.5):
            table = table_for(E, s, min_reach=4.0)
            limit = J_energy(E, table, E.domain.cell_size, D).value
            for R in (1.0, 2.0, 4.0):
                gap = H_energy(E, table, R, D).value - limit
                scale = max(1.0, abs(limit))
                upper = vol ** 2 / R ** (d + s) + _rate_slack(E)
                worst = min(worst, gap / scale + 1e-9, (upper - gap) / scale)
                checked += 1
    report(5, worst >= 0, f"{checked} gaps checked, worst margin {worst:.3g}")


def test_criterion_06_monotonicity(suite):
    ids = ("R_monotone", "r_monotone", "sigma_monotone")
    cfg = SweepConfig(shape={"type": "ball", "center": [0.0, 0.0], "radius": 1.0},
                      resolutions=[0.05], sigma_grid=[k / 10 for k in range(10)],
                      renorm="discrete")
    disc = sweep_sigma_continuity(cfg, kmax=1).verdict("sigma_monotone")
    ok = all(suite.verdict(v).passed for v in ids) and disc.passed
    report(6, ok, verdict_line(suite, ids) + f"; unit disc sigma in [0, 0.9]: "
                  f"{disc.violations} violations, smallest increase margin {disc.worst_margin:.3g}")


def test_criterion_07_submodularity(suite):
    v = suite.verdict("submodularity")
    report(7, v.passed and v.checked >= 2 * 100 * 3 * 2, verdict_line(suite, ["submodularity"]))


def test_criterion_08_log_lower_bound(suite):
    report(8, suite.verdict("log_lower_bound").passed, verdict_line(suite, ["log_lower_bound"]))


def test_criterion_09_truncation_global(suite):
    ids = ("truncation_bound", "global_lower_bound")
    report(9, all(suite.verdict(v).passed for v in ids), verdict_line(suite, ids))


def _riesz_slacks(refine):
    n, h = 32 * refine, 1 / (8 * refine)
    dom = GridDomain(2, (n, n), h, (0.0, 0.0))
    plan = build_plan(dom)
    table = None
    slacks = []
    for seed in range(100):
        base = random_density(GridDomain(2, (32, 32), 1 / 8, (0.0, 0.0)),
                              np.random.default_rng(seed), 2.0, levels=4).cells
        eta = DensityGrid(dom, np.kron(base, np.ones((refine, refine))))
        if table is None:
            full = DensityGrid(dom, np.ones((n, n)))
            table = table_for(full, 0.0, min_reach=1.0)
        a = riesz_interaction(eta, eta, table, Capped(1.0))
        b = riesz_interaction(rearrange(eta, plan), rearrange(eta, plan), table, Capped(1.0))
        slacks.append((b - a) / max(1.0, abs(a)))
    return slacks


def test_criterion_10_riesz():
    coarse, fine = _riesz_slacks(1), _riesz_slacks(2)
    neg_c = max(0.0, -min(coarse))
    neg_f = max(0.0, -min(fine))
    ok = min(coarse) >= -1e-9 and neg_f <= neg_c
    report(10, ok, f"100 densities, min slack {min(coarse):.3g} (32^2), {min(fine):.3g} (64^2), "
                   f"negative part {neg_c:.2g} -> {neg_f:.2g}")


def test_criterion_11_isoperimetric():
    rec = isoperimetric_experiment(IsoConfig(cell_size=0.02, sigma_grid=[0.0, 0.5],
                                             competitors=["square"]))
    pts = {(p["sigma"], p["functional"]): p for p in rec.points if p["competitor"] == "square"}
    h0, j5 = pts[(0.0, "renormalized")], pts[(0.5, "renormalized")]
    split = [p for p in rec.points if p["competitor"] == "split_pair"]
    small_ok = all(p["ball"] == 0.0 and p["value"] < 0.0 for p in split)
    ok = h0["ball"] < h0["value"] and j5["ball"] < j5["value"] and small_ok
    report(11, ok, f"H0 disc {h0['ball']:.4f} < square {h0['value']:.4f}; "
                   f"J0.5 disc {j5['ball']:.4f} < square {j5['value']:.4f}; "
                   f"small mass J_raw ball 0, split pair "
                   + ", ".join(f"{p['value']:.4g}" for p in split))


def test_criterion_12_cross_engine():
    rng = np.random.default_rng(12)
    worst, count = 0.0, 0
    for dim in (1, 2):
        n, h = {1: (96, 1 / 24), 2: (24, 1 / 8)}[dim]
        dom = GridDomain(dim, (n,) * dim, h, (0.0,) * dim)
        for _ in range(50):
            E = random_blob(dom, rng, fill=rng.uniform(0.1, 0.5), smoothing=rng.uniform(1, 4))
            s = float(rng.choice([-0.5, 0.0, 0.5, round(rng.uniform(-0.9, 0.9), 3)]))
            table = table_for(E, s, min_reach=3.0)
            if rng.random() < 0.5:
                R = float(rng.uniform(h, 3.0))
                a = H_energy(E, table, R, engine="direct").raw_energy
                b = H_energy(E, table, R, engine="conv").raw_energy
            else:
                r = float(rng.uniform(h, 3.0))
                a = J_energy(E, table, r, engine="direct").raw_energy
                b = J_energy(E, table, r, engine="conv").raw_energy
            worst = max(worst, abs(a - b) / max(abs(a), abs(b), 1e-12))
            count += 1
    report(12, worst < 1e-9, f"{count} triples, worst relative difference {worst:.2e}")


def test_criterion_13_determinism(tmp_path, capsys):
    outs = {}
    for tag, threads in (("first", 1), ("second", 1), ("eight", 8)):
        code = main(["suite", "--seed", "42", "--dim", "1,2", "--trials", "10",
                     "--threads", str(threads), "--json", "--output", str(tmp_path / tag)])
        assert code == 0
        outs[tag] = (tmp_path / f"{tag}.json").read_bytes()
    stdout = capsys.readouterr().out
    ok = outs["first"] == outs["second"] == outs["eight"] and len(stdout) > 0
    report(13, ok, f"JSON identical across two runs and --threads 1 vs 8 "
                   f"({len(outs['first'])} bytes)")
