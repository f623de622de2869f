"""Acceptance criteria 1-16; each test records one PASS/FAIL line (printed in the terminal summary)."""

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from amolab.cli import main
from amolab.cocycle import avalanche_check, avalanche_generate
from amolab.dos import duality_check, ids_finite_box, ids_periodic, kyfan_check, thouless_residual
from amolab.experiments import ftau_mass_check, meagerness_check
from amolab.frequency import GOLDEN, FrequencyCF, RationalFreq, cf_convergents, liouville_construct
from amolab.gauges import omega, omega_tilde
from amolab.green import amo_box, green_identities_check
from amolab.regularity import hausdorff_content_upper, ratio_suite, w2w1_constant
from amolab.spectrum import band_ratio_check, chambers_residual, hausdorff_distance, level_set, spectrum, spectrum_minus

LINES = []
GOLD = cf_convergents(GOLDEN, 12)


def record(n, name, passed, elapsed, limit, detail):
    ok = bool(passed) and elapsed < limit
    line = f"CRIT {n:2d} {'PASS' if ok else 'FAIL'} {name}: {detail} [{elapsed:.1f} s / {limit:.0f} s]"
    print(line)
    LINES.append(line)
    assert ok, line


def one_p(q):
    # the coprime numerator closest to q / golden ratio
    if q == 1:
        return 0
    return min((k for k in range(1, q) if math.gcd(k, q) == 1), key=lambda k: abs(k / q - 0.6180339887))


def gold(qs):
    return [c for c in GOLD if c.q in qs and not (c.q == 1 and c.p == 1)]


def test_crit01_chambers():
    t = time.time()
    worst = 0.0
    for pq in gold({1, 2, 3, 5, 8, 13, 21, 34, 55}):
        for lam in (0.3, 1.0):
            E = np.linspace(-4.5, 4.5, 17)
            th = np.linspace(0, 2 * math.pi, 16, endpoint=False)
            worst = max(worst, chambers_residual(pq, lam, E, th, bits=max(64, 8 * pq.q)))
    record(1, "Chambers identity", worst <= 1e-9, time.time() - t, 30, f"max residual {worst:.2e}")


def test_crit02_minus_measure():
    t = time.time()
    worst = 0.0
    for p, q in ((1, 2), (1, 3), (2, 5), (3, 7), (5, 8)):
        for lam in (0.3, 0.5, 0.9):
            m = spectrum_minus(RationalFreq(p, q), lam).measure()
            worst = max(worst, abs(m - (4 - 4 * lam)) / (4 - 4 * lam))
    record(2, "|S_-| = 4 - 4 lam", worst <= 1e-8, time.time() - t, 10, f"max rel error {worst:.2e}")


def test_crit03_edges():
    t = time.time()
    worst = 0.0
    for pq in gold({1, 2, 3, 5, 8, 13, 21, 34, 55}) + [RationalFreq(3, 7), RationalFreq(7, 17), RationalFreq(11, 40)]:
        for lam in (0.3, 0.7):
            for level in ("S", "minus"):
                a = level_set(pq, lam, level, method="eig")
                b = level_set(pq, lam, level, method="bisect")
                d = max(np.max(np.abs(a.lower - b.lower)), np.max(np.abs(a.upper - b.upper)))
                worst = max(worst, float(d))
    record(3, "eigenvalue vs bisection edges", worst <= 1e-10, time.time() - t, 60, f"max diff {worst:.2e}")


def test_crit04_ids_box():
    t = time.time()
    rng = np.random.default_rng(4)
    worst = -math.inf
    for q in range(1, 14):
        pq = RationalFreq(one_p(q), q)
        L = 50 * q
        for lam in (0.5, 1.0):
            for _ in range(20):
                E, th = rng.uniform(-4.2, 4.2), rng.uniform(0, 2 * math.pi)
                d = abs(ids_periodic(E, pq, lam, th) - ids_finite_box(E, pq, lam, th, L))
                worst = max(worst, d - 2.0 / L)
    record(4, "IDS vs finite box", worst <= 1e-9, time.time() - t, 60, f"max excess over 2/L {worst:.2e}")


def test_crit05_thouless():
    t = time.time()
    worst = 0.0
    grid = [-3.6, -1.3, -0.2, 0.7, 2.4, 3.9, 0.3 + 1e-3j, -1.1 + 0.2j, 2.0 + 1.0j]
    for q in range(1, 9):
        for lam in (0.5, 1.0):
            worst = max(worst, thouless_residual(RationalFreq(one_p(q), q), lam, grid)["residual"])
    record(5, "Thouless formula", worst <= 1e-3, time.time() - t, 120, f"max residual {worst:.2e}")


def test_crit06_continuity():
    t = time.time()
    cv = [c for c in GOLD if c.q <= 89 and not (c.q == 1 and c.p == 0)]
    bad, slack = 0, math.inf
    for lam in (0.5, 1.0):
        specs = [spectrum(c, lam) for c in cv]
        for a, b, A, B in zip(cv, cv[1:], specs, specs[1:]):
            bound = 6 * math.sqrt(4 * math.pi * lam * abs(a.p / a.q - b.p / b.q))
            d = float(hausdorff_distance(A, B))
            bad += d > bound
            slack = min(slack, bound - d)
    record(6, "spectral continuity", bad == 0, time.time() - t, 60, f"violations {bad}, min slack {slack:.3f}")


def test_crit07_avalanche():
    t = time.time()
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(10_000):
        inst = avalanche_generate(int(rng.integers(1, 201)), 0.1, 0.5, int(rng.integers(1 << 31)))
        r = avalanche_check(inst)
        bad += int(not r["hypotheses_hold"] or not r["conclusion_holds"])
    record(7, "avalanche", bad == 0, time.time() - t, 60, f"10000 instances, violations {bad}")


def test_crit08_band_growth():
    t = time.time()
    taus = np.linspace(-1, 1, 9)
    bad, worst1, worst2 = 0, math.inf, math.inf
    for q in range(1, 21):
        pq = RationalFreq(one_p(q), q)
        for lam in (0.3, 0.7):
            for i, t1 in enumerate(taus):
                for t2 in taus[i + 1:]:
                    r = band_ratio_check(pq, lam, float(t1), float(t2))
                    bad += int(not (r["part1_holds"] and r["part2_holds"]))
                    worst1 = min(worst1, r["part1_min_slack_rel"])
                    worst2 = min(worst2, r["part2_slack_rel"])
    record(8, "band-growth bounds", bad == 0, time.time() - t, 120,
           f"violations {bad}, min relative slack part 1 {worst1:.3g}, part 2 {worst2:.3g}")


def test_crit09_ftau_mass():
    t = time.time()
    bad, worst = [], math.inf
    for q in range(1, 21):
        pq = RationalFreq(one_p(q), q)
        for lam in (0.5, 0.9):
            for tau in (0.25, 0.5):
                r = ftau_mass_check(pq, lam, tau)
                worst = min(worst, r["rho_base"] / r["bound_base"])
                if not r["holds_base"]:
                    bad.append((q, lam, tau))
    taus = sorted({b[2] for b in bad})
    record(9, "F_tau mass bound", not bad, time.time() - t, 120,
           f"violations {len(bad)} (tau in {taus}), min rho/bound {worst:.4f}")


def test_crit10_meagerness():
    t = time.time()
    rep = meagerness_check(FrequencyCF((3,)), 0.5, 0.5 ** 3, [1000, 10000, 100000])
    ys = [r["ln_measure"] for r in rep["rows"]]
    ok = rep["strictly_decreasing"] and rep["slope_vs_q"] < 0
    record(10, "meagerness trend", ok, time.time() - t, 600,
           f"ln-measures {', '.join(f'{y:.2f}' for y in ys)}, slope {rep['slope_vs_q']:.3e}")


def test_crit11_kyfan():
    t = time.time()
    rng = np.random.default_rng(11)
    cv = [c for c in GOLD if c.q <= 34][1:]
    bad = 0
    for _ in range(1000):
        k = int(rng.integers(0, len(cv) - 1))
        a, b = sorted(rng.uniform(-4, 4, 2))
        r = kyfan_check(cv[k], cv[k + 1], float(rng.uniform(0.1, 2.0)), a, b, int(rng.integers(1, 60)))
        bad += int(not r["holds"])
    record(11, "ky-fan inequality", bad == 0, time.time() - t, 120, f"1000 instances, violations {bad}")


def test_crit12_green():
    t = time.time()
    rng = np.random.default_rng(12)
    alpha = float(GOLDEN.mpf(64))
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(20, 501))
        box = amo_box(1, n, alpha, float(rng.uniform(0.1, 2.5)), float(rng.uniform(0, 2 * math.pi)))
        k = int(rng.integers(1, 6))
        cuts = sorted(rng.choice(np.arange(2, n - 1), size=k, replace=False).tolist())
        z = complex(rng.uniform(-4, 4), rng.uniform(0.01, 1.0))
        worst = max(worst, green_identities_check(box, cuts, z, seed=int(rng.integers(1 << 30)))["max_residual"])
    record(12, "Green identities", worst <= 1e-10, time.time() - t, 30, f"max residual {worst:.2e}")


def test_crit13_w_transforms():
    t = time.time()
    c = max(w2w1_constant(g, 30)["max_ratio"] for g in (omega_tilde(1.0), omega_tilde(0.5), omega(3.0)))
    part1 = [ratio_suite(2, omega(s), omega(s - 1)) for s in (3.0, 4.0)]
    part2 = [ratio_suite(3, omega_tilde(s), omega_tilde(s)) for s in (0.5, 1.0)]
    ok = c <= 4 + 1e-9 and all(r["plateau"] for r in part1 + part2)
    tails = ", ".join(f"{r['ratios'][-10]:.1f}->{r['ratios'][-1]:.1f}" for r in part2)
    record(13, "W-transform suite", ok, time.time() - t, 10,
           f"W2W1 constant {c:.4f}, part 1 plateaus {[r['plateau'] for r in part1]}, "
           f"part 2 plateaus {[r['plateau'] for r in part2]} (last ten ratios {tails})")


def test_crit14_hausdorff_covers():
    t = time.time()
    cf = liouville_construct(omega_tilde(2), 1, FrequencyCF((1, 1, 2)), 3, C1=1e-12)
    cv = [c for c in cf_convergents(cf, cf.prefix_len) if c.q >= 2]
    cc = hausdorff_content_upper(cv, 1.0, omega_tilde(2))
    costs = cc.costs()
    ratios = [a / b for a, b in zip(costs, costs[1:])]
    ok = len(costs) == 3 and all(r >= 10 for r in ratios)
    record(14, "Hausdorff cover decay", ok, time.time() - t, 300,
           f"costs {', '.join(f'{x:.3e}' for x in costs)}, per-level ratios {', '.join(f'{r:.3g}' for r in ratios)}")


def test_crit15_duality():
    t = time.time()
    wins, worst, literal = set(), 0.0, 0.0
    for q in (1, 2, 3, 5):
        for lam in (0.4, 0.8):
            r = duality_check(RationalFreq(one_p(q), q), lam, grid=9)
            wins.add(r["best_kappa"])
            worst = max(worst, r["residual_best"])
            literal = max(literal, r["residual_2_over_lam"])
    record(15, "duality resolution", len(wins) == 1 and worst <= 1e-9, time.time() - t, 30,
           f"winner {sorted(wins)}, residual {worst:.2e}, literal 2/lam residual {literal:.3f}")


def test_crit16_determinism(tmp_path):
    t = time.time()
    outs = []
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed=16\nprecision_bits=128\n")
    for d in ("a", "b"):
        r = CliRunner().invoke(main, ["--config", str(cfg), "--out", str(tmp_path / d), "--workers", "1", "verify"])
        outs.append((r.exit_code, {p.name: p.read_bytes() for p in (tmp_path / d).iterdir()}))
    same = outs[0][1] == outs[1][1] and bool(outs[0][1])
    record(16, "determinism", same and outs[0][0] == outs[1][0] == 0, time.time() - t, 120,
           f"artifacts {sorted(outs[0][1])}, identical {same}, exit codes {[o[0] for o in outs]}")
