"""Invariant suites behind `amolab verify`; each check returns a small, deterministic dict."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .cocycle import avalanche_check, avalanche_generate
from .dos import duality_check, ids_finite_box, ids_periodic, kyfan_check, thouless_residual
from .experiments import ftau_mass_check
from .frequency import GOLDEN, RationalFreq, cf_convergents
from .gauges import omega, omega_tilde
from .green import amo_box, green_identities_check
from .regularity import w2w1_constant
from .spectrum import chambers_residual, hausdorff_distance, level_set, spectrum, spectrum_minus


def _row(name: str, value: float, tol: float, passed: bool | None = None, **extra) -> dict:
    ok = bool(value <= tol) if passed is None else bool(passed)
    return {"name": name, "value": float(value), "tol": float(tol), "passed": ok, **extra}


def chk_chambers(cfg) -> dict:
    qs = [(1, 1), (1, 2), (1, 3), (2, 5), (3, 8)]
    worst = 0.0
    for p, q in qs:
        for lam in (0.3, 1.0):
            E = np.linspace(-4.5, 4.5, 17)
            th = np.linspace(0.0, 2 * math.pi, 16, endpoint=False)
            worst = max(worst, chambers_residual(RationalFreq(p, q), lam, E, th, bits=max(64, 8 * q)))
    return _row("chambers", worst, cfg.tol("chambers", 1e-9))


def chk_minus_measure(cfg) -> dict:
    worst = 0.0
    for p, q in ((1, 2), (1, 3), (2, 5)):
        for lam in (0.3, 0.5, 0.9):
            m = spectrum_minus(RationalFreq(p, q), lam).measure()
            worst = max(worst, abs(m - (4 - 4 * lam)) / (4 - 4 * lam))
    return _row("minus_measure", worst, cfg.tol("minus_measure", 1e-8))


def chk_edges(cfg) -> dict:
    worst = 0.0
    for p, q in ((1, 2), (1, 3), (2, 5), (3, 8)):
        for level in ("S", "minus"):
            a = level_set(RationalFreq(p, q), 0.7, level)
            b = level_set(RationalFreq(p, q), 0.7, level, method="bisect")
            worst = max(worst, float(np.max(np.abs(a.lower - b.lower))), float(np.max(np.abs(a.upper - b.upper))))
    return _row("edges", worst, cfg.tol("edges", 1e-10))


def chk_ids(cfg) -> dict:
    rng = np.random.default_rng(cfg.seed)
    worst = -math.inf
    for p, q in ((1, 2), (2, 5)):
        L = 50 * q
        for _ in range(5):
            E, th = rng.uniform(-3.5, 3.5), rng.uniform(0, 2 * math.pi)
            d = abs(ids_periodic(E, RationalFreq(p, q), 0.5, th) - ids_finite_box(E, RationalFreq(p, q), 0.5, th, L))
            worst = max(worst, d - 2.0 / L)
    return _row("ids_box", max(worst, 0.0), cfg.tol("ids_box", 1e-9))


def chk_green(cfg) -> dict:
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(5):
        n = int(rng.integers(20, 120))
        box = amo_box(1, n, float(GOLDEN.mpf(64)), float(rng.uniform(0.2, 2.0)), float(rng.uniform(0, 6.28)))
        cuts = sorted(rng.choice(np.arange(3, n - 3), size=3, replace=False).tolist())
        z = complex(rng.uniform(-3, 3), rng.uniform(0.05, 1.0))
        r = green_identities_check(box, cuts, z, seed=int(rng.integers(1 << 30)))
        worst = max(worst, r["max_residual"])
    return _row("green", worst, cfg.tol("green", 1e-10))


def chk_w2w1(cfg) -> dict:
    worst = max(w2w1_constant(g, 30)["max_ratio"] for g in (omega_tilde(0.5), omega_tilde(1.0), omega(3.0)))
    return _row("w2w1", worst, 4 + cfg.tol("w2w1", 1e-9))


def chk_duality(cfg) -> dict:
    wins = set()
    worst = 0.0
    for q, p in ((1, 0), (2, 1), (3, 1)):
        for lam in (0.4, 0.8):
            r = duality_check(RationalFreq(p, q), lam, grid=9)
            wins.add(r["best_kappa"])
            worst = max(worst, r["residual_best"])
    return _row("duality", worst, cfg.tol("duality", 1e-9), passed=len(wins) == 1 and worst <= 1e-9,
                winner=sorted(wins)[0] if len(wins) == 1 else "mixed")


def chk_avalanche(cfg) -> dict:
    bad = 0
    rng = np.random.default_rng(cfg.seed)
    count = 200
    for _ in range(count):
        inst = avalanche_generate(int(rng.integers(2, 200)), 0.1, 0.5, int(rng.integers(1 << 31)))
        r = avalanche_check(inst)
        bad += int(r["hypotheses_hold"] and not r["conclusion_holds"])
    return _row("avalanche", bad, 0, instances=count)


def chk_kyfan(cfg) -> dict:
    rng = np.random.default_rng(cfg.seed)
    cv = cf_convergents(GOLDEN, 8)[1:]
    bad = 0
    count = 50
    for _ in range(count):
        k = int(rng.integers(0, len(cv) - 1))
        a, b = sorted(rng.uniform(-3.5, 3.5, 2))
        r = kyfan_check(cv[k], cv[k + 1], float(rng.uniform(0.2, 1.5)), a, b, int(rng.integers(1, 40)))
        bad += int(not r["holds"])
    return _row("kyfan", bad, 0, instances=count)


def chk_continuity(cfg) -> dict:
    cv = [c for c in cf_convergents(GOLDEN, 12)[1:] if c.q <= 89]
    worst = -math.inf
    for lam in (0.5, 1.0):
        specs = [spectrum(c, lam) for c in cv]
        for (a, A), (b, B) in zip(zip(cv, specs), zip(cv[1:], specs[1:])):
            bound = 6.0 * math.sqrt(4 * math.pi * lam * abs(a.p / a.q - b.p / b.q))
            worst = max(worst, float(hausdorff_distance(A, B)) - bound)
    return _row("continuity", max(worst, 0.0), 0.0, passed=worst <= 0.0, slack=-worst)


def chk_ftau(cfg) -> dict:
    # literal constant drives pass/fail; the 1/(2 pi) phase-normalized constant is reported alongside
    bad = bad_norm = 0
    for q in range(1, 9):
        p = 0 if q == 1 else next(k for k in range(q // 2, q) if math.gcd(k, q) == 1)
        for lam in (0.5, 0.9):
            for tau in (0.25, 0.5):
                r = ftau_mass_check(RationalFreq(p, q), lam, tau)
                bad += int(not r["holds_base"])
                bad_norm += int(r["rho_base"] < r["bound_base"] / (2 * math.pi))
    return _row("ftau", bad, 0, violations_normalized=bad_norm)


def chk_thouless(cfg) -> dict:
    worst = 0.0
    for p, q in ((0, 1), (1, 2), (1, 3)):
        for lam in (0.5, 1.0):
            grid = [-3.3, -0.7, 0.2, 1.9, 2.5 + 0.3j, 0.4 + 1e-3j]
            worst = max(worst, thouless_residual(RationalFreq(p, q), lam, grid)["residual"])
    return _row("thouless", worst, cfg.tol("thouless", 1e-3))


SUITES: dict[str, list[Callable]] = {
    "core": [chk_chambers, chk_minus_measure, chk_edges, chk_ids, chk_green, chk_w2w1, chk_duality,
             chk_avalanche, chk_kyfan],
}
SUITES["full"] = SUITES["core"] + [chk_continuity, chk_ftau, chk_thouless]


def run_check(args) -> dict:
    fn_name, cfg = args
    return globals()[fn_name](cfg)
