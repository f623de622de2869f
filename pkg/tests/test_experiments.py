import math

import mpmath
import numpy as np
import pytest

from amolab.experiments import (InstanceError, LSInstance, ftau_mass_check, j_delta_grid, ls_instance,
                                ls_lower_bound_check, meagerness_check, pw_failure_experiment, pw_family_count)
from amolab.frequency import FrequencyCF, GOLDEN, RationalFreq, cf_convergents
from amolab.spectrum import f_tau


def rho_q1(a, b, lam):
    """theta-averaged mass of [a, b] for q = 1: E = 2 cos k + 2 lam cos theta, k and theta uniform."""
    def inner(th):
        v = 2 * lam * mpmath.cos(th)
        c = lambda x: mpmath.acos(max(-1, min(1, (x - v) / 2)))
        return (c(a) - c(b)) / mpmath.pi
    # split at the phases where an endpoint leaves the band [v - 2, v + 2]
    pts = {0.0, math.pi}
    for x in (a, b):
        for s in (-2, 2):
            c = (x + s) / (2 * lam)
            if -1 < c < 1:
                pts.add(math.acos(c))
    with mpmath.workdps(30):
        return float(mpmath.quad(inner, sorted(pts)) / mpmath.pi)


@pytest.mark.parametrize("lam,tau", [(0.5, 0.5), (0.5, 0.25), (0.8, 0.5)])
def test_ftau_mass_matches_q1_oracle(lam, tau):
    r = ftau_mass_check(RationalFreq(0, 1), lam, tau)
    assert r["rho_base"] == pytest.approx(rho_q1(*r["F"], lam), abs=1e-9)


def test_ftau_literal_constant_fails_at_quarter():
    r = ftau_mass_check(RationalFreq(0, 1), 0.5, 0.25)
    assert r["rho_base"] == pytest.approx(rho_q1(*r["F"], 0.5), abs=1e-9)
    assert r["bound_base"] == pytest.approx(0.25 * math.acos(0.25) / math.pi * math.sqrt(0.5))
    assert not r["holds_base"]


@pytest.mark.parametrize("q", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("lam", [0.5, 0.9])
@pytest.mark.parametrize("tau", [0.25, 0.5])
def test_ftau_mass_provable_constant(q, lam, tau):
    # the averaged per-phase bound with the phase measure normalized by 2 pi
    p = 0 if q == 1 else next(k for k in range(q // 2, q) if math.gcd(k, q) == 1)
    r = ftau_mass_check(RationalFreq(p, q), lam, tau)
    assert r["rho_base"] >= tau * math.acos(tau) / (2 * math.pi ** 2) * lam ** (q / 2) / q


def test_ftau_partner_too_far():
    with pytest.raises(InstanceError, match="partner too far"):
        ftau_mass_check(RationalFreq(0, 1), 0.5, 0.5, partner=RationalFreq(1, 100))


def test_family_count_formula_and_empty_instance():
    c = pw_family_count(RationalFreq(1, 3), 0.6, 0.2)
    assert c["formula"] == 0
    assert c["actual"] == 0
    assert c["F_length"] < c["pitch"]
    chain = [RationalFreq(1, 3), RationalFreq(1, 4), RationalFreq(2, 7)]
    with pytest.raises(InstanceError, match="pitch"):
        pw_failure_experiment(chain, 0.6, 0.2)


def test_family_count_matches_hand_formula():
    pq, lam, r = RationalFreq(13, 21), 0.5, 1.0
    c = pw_family_count(pq, lam, r)
    q = pq.q
    with mpmath.workdps(60):
        pitch = 225 * mpmath.mpf(lam) ** ((3 + r) * q / 2)
        assert c["formula"] == int(mpmath.floor((1 - mpmath.mpf(lam)) / (4 * q ** 3) * mpmath.mpf(lam) ** q / pitch))
        F = f_tau(pq, lam, 0.5)
        assert c["actual"] == int(mpmath.floor(mpmath.mpf(str(abs(F.interval[1] - F.interval[0]))) / pitch))


def test_pw_failure_guards():
    cv = cf_convergents(GOLDEN, 9)[1:]
    with pytest.raises(InstanceError):
        pw_failure_experiment(cv[:2], 0.5, 1.0)
    with pytest.raises(InstanceError):
        pw_failure_experiment(cv[:3], 1.0, 1.0)


@pytest.mark.xfail(strict=True, reason="growth needs |alpha - P/Q| far below desk-scale denominators")
def test_pw_lower_estimate_grows():
    cv = cf_convergents(GOLDEN, 11)
    chain = [c for c in cv if c.q in (21, 34, 55, 89)]
    r = pw_failure_experiment(chain[:3], 0.5, 1.0, samples=8)
    assert r["grows"]


def test_ls_instance_example():
    cf = FrequencyCF((3, 100000, 1))
    inst = ls_instance(cf, 1, 2, 0.5, 0.01125, 1.2, grid=21)
    assert inst.eps_floor() == pytest.approx(0.99923, abs=1e-5)
    rep = ls_lower_bound_check(inst)
    assert rep["holds"] and rep["eps_monotone"] and rep["q_star"] == 3
    assert rep["bound"] == pytest.approx(0.01125 / (9600 * 9 * 0.5 ** 1.5))


def test_ls_validation():
    cf = FrequencyCF((3, 100000, 1))
    with pytest.raises(InstanceError, match="delta outside"):
        ls_lower_bound_check(ls_instance(cf, 1, 2, 0.5, 0.5, 1.2, grid=5))
    with pytest.raises(InstanceError, match="approximation"):
        ls_lower_bound_check(ls_instance(FrequencyCF((3, 2, 1)), 1, 2, 0.5, 0.01125, 1.2, grid=5))
    inst = ls_instance(cf, 1, 2, 0.5, 0.01125, 1.2, eps=0.5, grid=5)
    with pytest.raises(InstanceError, match="eps below"):
        inst.validate()
    assert inst.to_dict()["eps"] == 0.5


def test_j_delta_grid_inside_set():
    from amolab.spectrum import j_delta_set

    pq = RationalFreq(1, 3)
    J = j_delta_set(pq, 0.5, 0.05)
    for E in j_delta_grid(pq, 0.5, 0.05, 30):
        assert any(float(a) < E < float(b) for a, b in J.intervals)


def test_meagerness_small_chain():
    rep = meagerness_check(FrequencyCF((3,)), 0.5, 0.125, [100, 300])
    ys = [r["ln_measure"] for r in rep["rows"]]
    assert rep["strictly_decreasing"] and ys[1] < ys[0] and rep["slope_vs_q"] < 0
    assert [r["q_next"] for r in rep["rows"]] == [301, 901]


def test_meagerness_precondition():
    with pytest.raises(InstanceError, match="precondition"):
        meagerness_check(FrequencyCF((3,)), 0.5, 0.125, [10])
