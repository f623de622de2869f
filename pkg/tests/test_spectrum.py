import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from amolab.frequency import GOLDEN, RationalFreq, cf_convergents
from amolab.spectrum import (BandSet, band_ratio_check, chambers_residual, discriminant_eval, f_tau,
                             fast_bands, gaps, hausdorff_distance, j_delta_set, level_set, log_measure,
                             remez_check, set_ops, spectrum, spectrum_minus, zeros)

small_pq = st.sampled_from([RationalFreq(0, 1), RationalFreq(1, 2), RationalFreq(1, 3), RationalFreq(2, 5),
                            RationalFreq(3, 7), RationalFreq(3, 8)])


def bloch_edges(pq, lam, theta):
    """Band edges of the theta-periodic operator from q x q Bloch matrices at k = 0, pi."""
    q = pq.q
    n = np.arange(1, q + 1)
    v = 2 * lam * np.cos(2 * np.pi * pq.p * n / q + theta)
    out = []
    for k in (0.0, math.pi):
        H = np.diag(v).astype(complex)
        if q == 1:
            H[0, 0] += 2 * math.cos(k)
        else:
            for i in range(q - 1):
                H[i, i + 1] = H[i + 1, i] = 1
            H[0, q - 1] += np.exp(-1j * k)
            H[q - 1, 0] += np.exp(1j * k)
        out.append(np.linalg.eigvalsh(H))
    e0, e1 = out
    return np.minimum(e0, e1), np.maximum(e0, e1)


@pytest.mark.parametrize("pq", [RationalFreq(1, 2), RationalFreq(1, 3), RationalFreq(2, 5), RationalFreq(3, 8)])
@pytest.mark.parametrize("lam", [0.3, 1.0, 1.7])
def test_union_and_intersection_match_bloch_extremes(pq, lam):
    lo0, up0 = bloch_edges(pq, lam, 0.0)
    lo1, up1 = bloch_edges(pq, lam, math.pi / pq.q)
    S = spectrum(pq, lam)
    assert np.allclose(S.lower, np.minimum(lo0, lo1), atol=1e-10)
    assert np.allclose(S.upper, np.maximum(up0, up1), atol=1e-10)
    if lam > 1:
        with pytest.raises(ValueError):
            spectrum_minus(pq, lam)
        return
    Sm = spectrum_minus(pq, lam)
    assert np.allclose(Sm.lower, np.maximum(lo0, lo1), atol=1e-10)
    assert np.allclose(Sm.upper, np.minimum(up0, up1), atol=1e-10)


@pytest.mark.parametrize("p,q", [(1, 2), (1, 3), (2, 5), (3, 7), (5, 8)])
@pytest.mark.parametrize("lam", [0.3, 0.5, 0.9])
def test_minus_measure_is_4_minus_4lam(p, q, lam):
    assert spectrum_minus(RationalFreq(p, q), lam).measure() == pytest.approx(4 - 4 * lam, rel=1e-8)


def test_minus_half_closed_form():
    B = spectrum_minus(RationalFreq(1, 2), 0.5)
    assert [(float(l), float(u)) for l, u in B.bands] == [(-2.0, -1.0), (1.0, 2.0)]


@given(small_pq, st.floats(0.1, 2.0), st.floats(-4, 4), st.floats(0, 2 * math.pi))
def test_chambers_identity(pq, lam, E, th):
    assert chambers_residual(pq, lam, [E], [th]) < 1e-12


@pytest.mark.parametrize("method", ["bisect", "newton"])
def test_edge_routes_agree(method):
    pq = RationalFreq(5, 13)
    a = level_set(pq, 0.6, "S")
    b = level_set(pq, 0.6, "S", method=method) if method == "bisect" else level_set(pq, 0.6, ("tau", 1), method="newton")
    assert np.max(np.abs(a.lower - b.lower)) < 1e-10
    assert np.max(np.abs(a.upper - b.upper)) < 1e-10


def test_zeros_inside_bands_and_sign_changes():
    pq = RationalFreq(3, 8)
    z = zeros(pq, 0.7)
    S = spectrum(pq, 0.7)
    for x, (l, u) in zip(z, S.bands):
        assert l < x < u
        assert abs(discriminant_eval(float(x), pq, 0.7)) < 1e-9


def test_fast_engine_matches_mp_route():
    pq = cf_convergents(GOLDEN, 10)[-1]  # 55/89
    mp = level_set(pq, 0.8, "S")
    fb = fast_bands(pq, 0.8, "S")
    assert len(fb["zeros"]) == pq.q
    assert np.max(np.abs(np.sort(fb["lower"]) - mp.lower)) < 1e-9
    assert log_measure(fb) == pytest.approx(math.log(mp.measure()), abs=1e-8)


def _disjoint(steps):
    out, x = [], -5.0
    for gap, w in steps:
        out.append((x + gap, x + gap + w))
        x += gap + w
    return BandSet(tuple(out))


intervals = st.lists(st.tuples(st.floats(0.01, 1), st.floats(0, 1)), min_size=1, max_size=6).map(_disjoint)


@given(intervals, intervals)
def test_set_ops_measure_identity(A, B):
    u = set_ops(A, B, "or").measure()
    i = set_ops(A, B, "and").measure()
    m = set_ops(A, B, "minus").measure()
    a, b = A.measure(), B.measure()
    assert i + m == pytest.approx(a, abs=1e-9)
    assert u + i == pytest.approx(a + b, abs=1e-9)
    assert i <= min(a, b) + 1e-9


@given(intervals, intervals)
def test_hausdorff_symmetric(A, B):
    assert hausdorff_distance(A, B) == pytest.approx(hausdorff_distance(B, A))
    assert hausdorff_distance(A, A) == 0


def test_gaps_count():
    # the central gap closes for even q, so q = 2 has one band and q = 3 has two gaps
    assert len(gaps(spectrum(RationalFreq(1, 2), 0.5))) == 0
    assert len(gaps(spectrum(RationalFreq(1, 3), 0.5))) == 2


@pytest.mark.parametrize("d1,d2", [(0.01, 0.05), (0.05, 0.2)])
def test_j_delta_nests(d1, d2):
    pq = RationalFreq(1, 3)
    J1, J2 = j_delta_set(pq, 0.5, d1), j_delta_set(pq, 0.5, d2)
    assert J1.complement_measure <= J2.complement_measure
    S = spectrum(pq, 0.5)
    m1 = set_ops(S, BandSet(J1.intervals), "and").measure()
    m2 = set_ops(S, BandSet(J2.intervals), "and").measure()
    assert m2 <= m1 + 1e-15


@given(st.sampled_from([RationalFreq(1, 2), RationalFreq(2, 5), RationalFreq(3, 8), RationalFreq(5, 13)]),
       st.sampled_from([0.3, 0.6, 0.9]), st.sampled_from([0.1, 0.25, 0.5]))
def test_f_tau_length_bound(pq, lam, tau):
    F = f_tau(pq, lam, tau)
    assert F.length >= F.certified_length_lb


def test_f_tau_guards():
    with pytest.raises(ValueError):
        f_tau(RationalFreq(1, 2), 1.0, 0.5)
    with pytest.raises(ValueError):
        f_tau(RationalFreq(1, 2), 0.5, 0.75)


@pytest.mark.parametrize("pq", [RationalFreq(1, 3), RationalFreq(3, 8)])
def test_band_ratio_slacks(pq):
    r = band_ratio_check(pq, 0.7, -0.5, 0.5)
    assert r["part1_holds"] and r["part2_holds"]


def test_remez_inequality():
    pq = RationalFreq(2, 5)
    S = spectrum(pq, 0.5)
    l, u = float(S.bands[2][0]), float(S.bands[2][1])
    r = remez_check(pq, 0.5, (l - 0.1, u + 0.1), (l, u))
    assert r["holds"]


def test_fast_edges_near_closed_gaps():
    # lam = 1: some gaps of S nearly close, which used to throw Newton off the band
    fb = fast_bands(RationalFreq(435, 734), 1.0, "S")
    lo, up = np.asarray(fb["lower"]), np.asarray(fb["upper"])
    assert np.all(np.diff(lo) > 0) and np.all(lo <= fb["zeros"]) and np.all(fb["zeros"] <= up)
    assert up.max() < 4 and lo.min() > -4
