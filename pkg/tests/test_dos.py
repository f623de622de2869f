import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from amolab.dos import (dos_of_interval, duality_check, ids_averaged, ids_finite_box, ids_periodic,
                        kyfan_check, lyapunov_on_spectrum, thouless_residual)
from amolab.frequency import GOLDEN, RationalFreq, cf_convergents

PQS = [RationalFreq(1, 2), RationalFreq(1, 3), RationalFreq(2, 5), RationalFreq(3, 8)]


def bloch_ids(E, pq, lam, theta, K=4000):
    """Fraction of Bloch eigenvalues <= E over K uniform quasimomenta (error O(1/K))."""
    q = pq.q
    v = 2 * lam * np.cos(2 * np.pi * pq.p * np.arange(1, q + 1) / q + theta)
    cnt = 0
    for k in (np.arange(K) + 0.5) * 2 * np.pi / K:
        H = np.diag(v).astype(complex)
        for i in range(q - 1):
            H[i, i + 1] = H[i + 1, i] = 1
        H[0, q - 1] += np.exp(-1j * k)
        H[q - 1, 0] += np.exp(1j * k)
        cnt += int(np.sum(np.linalg.eigvalsh(H) <= E))
    return cnt / (K * q)


@pytest.mark.parametrize("pq", PQS)
def test_ids_periodic_matches_bloch_count(pq):
    rng = np.random.default_rng(pq.q)
    for _ in range(3):
        E, th, lam = rng.uniform(-3.5, 3.5), rng.uniform(0, 2 * np.pi), rng.uniform(0.2, 1.5)
        assert ids_periodic(E, pq, lam, th) == pytest.approx(bloch_ids(E, pq, lam, th), abs=2e-3)


@given(st.sampled_from(PQS), st.floats(0.1, 1.8), st.floats(-4, 4), st.floats(0, 2 * math.pi))
@example(RationalFreq(3, 8), 0.1, 0.0, 0.0)  # zero Sturm pivot
def test_ids_periodic_vs_box(pq, lam, E, th):
    L = 60 * pq.q
    assert abs(ids_periodic(E, pq, lam, th) - ids_finite_box(E, pq, lam, th, L)) <= 2.0 / L + 1e-12


@given(st.sampled_from(PQS), st.floats(0.1, 1.5), st.floats(-4, 4), st.floats(0, 1))
def test_ids_monotone_and_bounded(pq, lam, E, dE):
    a, b = ids_averaged(E, pq, lam), ids_averaged(E + dE, pq, lam)
    assert 0 <= a <= b <= 1


@pytest.mark.parametrize("pq", PQS)
def test_exact_and_trapezoid_average_agree(pq):
    for E in (-2.1, -0.3, 0.9, 1.7):
        assert ids_averaged(E, pq, 0.6, method="exact") == pytest.approx(
            ids_averaged(E, pq, 0.6, nodes=4096), abs=1e-6)


def test_dos_interval_rejects_reversed():
    with pytest.raises(ValueError):
        dos_of_interval((1.0, 0.0), RationalFreq(1, 2), 0.5)


@pytest.mark.parametrize("p,q", [(0, 1), (1, 2), (1, 3)])
def test_thouless_formula(p, q):
    r = thouless_residual(RationalFreq(p, q), 0.7, [-3.1, 0.15, 2.2 + 0.2j, 0.5 + 1e-3j])
    assert r["residual"] < 1e-6


def test_thouless_flags_edge_points():
    from amolab.spectrum import spectrum

    e = float(spectrum(RationalFreq(1, 2), 0.5).lower[0])
    r = thouless_residual(RationalFreq(1, 2), 0.5, [e, 0.3])
    assert len(r["flagged"]) == 1 and len(r["points"]) == 1


@pytest.mark.parametrize("p,q", [(0, 1), (1, 2), (2, 5)])
@pytest.mark.parametrize("lam", [0.4, 1.3])
def test_duality_prefers_inverse_coupling(p, q, lam):
    r = duality_check(RationalFreq(p, q), lam, grid=7)
    assert r["best_kappa"] == "1/lam"
    assert r["residual_best"] < 1e-9
    assert r["ids_residual"] < 1e-9


@settings(max_examples=20)
@given(st.integers(0, 5), st.floats(0.2, 1.5), st.floats(-3.5, 3.5), st.floats(0.01, 3), st.integers(1, 40))
def test_kyfan_inequality(k, lam, a, w, L):
    cv = cf_convergents(GOLDEN, 8)[1:]
    assert kyfan_check(cv[k], cv[k + 1], lam, a, a + w, L)["holds"]


def test_kyfan_guards():
    with pytest.raises(ValueError):
        kyfan_check(RationalFreq(1, 2), RationalFreq(1, 3), 0.5, 1.0, 0.0, 3)
    with pytest.raises(ValueError):
        kyfan_check(RationalFreq(1, 2), RationalFreq(1, 3), 0.5, 0.0, 1.0, 0)


def test_lyapunov_on_spectrum_nonnegative():
    g = lyapunov_on_spectrum(RationalFreq(2, 5), 0.5, points=20)
    assert np.all(g >= 0) and np.all(np.isfinite(g))


def test_lyapunov_vanishes_on_minus_set():
    from amolab.cocycle import lyapunov_periodic_batch
    from amolab.spectrum import spectrum_minus

    pq = RationalFreq(2, 5)
    Sm = spectrum_minus(pq, 0.5)
    Es = np.array([0.5 * float(l + u) for l, u in Sm.bands], dtype=complex)
    th = 2 * np.pi * np.arange(16) / 16
    assert np.max(lyapunov_periodic_batch(Es, pq, 0.5, th)) < 1e-12
