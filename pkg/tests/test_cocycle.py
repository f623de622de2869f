import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from amolab.cocycle import (AvalancheInstance, avalanche_check, avalanche_generate, lyapunov_periodic,
                            lyapunov_periodic_batch, opnorm, potential, transfer_product)
from amolab.frequency import RationalFreq

pqs = st.sampled_from([RationalFreq(0, 1), RationalFreq(1, 2), RationalFreq(1, 3), RationalFreq(2, 5),
                       RationalFreq(3, 8), RationalFreq(5, 13)])


def naive_product(E, freq, lam, theta, n):
    M = np.eye(2, dtype=complex)
    for v in potential(freq, lam, theta, n):
        M = np.array([[E - v, -1], [1, 0]], dtype=complex) @ M
    return M


@given(pqs, st.floats(0.1, 2.0), st.floats(0, 2 * math.pi), st.floats(-4, 4), st.floats(0, 1))
def test_transfer_product_matches_naive(pq, lam, theta, x, y):
    E = complex(x, y)
    P = transfer_product(E, pq, lam, theta, 3 * pq.q)
    ref = naive_product(E, pq, lam, theta, 3 * pq.q)
    assert np.allclose(P.full(), ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())
    assert P.det_error() < 1e-12


@given(pqs, st.floats(0.1, 2.0), st.floats(-4, 4), st.floats(0.0, 0.5))
def test_lyapunov_is_log_spectral_radius(pq, lam, x, y):
    E = complex(x, y)
    M = naive_product(E, pq, lam, 0.3, pq.q)
    ref = max(math.log(max(abs(np.linalg.eigvals(M)))), 0.0) / pq.q
    assert lyapunov_periodic(E, pq, lam, 0.3) == pytest.approx(ref, abs=1e-9)


@given(pqs, st.floats(0.2, 1.5), st.floats(-3, 3))
def test_lyapunov_monotone_in_eps(pq, lam, x):
    g = lyapunov_periodic_batch([x + 0.01j, x + 0.1j, x + 1j], pq, lam, [0.0, 1.0])
    assert np.all(np.diff(g, axis=1) >= -1e-12)


@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                min_size=4, max_size=4))
def test_opnorm_is_spectral_norm(z):
    m = np.array(z).reshape(2, 2)
    assert opnorm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-9, abs=1e-12)


def test_large_product_is_log_scaled():
    P = transfer_product(10.0, RationalFreq(1, 3), 1.0, 0.0, 3000)
    assert P.log_norm > 3000 * math.log(9)
    assert np.isfinite(P.m).all()


@given(st.integers(1, 150), st.integers(0, 2**31 - 1))
def test_avalanche_generated_instances(n, seed):
    inst = avalanche_generate(n, 0.1, 0.5, seed)
    r = avalanche_check(inst)
    assert r["hypotheses_hold"]
    assert r["conclusion_holds"]


def test_avalanche_json_round_trip():
    inst = avalanche_generate(20, 0.1, 0.5, 7)
    back = AvalancheInstance.from_json(inst.to_json())
    assert np.allclose(back.matrices, inst.matrices)
    assert avalanche_check(back)["lhs"] == pytest.approx(avalanche_check(inst)["lhs"])


def test_avalanche_rejects_bad_constants():
    with pytest.raises(ValueError):
        avalanche_generate(5, 0.2, 0.5, 0)
