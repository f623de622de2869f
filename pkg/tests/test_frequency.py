import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from amolab.frequency import (GOLDEN, CapacityOverflowError, FrequencyCF, GaugeTooSlowError,
                              InsufficientQuotientsError,
                              RationalFreq, beta_estimate, cf_convergents, liouville_construct,
                              rational_gap)
from amolab.gauges import omega, omega_tilde

quotients = st.lists(st.integers(1, 50), min_size=2, max_size=12)


def test_golden_convergents_are_fibonacci():
    cv = cf_convergents(GOLDEN, 10)
    assert [c.q for c in cv] == [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89]
    assert str(cv[-1]) == "55/89"


def test_rational_freq_validation():
    with pytest.raises(ValueError):
        RationalFreq(2, 4)
    with pytest.raises(ValueError):
        RationalFreq(3, 2)
    assert float(RationalFreq(1, 1)) == 1.0


def test_insufficient_quotients():
    with pytest.raises(InsufficientQuotientsError):
        cf_convergents(FrequencyCF((1, 2)), 3)
    with pytest.raises(InsufficientQuotientsError):
        rational_gap(FrequencyCF((1, 2)), 2)


@given(quotients)
def test_convergent_determinant(qs):
    cv = cf_convergents(FrequencyCF(tuple(qs)), len(qs))
    for a, b in zip(cv, cv[1:]):
        assert abs(a.p * b.q - b.p * a.q) == 1


@given(quotients)
def test_rational_gap_encloses_true_distance(qs):
    cf = FrequencyCF(tuple(qs))
    x = Fraction(0)
    for a in reversed(qs):
        x = 1 / (a + x)
    cv = cf_convergents(cf, len(qs) - 1)
    for n in range(len(qs) - 1):
        lo, hi = rational_gap(cf, n)
        d = abs(x - cv[n].value)
        assert lo <= d <= hi


@given(quotients)
def test_json_round_trip(qs):
    cf = FrequencyCF(tuple(qs))
    assert FrequencyCF.from_json(cf.to_json()) == cf
    r = cf_convergents(cf, 1)[-1]
    assert RationalFreq.from_json(r.to_json()) == r


def test_beta_estimate_golden_small():
    est = beta_estimate(GOLDEN, 20)
    assert est.running_max == pytest.approx(math.log(2), rel=1e-12)  # n = 1: ln(q_2)/q_1 = ln 2
    assert est.per_n_values[-1][1] < 0.05


def test_liouville_construct_meets_bound():
    cf = liouville_construct(omega_tilde(2), 1, FrequencyCF((1, 1, 2)), 2, C1=1e-12)
    qs = cf.denominators()
    for (n, qn, k, bound), q_next in zip(cf.construction, qs[4:]):
        assert q_next >= bound
    assert qs[:4] == [1, 1, 2, 5]
    assert qs[4] == 27 and qs[5] == 734


def test_liouville_construct_capacity():
    with pytest.raises(CapacityOverflowError):
        liouville_construct(omega_tilde(2), 1, FrequencyCF((1, 1, 2)), 3, max_bits=64)


def test_log_gauge_too_slow_for_haus_recipe():
    with pytest.raises(GaugeTooSlowError):
        liouville_construct(omega(1), 1, FrequencyCF((1, 1, 2)), 1)
