"""Continued fractions, convergents, beta(alpha) estimates and Liouville-type constructions.

All convergent arithmetic is done on Python integers, so denominators of any
size are exact.  Reals only appear in log-domain threshold computations,
which run in mpmath at a precision sized to the integers involved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath

from .gauges import GaugeFn


class InsufficientQuotientsError(ValueError):
    """Raised when an operation needs more partial quotients than are materialized."""


class GaugeTooSlowError(ValueError):
    pass


class CapacityOverflowError(OverflowError):
    def __init__(self, message: str, level: int):
        super().__init__(message)
        self.level = level


@dataclass(frozen=True)
class RationalFreq:
    """Reduced fraction p/q used as a periodic frequency.

    The convergent 1/1 (quotient a_1 = 1) is allowed as the single case p = q;
    as a frequency it acts like 0/1.
    """

    p: int
    q: int

    def __post_init__(self):
        if self.q < 1 or self.p < 0 or self.p > self.q or (self.p == self.q and self.q != 1):
            raise ValueError(f"invalid frequency {self.p}/{self.q}")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"{self.p}/{self.q} is not reduced")

    @property
    def value(self) -> Fraction:
        return Fraction(self.p, self.q)

    def __float__(self) -> float:
        return self.p / self.q

    def __str__(self) -> str:
        return f"{self.p}/{self.q}"

    def to_json(self) -> dict:
        return {"p": str(self.p), "q": str(self.q)}

    @classmethod
    def from_json(cls, obj: dict) -> "RationalFreq":
        return cls(int(obj["p"]), int(obj["q"]))


@dataclass(frozen=True)
class FrequencyCF:
    """alpha = [0; a_1, a_2, ...] given by a finite prefix of partial quotients.

    `construction` records, for quotients appended by `liouville_construct`,
    the tuple (n, q_n, k, bound) where x_n = 2^-k and bound is the integer the
    next denominator had to reach.
    """

    partial_quotients: tuple[int, ...]
    construction: tuple[tuple, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "partial_quotients", tuple(int(a) for a in self.partial_quotients))
        if any(a < 1 for a in self.partial_quotients):
            raise ValueError("partial quotients must be >= 1")

    @property
    def prefix_len(self) -> int:
        return len(self.partial_quotients)

    def denominators(self) -> list[int]:
        """q_0, q_1, ..., q_m for the materialized prefix."""
        qs = [1]
        q_prev = 0
        for a in self.partial_quotients:
            qs.append(a * qs[-1] + q_prev)
            q_prev = qs[-2]
        return qs

    def to_json(self) -> str:
        return json.dumps([str(a) for a in self.partial_quotients])

    @classmethod
    def from_json(cls, text: str) -> "FrequencyCF":
        return cls(tuple(int(a) for a in json.loads(text)))

    def mpf(self, prec: int = 256) -> mpmath.mpf:
        """Value of the finite continued fraction at `prec` bits."""
        with mpmath.workprec(prec):
            x = mpmath.mpf(0)
            for a in reversed(self.partial_quotients):
                x = 1 / (a + x)
            return +x


GOLDEN = FrequencyCF((1,) * 40)


@dataclass(frozen=True)
class BetaEstimate:
    per_n_values: list[tuple[int, float]]
    running_max: float
    depth: int


def _pq_pairs(quotients: Sequence[int]):
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    yield p, q
    for a in quotients:
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        yield p, q


def cf_convergents(cf: FrequencyCF, n_max: int) -> list[RationalFreq]:
    """Convergents p_0/q_0 ... p_{n_max}/q_{n_max}."""
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if n_max > cf.prefix_len:
        raise InsufficientQuotientsError(
            f"insufficient quotients: need {n_max}, have {cf.prefix_len}"
        )
    return [RationalFreq(p, q) for p, q in _pq_pairs(cf.partial_quotients[:n_max])]


def beta_estimate(cf: FrequencyCF, depth: int) -> BetaEstimate:
    """Running values ln(q_{n+1})/q_n for n = 1 .. depth-1."""
    if depth < 2:
        raise ValueError("beta_estimate needs depth >= 2")
    if depth > cf.prefix_len:
        raise InsufficientQuotientsError(
            f"insufficient quotients: need {depth}, have {cf.prefix_len}"
        )
    qs = cf.denominators()
    values = [(n, math.log(qs[n + 1]) / qs[n]) for n in range(1, depth)]
    return BetaEstimate(values, max(v for _, v in values), depth)


def rational_gap(cf: FrequencyCF, n: int) -> tuple[Fraction, Fraction]:
    """Enclosure 1/(q_n(q_{n+1}+q_n)) <= |alpha - p_n/q_n| <= 1/(q_n q_{n+1})."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n + 1 > cf.prefix_len:
        raise InsufficientQuotientsError(
            f"insufficient quotients: rational_gap({n}) needs {n + 1}, have {cf.prefix_len}"
        )
    qs = cf.denominators()
    return Fraction(1, qs[n] * (qs[n + 1] + qs[n])), Fraction(1, qs[n] * qs[n + 1])


# ---------------------------------------------------------------- constructions

DECAY_GRID_MAX_EXP = 1024


def check_gauge_decay(gauge: GaugeFn) -> None:
    """omega(s) log(1/s) must visibly go to 0 on the grid s = exp(-2^m), m <= 1024."""
    with mpmath.workprec(128):
        vals = [mpmath.exp(gauge.log_at(mpmath.mpf(2) ** m)) * mpmath.mpf(2) ** m
                for m in range(1, DECAY_GRID_MAX_EXP + 1, 64)]
        tail = vals[-4:]
        if not all(b < a for a, b in zip(tail, tail[1:])) or tail[-1] > mpmath.mpf("0.01"):
            raise GaugeTooSlowError(
                f"gauge too slow: omega(s)log(1/s) = {mpmath.nstr(tail[-1], 5)} at s = exp(-2^{DECAY_GRID_MAX_EXP})"
            )


def dyadic_threshold(gauge: GaugeFn, log_thresh) -> int:
    """Smallest k with omega(2^-k) ln(2^k) <= exp(log_thresh) for all larger k tested."""
    ln2 = mpmath.log(2)

    def ok(k: int) -> bool:
        L = k * ln2
        return gauge.log_at(L) + mpmath.log(L) <= log_thresh

    hi = 1
    while not (ok(hi) and ok(2 * hi) and ok(4 * hi)):
        hi *= 2
        if hi.bit_length() > 4096:
            raise GaugeTooSlowError("gauge too slow: threshold not reached on the dyadic grid")
    lo = hi // 2
    if lo >= 1 and ok(lo):
        hi = lo
        lo = 0
    # invariant: not ok(lo) (or lo = 0), ok(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _ceil_exp(log_value, what: str, level: int, max_bits: int) -> int:
    """ceil(exp(log_value)) as an exact integer."""
    bits = int(log_value / mpmath.log(2)) + 1 if log_value > 0 else 1
    if bits > max_bits:
        raise CapacityOverflowError(
            f"{what}: next denominator needs ~{bits} bits (> {max_bits}) at level {level}", level
        )
    with mpmath.workprec(bits + 96):
        return int(mpmath.ceil(mpmath.exp(log_value)))


def liouville_construct(
    gauge: GaugeFn,
    lam,
    prefix: FrequencyCF,
    levels: int,
    recipe: str = "hausdorff",
    C1: float = 1.0,
    Cprime: float = 1.0,
    max_bits: int = 1 << 20,
) -> FrequencyCF:
    """Append `levels` quotients, each minimal such that q_{n+1} meets the recipe.

    hausdorff: omega(x) log(1/x) <= e^{-2 q_n} defines x_n and
        q_{n+1} >= max(2 C1 e^{q_n} log(1/x_n), 1/omega^{-1}(1/q_n^2)^2).
    ids: omega(x) log(1/x) <= lam^{q_n}/q_n^2 defines x_n and
        q_{n+1} >= max(q_n^6 lam^{-2 q_n}, C' q_n lam^{-q_n} log(5/x_n)).
    """
    if recipe not in ("hausdorff", "ids"):
        raise ValueError(f"unknown recipe {recipe!r}")
    lam_q = Fraction(str(lam)) if not isinstance(lam, Fraction) else lam
    if not 0 < lam_q <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    if prefix.prefix_len < 1:
        raise ValueError("prefix must hold at least one quotient")
    check_gauge_decay(gauge)

    quotients = list(prefix.partial_quotients)
    notes = list(prefix.construction)
    qs = prefix.denominators()
    q_prev, q_n = qs[-2], qs[-1]
    for step in range(levels):
        n = len(quotients)
        level = step + 1
        guard = 64 + 2 * max(q_n.bit_length(), 1)
        if q_n.bit_length() > max_bits:
            raise CapacityOverflowError(f"q_n exceeds {max_bits} bits at level {level}", level)
        with mpmath.workprec(guard + 64):
            ln2 = mpmath.log(2)
            qn = mpmath.mpf(q_n)
            if recipe == "hausdorff":
                k = dyadic_threshold(gauge, -2 * qn)
                L = k * ln2
                log_b1 = mpmath.log(2 * mpmath.mpf(C1)) + qn + mpmath.log(L)
                log_b2 = gauge.log_inverse_sq_recip(1 / qn ** 2)
                bound = max(_ceil_exp(log_b1, recipe, level, max_bits),
                            _ceil_exp(log_b2, recipe, level, max_bits))
            else:
                log_lam = mpmath.log(mpmath.mpf(lam_q.numerator) / lam_q.denominator)
                k = dyadic_threshold(gauge, qn * log_lam - 2 * mpmath.log(qn))
                L = k * ln2
                exact = Fraction(q_n ** 6) / lam_q ** (2 * q_n)
                if exact.numerator.bit_length() - exact.denominator.bit_length() > max_bits:
                    raise CapacityOverflowError(f"{recipe}: first term too large at level {level}", level)
                b1 = -(-exact.numerator // exact.denominator)
                log_b2 = (mpmath.log(mpmath.mpf(Cprime) * qn) - qn * log_lam
                          + mpmath.log(mpmath.log(5) + L))
                bound = max(b1, _ceil_exp(log_b2, recipe, level, max_bits))
        a = max(1, -(-(bound - q_prev) // q_n))
        q_next = a * q_n + q_prev
        assert q_next >= bound
        quotients.append(a)
        notes.append((n, q_n, k, bound))
        q_prev, q_n = q_n, q_next
    return FrequencyCF(tuple(quotients), tuple(notes))
