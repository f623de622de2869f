"""Gauge functions omega: (0, 1] -> (0, inf) used for Hausdorff contents and moduli of continuity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

# omega_t is evaluated exactly on (0, S_CLAMP] and continued linearly above it.
S_CLAMP = math.exp(-2.0)


@dataclass(frozen=True)
class GaugeFn:
    """A non-decreasing gauge.

    kind is "omega" (1/log^t(1/(e s))), "omega_tilde" (s^t) or "table"
    (piecewise-linear interpolation through the (s, value) pairs in `table`,
    with value 0 at s = 0).
    """

    kind: str
    t: float = 1.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("omega", "omega_tilde", "table"):
            raise ValueError(f"unknown gauge kind {self.kind!r}")
        if self.kind != "table" and not self.t > 0:
            raise ValueError("gauge exponent must be positive")
        if self.kind == "table":
            ss = [s for s, _ in self.table]
            vs = [v for _, v in self.table]
            if not self.table or ss != sorted(ss) or vs != sorted(vs) or ss[0] <= 0:
                raise ValueError("table gauge needs increasing s > 0 and non-decreasing values")

    @property
    def label(self) -> str:
        if self.kind == "table":
            return f"table[{len(self.table)}]"
        return f"{self.kind}({self.t:g})"

    def __call__(self, s: float) -> float:
        s = float(s)
        if s <= 0.0:
            return 0.0
        if self.kind == "omega_tilde":
            return s ** self.t
        if self.kind == "omega":
            if s <= S_CLAMP:
                return (math.log(1.0 / s) - 1.0) ** (-self.t)
            return 1.0 + self.t * math.e ** 2 * (s - S_CLAMP)
        return _interp_table(self.table, s)

    def log_at(self, L) -> mpmath.mpf:
        """ln omega(e^{-L}) for L = ln(1/s) >= 0, valid for arbitrarily large L."""
        L = mpmath.mpf(L)
        if self.kind == "omega_tilde":
            return -self.t * L
        if self.kind == "omega":
            if L >= 2:
                return -self.t * mpmath.log(L - 1)
            return mpmath.log(1 + self.t * mpmath.e ** 2 * (mpmath.exp(-L) - S_CLAMP))
        s = mpmath.exp(-L)
        s0, v0 = self.table[0]
        if s < s0:
            return mpmath.log(v0) + mpmath.log(s) - mpmath.log(s0)
        return mpmath.log(_interp_table(self.table, float(s)))

    def inverse(self, y: float) -> float:
        """sup{s in (0, 1] : omega(s) <= y}."""
        if y <= 0:
            return 0.0
        if self.kind == "omega_tilde":
            return min(1.0, y ** (1.0 / self.t))
        if self.kind == "omega" and y <= 1.0:
            return math.exp(-(y ** (-1.0 / self.t)) - 1.0)
        lo, hi = 0.0, 1.0
        if self(hi) <= y:
            return 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self(mid) <= y:
                lo = mid
            else:
                hi = mid
        return lo

    def log_inverse_sq_recip(self, y) -> mpmath.mpf:
        """ln(1 / omega^{-1}(y)^2) at working precision (y may be tiny)."""
        y = mpmath.mpf(y)
        if self.kind == "omega_tilde":
            return -2 * mpmath.log(y) / self.t
        if self.kind == "omega" and y <= 1:
            return 2 * (y ** (-1 / mpmath.mpf(self.t)) + 1)
        return -2 * mpmath.log(self.inverse(float(y)))


def _interp_table(table, s: float) -> float:
    s0, v0 = table[0]
    if s <= s0:
        return v0 * s / s0
    for (sa, va), (sb, vb) in zip(table, table[1:]):
        if s <= sb:
            return va + (vb - va) * (s - sa) / (sb - sa)
    return table[-1][1]


def omega(t: float) -> GaugeFn:
    return GaugeFn("omega", t)


def omega_tilde(t: float) -> GaugeFn:
    return GaugeFn("omega_tilde", t)
