"""W-transforms, Hausdorff-content covers, moduli of continuity, homogeneity, Parreau-Widom sums, Frostman measures."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .frequency import RationalFreq
from .gauges import GaugeFn, omega, omega_tilde
from .spectrum import BandSet, FAST_Q, _fast_potential, gaps, j_delta_set, set_ops, spectrum

__all__ = [
    "GaugeFn", "omega", "omega_tilde", "gauge_eval", "w_transform", "w_at", "ratio_suite",
    "w2w1_constant", "CoverCost", "hausdorff_content_upper", "modulus_of_continuity",
    "homogeneity_profile", "pw_sum", "FrostmanMeasure", "frostman_measure",
]

LN2 = math.log(2.0)
TAIL_RTOL = 1e-3
MAX_TERMS = 1 << 22


def gauge_eval(g: GaugeFn, s: float) -> float:
    if not 0 < s <= 1:
        raise ValueError("gauges are evaluated on (0, 1]")
    return g(s)


# ---------------------------------------------------------------- dyadic sequences


class _Dyadic:
    """k -> omega(2^-k) with integral-test tail bounds."""

    def __init__(self, g: GaugeFn):
        self.g = g

    def value(self, k: int) -> float:
        return self.g(2.0 ** -k)

    def values(self, ks: np.ndarray) -> np.ndarray:
        g = self.g
        ks = np.asarray(ks, dtype=float)
        if g.kind == "omega_tilde":
            return np.exp2(-g.t * ks)
        if g.kind == "omega":
            s = np.exp2(-ks)
            with np.errstate(divide="ignore", invalid="ignore"):
                small = (ks * LN2 - 1.0) ** (-g.t)
            return np.where(s <= math.exp(-2.0), small, [g(x) for x in s] if (s > math.exp(-2.0)).any() else small)
        return np.array([g(x) for x in np.exp2(-ks)])

    def tail(self, K: int) -> float:
        """Upper bound for sum_{k > K} omega(2^-k)."""
        g = self.g
        if g.kind == "omega_tilde":
            return 2.0 ** (-g.t * K) / (g.t * LN2)
        if g.kind == "omega":
            if g.t <= 1:
                return math.inf
            head = sum(self.value(k) for k in range(K + 1, 4))
            K = max(K, 3)
            return head + (K * LN2 - 1.0) ** (1.0 - g.t) / ((g.t - 1.0) * LN2)
        s0, v0 = g.table[0]
        K0 = max(K, math.ceil(-math.log2(s0)))
        lin = (v0 / s0) * 2.0 ** (-K0)
        head = sum(self.value(k) for k in range(K + 1, K0 + 1))
        return head + lin

    def weighted_tail(self, j: int, L: int) -> float:
        """Upper bound for sum_{l > L} l omega(2^{-j l}) (terms decreasing from L on)."""
        g = self.g
        if g.kind == "omega_tilde":
            c = g.t * j * LN2
            return math.exp(-c * L) * (L / c + 1.0 / c ** 2)
        if g.kind == "omega":
            if g.t <= 2:
                return math.inf
            a = j * LN2
            U = a * L - 1.0
            if U < 1.0:
                return math.inf
            return (U ** (2.0 - g.t) / (g.t - 2.0) + U ** (1.0 - g.t) / (g.t - 1.0)) / a ** 2
        s0, v0 = g.table[0]
        c = j * LN2
        if 2.0 ** (-j * L) > s0:
            return math.inf
        return (v0 / s0) * math.exp(-c * L) * (L / c + 1.0 / c ** 2)

    def decreasing_from(self, j: int) -> int:
        g = self.g
        if g.kind == "omega_tilde":
            return max(1, math.ceil(1.0 / (g.t * j * LN2)))
        if g.kind == "omega":
            return max(1, math.ceil(3.0 / (j * LN2)))
        return max(1, math.ceil(-math.log2(g.table[0][0]) / j) + 1)


class _W1Seq:
    """k -> (W1 omega)(2^-k) as a dyadic sequence, for composing W2 W1."""

    def __init__(self, base: _Dyadic, rtol: float):
        self.base = base
        self.rtol = rtol
        self._cache = np.zeros(0)

    def _extend(self, k: int):
        n = len(self._cache)
        if k < n:
            return
        new = self.base.values(np.arange(n, max(k + 1, 2 * n)))
        out = np.empty(n + len(new))
        out[:n] = self._cache
        prev = self._cache[-1] if n else 0.0
        # W1(k) = W1(k-1)/4 + omega(2^-k)
        for i, w in enumerate(new):
            prev = prev / 4.0 + w
            out[n + i] = prev
        self._cache = out

    def value(self, k: int) -> float:
        self._extend(k)
        return float(self._cache[k])

    def values(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=int)
        self._extend(int(ks.max()))
        return self._cache[ks]

    def tail(self, K: int) -> float:
        # sum_{k>K} W1(k) <= (4/3) tail_omega(K) + W1(K)/3
        return 4.0 / 3.0 * self.base.tail(K) + self.value(K) / 3.0


def _tail_sum(seq, start: int, rtol: float, partial: float) -> float:
    """sum_{k >= start} seq(k), truncated once the tail bound is below rtol of the running total."""
    total = 0.0
    K = start - 1
    step = 16
    while True:
        bound = seq.tail(K)
        if math.isinf(bound):
            # p-series divergence: the tail bound has no finite value
            return math.inf
        if bound <= rtol * (partial + total) or bound == 0.0:
            return total
        ks = np.arange(K + 1, K + 1 + step)
        total += float(np.sum(seq.values(ks)))
        K += step
        step = min(2 * step, 4096)
        if K > MAX_TERMS:
            return math.inf


def _weighted_tail_sum(seq: _Dyadic, j: int, rtol: float, partial: float) -> float:
    """j sum_{l >= 1} l omega(2^{-j l})."""
    if j == 0:
        return 0.0
    total = 0.0
    L = 0
    step = 16
    dec = seq.decreasing_from(j)
    while True:
        if L >= dec:
            bound = seq.weighted_tail(j, L)
            if math.isinf(bound):
                return math.inf
            if j * bound <= rtol * (partial + j * total) or bound == 0.0:
                return j * total
        ls = np.arange(L + 1, L + 1 + step)
        total += float(np.sum(ls * seq.values(j * ls)))
        L += step
        step = min(2 * step, 4096)
        if L > MAX_TERMS:
            return math.inf


def _w_seq(i: int, seq, j: int, rtol: float) -> float:
    if j < 0:
        raise ValueError("j must be >= 0")
    ks = np.arange(j + 1)
    vals = seq.values(ks)
    if i == 1:
        return float(np.sum(4.0 ** (-(j - ks).astype(float)) * vals))
    if i == 2:
        head = float(np.sum(2.0 ** (-(j - ks).astype(float)) * vals))
        return head + _tail_sum(seq, j + 1, rtol, head)
    if i == 3:
        head = float(np.sum(4.0 ** (-(j - ks).astype(float)) * vals))
        return head + _weighted_tail_sum(seq, j, rtol, head)
    raise ValueError("transform index must be 1, 2 or 3")


def w_transform(i: int, g: GaugeFn, j: int, rtol: float = TAIL_RTOL) -> float:
    """(W_i omega)(2^-j); a divergent tail returns math.inf."""
    return _w_seq(i, _Dyadic(g), int(j), rtol)


def w_at(i: int, g: GaugeFn, eps: float, rtol: float = TAIL_RTOL) -> float:
    """(W_i omega)(eps) by the dyadic step rule 2^{-j-1} < eps <= 2^{-j}."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    j = math.floor(-math.log2(eps))
    if 2.0 ** (-j - 1) >= eps:
        j += 1
    return w_transform(i, g, j, rtol)


def w2w1_constant(g: GaugeFn, jmax: int = 30, rtol: float = TAIL_RTOL) -> dict:
    """max over j <= jmax of (W2 W1 omega)(2^-j) / (W2 omega)(2^-j)."""
    base = _Dyadic(g)
    comp = _W1Seq(base, rtol)
    ratios = []
    for j in range(jmax + 1):
        num = _w_seq(2, comp, j, rtol)
        den = _w_seq(2, base, j, rtol)
        ratios.append(num / den if math.isfinite(den) else math.nan)
    return {"gauge": g.label, "max_ratio": float(np.nanmax(ratios)), "ratios": ratios}


def ratio_suite(i: int, g: GaugeFn, ref: GaugeFn, jmax: int = 40, window: int = 10,
                spread: float = 0.1, rtol: float = TAIL_RTOL) -> dict:
    """(W_i g)(2^-j) / ref(2^-j) for j <= jmax; plateau means all finite and the last
    `window` ratios differ by at most `spread` relative to their max."""
    ratios = [w_transform(i, g, j, rtol) / ref(2.0 ** -j) for j in range(jmax + 1)]
    last = np.array(ratios[-window:])
    finite = bool(np.all(np.isfinite(ratios)))
    plateau = finite and float((last.max() - last.min()) / last.max()) <= spread
    return {"i": i, "gauge": g.label, "ref": ref.label, "ratios": ratios,
            "max": float(np.max(ratios)) if finite else math.inf, "finite": finite, "plateau": plateau}


# ---------------------------------------------------------------- Hausdorff content covers


@dataclass
class CoverCost:
    """Per level: (scale, number of cover intervals, sum of omega over their lengths)."""

    levels: list
    gauge: GaugeFn
    parts: list = field(default_factory=list)

    def costs(self) -> list:
        return [c for _, _, c in self.levels]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "scale", "count", "cost"])
        for n, (eps, cnt, cost) in enumerate(self.levels):
            w.writerow([n, repr(float(eps)), cnt, repr(float(cost))])
        return buf.getvalue()


def _omega_sum(g: GaugeFn, lengths) -> float:
    return float(sum(g(float(x)) for x in lengths if x > 0))


def _default_delta(q: int) -> float:
    return math.exp(-q / 2.0)


def hausdorff_content_upper(chain: Sequence[RationalFreq], lam, gauge: GaugeFn,
                            delta_rule: Callable[[int], float] = _default_delta) -> CoverCost:
    """Covers of S(alpha, lam) built from consecutive convergents.

    Level n (needs p_n/q_n, p_{n+1}/q_{n+1}, q_{n+2}) covers by: the bands of
    S(p_{n+1}/q_{n+1}) intersected with J_delta(p_n/q_n), the intervals of
    J_delta^c, and 2 q_{n+1} fattening intervals of width
    12 sqrt2 sqrt(1/(q_{n+1} q_{n+2})) >= 12 sqrt2 sqrt|alpha - p_{n+1}/q_{n+1}|.
    A chain of two rationals gives one level with the bound 1/q_{n+1}^2; a single
    rational gives S(p/q) fattened on both sides by 6 sqrt2 / q.
    """
    chain = list(chain)
    if not chain:
        raise ValueError("chain too short: need at least one convergent")
    lam = float(lam)
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    for a, b in zip(chain, chain[1:]):
        if not b.q > a.q or abs(a.p * b.q - b.p * a.q) != 1:
            raise ValueError("chain is not a sequence of consecutive convergents")
    levels, parts = [], []
    if len(chain) == 1:
        pq = chain[0]
        S = spectrum(pq, lam)
        h = 6.0 * math.sqrt(2.0) / pq.q
        lens = [float(u - l) + 2 * h for l, u in S.bands]
        levels.append((h, len(lens), _omega_sum(gauge, lens)))
        parts.append({"bands": _omega_sum(gauge, lens), "complement": 0.0, "fattening": 0.0})
        return CoverCost(levels, gauge, parts)
    nlev = max(1, len(chain) - 2)
    for n in range(nlev):
        pn, pn1 = chain[n], chain[n + 1]
        if pn.q > FAST_Q:
            raise ValueError(f"J_delta needs q_n <= {FAST_Q}")
        # log form: q_{n+2} may exceed the float range
        ln_gap = -math.log(pn1.q) - (math.log(chain[n + 2].q) if n + 2 < len(chain) else math.log(pn1.q))
        gap_ub = math.exp(ln_gap)
        delta = delta_rule(pn.q)
        J = j_delta_set(pn, lam, delta)
        Jset = BandSet(tuple(J.intervals))
        S1 = spectrum(pn1, lam)
        inside = set_ops(S1, Jset, "and")
        band_lens = [float(u - l) for l, u in inside.bands]
        comp_lens = [float(u - l) for l, u in J.complement.bands]
        w = 12.0 * math.sqrt(2.0) * math.sqrt(gap_ub)
        fat = 2 * pn1.q * gauge(w)
        c_b, c_c = _omega_sum(gauge, band_lens), _omega_sum(gauge, comp_lens)
        count = len(band_lens) + len(comp_lens) + 2 * pn1.q
        levels.append((w, count, c_b + c_c + fat))
        parts.append({"q_n": pn.q, "q_n1": pn1.q, "delta": delta, "bands": c_b, "complement": c_c,
                      "fattening": fat})
    return CoverCost(levels, gauge, parts)


# ---------------------------------------------------------------- continuity and homogeneity


def modulus_of_continuity(samples, gauge: GaugeFn) -> float:
    """max over sample pairs with 0 < |dE| <= 1 of |df| / omega(|dE|)."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or len(arr) < 2:
        raise ValueError("need at least 2 (E, f) samples")
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    E, f = arr[:, 0], arr[:, 1]
    best = 0.0
    for i in range(len(E) - 1):
        hi = np.searchsorted(E, E[i] + 1.0, side="right")
        dE = E[i + 1:hi] - E[i]
        ok = dE > 0
        if not ok.any():
            continue
        df = np.abs(f[i + 1:hi][ok] - f[i])
        w = np.array([gauge(x) for x in dE[ok]])
        best = max(best, float(np.max(df / w)))
    return best


def _cover_len(E: np.ndarray, eps: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """|(E - eps, E + eps) cap K| for merged sorted bands [lo, hi]."""
    a = E[:, None] - eps
    b = E[:, None] + eps
    return np.clip(np.minimum(b, hi[None, :]) - np.maximum(a, lo[None, :]), 0.0, None).sum(axis=1)


def homogeneity_profile(K: BandSet, eps_list, gauge: GaugeFn | None = None) -> list:
    """[(eps, min over E in K of |(E-eps, E+eps) cap K| / eps)], or omega(...)/eps with a gauge."""
    if not K.bands:
        raise ValueError("empty set")
    m = []
    for l, u in sorted((float(l), float(u)) for l, u in K.bands):
        if m and l <= m[-1][1]:
            m[-1][1] = max(m[-1][1], u)
        else:
            m.append([l, u])
    lo = np.array([x[0] for x in m])
    hi = np.array([x[1] for x in m])
    ends = np.concatenate([lo, hi])
    out = []
    for eps in eps_list:
        eps = float(eps)
        if eps <= 0:
            raise ValueError("eps must be positive")
        # the cover length is piecewise linear in E with kinks where E +- eps meets an endpoint
        c = np.concatenate([ends, ends - eps, ends + eps])
        inK = np.any((c[:, None] >= lo[None, :]) & (c[:, None] <= hi[None, :]), axis=1)
        c = np.unique(c[inK])
        L = _cover_len(c, eps, lo, hi)
        vals = L / eps if gauge is None else np.array([gauge(x) for x in L]) / eps
        out.append((eps, float(vals.min())))
    return out


# ---------------------------------------------------------------- Parreau-Widom


def _log_spr(D: np.ndarray) -> np.ndarray:
    """ln of the spectral radius of a unimodular matrix with trace D."""
    h = np.maximum(np.abs(D) / 2.0, 1.0)
    return np.log(h + np.sqrt(h * h - 1.0))


def _gamma_bar(Es, pq, lam, nodes) -> np.ndarray:
    """Phase-averaged gamma through the trace Delta(E) - 2 lam^q cos(phi), phi uniform on [0, pi].

    Gauss-Legendre between the kinks |D| = 2 after the smoothstep substitution,
    which removes the square-root behaviour there.
    """
    q = pq.q
    amp = 2.0 * lam ** q
    r = _kernels.scan(np.asarray(Es, dtype=float), _fast_potential(pq, lam))
    x, g = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (x + 1.0)
    sm, w = u * u * (3.0 - 2.0 * u), 3.0 * u * (1.0 - u) * g  # phi = a + (b - a) s(u)
    out = np.empty(len(r))
    for i, (tr, _, ls, _) in enumerate(r):
        with np.errstate(divide="ignore"):
            ld = ls + math.log(abs(tr)) if tr != 0.0 else -math.inf  # ln|Delta|
        if ld > math.log(1e8 * max(amp, 1.0)):
            # |Delta| dwarfs the phase term: ln spr = ln|Delta| + O(1/Delta^2 + amp/|Delta|)
            out[i] = ld / q
            continue
        tr = math.copysign(math.exp(ld), tr) if tr != 0.0 else 0.0
        if amp == 0.0:
            out[i] = float(_log_spr(np.array([tr]))[0]) / q
            continue
        kinks = [math.acos(c) for c in ((tr - 2.0) / amp, (tr + 2.0) / amp) if abs(c) < 1]
        pts = [0.0, *sorted(kinks), math.pi]
        tot = 0.0
        for a, b in zip(pts, pts[1:]):
            phi = a + (b - a) * sm
            tot += (b - a) * float(w @ _log_spr(tr - amp * np.cos(phi)))
        out[i] = tot / math.pi / q
    return out


def pw_sum(pq: RationalFreq, lam, prescan: int = 64, nodes: int | None = None,
           tol: float = 1e-10) -> dict:
    """Sum over the gaps of S(p/q, lam) of max of the phase-averaged gamma on the gap."""
    lam = float(lam)
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    M = nodes or 64
    S = spectrum(pq, lam)
    per_gap = []
    for a, b in gaps(S):
        a, b = float(a), float(b)
        xs = a + (b - a) * (np.arange(prescan) + 0.5) / prescan
        gs = _gamma_bar(xs, pq, lam, M)
        k = int(np.argmax(gs))
        lo = xs[k - 1] if k > 0 else a
        hi = xs[k + 1] if k < prescan - 1 else b
        f = lambda x: float(_gamma_bar([x], pq, lam, M)[0])
        gr = (math.sqrt(5.0) - 1.0) / 2.0
        x1, x2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
        f1, f2 = f(x1), f(x2)
        while hi - lo > tol * max(1.0, abs(lo)):
            if f1 < f2:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + gr * (hi - lo)
                f2 = f(x2)
            else:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - gr * (hi - lo)
                f1 = f(x1)
        xm, fm = (x1, f1) if f1 >= f2 else (x2, f2)
        if gs[k] > fm:
            xm, fm = float(xs[k]), float(gs[k])
        per_gap.append({"gap": (a, b), "argmax": xm, "max": fm})
    return {"sum": float(sum(g["max"] for g in per_gap)), "per_gap": per_gap, "nodes": M}


# ---------------------------------------------------------------- Frostman


@dataclass
class FrostmanMeasure:
    atoms: np.ndarray  # (n, 2): cell centre, mass
    C: float  # certified for intervals of length >= resolution
    resolution: float
    total: float
    sampled_ratio: float = 0.0

    def mass(self, a: float, b: float) -> float:
        x = self.atoms[:, 0]
        i, k = np.searchsorted(x, a, side="right"), np.searchsorted(x, b, side="left")
        return float(self.atoms[i:k, 1].sum())

    def to_json(self) -> str:
        return json.dumps({"atoms": self.atoms.tolist(), "C": self.C, "resolution": self.resolution,
                           "total": self.total, "sampled_ratio": self.sampled_ratio}, sort_keys=True)


def frostman_measure(K: BandSet, gauge: GaugeFn, scales: int | None = None, samples: int = 2000,
                     seed: int = 0, max_cells: int = 1 << 22) -> FrostmanMeasure:
    """Dyadic capping of Lebesgue measure on K: every dyadic cell Q ends with mass <= omega(|Q|).

    An interval of length l with h_{k+1} < l <= h_k meets at most two level-k cells,
    so mu(a, b) <= 2 omega(2 l); C = 2 max omega(2l)/omega(l) over the resolved scales.
    """
    if not K.bands:
        raise ValueError("empty set")
    lo = np.array([float(l) for l, _ in K.bands])
    hi = np.array([float(u) for _, u in K.bands])
    a0, b0 = lo.min(), hi.max()
    diam = b0 - a0
    lens = hi - lo
    minlen = lens[lens > 0].min() if (lens > 0).any() else 0.0
    if diam <= 0 or minlen <= 0:
        raise ValueError("K needs positive length")
    H = 2.0 ** math.ceil(math.log2(diam))
    n = scales if scales is not None else max(1, math.ceil(math.log2(H / minlen)))
    h = H / 2 ** n
    while (lens.sum() / h + 2 * len(lens)) > max_cells:
        n -= 1
        h *= 2
    x0 = 0.5 * (a0 + b0) - 0.5 * H
    # Lebesgue mass of K in each finest cell
    mass: dict[int, float] = {}
    for l, u in zip(lo, hi):
        i0, i1 = int(math.floor((l - x0) / h)), int(math.floor((u - x0) / h))
        i1 = min(i1, 2 ** n - 1)
        idx = np.arange(i0, i1 + 1)
        ov = np.minimum(u, x0 + (idx + 1) * h) - np.maximum(l, x0 + idx * h)
        for i, m in zip(idx.tolist(), ov.tolist()):
            if m > 0:
                mass[i] = mass.get(i, 0.0) + m
    cells = np.array(sorted(mass))
    m = np.array([mass[i] for i in cells])
    for k in range(n, -1, -1):
        cap = gauge(H / 2 ** k)
        if not cap > 0:
            raise ValueError("degenerate measure: gauge vanishes on a relevant scale")
        parent = cells >> (n - k)
        uniq, inv = np.unique(parent, return_inverse=True)
        sums = np.bincount(inv, weights=m)
        fac = np.minimum(1.0, cap / np.where(sums > 0, sums, 1.0))
        m = m * fac[inv]
    total = float(m.sum())
    if not total > 0:
        raise ValueError("degenerate measure: zero total mass")
    atoms = np.column_stack([x0 + (cells + 0.5) * h, m])
    ls = H / 2.0 ** np.arange(n + 1)
    C = 2.0 * max(gauge(2 * l) / gauge(l) for l in ls)
    mu = FrostmanMeasure(atoms, float(C), h, total)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        L = math.exp(rng.uniform(math.log(h), math.log(diam)))
        a = rng.uniform(a0 - L, b0)
        worst = max(worst, mu.mass(a, a + L) / gauge(L))
    mu.sampled_ratio = worst
    return mu
