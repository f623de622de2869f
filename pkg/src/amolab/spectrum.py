"""Discriminant, Chambers' formula, level sets of |Delta|, band/gap geometry and interval-set arithmetic.

Two engines evaluate the period map:

* an MPFR engine (gmpy2) used for q up to FAST_Q, at
  max(128, 8q, q|log2 lam| + 64) bits, so levels 2 +- 2 lam^q stay resolved;
* a float64 engine with a log-scale accumulator (numba) for large q, where
  bands narrower than the double-precision grid are handled through their
  linearized widths 2c/|Delta'(z)| in the log domain.

Band edges of the four Chambers levels come from q x q Bloch eigenproblems
(polished by Newton in MPFR).  General levels use bracketed Newton between a
zero of Delta and the outer band edge.  An independent route locates every edge
by bisection on a monotone predicate built from Dirichlet eigenvalue counts.
"""

from __future__ import annotations

import bisect as _bisect
import functools
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from . import _kernels
from .cocycle import potential
from .frequency import RationalFreq

FAST_Q = 64


# ---------------------------------------------------------------- precision


def level_bits(q: int, lam) -> int:
    """Working precision for level-set work: max(128, 8q, q|log2 lam| + 64)."""
    lam = float(lam)
    extra = math.ceil(q * abs(math.log2(lam))) + 64 if lam > 0 else 0
    return max(128, 8 * q, extra)


def _ctx(bits: int):
    return gmpy2.context(precision=int(bits))


def _to_mp(x):
    if isinstance(x, Fraction):
        return mpfr(x.numerator) / x.denominator
    if isinstance(x, str):
        return mpfr(x)
    if isinstance(x, (int, np.integer)):
        return mpfr(int(x))
    if isinstance(x, (float, np.floating)):
        return mpfr(float(x))
    return mpfr(x)


def _lam_key(lam):
    if isinstance(lam, Fraction):
        return ("F", lam.numerator, lam.denominator)
    if isinstance(lam, str):
        return ("S", lam)
    return ("f", float(lam))


def _lam_from_key(key):
    if key[0] == "F":
        return Fraction(key[1], key[2])
    if key[0] == "S":
        return key[1]
    return key[1]


def chambers_level(lam, q: int, tau=1, bits: int | None = None):
    """2 + 2 tau lam^q at working precision (tau = 1 gives S, tau = -1 gives S_-)."""
    bits = bits or level_bits(q, float(lam))
    with _ctx(bits):
        return 2 + 2 * _to_mp(tau) * _to_mp(lam) ** q


# ---------------------------------------------------------------- MPFR engine


@functools.lru_cache(maxsize=512)
def _potential_mp(p: int, q: int, lam_key, theta_key, bits: int) -> tuple:
    """v_j = 2 lam cos(2 pi (p j mod q)/q + theta), j = 1..q, at `bits` precision.

    theta_key is ("pi", num, den) for theta = pi num/den, or ("f", float).
    """
    with _ctx(bits + 32):
        lam = _to_mp(_lam_from_key(lam_key))
        pi = gmpy2.const_pi()
        if theta_key[0] == "pi":
            theta = pi * theta_key[1] / theta_key[2]
        else:
            theta = mpfr(theta_key[1])
        v = tuple(2 * lam * gmpy2.cos(2 * pi * ((p * j) % q) / q + theta) for j in range(1, q + 1))
    with _ctx(bits):
        return tuple(+x for x in v)


def _half_key(q):
    return ("pi", 1, 2 * q)


def _scan_mp(E, v):
    """(Tr, dTr/dE, Dirichlet count) of T_q...T_1 at real E (active context)."""
    x1, y1, x2, y2 = mpfr(1), mpfr(0), mpfr(0), mpfr(1)
    dx1 = dy1 = dx2 = dy2 = mpfr(0)
    cnt = 0
    last = len(v) - 1
    s_prev = 1  # sign of psi(1); an exact zero takes the sign opposite to its predecessor
    for j, vj in enumerate(v):
        a = E - vj
        nx1 = a * x1 - y1
        nx2 = a * x2 - y2
        ndx1 = x1 + a * dx1 - dy1
        ndx2 = x2 + a * dx2 - dy2
        if j < last:
            s_new = 1 if nx1 > 0 else (-1 if nx1 < 0 else -s_prev)
            if s_new == s_prev:
                cnt += 1
            s_prev = s_new
        y1, y2, dy1, dy2 = x1, x2, dx1, dx2
        x1, x2, dx1, dx2 = nx1, nx2, ndx1, ndx2
    return x1 + y2, dx1 + dy2, cnt


def _trace_mp(E, v):
    """Tr T_q...T_1 at real or complex E (active context)."""
    x1, y1, x2, y2 = 1, 0, 0, 1
    for vj in v:
        a = E - vj
        x1, y1 = a * x1 - y1, x1
        x2, y2 = a * x2 - y2, x2
    return x1 + y2


def _E_mp(E):
    if isinstance(E, complex) or (isinstance(E, np.complexfloating)):
        E = complex(E)
        if E.imag == 0.0:
            return mpfr(E.real), False
        return gmpy2.mpc(E), True
    return _to_mp(E), False


def discriminant_eval(E, pq: RationalFreq, lam, bits: int | None = None):
    """Delta_{p/q,lam}(E) = Tr Phi_q(E, p/q, pi/(2q)); float for real E, complex otherwise."""
    bits = bits or level_bits(pq.q, float(lam))
    v = _potential_mp(pq.p, pq.q, _lam_key(lam), _half_key(pq.q), bits)
    with _ctx(bits):
        x, is_c = _E_mp(E)
        t = _trace_mp(x, v)
        if is_c:
            return complex(t)
        return float(t) if not isinstance(E, complex) else complex(float(t), 0.0)


def discriminant_mp(E, pq: RationalFreq, lam, bits: int | None = None):
    """(Delta, Delta', Dirichlet count) at real E as MPFR values."""
    bits = bits or level_bits(pq.q, float(lam))
    v = _potential_mp(pq.p, pq.q, _lam_key(lam), _half_key(pq.q), bits)
    with _ctx(bits):
        return _scan_mp(_to_mp(E), v)


def trace_theta(E, pq: RationalFreq, lam, theta, bits: int | None = None):
    """D_theta(E) = Tr Phi_q(E, p/q, theta) as an independent MPFR product."""
    bits = bits or level_bits(pq.q, float(lam))
    v = _potential_mp(pq.p, pq.q, _lam_key(lam), ("f", float(theta)), bits)
    with _ctx(bits):
        x, _ = _E_mp(E)
        return _trace_mp(x, v)


def chambers_residual(pq: RationalFreq, lam, E_grid, theta_grid, bits: int | None = None) -> float:
    """max |D_theta(E) - Delta(E) + 2 lam^q cos(q theta)| over the grid."""
    E_grid = list(E_grid)
    theta_grid = list(theta_grid)
    if not E_grid or not theta_grid:
        raise ValueError("grids must be non-empty")
    bits = bits or level_bits(pq.q, float(lam))
    q = pq.q
    vh = _potential_mp(pq.p, q, _lam_key(lam), _half_key(q), bits)
    worst = mpfr(0)
    with _ctx(bits):
        lq = _to_mp(lam) ** q
        deltas = [_trace_mp(_to_mp(E), vh) for E in E_grid]
        for th in theta_grid:
            vt = _potential_mp(pq.p, q, _lam_key(lam), ("f", float(th)), bits)
            corr = 2 * lq * gmpy2.cos(q * mpfr(float(th)))
            for E, dl in zip(E_grid, deltas):
                r = abs(_trace_mp(_to_mp(E), vt) - dl + corr)
                if r > worst:
                    worst = r
    return float(worst)


# ---------------------------------------------------------------- Bloch eigenproblems


def bloch_matrix(pq: RationalFreq, lam: float, theta: float, k: float) -> np.ndarray:
    """q x q Hermitian matrix whose eigenvalues solve D_theta(E) = 2 cos k."""
    q = pq.q
    v = potential(pq, float(lam), theta, q)
    H = np.diag(v).astype(complex)
    if q == 1:
        H[0, 0] += 2.0 * math.cos(k)
        return H
    idx = np.arange(q - 1)
    H[idx, idx + 1] = 1.0
    H[idx + 1, idx] = 1.0
    H[0, q - 1] += np.exp(-1j * k)
    H[q - 1, 0] += np.exp(1j * k)
    return H


def bloch_eigs(pq: RationalFreq, lam: float, theta: float, k: float) -> np.ndarray:
    H = bloch_matrix(pq, lam, theta, k)
    if k in (0.0, math.pi):
        return np.linalg.eigvalsh(H.real)
    return np.linalg.eigvalsh(H)


# (theta in units of pi/q, k) for Delta = +-(2 +- 2 lam^q)
_CHAMBERS_PROBLEMS = {
    ("S", +1): (0, 0.0),
    ("S", -1): (1, math.pi),
    ("minus", +1): (1, 0.0),
    ("minus", -1): (0, math.pi),
}


def _polish(x0, target, v, bits, maxit: int = 80):
    """Newton on Delta(E) = target from a float start; keeps the best iterate."""
    with _ctx(bits):
        x = _to_mp(x0)
        f, fp, _ = _scan_mp(x, v)
        f -= target
        floor = mpfr(2) ** (-(bits - 8))
        for _ in range(maxit):
            if fp == 0 or f == 0:
                break
            step = f / fp
            xn = x - step
            fn, fpn, _ = _scan_mp(xn, v)
            fn -= target
            if abs(fn) >= abs(f):
                break
            x, f, fp = xn, fn, fpn
            if abs(step) <= floor * max(1, abs(x)):
                break
        return x


def _rtsafe(v, target, lo, hi, bits, tol=None, maxit: int = 200):
    """Root of Delta - target in [lo, hi] (sign change assumed): Newton with bisection fallback."""
    with _ctx(bits):
        lo, hi = _to_mp(lo), _to_mp(hi)
        flo = _scan_mp(lo, v)[0] - target
        fhi = _scan_mp(hi, v)[0] - target
        if flo == 0:
            return lo
        if fhi == 0:
            return hi
        if (flo > 0) == (fhi > 0):
            raise ArithmeticError("bracket without sign change")
        if flo > 0:
            lo, hi = hi, lo  # keep f(lo) < 0
        tol = tol if tol is not None else mpfr(2) ** (-(bits - 8))
        x = (lo + hi) / 2
        dx_old = abs(hi - lo)
        dx = dx_old
        f, fp, _ = _scan_mp(x, v)
        f -= target
        for _ in range(maxit):
            newton_ok = fp != 0 and (((hi - x) * fp - f) * ((lo - x) * fp - f) < 0) and abs(2 * f) < abs(dx_old * fp)
            dx_old = dx
            if newton_ok:
                dx = f / fp
                x = x - dx
            else:
                dx = (hi - lo) / 2
                x = lo + dx
            if abs(dx) <= tol * max(1, abs(x)):
                return x
            f, fp, _ = _scan_mp(x, v)
            f -= target
            if f == 0:
                return x
            if f < 0:
                lo = x
            else:
                hi = x
        return x


# ---------------------------------------------------------------- band sets


@dataclass(frozen=True)
class BandSet:
    """Ordered closed intervals; touching bands are kept separate."""

    bands: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        bands = tuple((l, u) for l, u in self.bands)
        object.__setattr__(self, "bands", bands)
        for (l, u) in bands:
            if u < l:
                raise ValueError(f"band with upper < lower: [{l}, {u}]")
        for (l0, u0), (l1, u1) in zip(bands, bands[1:]):
            if l1 < u0 and not (l1 >= l0):
                raise ValueError("bands must be sorted")

    def __len__(self):
        return len(self.bands)

    def __iter__(self):
        return iter(self.bands)

    @property
    def lower(self) -> np.ndarray:
        return np.array([float(l) for l, _ in self.bands])

    @property
    def upper(self) -> np.ndarray:
        return np.array([float(u) for _, u in self.bands])

    def lengths(self) -> list:
        return [u - l for l, u in self.bands]

    def measure(self) -> float:
        return set_measure(self)

    @property
    def hull(self):
        return self.bands[0][0], max(u for _, u in self.bands)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("band_index,lower,upper\n")
        for i, (l, u) in enumerate(self.bands, 1):
            buf.write(f"{i},{_dec(l)},{_dec(u)}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        meta = {k: (v if isinstance(v, (int, float, str, bool, type(None))) else str(v))
                for k, v in self.meta.items()}
        return json.dumps({"bands": [[_dec(l), _dec(u)] for l, u in self.bands], "meta": meta},
                          sort_keys=True)


def _dec(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, int):
        return str(x)
    s = format(x, ".{}g".format(max(17, int(x.precision * 0.30103) + 1))) if hasattr(x, "precision") else str(x)
    return s


def set_measure(A: BandSet) -> float:
    """Sum of band lengths (exact in the endpoint arithmetic, rounded once)."""
    total = 0
    for l, u in A.bands:
        total = total + (u - l)
    return float(total)


def _merged(A: BandSet) -> list:
    out = []
    for l, u in A.bands:
        if out and l <= out[-1][1]:
            if u > out[-1][1]:
                out[-1][1] = u
        else:
            out.append([l, u])
    return out


def set_ops(A: BandSet, B: BandSet, op: str) -> BandSet:
    """Interval arithmetic on sorted band lists; op in {'and', 'minus', 'or'} (or the symbols)."""
    op = {"∩": "and", "∖": "minus", "\\": "minus", "∪": "or", "&": "and", "-": "minus", "|": "or"}.get(op, op)
    meta = {"op": op}
    if op == "or":
        allb = sorted(list(A.bands) + list(B.bands), key=lambda b: (b[0], b[1]))
        out = []
        for l, u in allb:
            if out and l < out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], u))
            else:
                out.append((l, u))
        return BandSet(tuple(out), meta)
    Bm = _merged(B)
    out = []
    if op == "and":
        for l, u in A.bands:
            i = max(_bisect.bisect_right([b[1] for b in Bm], l) - 1, 0) if Bm else 0
            for bl, bu in Bm[i:]:
                if bl > u:
                    break
                lo, hi = max(l, bl), min(u, bu)
                if lo <= hi and not (lo == hi and l < u and bl < bu and (hi == u or hi == l) and lo != l and lo != u):
                    if lo < hi or (l == u) or (bl == bu):
                        out.append((lo, hi))
        return BandSet(tuple(out), meta)
    if op == "minus":
        for l, u in A.bands:
            pieces = [(l, u)]
            for bl, bu in Bm:
                if bl > u:
                    break
                if bu < l:
                    continue
                new = []
                for pl, pu in pieces:
                    if bu < pl or bl > pu:
                        new.append((pl, pu))
                        continue
                    if pl < bl:
                        new.append((pl, bl))
                    if bu < pu:
                        new.append((bu, pu))
                pieces = new
            out.extend(pieces)
        return BandSet(tuple(out), meta)
    raise ValueError(f"unknown set operation {op!r}")


def gaps(A: BandSet) -> list:
    """Bounded components (a, b) of the complement; touching bands give no gap."""
    if not A.bands:
        raise ValueError("empty band set")
    m = _merged(A)
    return [(m[i][1], m[i + 1][0]) for i in range(len(m) - 1) if m[i + 1][0] > m[i][1]]


def _dist_to(x, merged, lows) -> object:
    i = _bisect.bisect_right(lows, x) - 1
    best = None
    for k in (i, i + 1):
        if 0 <= k < len(merged):
            l, u = merged[k]
            d = l - x if x < l else (x - u if x > u else 0)
            best = d if best is None or d < best else best
    return best


def _directed(A: BandSet, B: BandSet):
    mb = _merged(B)
    lows = [l for l, _ in mb]
    cands = []
    for l, u in A.bands:
        cands.extend([l, u])
        for (g0, g1) in [(mb[i][1], mb[i + 1][0]) for i in range(len(mb) - 1)]:
            mid = (g0 + g1) / 2
            if l <= mid <= u:
                cands.append(mid)
    return max(_dist_to(x, mb, lows) for x in cands)


def hausdorff_distance(A: BandSet, B: BandSet) -> float:
    """Exact Hausdorff distance between two finite unions of closed intervals."""
    if not A.bands or not B.bands:
        raise ValueError("hausdorff_distance needs non-empty sets")
    return float(max(_directed(A, B), _directed(B, A)))


# ---------------------------------------------------------------- level sets (MPFR)


def _level_value(level, pq: RationalFreq, lam, bits):
    """Return (kind, mp level) with kind in {'S', 'minus', 'tau', 'value'}."""
    q = pq.q
    if isinstance(level, str):
        if level == "S":
            return "S", chambers_level(lam, q, 1, bits)
        if level == "minus":
            return "minus", chambers_level(lam, q, -1, bits)
        raise ValueError(f"unknown named level {level!r}")
    if isinstance(level, tuple) and level[0] == "tau":
        tau = level[1]
        kind = "S" if tau == 1 else ("minus" if tau == -1 else "tau")
        return kind, chambers_level(lam, q, tau, bits)
    with _ctx(bits):
        return "value", _to_mp(level)


@functools.lru_cache(maxsize=256)
def _zeros_eig(p: int, q: int, lam_key, bits: int) -> tuple:
    pq = RationalFreq(p, q)
    lam = _lam_from_key(lam_key)
    v = _potential_mp(p, q, lam_key, _half_key(q), bits)
    ev = bloch_eigs(pq, float(lam), math.pi / (2 * q), math.pi / 2)
    return tuple(sorted(_polish(float(e), 0, v, bits) for e in ev))


@functools.lru_cache(maxsize=256)
def _chambers_edges_eig(p: int, q: int, lam_key, which: str, bits: int) -> tuple:
    pq = RationalFreq(p, q)
    lam = _lam_from_key(lam_key)
    v = _potential_mp(p, q, lam_key, _half_key(q), bits)
    c = chambers_level(lam, q, 1 if which == "S" else -1, bits)
    edges = []
    for sign in (+1, -1):
        th_units, k = _CHAMBERS_PROBLEMS[(which, sign)]
        ev = bloch_eigs(pq, float(lam), th_units * math.pi / q, k)
        with _ctx(bits):
            target = sign * c
        edges.extend(_polish(float(e), target, v, bits) for e in ev)
    edges.sort()
    bands = [[edges[2 * i], edges[2 * i + 1]] for i in range(q)]
    # a closed gap is a double root of Delta -+ c, located only to ~sqrt(precision)
    with _ctx(bits):
        thresh = mpfr(2) ** (-(bits // 2) + 8)
        for i in range(q - 1):
            if bands[i + 1][0] - bands[i][1] < thresh * max(1, abs(bands[i][1])):
                mid = (bands[i][1] + bands[i + 1][0]) / 2
                bands[i][1] = bands[i + 1][0] = mid
    return tuple((l, u) for l, u in bands)


def _limb_sign(q: int, j: int) -> int:
    """sign of Delta' at the j-th zero (1-based)."""
    return 1 if (q - j) % 2 == 0 else -1


def _zero_count(E, v, q):
    d, dp, m = _scan_mp(E, v)
    sgn = 1 if d > 0 else (-1 if d < 0 else 0)
    want = 1 if (q - m) % 2 == 0 else -1
    nz = m if sgn == want else m + 1
    return nz, d, dp


def _bisect_edge(v, q, j, c, side, B, bits, tol):
    """Edge of band j (1-based) of {|Delta| <= c} by bisection on a monotone predicate."""
    s = _limb_sign(q, j)

    def right_of(E):
        nz, d, dp = _zero_count(E, v, q)
        on_limb = ((dp > 0) if s > 0 else (dp < 0)) and abs(d) <= c
        if side == "l":
            if nz >= j:
                return True
            if nz <= j - 2:
                return False
            return on_limb
        if nz <= j - 1:
            return False
        if nz >= j + 1:
            return True
        return not on_limb

    with _ctx(bits):
        lo, hi = _to_mp(-B), _to_mp(B + 0.5)
        steps = 0
        while hi - lo > tol * max(1, abs(lo), abs(hi)) and steps < 200:
            mid = (lo + hi) / 2
            if right_of(mid):
                hi = mid
            else:
                lo = mid
            steps += 1
        return (lo + hi) / 2


def _bisect_zero(v, q, j, B, bits, tol):
    with _ctx(bits):
        lo, hi = _to_mp(-B), _to_mp(B + 0.5)
        steps = 0
        while hi - lo > tol * max(1, abs(lo), abs(hi)) and steps < 200:
            mid = (lo + hi) / 2
            if _zero_count(mid, v, q)[0] >= j:
                hi = mid
            else:
                lo = mid
            steps += 1
        return (lo + hi) / 2


def _outer_bound(lam) -> float:
    # slightly irrational offset keeps bisection midpoints off symmetry points
    return 3.0 + 2.0 * abs(float(lam)) + 1.0 / math.pi


def level_set(pq: RationalFreq, lam, level, method: str = "auto", bits: int | None = None,
              tol: float | None = None) -> BandSet:
    """{E : |Delta_{p/q,lam}(E)| <= level} as q bands (touching bands kept apart).

    level is a number, "S" (2 + 2 lam^q), "minus" (2 - 2 lam^q) or ("tau", t)
    for 2 + 2 t lam^q.  method: "auto", "eig", "newton", "bisect" or "fast".
    """
    q = pq.q
    if not float(lam) > 0:
        raise ValueError("lambda must be positive")
    if method == "fast" or (method == "auto" and q > FAST_Q):
        return fast_level_set(pq, lam, level)
    bits = bits or level_bits(q, float(lam))
    kind, c = _level_value(level, pq, lam, bits)
    cS = chambers_level(lam, q, 1, bits)
    if c < 0:
        raise ValueError("level must be >= 0")
    with _ctx(bits):
        too_high = c > cS * (1 + mpfr(2) ** (-(bits - 16)))
    if too_high:
        raise ValueError("level exceeds discriminant extrema floor 2 + 2 lam^q")
    lk = _lam_key(lam)
    v = _potential_mp(pq.p, q, lk, _half_key(q), bits)
    meta = {"p": pq.p, "q": q, "lam": str(lam), "level": str(+c) if not isinstance(level, str) else level,
            "bits": bits}

    if method == "bisect":
        B = _outer_bound(lam)
        tol = tol if tol is not None else 1e-15
        with _ctx(bits):
            tol_mp = mpfr(tol)
            bands = []
            for j in range(1, q + 1):
                if c == 0:
                    z = _bisect_zero(v, q, j, B, bits, tol_mp)
                    bands.append((z, z))
                else:
                    bands.append((_bisect_edge(v, q, j, c, "l", B, bits, tol_mp),
                                  _bisect_edge(v, q, j, c, "u", B, bits, tol_mp)))
        bands = [(l, u) if l <= u else ((l + u) / 2, (l + u) / 2) for l, u in bands]
        meta["method"] = "bisect"
        return BandSet(tuple(bands), meta)

    zeros = _zeros_eig(pq.p, q, lk, bits)
    if c == 0:
        meta["method"] = "eig"
        return BandSet(tuple((z, z) for z in zeros), meta)
    if kind in ("S", "minus") and method in ("auto", "eig"):
        meta["method"] = "eig"
        return BandSet(_chambers_edges_eig(pq.p, q, lk, kind, bits), meta)
    if method == "eig":
        raise ValueError("the eigenvalue route only covers the levels 2 +- 2 lam^q and 0")
    S = _chambers_edges_eig(pq.p, q, lk, "S", bits)
    bands = []
    with _ctx(bits):
        for j in range(1, q + 1):
            z = zeros[j - 1]
            (lS, uS) = S[j - 1]
            s = _limb_sign(q, j)
            tl, tu = -s * c, s * c
            l = lS if c >= cS else _rtsafe(v, tl, lS, z, bits)
            u = uS if c >= cS else _rtsafe(v, tu, z, uS, bits)
            bands.append((l, u))
    meta["method"] = "newton"
    return BandSet(tuple(bands), meta)


def spectrum(pq: RationalFreq, lam, **kw) -> BandSet:
    """S(p/q, lam) = {|Delta| <= 2 + 2 lam^q}."""
    return level_set(pq, lam, "S", **kw)


def spectrum_minus(pq: RationalFreq, lam, **kw) -> BandSet:
    """S_-(p/q, lam) = {|Delta| <= 2 - 2 lam^q}."""
    return level_set(pq, lam, "minus", **kw)


def zeros(pq: RationalFreq, lam, method: str = "eig", bits: int | None = None) -> tuple:
    bits = bits or level_bits(pq.q, float(lam))
    if pq.q > FAST_Q:
        return tuple(fast_bands(pq, lam, "S")["zeros"])
    if method == "bisect":
        v = _potential_mp(pq.p, pq.q, _lam_key(lam), _half_key(pq.q), bits)
        with _ctx(bits):
            return tuple(_bisect_zero(v, pq.q, j, _outer_bound(lam), bits, mpfr(1e-15))
                         for j in range(1, pq.q + 1))
    return _zeros_eig(pq.p, pq.q, _lam_key(lam), bits)


def edge_residual(B: BandSet, pq: RationalFreq, lam, level) -> float:
    """max over edges of ||Delta(E*)| - level| / (1 + level)."""
    bits = int(B.meta.get("bits") or level_bits(pq.q, float(lam)))
    _, c = _level_value(level, pq, lam, bits)
    v = _potential_mp(pq.p, pq.q, _lam_key(lam), _half_key(pq.q), bits)
    worst = 0.0
    with _ctx(bits):
        for l, u in B.bands:
            for x in (l, u):
                r = abs(abs(_scan_mp(_to_mp(x), v)[0]) - c) / (1 + c)
                worst = max(worst, float(r))
    return worst


# ---------------------------------------------------------------- J_delta, F_tau, band growth


@dataclass(frozen=True)
class JDelta:
    """J_delta = {|Delta| > 2 - 2 lam^q + delta} clipped to [min S - 1, max S + 1]."""

    intervals: tuple  # open intervals (a, b)
    complement: BandSet  # {|Delta| <= level} inside the window
    level: object
    window: tuple
    complement_measure: float


def _sublevel_with_merging(pq, lam, c, bits):
    """{|Delta| <= c} for any c >= 0; merges bands where extrema fall below c."""
    q = pq.q
    cS = chambers_level(lam, q, 1, bits)
    if c <= cS:
        return level_set(pq, lam, c, bits=bits)
    v = _potential_mp(pq.p, q, _lam_key(lam), _half_key(q), bits)
    S = level_set(pq, lam, "S", bits=bits)
    with _ctx(bits):
        # outer edges
        B = _to_mp(_outer_bound(lam) + float(c))
        s1 = _limb_sign(q, 1)
        lo = _rtsafe(v, -s1 * c, -B, S.bands[0][0], bits)
        hi = _rtsafe(v, c, S.bands[-1][1], B, bits)
        cuts = [lo]
        for j in range(1, q):
            a, b = S.bands[j - 1][1], S.bands[j][0]
            m, fm = _extremum(v, a, b, bits)
            if abs(fm) > c:
                sg = 1 if fm > 0 else -1
                cuts.append(_rtsafe(v, sg * c, a, m, bits))
                cuts.append(_rtsafe(v, sg * c, m, b, bits))
        cuts.append(hi)
    return BandSet(tuple((cuts[2 * i], cuts[2 * i + 1]) for i in range(len(cuts) // 2)),
                   {"p": pq.p, "q": q, "lam": str(lam), "level": str(c), "bits": bits, "merged": True})


def _extremum(v, a, b, bits):
    """Golden-section search for the extremum of |Delta| on [a, b]."""
    g = (mpfr(5).sqrt() - 1) / 2 if hasattr(mpfr(5), "sqrt") else (gmpy2.sqrt(mpfr(5)) - 1) / 2
    x1 = b - g * (b - a)
    x2 = a + g * (b - a)
    f1 = abs(_scan_mp(x1, v)[0])
    f2 = abs(_scan_mp(x2, v)[0])
    for _ in range(min(bits, 160)):
        if f1 > f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = abs(_scan_mp(x1, v)[0])
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = abs(_scan_mp(x2, v)[0])
    m = (a + b) / 2
    return m, _scan_mp(m, v)[0]


def j_delta_set(pq: RationalFreq, lam, delta, bits: int | None = None) -> JDelta:
    """J_delta as open intervals inside [min S - 1, max S + 1], plus |J_delta^c| in that window."""
    if not 0 < float(delta) < 1:
        raise ValueError("delta must lie in (0, 1)")
    q = pq.q
    if q > FAST_Q:
        raise ValueError("j_delta_set works on the coarse approximant (q <= %d)" % FAST_Q)
    bits = bits or level_bits(q, float(lam))
    with _ctx(bits):
        c = chambers_level(lam, q, -1, bits) + _to_mp(delta)
    K = _sublevel_with_merging(pq, lam, c, bits)
    S = level_set(pq, lam, "S", bits=bits)
    with _ctx(bits):
        w0, w1 = S.bands[0][0] - 1, S.bands[-1][1] + 1
    m = _merged(K)
    pts = [w0]
    for l, u in m:
        pts.extend([l, u])
    pts.append(w1)
    ivs = tuple((pts[2 * i], pts[2 * i + 1]) for i in range(len(pts) // 2) if pts[2 * i + 1] > pts[2 * i])
    return JDelta(ivs, K, c, (w0, w1), K.measure())


@dataclass(frozen=True)
class FTauResult:
    j0: int
    xi: int
    interval: tuple  # (a, b]: open at the S_{-tau} edge, closed at the S_tau edge
    tau: float
    certified_length_lb: float
    length: float
    side: str  # "right" if the half-band lies right of the zero


def _half_bands(pq, lam, tau, bits):
    """[(j, xi, side, zero, edge)] for the 2q half-bands I^j_{tau, xi}."""
    return _half_bands_cached(pq.p, pq.q, lam, float(tau), bits)


@functools.lru_cache(maxsize=256)
def _half_bands_cached(p, q, lam, tau, bits):
    pq = RationalFreq(p, q)
    B = level_set(pq, lam, ("tau", tau), bits=bits)
    zs = _zeros_eig(pq.p, q, _lam_key(lam), bits)
    out = []
    for j in range(1, q + 1):
        s = _limb_sign(q, j)
        l, u = B.bands[j - 1]
        z = zs[j - 1]
        # right of z_j: sign Delta = s; left: -s
        out.append((j, s, "right", z, u))
        out.append((j, -s, "left", z, l))
    return tuple(out)


def half_band_lengths(pq: RationalFreq, lam, tau, bits: int | None = None) -> dict:
    """{(j, xi): |I^j_{tau, xi}|} at working precision."""
    bits = bits or level_bits(pq.q, float(lam))
    with _ctx(bits):
        return {(j, xi): abs(e - z) for j, xi, _, z, e in _half_bands(pq, lam, tau, bits)}


def select_half_band(pq: RationalFreq, lam, bits: int | None = None) -> tuple:
    """(j0, xi) maximizing |I^j_{-1, xi}|; ties: lowest j, then xi = +1."""
    L = half_band_lengths(pq, lam, -1, bits)
    best = None
    for j in range(1, pq.q + 1):
        for xi in (1, -1):
            if best is None or L[(j, xi)] > L[best]:
                best = (j, xi)
    return best


def f_tau(pq: RationalFreq, lam, tau, bits: int | None = None) -> FTauResult:
    """F_tau = I^{j0}_{tau, xi} minus I^{j0}_{-tau, xi}, a half-open interval at the moving edge."""
    if not 0 < float(lam) < 1:
        raise ValueError("f_tau needs 0 < lambda < 1")
    if not 0 < float(tau) <= 0.5:
        raise ValueError("tau must lie in (0, 1/2]")
    q = pq.q
    bits = bits or level_bits(q, float(lam))
    j0, xi = select_half_band(pq, lam, bits)
    outer = {(j, x): (side, e) for j, x, side, _, e in _half_bands(pq, lam, tau, bits)}
    inner = {(j, x): (side, e) for j, x, side, _, e in _half_bands(pq, lam, -tau, bits)}
    side, b = outer[(j0, xi)]
    _, a = inner[(j0, xi)]
    lam_f = float(lam)
    lb = (1 - lam_f) * float(tau) * lam_f ** q / (2 * q ** 3)
    with _ctx(bits):
        length = float(abs(b - a))
    iv = (a, b) if side == "right" else (b, a)
    return FTauResult(j0, xi, iv, float(tau), lb, length, side)


def band_ratio_check(pq: RationalFreq, lam, tau, tau2, bits: int | None = None) -> dict:
    """Slacks of the half-band growth bounds between levels tau <= tau2.

    part 1: |I^j_{tau2,xi}| / |I^j_{tau,xi}| >= 1 + lam^q (tau2 - tau) / (4 q^2) for all (j, xi);
    part 2: |I^{j0}_{tau2,xi}| - |I^{j0}_{tau,xi}| >= (1 - lam) lam^q (tau2 - tau) / (4 q^3).
    """
    if not -1 <= float(tau) <= float(tau2) <= 1:
        raise ValueError("need -1 <= tau <= tau2 <= 1")
    q = pq.q
    bits = bits or level_bits(q, float(lam))
    L1 = half_band_lengths(pq, lam, tau, bits)
    L2 = half_band_lengths(pq, lam, tau2, bits) if tau2 != tau else L1
    j0, xi0 = select_half_band(pq, lam, bits)
    with _ctx(bits):
        lq = _to_mp(lam) ** q
        dt = _to_mp(tau2) - _to_mp(tau)
        bound1 = 1 + lq * dt / (4 * q * q)
        slacks = {k: L2[k] / L1[k] - bound1 for k in L1}
        worst = min(slacks, key=lambda k: slacks[k])
        bound2 = (1 - _to_mp(lam)) * lq * dt / (4 * q ** 3)
        slack2 = (L2[(j0, xi0)] - L1[(j0, xi0)]) - bound2
        # scale-free versions for reporting
        rel1 = slacks[worst] / (lq * dt / (4 * q * q)) if dt > 0 else mpfr(0)
        rel2 = slack2 / bound2 if dt > 0 else mpfr(0)
    return {
        "p": pq.p, "q": q, "lam": float(lam), "tau": float(tau), "tau2": float(tau2),
        "part1_min_slack": float(slacks[worst]), "part1_worst": list(worst),
        "part1_min_slack_rel": float(rel1),
        "part1_holds": bool(slacks[worst] >= 0),
        "j0": j0, "xi": xi0,
        "part2_slack": float(slack2), "part2_slack_rel": float(rel2),
        "part2_holds": bool(slack2 >= 0),
    }


def chebyshev_T(q: int, x) -> float:
    """T_q(x) for x >= 1 (cosh form)."""
    x = mpfr(x)
    return float(gmpy2.cosh(q * gmpy2.acosh(x))) if x >= 1 else math.cos(q * math.acos(float(x)))


def remez_check(pq: RationalFreq, lam, outer: tuple, inner: tuple, samples: int = 257,
                bits: int | None = None) -> dict:
    """sup_outer |Delta| / sup_inner |Delta| against T_q(2/t - 1), t = |inner| / |outer|."""
    a, b = outer
    c, d = inner
    if not (a <= c < d <= b):
        raise ValueError("need [c, d] inside [a, b] with c < d")
    bits = bits or level_bits(pq.q, float(lam))
    v = _potential_mp(pq.p, pq.q, _lam_key(lam), _half_key(pq.q), bits)
    with _ctx(bits):
        a, b, c, d = (_to_mp(x) for x in (a, b, c, d))

        def sup(lo, hi):
            pts = [lo + (hi - lo) * i / (samples - 1) for i in range(samples)]
            return max(abs(_scan_mp(x, v)[0]) for x in pts)

        so, si = sup(a, b), sup(c, d)
        t = (d - c) / (b - a)
        bound = gmpy2.cosh(pq.q * gmpy2.acosh(2 / t - 1))
        ratio = so / si
    return {"ratio": float(ratio), "bound": float(bound), "t": float(t),
            "holds": bool(ratio <= bound * (1 + mpfr(1e-8)))}


# ---------------------------------------------------------------- float64 engine (large q)


def _fast_potential(pq: RationalFreq, lam) -> np.ndarray:
    return potential(pq, float(lam), math.pi / (2 * pq.q), pq.q)


def _zero_counts(Es, v, q):
    out = _kernels.counts(Es, v)
    m = out[:, 1].astype(np.int64)
    sgn = np.sign(out[:, 0])
    want = np.where((q - m) % 2 == 0, 1.0, -1.0)
    return np.where(sgn == want, m, m + 1), out


def _isolate_zeros(v, q, windows, batch: int = 65536, min_width: float = 1e-13):
    """Intervals (a, b) each holding exactly one zero of Delta, covering all zeros in the windows."""
    pts = np.array(sorted({x for w in windows for x in w}), dtype=float)
    cnt, _ = _zero_counts(pts, v, q)
    cmap = dict(zip(pts.tolist(), cnt.tolist()))
    todo = [(a, b, cmap[a], cmap[b]) for a, b in windows if cmap[b] > cmap[a]]
    done = []
    while todo:
        mids = np.array([(a + b) / 2 for a, b, _, _ in todo])
        new = []
        for s in range(0, len(mids), batch):
            cm, _ = _zero_counts(mids[s:s + batch], v, q)
            for (a, b, ca, cb), m, c in zip(todo[s:s + batch], mids[s:s + batch], cm):
                for (x, y, cx, cy) in ((a, m, ca, int(c)), (m, b, int(c), cb)):
                    k = cy - cx
                    if k == 1:
                        done.append((x, y, cx))
                    elif k > 1:
                        if y - x < min_width * max(1.0, abs(x)):
                            raise ArithmeticError(f"unresolved zero cluster near {x}")
                        new.append((x, y, cx, cy))
        todo = new
    done.sort()
    return done


def _newton_zeros(v, q, brackets, iters: int = 80, rtol: float = 4e-16, final: float = 1e-9):
    """Bracketed Laguerre iteration for the single zero in each bracket (vectorized, active set).

    Delta is a real-rooted polynomial of degree q, for which Laguerre's step
    converges cubically from either side; steps leaving the bracket fall back
    to bisection.  A step shorter than `final` (relative) is applied and the
    iteration stops, the cubic rate putting the result at rounding level.
    """
    lo = np.array([a for a, _, _ in brackets])
    hi = np.array([b for _, b, _ in brackets])
    s_lo = np.sign(_kernels.counts(lo, v)[:, 0])
    x = 0.5 * (lo + hi)
    act = np.arange(len(x))
    n = float(q)
    for _ in range(iters):
        if not len(act):
            break
        xa, la, ha = x[act], lo[act], hi[act]
        r = _kernels.scan2(xa, v)
        f, f1, f2 = r[:, 0], r[:, 1], r[:, 2]
        same = np.sign(f) == s_lo[act]
        la = np.where(same, xa, la)
        ha = np.where(same, ha, xa)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            G = f1 / f
            H = G * G - f2 / f
            root = np.sqrt(np.maximum((n - 1.0) * (n * H - G * G), 0.0))
            sp_ = n / (G + root)
            sm_ = n / (G - root)
        scale = rtol * np.maximum(1.0, np.abs(xa))
        # choose the Laguerre branch that stays inside the bracket, preferring the shorter step
        cand_p = xa - sp_
        cand_m = xa - sm_
        ok_p = np.isfinite(cand_p) & (cand_p > la) & (cand_p < ha)
        ok_m = np.isfinite(cand_m) & (cand_m > la) & (cand_m < ha)
        short_p = np.abs(sp_) <= np.abs(sm_)
        step = np.where(ok_p & (short_p | ~ok_m), sp_, np.where(ok_m, sm_, np.nan))
        tiny = np.minimum(np.abs(np.nan_to_num(sp_, nan=np.inf)), np.abs(np.nan_to_num(sm_, nan=np.inf)))
        done = (tiny <= scale) | (ha - la <= scale) | (f == 0.0)
        done |= np.isfinite(step) & (np.abs(step) <= final * np.maximum(1.0, np.abs(xa)))
        xn = np.where(np.isfinite(step), xa - step, 0.5 * (la + ha))
        xn = np.where(done & ~np.isfinite(step), xa, xn)
        x[act], lo[act], hi[act] = xn, la, ha
        act = act[~done]
    r = _kernels.scan(x, v)
    return x, r


def _log_newton_edges(v, z, sgn_side, c, w0, far, iters: int = 200):
    """Edge where |Delta| = c on one side of each zero, by safeguarded Newton on ln|Delta|.

    Between z and the neighbouring zero `far`, |Delta| rises to a single extremum and
    falls again, so points with |Delta| < c on the rising branch bracket from below
    and everything else from above.  Newton steps leaving the bracket are replaced
    by bisection.
    """
    lc = math.log(c)

    def probe(x):
        r = _kernels.scan(x, v)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = r[:, 2] + np.log(np.abs(r[:, 0])) - lc
            gp = r[:, 1] / r[:, 0]
        below = (g < 0) & (sgn_side * gp > 0)
        return g, gp, below

    lo = z.copy()
    hi = np.asarray(far, dtype=float).copy()
    x = z + sgn_side * w0
    x = np.where(sgn_side * (x - hi) < 0, x, 0.5 * (z + hi))
    for _ in range(iters):
        g, gp, below = probe(x)
        lo = np.where(below, x, lo)
        hi = np.where(below, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - g / gp
        inside = np.isfinite(xn) & (sgn_side * (xn - lo) > 0) & (sgn_side * (hi - xn) > 0)
        xn = np.where(inside, xn, 0.5 * (lo + hi))
        tol = 4e-16 * np.maximum(1.0, np.abs(x))
        done = (np.abs(xn - x) <= tol) | (np.abs(hi - lo) <= tol)
        x = xn
        if done.all():
            break
    return x


def fast_bands(pq: RationalFreq, lam, level, windows=None, tiny_rtol: float = 1e-8) -> dict:
    """Zeros, log band widths and explicit edges (where resolvable) for large q.

    Bands are taken around every zero inside the windows.  A band is "tiny" when
    its linearized width w = 2c/|Delta'(z)| satisfies w q / d < tiny_rtol with d
    the distance to the neighbouring zeros; then its relative width error is
    below tiny_rtol and its edges are z -+ w/2.
    """
    q = pq.q
    lamf = float(lam)
    if isinstance(level, str):
        c = 2 + 2 * lamf ** q if level == "S" else 2 - 2 * lamf ** q
    elif isinstance(level, tuple):
        c = 2 + 2 * float(level[1]) * lamf ** q
    else:
        c = float(level)
    if not c > 0:
        raise ValueError("fast_bands needs a positive level")
    v = _fast_potential(pq, lam)
    B = _outer_bound(lam)
    if windows is None:
        windows = [(-B, B)]
    brackets = _isolate_zeros(v, q, windows)
    if not brackets:
        return {"zeros": np.zeros(0), "log_width": np.zeros(0), "lower": np.zeros(0),
                "upper": np.zeros(0), "tiny": np.zeros(0, bool), "first_index": 0, "level": c}
    z, r = _newton_zeros(v, q, brackets)
    logdp = r[:, 2] + np.log(np.abs(r[:, 1]))
    logw = math.log(2 * c) - logdp
    gapl = np.diff(z, prepend=-np.inf)
    gapr = np.diff(z, append=np.inf)
    d = np.minimum(gapl, gapr)
    d = np.where(np.isfinite(d), d, 1.0)
    with np.errstate(over="ignore"):
        tiny = (logw + math.log(q) - np.log(d)) < math.log(tiny_rtol)
    lower = z - 0.5 * np.exp(logw)
    upper = z + 0.5 * np.exp(logw)
    big = ~tiny
    if big.any():
        # sign of Delta' at each zero decides which side reaches +c or -c; |Delta| = c on both sides
        w0 = np.exp(logw[big]) * 0.25
        # neighbouring zeros bound each edge; the outer bound closes the ends
        nxt = np.append(z[1:], B)
        prv = np.insert(z[:-1], 0, -B)
        lower[big] = _log_newton_edges(v, z[big], -1.0, c, w0, prv[big])
        upper[big] = _log_newton_edges(v, z[big], +1.0, c, w0, nxt[big])
        logw = logw.copy()
        logw[big] = np.log(np.maximum(upper[big] - lower[big], 1e-300))
    return {"zeros": z, "log_width": logw, "lower": lower, "upper": upper, "tiny": tiny,
            "first_index": brackets[0][2] + 1, "level": c}


def fast_level_set(pq: RationalFreq, lam, level, windows=None) -> BandSet:
    fb = fast_bands(pq, lam, level, windows)
    bits = 192
    with _ctx(bits):
        bands = []
        for zz, lw, lo, up, t in zip(fb["zeros"], fb["log_width"], fb["lower"], fb["upper"], fb["tiny"]):
            if t:
                h = gmpy2.exp(mpfr(float(lw))) / 2
                bands.append((mpfr(float(zz)) - h, mpfr(float(zz)) + h))
            else:
                bands.append((mpfr(float(lo)), mpfr(float(up))))
    return BandSet(tuple(bands), {"p": pq.p, "q": pq.q, "lam": str(lam), "level": str(level),
                                  "method": "fast", "bits": bits,
                                  "tiny_bands": int(np.sum(fb["tiny"]))})


def log_measure(fb: dict, clip: Sequence[tuple] | None = None) -> float:
    """ln of the total width of the bands in `fb`, optionally intersected with open intervals."""
    lw = fb["log_width"]
    if clip is None:
        return float(np.logaddexp.reduce(lw)) if len(lw) else -math.inf
    terms = []
    for zz, w, lo, up, t in zip(fb["zeros"], lw, fb["lower"], fb["upper"], fb["tiny"]):
        for a, b in clip:
            if t:
                if a < zz < b:
                    half = 0.5 * math.exp(w)
                    if zz - half >= a and zz + half <= b:
                        terms.append(w)
                    else:
                        lo_c, up_c = max(zz - half, a), min(zz + half, b)
                        if up_c > lo_c:
                            terms.append(math.log(up_c - lo_c))
            else:
                lo_c, up_c = max(lo, a), min(up, b)
                if up_c > lo_c:
                    terms.append(math.log(up_c - lo_c))
    return float(np.logaddexp.reduce(terms)) if terms else -math.inf
