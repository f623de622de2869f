"""Integrated density of states, Thouless formula, Aubry duality and IDS continuity checks.

Periodic IDS uses the Bloch-momentum form: on band j of the operator at phase
theta, D_theta(E) = 2 cos k with k in [0, pi] and

    N_theta(E) = (j - 1)/q + k/(pi q),

k oriented so that N increases.  Since D_theta = Delta - 2 lam^q cos(q theta),
the monotone piece of Delta containing E (and hence j) does not depend on
theta, which makes the theta-average cheap.
"""

from __future__ import annotations

import functools
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cocycle import lyapunov_periodic_batch, potential
from .frequency import RationalFreq
from .spectrum import (BandSet, FAST_Q, discriminant_eval, hausdorff_distance,
                       level_set)


def _nodes(q: int) -> int:
    return max(64, 8 * q)


@dataclass
class _Pieces:
    """Upper ends of the S-bands and the discriminant evaluator for one (p/q, lam)."""

    pq: RationalFreq
    lam: float
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def build(cls, pq: RationalFreq, lam) -> "_Pieces":
        S = level_set(pq, lam, "S")
        return cls(pq, float(lam), S.lower, S.upper)

    def locate(self, E: float) -> tuple[int, bool]:
        """(j, inside): E lies in S-band j (1-based) or, if not inside, in the gap after band j."""
        j = int(np.searchsorted(self.lower, E, side="right"))
        if j == 0:
            return 0, False
        return j, bool(E <= self.upper[j - 1])


def _branch(q: int, j: int, D) -> np.ndarray:
    """arccos(s_j D/2)/pi clamped, s_j = (-1)^(q-j+1): the oriented momentum fraction on band j."""
    s = -1.0 if (q - j) % 2 == 0 else 1.0
    x = np.clip(s * np.asarray(D, dtype=float) / 2.0, -1.0, 1.0)
    return np.arccos(x) / math.pi


_PIECE_CACHE: dict = {}


def _pieces(pq: RationalFreq, lam) -> _Pieces:
    key = (pq.p, pq.q, float(lam))
    if key not in _PIECE_CACHE:
        if len(_PIECE_CACHE) > 256:
            _PIECE_CACHE.clear()
        _PIECE_CACHE[key] = _Pieces.build(pq, lam)
    return _PIECE_CACHE[key]


def _delta(E: float, pq: RationalFreq, lam) -> float:
    if pq.q <= FAST_Q:
        return discriminant_eval(float(E), pq, lam)
    v = potential(pq, float(lam), math.pi / (2 * pq.q), pq.q)
    r = _kernels.scan(np.array([float(E)]), v)[0]
    return float(r[0] * math.exp(r[2])) if r[2] < 700 else math.copysign(math.inf, r[0])


def ids_periodic(E: float, pq: RationalFreq, lam, theta: float) -> float:
    """N_{p/q,lam,theta}(E) from the Bloch-momentum branch."""
    P = _pieces(pq, lam)
    j, inside = P.locate(float(E))
    q = pq.q
    if not inside:
        return j / q
    D = _delta(E, pq, lam) - 2.0 * float(lam) ** q * math.cos(q * theta)
    return (j - 1) / q + float(_branch(q, j, D)) / q


def ids_averaged(E: float, pq: RationalFreq, lam, nodes: int | None = None,
                 method: str = "trapezoid") -> float:
    """theta-averaged IDS.

    "trapezoid": M = max(64, 8q) equispaced phases.  "exact": the average
    reduces to (1/pi) int_0^pi over phi = q theta, done by adaptive quadrature
    with the kinks at |D| = 2 as breakpoints.
    """
    P = _pieces(pq, lam)
    j, inside = P.locate(float(E))
    q = pq.q
    if not inside:
        return j / q
    dl = _delta(E, pq, lam)
    amp = 2.0 * float(lam) ** q
    if method == "trapezoid":
        M = nodes or _nodes(q)
        th = 2.0 * math.pi * np.arange(M) / M
        vals = _branch(q, j, dl - amp * np.cos(q * th))
        return (j - 1) / q + float(np.mean(vals)) / q
    if method == "exact":
        from scipy.integrate import quad

        brk = []
        for b in (dl - 2.0, dl + 2.0):
            if amp > 0 and abs(b / amp) < 1:
                brk.append(math.acos(b / amp))
        f = lambda phi: float(_branch(q, j, dl - amp * math.cos(phi)))
        val, _ = quad(f, 0.0, math.pi, points=sorted(brk) or None, epsabs=1e-13, epsrel=1e-12,
                      limit=200)
        return (j - 1) / q + val / math.pi / q
    raise ValueError(f"unknown method {method!r}")


def dos_of_interval(I: tuple, pq: RationalFreq, lam, **kw) -> float:
    """rho(E1, E2] = N(E2) - N(E1) for the theta-averaged IDS."""
    a, b = float(I[0]), float(I[1])
    if b < a:
        raise ValueError("interval with upper < lower")
    return ids_averaged(b, pq, lam, **kw) - ids_averaged(a, pq, lam, **kw)


def ids_finite_box(E: float, freq, lam, theta: float, L: int) -> float:
    """(1/L) #{eigenvalues <= E} of the box on sites 0..L-1, by Sturm counting."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if L > 50_000_000:
        raise MemoryError("box too large for the memory budget")
    diag = potential(freq, float(lam), theta, L, start=0)
    return _kernels.sturm_count(diag, float(E)) / L


@dataclass(frozen=True)
class DOSTable:
    energies: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def build(cls, pq: RationalFreq, lam, energies, averaged: bool = True, theta: float = 0.0):
        Es = np.sort(np.asarray(energies, dtype=float))
        if averaged:
            vals = np.array([ids_averaged(E, pq, lam) for E in Es])
        else:
            vals = np.array([ids_periodic(E, pq, lam, theta) for E in Es])
        meta = {"p": pq.p, "q": pq.q, "lam": str(lam), "averaged": averaged,
                "nodes": _nodes(pq.q) if averaged else 1}
        if not averaged:
            meta["theta"] = repr(float(theta))
        return cls(Es, vals, meta)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("E,N\n")
        for E, N in zip(self.energies, self.values):
            buf.write(f"{E!r},{N!r}\n")
        return buf.getvalue()


# ---------------------------------------------------------------- Thouless formula


@functools.lru_cache(maxsize=None)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _bloch_batch(v: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """Sorted eigenvalues of the Bloch matrices H(k) for each k; shape (len(ks), q)."""
    q = len(v)
    H = np.zeros((len(ks), q, q), dtype=complex)
    H[:, np.arange(q), np.arange(q)] = v
    if q == 1:
        H[:, 0, 0] += 2.0 * np.cos(ks)
    else:
        i = np.arange(q - 1)
        H[:, i, i + 1] = 1.0
        H[:, i + 1, i] = 1.0
        H[:, 0, q - 1] += np.exp(-1j * ks)
        H[:, q - 1, 0] += np.exp(1j * ks)
    return np.linalg.eigvalsh(H)


def _log_cos_integral(c: complex) -> float:
    """int_0^pi log|cos k - c| dk = pi (ln|c + sqrt(c^2 - 1)| - ln 2), larger-modulus branch."""
    r = np.sqrt(complex(c) ** 2 - 1.0)
    w = max(abs(c + r), abs(c - r))
    return math.pi * (math.log(w) - math.log(2.0))


def _log_potential_theta(E: complex, pq: RationalFreq, lam: float, theta: float, rtol: float = 1e-10,
                         max_nodes: int = 2048):
    """int log|E - E'| dN_theta(E') in the Bloch momentum k, where dN = dk/(pi q) on every band.

    Band j is the curve k -> x_j(k) on [0, pi].  From each band integrand we divide
    out cos k - c_j, whose log-integral is known in closed form: c_j = D_theta(E)/2
    for the band that contains a real E (same zero k*) and for every band when E is
    complex or in a gap; otherwise c_j comes from the chord x ~ A_j + B_j cos k.
    What is left is smooth and goes to Gauss-Legendre.
    """
    q = pq.q
    v = potential(pq, lam, theta, q)
    x0 = _bloch_batch(v, np.array([0.0]))[0]
    xp = _bloch_batch(v, np.array([math.pi]))[0]
    A, B = 0.5 * (x0 + xp), 0.5 * (x0 - xp)
    a00, _, _, a11, e = _kernels.transfer_scaled(complex(E), v)
    c = complex((a00 + a11) * 2.0 ** e) / 2.0
    if E.imag == 0.0:
        c = complex(c.real, 0.0)
    lo, hi = np.minimum(x0, xp), np.maximum(x0, xp)
    inside = (E.imag == 0.0) & (lo <= E.real) & (E.real <= hi)
    use_exact = inside if inside.any() else np.ones(q, bool)
    cj = np.where(use_exact, c, (E - A) / np.where(B == 0, 1.0, B))
    scale = np.where(use_exact, 1.0, B)
    flat = (~use_exact) & (B == 0)
    exact = 0.0
    for j in range(q):
        if flat[j]:
            exact += math.pi * math.log(abs(E - x0[j]))
        else:
            exact += math.pi * math.log(abs(scale[j])) + _log_cos_integral(cj[j])
    prev = None
    n = 16
    while True:
        t, w = _gl(n)
        ks = 0.5 * math.pi * (t + 1.0)
        w = 0.5 * math.pi * w
        X = _bloch_batch(v, ks)
        den = scale[None, :] * (np.cos(ks)[:, None] - cj[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(np.abs((E - X) / den))
        lr[:, flat] = 0.0
        lr = np.where(np.isfinite(lr), lr, 0.0)
        total = (float(w @ lr.sum(axis=1)) + exact) / (math.pi * q)
        if prev is not None and (abs(total - prev) <= rtol * max(1.0, abs(total)) or n >= max_nodes):
            return total
        prev = total
        n *= 2


def thouless_residual(pq: RationalFreq, lam, E_grid, nodes: int | None = None,
                      exclusion: float = 1e-6) -> dict:
    """max over the grid of |gamma_bar(E) - int log|E - E'| dN_bar(E')|.

    Both sides are averaged over the same M phase nodes.  Real points closer
    than `exclusion` to a band edge of S are flagged and skipped.
    """
    lam = float(lam)
    q = pq.q
    M = nodes or _nodes(q)
    thetas = 2.0 * math.pi * np.arange(M) / M
    S = level_set(pq, lam, "S")
    edges = np.concatenate([S.lower, S.upper])
    pts, flagged = [], []
    for E in E_grid:
        E = complex(E)
        if E.imag == 0.0 and np.min(np.abs(edges - E.real)) < exclusion:
            flagged.append(E)
        else:
            pts.append(E)
    gam = lyapunov_periodic_batch(np.array(pts, dtype=complex), pq, lam, thetas).mean(axis=0) if pts else []
    rows = []
    for E, g in zip(pts, gam):
        rhs = float(np.mean([_log_potential_theta(E, pq, lam, th) for th in thetas]))
        rows.append((E, float(g), rhs, abs(float(g) - rhs)))
    return {"residual": max((r[3] for r in rows), default=0.0), "points": rows,
            "flagged": flagged, "nodes": M}


# ---------------------------------------------------------------- IDS continuity and duality


def kyfan_check(pq: RationalFreq, pq2: RationalFreq, lam, r_minus: float, r_plus: float, L: int,
                tol: float = 1e-12) -> dict:
    """rho_{alpha'}[r-, r+] >= rho_alpha[r- + kappa, r+ - kappa] - 4/L, kappa = 2 pi (4 pi lam)|alpha' - alpha| L."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if not r_minus < r_plus:
        raise ValueError("need r- < r+")
    dalpha = abs(pq2.p / pq2.q - pq.p / pq.q)
    kappa = 2.0 * math.pi * (4.0 * math.pi * float(lam)) * dalpha * L
    lhs = dos_of_interval((r_minus, r_plus), pq2, lam)
    a, b = r_minus + kappa, r_plus - kappa
    inner = dos_of_interval((a, b), pq, lam) if a <= b else 0.0
    rhs = inner - 4.0 / L
    return {"kappa": kappa, "lhs": lhs, "rhs": rhs, "holds": lhs >= rhs - tol,
            "inner_empty": a > b, "lipschitz": 4.0 * math.pi * float(lam)}


def _scaled(B: BandSet, s: float) -> BandSet:
    return BandSet(tuple((l * s, u * s) for l, u in B.bands), dict(B.meta))


def duality_check(pq: RationalFreq, lam, grid: int = 25) -> dict:
    """Compare S(p/q, lam) with lam * S(p/q, kappa) for kappa = 1/lam and 2/lam."""
    lam = float(lam)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    S = level_set(pq, lam, "S")
    res = {}
    for name, kappa in (("1/lam", 1.0 / lam), ("2/lam", 2.0 / lam)):
        res[name] = float(hausdorff_distance(S, _scaled(level_set(pq, kappa, "S"), lam)))
    best = min(res, key=lambda k: (res[k], k))
    kappa = 1.0 / lam if best == "1/lam" else 2.0 / lam
    lo, hi = float(S.lower[0]) - 0.5, float(S.upper[-1]) + 0.5
    Es = np.linspace(lo, hi, grid)
    ids_res = max(abs(ids_averaged(E, pq, lam, method="exact") - ids_averaged(E / lam, pq, kappa, method="exact"))
                  for E in Es)
    return {"best_kappa": best, "residual_best": res[best], "residual_2_over_lam": res["2/lam"],
            "residuals": res, "ids_residual": float(ids_res), "p": pq.p, "q": pq.q, "lam": lam}


def lyapunov_on_spectrum(pq: RationalFreq, lam, points: int = 50, nodes: int | None = None,
                         seed: int = 0) -> np.ndarray:
    """theta-averaged gamma at interior points of the bands of S."""
    rng = np.random.default_rng(seed)
    S = level_set(pq, lam, "S")
    lo, up = S.lower, S.upper
    idx = rng.integers(0, len(lo), points)
    Es = lo[idx] + (up[idx] - lo[idx]) * rng.uniform(0.05, 0.95, points)
    M = nodes or _nodes(pq.q)
    th = 2.0 * math.pi * np.arange(M) / M
    return lyapunov_periodic_batch(Es, pq, float(lam), th).mean(axis=0)
