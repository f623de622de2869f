"""Restricted Green functions, geometric resolvent identities, Combes-Thomas profiles, log-kernel integrals.

Sign convention: with unit hopping and G = (H - z)^{-1}, cutting the bond
(c, c+1) gives G = G0 - G0 Gamma G, so every cut contributes a factor -1:

    G^{[a,b]}(m, n) = -G^{[a,c]}(m, c) G^{[a,b]}(c+1, n)          (m <= c < n)
    G^{[a,b]}(m, n) = -G^{[a,b]}(m, c) G^{[c+1,b]}(c+1, n)        (m <= c < n)
    G^{[a,b]}(m, n) - G^{[a,c]}(m, n) = -G^{[a,b]}(m, c+1) G^{[a,c]}(c, n)   (m, n <= c)

The checks report residuals for these signed forms and for the unsigned ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal, solve_banded

from .cocycle import potential
from .frequency import RationalFreq

NEAR_SINGULAR = 1e-14


class NearSingularError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BoxOperator:
    """H restricted to [a, b]; b = inf needs a potential that is `period`-periodic."""

    a: int
    b: float
    potential: Callable[[np.ndarray], np.ndarray] | np.ndarray
    period: int | None = None

    def __post_init__(self):
        if self.b < self.a:
            raise ValueError("box needs a <= b")
        if math.isinf(self.b) and not self.period:
            raise ValueError("a half-line box needs a periodic potential (period=...)")

    @property
    def finite(self) -> bool:
        return not math.isinf(self.b)

    def V(self, lo: int, hi: int) -> np.ndarray:
        """Potential on sites lo..hi."""
        idx = np.arange(lo, hi + 1)
        if callable(self.potential):
            return np.asarray(self.potential(idx), dtype=float)
        arr = np.asarray(self.potential, dtype=float)
        return arr[idx - self.a]

    def sub(self, a: int, b) -> "BoxOperator":
        """Same potential on a sub-box."""
        if a < self.a or b > self.b:
            raise ValueError("sub-box outside the box")
        pot = self.potential
        if not callable(pot):
            arr = np.asarray(pot, dtype=float)
            off = self.a
            pot = lambda n, arr=arr, off=off: arr[np.asarray(n) - off]
        return BoxOperator(a, b, pot, self.period)


def amo_box(a: int, b, freq, lam: float, theta: float) -> BoxOperator:
    """Almost Mathieu box; rational frequencies give a periodic potential usable on half-lines."""
    def pot(n, freq=freq, lam=lam, theta=theta):
        n = np.asarray(n, dtype=np.int64)
        if isinstance(freq, RationalFreq):
            ph = 2.0 * np.pi * ((freq.p * n) % freq.q) / freq.q
        else:
            ph = 2.0 * np.pi * np.mod(float(freq) * n, 1.0)
        return 2.0 * lam * np.cos(ph + theta)

    period = freq.q if isinstance(freq, RationalFreq) else None
    return BoxOperator(a, b, pot, period)


def _tail_self_energy(box: BoxOperator, N: int, z: complex) -> complex:
    """G^{[N, inf)}(N, N; z) = -psi(N)/psi(N-1) for the solution decaying through the periodic tail."""
    q = box.period
    v = box.V(N, N + q - 1)
    # transfer maps (psi(n), psi(n-1)) -> (psi(n+1), psi(n))
    M = np.eye(2, dtype=complex)
    for vn in v:
        M = np.array([[z - vn, -1.0], [1.0, 0.0]], dtype=complex) @ M
        M /= np.max(np.abs(M))
    w, U = np.linalg.eig(M)
    k = int(np.argmin(np.abs(w)))
    if abs(abs(w[0]) - abs(w[1])) <= 1e-12 * max(abs(w[0]), abs(w[1])):
        raise NearSingularError("no decaying solution: z is on the spectrum of the periodic tail")
    psiN, psiNm1 = U[0, k], U[1, k]
    return -psiN / psiNm1


def _check_regular(diag: np.ndarray, z: complex):
    if abs(z.imag) > NEAR_SINGULAR * max(1.0, abs(z)):
        return
    if len(diag) == 1:
        ev = diag
    else:
        ev = eigvalsh_tridiagonal(diag, np.ones(len(diag) - 1))
    if np.min(np.abs(ev - z.real)) <= NEAR_SINGULAR * max(1.0, abs(z)):
        raise NearSingularError(f"z = {z} is within {NEAR_SINGULAR:g} of a box eigenvalue")


def _column(box: BoxOperator, n: int, z: complex, upto: int) -> tuple[np.ndarray, int]:
    """G(n, m) for m = a .. upto (and the site offset)."""
    z = complex(z)
    if box.finite:
        hi = int(box.b)
        diag = box.V(box.a, hi).astype(complex) - z
        _check_regular(box.V(box.a, hi), z)
    else:
        q = box.period
        span = max(upto, n) - box.a + 2
        N = box.a + q * (span // q + 1)
        hi = N - 1
        diag = box.V(box.a, hi).astype(complex) - z
        diag[-1] -= _tail_self_energy(box, N, z)
    L = hi - box.a + 1
    ab = np.zeros((3, L), dtype=complex)
    ab[0, 1:] = 1.0
    ab[1] = diag
    ab[2, :-1] = 1.0
    rhs = np.zeros(L, dtype=complex)
    rhs[n - box.a] = 1.0
    return solve_banded((1, 1), ab, rhs), box.a


def green_restricted(box: BoxOperator, n: int, m: int, z: complex) -> complex:
    """G^{[a,b]}(n, m; z) = <delta_m, (H^{[a,b]} - z)^{-1} delta_n>."""
    for s in (n, m):
        if s < box.a or s > box.b:
            raise ValueError(f"site {s} outside the box [{box.a}, {box.b}]")
    col, off = _column(box, n, z, m)
    return complex(col[m - off])


def green_matrix(box: BoxOperator, z: complex) -> np.ndarray:
    """Full (H - z)^{-1} of a finite box (small boxes only)."""
    if not box.finite:
        raise ValueError("green_matrix needs a finite box")
    v = box.V(box.a, int(box.b))
    _check_regular(v, complex(z))
    H = np.diag(v.astype(complex)) + np.diag(np.ones(len(v) - 1), 1) + np.diag(np.ones(len(v) - 1), -1)
    return np.linalg.inv(H - complex(z) * np.eye(len(v)))


def _multi_cut(box: BoxOperator, i: int, j: int, cuts: Sequence[int], z: complex, sign: bool) -> complex:
    """Chain of single cuts, alternating the left-box and right-box forms."""
    s = -1.0 if sign else 1.0
    A, b = box.a, box.b
    left = i
    val = 1.0 + 0.0j
    for k, c in enumerate(cuts):
        if k % 2 == 0:
            # G^{[A,b]}(left, j) = s G^{[A,c]}(left, c) G^{[A,b]}(c+1, j)
            val *= s * green_restricted(box.sub(A, c), left, c, z)
        else:
            # G^{[A,b]}(left, j) = s G^{[A,b]}(left, c) G^{[c+1,b]}(c+1, j)
            val *= s * green_restricted(box.sub(A, b), left, c, z)
            A = c + 1
        left = c + 1
    return val * green_restricted(box.sub(A, b), left, j, z)


def green_identities_check(box: BoxOperator, cuts: Sequence[int], z: complex, samples: int = 8,
                           seed: int = 0) -> dict:
    """Residuals of the single-cut identities (first cut) and of the multi-cut chain.

    residual_* use the signed forms; literal_* the unsigned ones (with
    G^{[c+1,b]}(c+1, m) read as 0 when m lies outside that box).
    """
    cuts = sorted(int(c) for c in cuts)
    if not cuts:
        raise ValueError("need at least one cut")
    top = box.b if box.finite else box.a + 10 * (box.period or 1) + cuts[-1] - box.a
    if cuts[0] < box.a or cuts[-1] >= top or len(set(cuts)) != len(cuts):
        raise ValueError("cut points must lie strictly inside the box")
    top = int(top)
    rng = np.random.default_rng(seed)
    c = cuts[0]
    z = complex(z)
    res = {"left_cut": 0.0, "right_cut": 0.0, "resolvent_diff": 0.0, "multi": 0.0}
    lit = {"left_cut": 0.0, "right_cut": 0.0, "resolvent_diff": 0.0, "multi": 0.0}
    scale = 0.0
    left = box.sub(box.a, c)
    right_b = box.sub(c + 1, box.b)
    for _ in range(samples):
        m = int(rng.integers(box.a, c + 1))
        n = int(rng.integers(c + 1, top + 1))
        g = green_restricted(box, m, n, z)
        t1 = green_restricted(left, m, c, z) * green_restricted(box, c + 1, n, z)
        res["left_cut"] = max(res["left_cut"], abs(g + t1))
        lit["left_cut"] = max(lit["left_cut"], abs(g - t1))
        t2 = green_restricted(box, m, c, z) * green_restricted(right_b, c + 1, n, z)
        res["right_cut"] = max(res["right_cut"], abs(g + t2))
        lit["right_cut"] = max(lit["right_cut"], abs(green_restricted(box, n, m, z)))
        m2 = int(rng.integers(box.a, c + 1))
        d = green_restricted(box, m, m2, z) - green_restricted(left, m, m2, z)
        t3 = green_restricted(box, m, c + 1, z) * green_restricted(left, c, m2, z)
        res["resolvent_diff"] = max(res["resolvent_diff"], abs(d + t3))
        lit["resolvent_diff"] = max(lit["resolvent_diff"], abs(d - t3))
        scale = max(scale, abs(g), abs(d))
        if len(cuts) > 1:
            i = int(rng.integers(box.a, cuts[0] + 1))
            j = int(rng.integers(cuts[-1] + 1, top + 1))
            gij = green_restricted(box, i, j, z)
            res["multi"] = max(res["multi"], abs(gij - _multi_cut(box, i, j, cuts, z, True)))
            lit["multi"] = max(lit["multi"], abs(gij - _multi_cut(box, i, j, cuts, z, False)))
    return {"max_residual": max(res.values()), "residual_signed": res, "residual_literal": lit,
            "scale": scale, "cuts": cuts, "z": [z.real, z.imag], "samples": samples}


def combes_thomas_profile(box: BoxOperator, z: complex, n0: int, k_range: int) -> dict:
    """Least-squares decay rate of ln|G(n0, n0 + k)|, with kappa = min(1, dist(z, spectrum of the box))."""
    if k_range < 10:
        raise ValueError("range must be at least 10 sites")
    z = complex(z)
    top = n0 + k_range
    if box.finite and top > box.b:
        raise ValueError("range runs past the box")
    col, off = _column(box, n0, z, top)
    g = np.abs(col[n0 - off:top - off + 1])
    ks = np.arange(len(g))
    usable = g > 1e-290
    warning = None
    if not usable.all():
        cut = int(np.argmin(usable))
        warning = f"G underflows after {cut} sites; fit truncated"
        ks, g = ks[:cut], g[:cut]
    slope, _ = np.polyfit(ks, np.log(g), 1)
    if box.finite:
        ev = eigvalsh_tridiagonal(box.V(box.a, int(box.b)), np.ones(int(box.b) - box.a))
        dist = float(np.min(np.abs(ev - z)))
    else:
        dist = float("nan")
    kappa = min(1.0, dist)
    rate = -float(slope)
    return {"rate": rate, "kappa": kappa, "ratio": rate / kappa if kappa > 0 else float("inf"),
            "profile": list(zip(ks.tolist(), np.log(g).tolist())), "warning": warning}


def _F(t, eps):
    # antiderivative of log(1 + eps^2/t^2); the small-|t| branch avoids overflow in (eps/t)^2
    t = np.asarray(t, dtype=float)
    at = np.where(t == 0, 1.0, np.abs(t))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        big = t * np.log1p((eps / at) ** 2)
        small = t * (np.log(t * t + eps * eps) - 2.0 * np.log(at))
    a = np.where(t == 0, 0.0, np.where(at > eps, big, small))
    return a + 2.0 * eps * np.arctan(t / eps)


def log_kernel_integral(mu, E_prime: float, eps: float) -> float:
    """int log(1 + eps^2/(E - E')^2) dmu(E).

    mu is a list of (x, w) atoms, or a sequence of (a, b, density) pieces, or a
    BandSet (density 1 on each band).
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    pieces, atoms = _as_measure(mu)
    total = 0.0
    for a, b, dens in pieces:
        total += dens * float(_F(np.float64(b - E_prime), eps) - _F(np.float64(a - E_prime), eps))
    for x, w in atoms:
        d = x - E_prime
        total += w * (math.inf if d == 0 else math.log1p(eps * eps / (d * d)))
    return total


def _as_measure(mu):
    if hasattr(mu, "bands"):
        return [(float(l), float(u), 1.0) for l, u in mu.bands], []
    mu = list(mu)
    if mu and len(mu[0]) == 3:
        return [(float(a), float(b), float(d)) for a, b, d in mu], []
    return [], [(float(x), float(w)) for x, w in mu]


def log_kernel_bound_check(mu, eps: float, w3_value: float, C: float, E_grid) -> dict:
    """sup over E' of the log-kernel integral against C (W3 omega)(eps)."""
    vals = [log_kernel_integral(mu, float(E), eps) for E in E_grid]
    sup = max(vals)
    return {"sup": sup, "bound": C * w3_value, "holds": sup <= C * w3_value}


def chebyshev_step_check(bands, window: tuple, eps: float, xi: float, grid: int = 2001) -> dict:
    """|{E in window : gamma(E + i eps) - gamma(E) >= xi}| against (rho total / 2 xi) sup_E' int log-kernel dE.

    gamma is the log potential of rho = uniform mass 1/q per band (q = #bands).
    """
    pieces = [(float(l), float(u)) for l, u in bands]
    q = len(pieces)
    dens = [(a, b, 1.0 / (q * (b - a))) for a, b in pieces if b > a]
    a, b = window
    Es = np.linspace(a, b, grid)
    diff = np.array([0.5 * log_kernel_integral(dens, E, eps) for E in Es])
    big = diff >= xi
    meas = float(np.sum(big)) * (b - a) / (grid - 1)
    leb = [(a, b, 1.0)]
    cand = np.concatenate([Es, [p for pc in pieces for p in pc]])
    sup = max(log_kernel_integral(leb, float(E), eps) for E in cand)
    rho_total = sum(d * (y - x) for x, y, d in dens)
    bound = rho_total * sup / (2.0 * xi)
    return {"measure": meas, "bound": bound, "holds": meas <= bound + 1e-6, "grid": grid}


def profile_to_csv(profile: dict, path) -> None:
    """Write (k, ln|G|) rows."""
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "ln_abs_G"])
        for k, lg in profile["profile"]:
            w.writerow([k, repr(lg)])
