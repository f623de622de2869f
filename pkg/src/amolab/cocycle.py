"""Transfer matrices, scaled products, periodic Lyapunov exponents and the avalanche principle."""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _kernels
from .frequency import RationalFreq


def potential(freq, lam: float, theta: float, n: int, start: int = 1) -> np.ndarray:
    """v_j = 2 lam cos(2 pi alpha j + theta) for j = start .. start+n-1.

    Rational frequencies reduce p*j mod q in integers so the phase is exact.
    """
    j = np.arange(start, start + n, dtype=np.int64)
    if isinstance(freq, RationalFreq):
        phase = 2.0 * np.pi * ((freq.p * j) % freq.q) / freq.q
    else:
        a = float(freq) % 1.0
        phase = 2.0 * np.pi * np.mod(a * j, 1.0)
    return 2.0 * lam * np.cos(phase + theta)


@dataclass(frozen=True)
class ScaledMat2:
    """Product matrix stored as m * exp(log_scale) with max |m_ij| in [1/2, 2]."""

    m: np.ndarray
    log_scale: float

    def full(self) -> np.ndarray:
        return self.m * math.exp(self.log_scale)

    @property
    def log_norm(self) -> float:
        return self.log_scale + math.log(opnorm(self.m))

    @property
    def det(self) -> complex:
        """det of the represented product, e^{2 log_scale} det(m)."""
        d = self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0]
        return complex(d * math.exp(2.0 * self.log_scale)) if self.log_scale < 300 else complex("nan")

    def det_error(self) -> float:
        """|det - 1| relative to the condition estimate max(1, |Phi|^2).

        Equals |det - 1| while the product stays O(1); for exponentially
        large products the absolute error is not resolvable in floating point.
        """
        d = complex(self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0])
        inv = math.exp(-2.0 * self.log_scale)
        return abs(d - inv) / max(inv, opnorm(self.m) ** 2)

    @property
    def trace(self) -> tuple[complex, float]:
        """(mantissa, log-scale) of the trace."""
        return complex(self.m[0, 0] + self.m[1, 1]), self.log_scale


def opnorm(m) -> float:
    """Operator 2-norm of a 2x2 complex matrix from its singular values."""
    a, b, c, d = complex(m[0][0]), complex(m[0][1]), complex(m[1][0]), complex(m[1][1])
    fro2 = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det2 = abs(a * d - b * c) ** 2
    disc = max(fro2 * fro2 - 4.0 * det2, 0.0)
    return math.sqrt(0.5 * (fro2 + math.sqrt(disc)))


def transfer_product(E, freq, lam: float, theta: float, n: int) -> ScaledMat2:
    """T_n ... T_1 with T_j = [[E - v_j, -1], [1, 0]]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    v = potential(freq, lam, theta, n)
    a00, a01, a10, a11, e = _kernels.transfer_scaled(complex(E), v)
    m = np.array([[a00, a01], [a10, a11]], dtype=complex)
    return ScaledMat2(m, e * _kernels.LN2)


def _log_spectral_radius(tr: complex, log_scale: float) -> float:
    """ln max|mu| for the SL2 eigenvalues mu of a matrix with trace tr * e^{log_scale}."""
    if log_scale > 40.0:
        # tr^2 dominates the discriminant; mu_max = T (1 + sqrt(1 - 4/T^2)) / 2
        t = tr
        corr = cmath.sqrt(1.0 - 4.0 * cmath.exp(-2.0 * log_scale) / (t * t)) if t != 0 else 1.0
        return log_scale + math.log(abs(t * (1.0 + corr) / 2.0))
    T = tr * math.exp(log_scale)
    if abs(T.imag) <= 1e-300 and abs(T.real) <= 2.0:
        return 0.0
    s = cmath.sqrt(T * T - 4.0)
    mu = (T + s) / 2.0 if abs(T + s) >= abs(T - s) else (T - s) / 2.0
    return max(math.log(abs(mu)), 0.0)


def lyapunov_periodic(E, pq: RationalFreq, lam: float, theta: float) -> float:
    """(1/q) ln spr(Phi_q); zero on the bands (real |Tr| <= 2)."""
    P = transfer_product(E, pq, lam, theta, pq.q)
    tr, ls = P.trace
    if complex(E).imag == 0.0:
        tr = complex(tr.real, 0.0)
    return _log_spectral_radius(tr, ls) / pq.q


def lyapunov_periodic_batch(Es, pq: RationalFreq, lam: float, thetas) -> np.ndarray:
    """gamma on an energy grid for each theta; shape (len(thetas), len(Es))."""
    Es = np.asarray(Es, dtype=complex)
    out = np.empty((len(thetas), len(Es)))
    for a, th in enumerate(thetas):
        v = potential(pq, lam, th, pq.q)
        for b, E in enumerate(Es):
            a00, _, _, a11, e = _kernels.transfer_scaled(E, v)
            tr = a00 + a11
            if E.imag == 0.0:
                tr = complex(tr.real, 0.0)
            out[a, b] = _log_spectral_radius(tr, e * _kernels.LN2) / pq.q
    return out


# ---------------------------------------------------------------- avalanche


@dataclass(frozen=True)
class AvalancheInstance:
    matrices: np.ndarray  # (n, 2, 2) complex
    deltas: np.ndarray
    b: float
    c: float
    u0: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> str:
        mats = [[[[float(z.real), float(z.imag)] for z in row] for row in A] for A in self.matrices]
        return json.dumps({
            "matrices": mats,
            "deltas": [float(d) for d in self.deltas],
            "b": self.b,
            "c": self.c,
            "u0": [[float(z.real), float(z.imag)] for z in self.u0],
            "meta": self.meta,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AvalancheInstance":
        d = json.loads(text)
        mats = np.array([[[complex(*z) for z in row] for row in A] for A in d["matrices"]])
        u0 = np.array([complex(*z) for z in d["u0"]])
        return cls(mats, np.array(d["deltas"], dtype=float), d["b"], d["c"], u0, d.get("meta", {}))


def avalanche_check(inst: AvalancheInstance, tol: float = 1e-12) -> dict:
    """Hypothesis slacks and the conclusion ln|A_n..A_1 u0| - ln|u0| >= (1-c) sum sqrt(delta_j)."""
    A = np.asarray(inst.matrices, dtype=complex)
    n = len(A)
    if n == 0:
        raise ValueError("avalanche_check needs at least one matrix")
    d = np.asarray(inst.deltas, dtype=float)
    b, c = inst.b, inst.c
    if n > 1:
        m1 = float(np.min(d[:-1] + b * d[:-1] ** 1.5 - d[1:]))
        m2 = float(_adjacent_margin(A, d, b))
    else:
        m1 = m2 = math.inf
    m_range = float(min(np.min(d), np.min(b - d)))
    m3 = float(np.min(np.abs(A[:, 0, 0] + A[:, 1, 1]) - 2.0 - (1.0 - b) * d))
    u0 = np.asarray(inst.u0, dtype=complex)
    nu0 = float(np.linalg.norm(u0))
    m0 = math.log(float(np.linalg.norm(A[0] @ u0)) / nu0) - (1.0 - c) * math.sqrt(d[0])
    lhs = _log_growth(A, u0 / nu0)
    rhs = (1.0 - c) * float(np.sum(np.sqrt(d)))
    return {
        "n": n,
        "hyp_margins": {"delta_growth": m1, "adjacent_distance": m2, "trace": m3,
                        "initial_vector": m0, "delta_range": m_range},
        "hypotheses_hold": bool(min(m1, m2, m3, m0, m_range) >= -tol),
        "lhs": lhs,
        "rhs": rhs,
        "conclusion_holds": bool(lhs >= rhs - tol),
        "norm": "operator 2-norm",
    }


@numba.njit(cache=True)
def _log_growth(A, u):
    x, y = u[0], u[1]
    total = 0.0
    for j in range(A.shape[0]):
        x, y = A[j, 0, 0] * x + A[j, 0, 1] * y, A[j, 1, 0] * x + A[j, 1, 1] * y
        s = math.sqrt(abs(x) ** 2 + abs(y) ** 2)
        total += math.log(s)
        x /= s
        y /= s
    return total


@numba.njit(cache=True)
def _adjacent_margin(A, d, b):
    m = np.inf
    for j in range(A.shape[0] - 1):
        D = A[j + 1] - A[j]
        m = min(m, b * d[j] - _opnorm_nb(D[0, 0], D[0, 1], D[1, 0], D[1, 1]))
    return m


class AvalancheGenerationError(RuntimeError):
    pass


@numba.njit(cache=True)
def _opnorm_nb(a, b, c, d):
    fro2 = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det2 = abs(a * d - b * c) ** 2
    disc = max(fro2 * fro2 - 4.0 * det2, 0.0)
    return math.sqrt(0.5 * (fro2 + math.sqrt(disc)))


@numba.njit(cache=True)
def _build(P, delta, phi, rho, b, j, out):
    """A_j = P R(phi) diag(e^mu, e^-mu) R(-phi) P^{-1} with 2 cosh mu = 2 + (1-b)(1+rho) delta."""
    mu = math.acosh(1.0 + 0.5 * (1.0 - b) * (1.0 + rho) * delta)
    cs, sn = math.cos(phi), math.sin(phi)
    ep, em = math.exp(mu), math.exp(-mu)
    # R D R^T
    r00 = cs * cs * ep + sn * sn * em
    r01 = cs * sn * (ep - em)
    r11 = sn * sn * ep + cs * cs * em
    p00, p01, p10, p11 = P[0, 0], P[0, 1], P[1, 0], P[1, 1]
    # P^{-1} for det P = 1
    i00, i01, i10, i11 = p11, -p01, -p10, p00
    t00 = p00 * r00 + p01 * r01
    t01 = p00 * r01 + p01 * r11
    t10 = p10 * r00 + p11 * r01
    t11 = p10 * r01 + p11 * r11
    out[j, 0, 0] = t00 * i00 + t01 * i10
    out[j, 0, 1] = t00 * i01 + t01 * i11
    out[j, 1, 0] = t10 * i00 + t11 * i10
    out[j, 1, 1] = t10 * i01 + t11 * i11


@numba.njit(cache=True)
def _generate_core(P, d1, phi1, rho, b, steps_d, steps_phi, mats, deltas, max_retry):
    n = mats.shape[0]
    deltas[0] = d1
    phi = phi1
    _build(P, d1, phi, rho, b, 0, mats)
    for j in range(n - 1):
        dj = deltas[j]
        dd = steps_d[j] * b * dj ** 1.5
        dp = steps_phi[j] * b * dj
        ok = False
        for _ in range(max_retry):
            dn = dj + dd
            if 0.0 < dn < b and dn <= dj + b * dj ** 1.5:
                _build(P, dn, phi + dp, rho, b, j + 1, mats)
                dist = _opnorm_nb(mats[j + 1, 0, 0] - mats[j, 0, 0], mats[j + 1, 0, 1] - mats[j, 0, 1],
                                  mats[j + 1, 1, 0] - mats[j, 1, 0], mats[j + 1, 1, 1] - mats[j, 1, 1])
                if dist <= b * dj:
                    ok = True
                    break
            # retract halfway back towards the previous matrix
            dd *= 0.5
            dp *= 0.5
        if not ok:
            return j + 1
        deltas[j + 1] = dj + dd
        phi += dp
    return 0


def avalanche_generate(n: int, b: float, c: float, seed: int, max_retry: int = 100) -> AvalancheInstance:
    """Random instance satisfying all avalanche hypotheses (verified before returning)."""
    if not 0 < c < 1 or not 0 < b <= 0.1:
        raise ValueError("need 0 < c < 1 and 0 < b <= 1/10")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    # mild SL2(C) conjugator: exp of a small traceless matrix
    X = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))) * 0.1
    X -= np.trace(X) / 2 * np.eye(2)
    w, V = np.linalg.eig(X)
    P = (V @ np.diag(np.exp(w)) @ np.linalg.inv(V)).astype(complex)
    P /= np.sqrt(np.linalg.det(P))
    d1 = b * rng.uniform(0.05, 0.95)
    rho = rng.uniform(0.0, 0.1)
    phi1 = rng.uniform(0.0, math.pi)
    steps_d = rng.uniform(-1.0, 1.0, size=max(n - 1, 0))
    steps_phi = rng.uniform(-0.25, 0.25, size=max(n - 1, 0))
    mats = np.zeros((n, 2, 2), dtype=complex)
    deltas = np.zeros(n)
    fail = _generate_core(P, d1, phi1, rho, b, steps_d, steps_phi, mats, deltas, max_retry)
    if fail:
        raise AvalancheGenerationError(f"retraction failed at index {fail} (seed {seed})")
    # expanding eigenvector of A_1, slightly tilted inside its cone
    ev, evec = np.linalg.eig(mats[0])
    u0 = evec[:, int(np.argmax(np.abs(ev)))]
    u0 = u0 + 0.01 * rng.uniform(-1, 1) * evec[:, int(np.argmin(np.abs(ev)))]
    inst = AvalancheInstance(mats, deltas, float(b), float(c), u0,
                             {"seed": seed, "n": n, "retries_max": max_retry})
    rep = avalanche_check(inst)
    if not rep["hypotheses_hold"]:
        raise AvalancheGenerationError(f"generated instance fails hypotheses: {rep['hyp_margins']}")
    return inst
