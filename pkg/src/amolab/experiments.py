"""Finite-size runs of the Lyapunov lower bounds, meagerness on J_delta, F_tau mass bounds and the Parreau-Widom failure mechanism."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable, Sequence

import mpmath
import numpy as np

from .cocycle import lyapunov_periodic_batch
from .dos import dos_of_interval
from .frequency import FrequencyCF, RationalFreq, cf_convergents, rational_gap
from .spectrum import (FAST_Q, _ctx, _to_mp, discriminant_mp, fast_bands, f_tau, j_delta_set,
                       level_bits, log_measure, set_ops, spectrum, BandSet)
from .regularity import _gamma_bar, pw_sum


class InstanceError(ValueError):
    """An experiment instance violates one of its stated preconditions."""


DEFAULTS = {"q0": 1, "c0": 0.01, "C": 1.0, "C1": 1.0, "q_max": 20}


# ---------------------------------------------------------------- Lyapunov lower bound on J_delta


@dataclass
class LSInstance:
    pq: RationalFreq
    pq_tilde: RationalFreq
    lam: float
    delta: float
    r: float
    eps: float
    thetas: tuple
    E_grid: tuple
    alpha_err: tuple = (0.0, 0.0)  # upper bounds for |p/q - alpha|, |p~/q~ - alpha|
    q0: int = DEFAULTS["q0"]
    c0: float = DEFAULTS["c0"]

    def eps_floor(self) -> float:
        q, lam = self.pq.q, self.lam
        return math.exp(-math.exp(self.r * q) / (15000.0 * q * q * lam ** (q / 2)))

    def bound(self) -> float:
        q = self.pq.q
        return self.delta / (9600.0 * q * q * self.lam ** (q / 2))

    def validate(self) -> None:
        q, qt, lam, d, r = self.pq.q, self.pq_tilde.q, self.lam, self.delta, self.r
        if not 0 < lam <= 1:
            raise InstanceError("lambda must lie in (0, 1]")
        if not 0 < d < 1:
            raise InstanceError("delta must lie in (0, 1)")
        lim = d * math.exp(-r * q)
        if not max(self.alpha_err) < lim:
            raise InstanceError(f"approximation condition fails: |p/q - alpha| bounds {self.alpha_err} "
                                f"not below delta e^(-rq) = {lim:.3e}")
        if not qt > q >= self.q0:
            raise InstanceError("need q~ > q >= q0")
        if not math.exp(-math.exp(r * q / 2)) < d <= self.c0 * q * q * lam ** q * (1 + 1e-12):
            raise InstanceError("delta outside (exp(-e^(rq/2)), c0 q^2 lam^q]")
        if self.eps < self.eps_floor() * (1 - 1e-12):
            raise InstanceError("eps below its floor exp(-e^(rq)/(15000 q^2 lam^(q/2)))")
        if not self.E_grid:
            raise InstanceError("empty energy grid (J_delta empty)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pq"] = self.pq.to_json()
        d["pq_tilde"] = self.pq_tilde.to_json()
        d["thetas"] = list(self.thetas)
        d["E_grid"] = list(self.E_grid)
        d["alpha_err"] = list(self.alpha_err)
        return d


def j_delta_grid(pq: RationalFreq, lam, delta, points: int) -> tuple:
    """`points` energies spread over J_delta by arclength (interval interiors only)."""
    J = j_delta_set(pq, lam, delta)
    ivs = [(float(a), float(b)) for a, b in J.intervals if float(b) > float(a)]
    if not ivs:
        return ()
    lens = np.array([b - a for a, b in ivs])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    s = (np.arange(points) + 0.5) / points * cum[-1]
    out = []
    for x in s:
        k = min(int(np.searchsorted(cum, x, side="right")) - 1, len(ivs) - 1)
        out.append(ivs[k][0] + (x - cum[k]))
    return tuple(out)


def ls_instance(cf: FrequencyCF, n: int, m: int, lam: float, delta: float, r: float,
                eps: float | None = None, thetas: Sequence[float] | None = None, grid: int = 101,
                q0: int = DEFAULTS["q0"], c0: float = DEFAULTS["c0"]) -> LSInstance:
    """Instance with p/q = n-th and p~/q~ = m-th convergent of cf (alpha = cf)."""
    cv = cf_convergents(cf, m)
    pq, pqt = cv[n], cv[m]
    errs = (float(rational_gap(cf, n)[1]), float(rational_gap(cf, m)[1]))
    ths = tuple(thetas) if thetas is not None else tuple(2 * math.pi * k / 8 for k in range(8))
    inst = LSInstance(pq, pqt, float(lam), float(delta), float(r), 0.0, ths,
                      j_delta_grid(pq, lam, delta, grid), errs, q0, c0)
    inst.eps = float(eps) if eps is not None else inst.eps_floor()
    return inst


def _min_gamma(inst: LSInstance, eps: float) -> float:
    Es = np.asarray(inst.E_grid) + 1j * eps
    return float(lyapunov_periodic_batch(Es, inst.pq_tilde, inst.lam, list(inst.thetas)).min())


def ls_lower_bound_check(inst: LSInstance, escalate: Callable[[int], LSInstance] | None = None,
                         q_max: int = DEFAULTS["q_max"]) -> dict:
    """min over grid and phases of gamma_{p~/q~}(E + i eps) against delta / (9600 q^2 lam^(q/2))."""
    inst.validate()
    g = _min_gamma(inst, inst.eps)
    g2 = _min_gamma(inst, min(2.0 * inst.eps, 2.0))
    rep = {"instance": inst.to_dict(), "min_gamma": g, "bound": inst.bound(), "holds": g >= inst.bound(),
           "eps_monotone": g2 >= g * (1 - 1e-12), "q_star": inst.pq.q if g >= inst.bound() else None}
    if not rep["holds"] and escalate is not None:
        for q in range(inst.pq.q + 1, q_max + 1):
            try:
                nxt = escalate(q)
                nxt.validate()
            except (InstanceError, ValueError):
                continue
            if _min_gamma(nxt, nxt.eps) >= nxt.bound():
                rep["q_star"] = q
                break
    return rep


# ---------------------------------------------------------------- meagerness on J_delta


def meagerness_check(prefix: FrequencyCF, lam: float, delta: float, next_quotients: Sequence[int],
                     r: float = 1.0, C: float = DEFAULTS["C"], C1: float = DEFAULTS["C1"]) -> dict:
    """|S(p_{n+1}/q_{n+1}) cap J_delta(p_n/q_n)| for several next quotients a = a_{n+1}.

    Large q_{n+1} go through the float scan engine with log-domain widths, so
    ln-measures far below the double range are still exact in ratio.
    """
    n = prefix.prefix_len
    cv = cf_convergents(prefix, n)
    pn = cv[-1]
    q_prev, p_prev = (cv[-2].q, cv[-2].p) if n >= 1 else (0, 1)
    if pn.q > FAST_Q:
        raise InstanceError(f"J_delta needs q_n <= {FAST_Q}")
    J = j_delta_set(pn, lam, delta)
    win = [(float(a), float(b)) for a, b in J.intervals]
    rows = []
    for a in next_quotients:
        a = int(a)
        qn1, pn1 = a * pn.q + q_prev, a * pn.p + p_prev
        if not qn1 * delta > math.exp(r * pn.q):
            raise InstanceError(f"precondition q_(n+1) delta > exp(r q_n) fails for q_(n+1) = {qn1}")
        pq1 = RationalFreq(pn1, qn1)
        if qn1 <= FAST_Q:
            inter = set_ops(spectrum(pq1, lam), BandSet(tuple(J.intervals)), "and")
            m = inter.measure()
            lm = math.log(m) if m > 0 else -math.inf
        else:
            fb = fast_bands(pq1, lam, "S", windows=win)
            lm = log_measure(fb, win)
        x = qn1 * delta / pn.q
        lb = math.log(C * pn.q ** 2 / delta) - x / C1
        rows.append({"a": a, "q_next": qn1, "x": x, "ln_measure": lm, "ln_bound": lb,
                     "ln_ratio_to_bound": lm - lb})
    xs = np.array([r_["q_next"] for r_ in rows], dtype=float)
    ys = np.array([r_["ln_measure"] for r_ in rows])
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(rows) >= 2 and np.all(np.isfinite(ys)) else math.nan
    xfit = np.array([r_["x"] for r_ in rows])
    slope_x = float(np.polyfit(xfit, ys, 1)[0]) if len(rows) >= 2 and np.all(np.isfinite(ys)) else math.nan
    dec = all(b["ln_measure"] < a_["ln_measure"] for a_, b in zip(rows, rows[1:]))
    return {"p_n": pn.p, "q_n": pn.q, "lam": lam, "delta": delta, "r": r, "C": C, "C1": C1,
            "J_delta": win, "rows": rows, "slope_vs_q": slope, "slope_vs_x": slope_x,
            "strictly_decreasing": dec}


# ---------------------------------------------------------------- F_tau mass


def ftau_mass_check(pq: RationalFreq, lam: float, tau: float, partner: RationalFreq | None = None) -> dict:
    """rho_bar(F_tau) >= (tau arccos tau / pi) lam^(q/2) / q, and the weaker /(4 pi) form for a close partner."""
    F = f_tau(pq, lam, tau)
    q = pq.q
    lam = float(lam)
    base = dos_of_interval(F.interval, pq, lam, method="exact")
    bound = tau * math.acos(tau) / math.pi * lam ** (q / 2) / q
    rep = {"p": pq.p, "q": q, "lam": lam, "tau": tau, "F": [float(F.interval[0]), float(F.interval[1])],
           "rho_base": base, "bound_base": bound, "holds_base": base >= bound}
    if partner is not None:
        dist = abs(Fraction(partner.p, partner.q) - Fraction(pq.p, pq.q))
        lim = tau ** 2 * math.acos(tau / 2) / (256 * math.pi ** 2 * q ** 4) * lam ** (1.5 * q)
        if float(dist) > lim:
            raise InstanceError(f"partner too far: |partner - p/q| = {float(dist):.3e} > {lim:.3e}")
        rp = dos_of_interval(F.interval, partner, lam, method="exact")
        bp = tau * math.acos(tau) / (4 * math.pi) * lam ** (q / 2) / q
        rep.update({"partner": partner.to_json(), "rho_partner": rp, "bound_partner": bp,
                    "holds_partner": rp >= bp})
    return rep


# ---------------------------------------------------------------- Parreau-Widom failure


def pw_family_count(pq: RationalFreq, lam, r: float, prec: int = 256) -> dict:
    """Counts for the family of disjoint intervals of length 225 lam^((3+r)q/2) inside F_{1/2}.

    formula: floor(((1 - lam)/(4 q^3)) lam^q / pitch); actual: floor(|F_{1/2}| / pitch);
    lower: (1 - lam)/(1000 q^3) lam^(-(1+r)q/2).
    """
    q = pq.q
    with mpmath.workprec(prec):
        L = mpmath.mpf(Fraction(str(lam)).numerator) / Fraction(str(lam)).denominator
        pitch = 225 * L ** ((3 + mpmath.mpf(r)) * q / 2)
        formula = int(mpmath.floor((1 - L) / (4 * q ** 3) * L ** q / pitch))
        lower = (1 - L) / (1000 * q ** 3) * L ** (-(1 + mpmath.mpf(r)) * q / 2)
        F = f_tau(pq, lam, 0.5)
        bits = level_bits(q, float(lam))
        with _ctx(bits):
            length = abs(F.interval[1] - F.interval[0])
        actual = int(mpmath.floor(mpmath.mpf(str(length)) / pitch))
        return {"q": q, "pitch": float(pitch), "formula": formula, "actual": actual,
                "lower": float(lower), "F_length": float(mpmath.mpf(str(length))), "F": F}


def _gamma_bar_mp(E, pq: RationalFreq, lam, nodes: int = 512) -> float:
    """phase-averaged gamma at a real E given at working precision, through D = Delta - 2 lam^q cos(phi)."""
    q = pq.q
    bits = level_bits(q, float(lam))
    with _ctx(bits):
        d = discriminant_mp(E, pq, lam, bits)[0]
        e = float(abs(d) - 2)  # |Delta| - 2 without cancellation
    amp = 2.0 * float(lam) ** q
    phi = math.pi * (np.arange(nodes) + 0.5) / nodes
    # |D|/2 = 1 + t near the level 2; the phase average is symmetric under phi -> pi - phi
    t = (e - amp * np.cos(phi)) / 2.0
    tp = np.maximum(t, 0.0)
    return float(np.mean(np.log1p(tp + np.sqrt(tp * (2.0 + tp))))) / q


def pw_failure_experiment(chain: Sequence[RationalFreq], lam: float, r: float, samples: int = 32,
                          C1: float = DEFAULTS["C1"], fine: RationalFreq | None = None) -> dict:
    """Per level k: the interval family in F_{1/2}(P_k/Q_k), gamma_bar at the centres of the
    fifth ninths of `samples` evenly chosen family members, and the resulting lower estimate
    count * min(sampled gamma_bar) for the Parreau-Widom sum.

    gamma_bar is taken for P_{k+1}/Q_{k+1}, or for `fine` (a deep approximant of the limit
    frequency) when given; denominators above FAST_Q use the float engine.
    """
    chain = list(chain)
    if len(chain) < 3:
        raise InstanceError("chain must hold at least three convergents (two levels)")
    lam = float(lam)
    if not 0 < lam < 1:
        raise InstanceError("lambda must lie in (0, 1)")
    levels = []
    for k in range(len(chain) - 1):
        pq, nxt = chain[k], chain[k + 1]
        if pq.q > FAST_Q:
            raise InstanceError(f"F_1/2 needs the working-precision route, q <= {FAST_Q}")
        cnt = pw_family_count(pq, lam, r)
        if cnt["actual"] < 1:
            raise InstanceError(f"pitch {cnt['pitch']:.3e} exceeds |F_1/2| = {cnt['F_length']:.3e} at q = {pq.q}")
        F = cnt.pop("F")
        bits = level_bits(pq.q, lam)
        with _ctx(bits):
            a = F.interval[0]
            pitch = _to_mp(cnt["pitch"])
            idx = np.unique(np.linspace(0, cnt["actual"] - 1, min(samples, cnt["actual"])).astype(int))
            centres = [a + pitch * int(i) + pitch * 4.5 / 9 for i in idx]
        target = fine or nxt
        if target.q <= FAST_Q:
            gam = [_gamma_bar_mp(E, target, lam) for E in centres]
        else:
            gam = [float(g) for g in _gamma_bar(np.array([float(E) for E in centres]), target, lam, 64)]
        g_min = min(gam)
        q = pq.q
        levels.append({**cnt, "next_q": nxt.q, "gamma_q": target.q, "sampled": len(gam), "gamma_min": g_min,
                       "gamma_max": max(gam), "pw_lower_estimate": cnt["actual"] * g_min,
                       "pw_bound": (1 - lam) / (4000 * C1 * q ** 5) * lam ** (-r * q / 2),
                       "target_gamma": lam ** (q / 2) / (4 * C1 * q * q)})
    return {"lam": lam, "r": r, "levels": levels,
            "grows": all(b["pw_lower_estimate"] > a_["pw_lower_estimate"] for a_, b in zip(levels, levels[1:]))}


def pw_compare(pq: RationalFreq, lam: float) -> dict:
    """Independent gap-based Parreau-Widom sum for the finer approximant."""
    return pw_sum(pq, lam)
