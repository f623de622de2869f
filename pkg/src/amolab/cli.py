"""Command-line front end.

Every artifact embeds the package version and a hash of the run configuration.
JSON is written with sorted keys and CSV with a leading `# amolab ...` comment
line, so identical configurations give byte-identical files.

Exit codes: 0 success, 1 a check or suite failed, 2 usage or configuration error.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import __version__

CONFIG_ENV = "AMOLAB_CONFIG"


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class RunConfig:
    precision_bits: int = 128
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)  # decimal strings
    output_dir: str = "."
    formats: tuple = ("json", "csv")

    def __post_init__(self):
        if int(self.precision_bits) < 64:
            raise ValueError("precision_bits must be >= 64")
        for k, v in self.tolerances.items():
            if not float(v) > 0:
                raise ValueError(f"tolerance {k} must be positive")

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def const(self, name: str, default) -> Fraction:
        return Fraction(str(self.constants.get(name, default)))

    def to_text(self) -> str:
        lines = [f"precision_bits={self.precision_bits}", f"seed={self.seed}",
                 f"output_dir={self.output_dir}", f"format={','.join(self.formats)}"]
        lines += [f"tol.{k}={self.tolerances[k]!r}" for k in sorted(self.tolerances)]
        lines += [f"const.{k}={self.constants[k]}" for k in sorted(self.constants)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kw: dict = {"tolerances": {}, "constants": {}}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {n}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k == "precision_bits":
                kw[k] = int(v)
            elif k == "seed":
                kw[k] = int(v)
            elif k == "output_dir":
                kw[k] = v
            elif k == "format":
                kw["formats"] = tuple(s for s in v.split(",") if s)
            elif k.startswith("tol."):
                kw["tolerances"][k[4:]] = float(v)
            elif k.startswith("const."):
                Fraction(v)  # must be a decimal or rational literal
                kw["constants"][k[6:]] = v
            else:
                raise ValueError(f"config line {n}: unknown key {k!r}")
        return cls(**kw)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _load_config(path: str | None, **overrides) -> RunConfig:
    path = path or os.environ.get(CONFIG_ENV)
    cfg = RunConfig()
    if path:
        try:
            cfg = RunConfig.from_text(Path(path).read_text())
        except (OSError, ValueError) as e:
            raise click.UsageError(f"bad config {path}: {e}")
    try:
        return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    except ValueError as e:
        raise click.UsageError(str(e))


# ---------------------------------------------------------------- output


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if x is None or isinstance(x, str):
        return x
    return str(x)


def _emit_json(ctx_obj: dict, name: str, command: str, params: dict, result) -> str:
    cfg: RunConfig = ctx_obj["config"]
    doc = {"schema": 1, "version": __version__, "config_hash": cfg.digest(), "command": command,
           "params": _plain(params), "result": _plain(result)}
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    _write(ctx_obj, name + ".json", text)
    return text


def _emit_csv(ctx_obj: dict, name: str, header: list, rows: list) -> str:
    cfg: RunConfig = ctx_obj["config"]
    out = [f"# amolab {__version__} config={cfg.digest()}", ",".join(header)]
    out += [",".join(str(c) for c in r) for r in rows]
    text = "\n".join(out) + "\n"
    _write(ctx_obj, name + ".csv", text)
    return text


def _write(ctx_obj: dict, fname: str, text: str) -> None:
    if ctx_obj.get("out"):
        d = Path(ctx_obj["out"])
        d.mkdir(parents=True, exist_ok=True)
        (d / fname).write_text(text)
    else:
        click.echo(text, nl=False)


def _pq(p: int, q: int):
    from .frequency import RationalFreq

    try:
        return RationalFreq(p, q)
    except ValueError as e:
        raise click.BadParameter(str(e))


def _level(s: str):
    if s in ("S", "minus"):
        return s
    if s.startswith("tau:"):
        return ("tau", float(s[4:]))
    try:
        return Fraction(s)
    except ValueError:
        raise click.BadParameter(f"level must be S, minus, tau:<t> or a number, not {s!r}")


# ---------------------------------------------------------------- commands


@click.group()
@click.option("--config", "config_path", default=None, help="key=value config file (default: $AMOLAB_CONFIG).")
@click.option("--precision-bits", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", default=None, help="Directory for artifacts; stdout when omitted.")
@click.option("--workers", type=int, default=None, help="Worker processes (default: logical cores).")
@click.version_option(__version__)
@click.pass_context
def main(ctx, config_path, precision_bits, seed, out, workers):
    """Almost Mathieu laboratory."""
    cfg = _load_config(config_path, precision_bits=precision_bits, seed=seed)
    ctx.obj = {"config": cfg, "out": out, "workers": workers or os.cpu_count() or 1}


@main.command()
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, required=True)
@click.option("--lambda", "lam", type=str, required=True, help="Coupling as a decimal string.")
@click.option("--level", default="S", help="S, minus, tau:<t> or a number.")
@click.option("--method", default="auto", type=click.Choice(["auto", "eig", "newton", "bisect", "fast"]))
@click.pass_obj
def bands(obj, p, q, lam, level, method):
    """Band edges of a level set of |Delta| (columns band_index,lower,upper)."""
    from .spectrum import _dec, level_set

    B = level_set(_pq(p, q), Fraction(lam), _level(level), method=method)
    rows = [(i, _dec(l), _dec(u)) for i, (l, u) in enumerate(B.bands, 1)]
    _emit_csv(obj, "bands", ["band_index", "lower", "upper"], rows)


@main.command()
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, required=True)
@click.option("--lambda", "lam", type=float, required=True)
@click.option("--E", "energies", type=str, required=True, help="Comma-separated energies.")
@click.option("--theta", type=float, default=None, help="Fixed phase; phase average when omitted.")
@click.pass_obj
def ids(obj, p, q, lam, energies, theta):
    """Integrated density of states (columns E,N)."""
    from .dos import ids_averaged, ids_periodic

    pq = _pq(p, q)
    Es = [float(x) for x in energies.split(",")]
    vals = [ids_periodic(E, pq, lam, theta) if theta is not None else ids_averaged(E, pq, lam, method="exact")
            for E in Es]
    _emit_csv(obj, "ids", ["E", "N"], [(repr(E), repr(v)) for E, v in zip(Es, vals)])


@main.command()
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, required=True)
@click.option("--lambda", "lam", type=float, required=True)
@click.option("--E", "energies", type=str, required=True)
@click.option("--eps", type=float, default=0.0, help="Imaginary part added to every energy.")
@click.option("--phases", type=int, default=64)
@click.pass_obj
def lyapunov(obj, p, q, lam, energies, eps, phases):
    """Phase-averaged Lyapunov exponent (columns E,eps,gamma)."""
    from .cocycle import lyapunov_periodic_batch

    Es = np.array([float(x) for x in energies.split(",")]) + 1j * eps
    th = 2 * math.pi * np.arange(phases) / phases
    g = lyapunov_periodic_batch(Es, _pq(p, q), lam, th).mean(axis=0)
    _emit_csv(obj, "lyapunov", ["E", "eps", "gamma"], [(repr(float(E.real)), repr(eps), repr(float(v))) for E, v in zip(Es, g)])


@main.command()
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, required=True)
@click.option("--lambda", "lam", type=str, required=True)
@click.option("--tau", type=float, required=True)
@click.pass_obj
def ftau(obj, p, q, lam, tau):
    """F_tau interval and its phase-averaged mass."""
    from .experiments import ftau_mass_check

    rep = ftau_mass_check(_pq(p, q), float(lam), tau)
    _emit_json(obj, "ftau", "ftau", {"p": p, "q": q, "lambda": lam, "tau": tau}, rep)
    sys.exit(0 if rep["holds_base"] else 1)


@main.command()
@click.option("--a", type=int, default=1)
@click.option("--b", type=int, required=True)
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, required=True)
@click.option("--lambda", "lam", type=float, required=True)
@click.option("--theta", type=float, default=0.0)
@click.option("--z", "z", type=str, default="0.5+0.1j")
@click.option("--cuts", type=str, required=True)
@click.option("--profile", "n0", type=int, default=None, help="Also emit a decay profile from site n0.")
@click.pass_obj
def green(obj, a, b, p, q, lam, theta, z, cuts, n0):
    """Green-function identity residuals on a box; optional decay profile CSV."""
    from .green import amo_box, combes_thomas_profile, green_identities_check

    box = amo_box(a, b, _pq(p, q), lam, theta)
    zc = complex(z)
    rep = green_identities_check(box, [int(c) for c in cuts.split(",")], zc, seed=obj["config"].seed)
    _emit_json(obj, "green", "green", {"a": a, "b": b, "p": p, "q": q, "lambda": lam, "theta": theta,
                                        "z": z, "cuts": cuts}, rep)
    if n0 is not None:
        prof = combes_thomas_profile(box, zc, n0, b - n0)
        _emit_csv(obj, "green_profile", ["k", "log_abs_G"], [(k, repr(v)) for k, v in prof["profile"]])
    sys.exit(0 if rep["max_residual"] <= obj["config"].tol("green", 1e-10) else 1)


def _gauge(spec: str):
    from .gauges import omega, omega_tilde

    kind, _, t = spec.partition(":")
    if kind not in ("omega", "omega_tilde") or not t:
        raise click.BadParameter("gauge is omega:<t> or omega_tilde:<t>")
    return (omega if kind == "omega" else omega_tilde)(float(t))


@main.command()
@click.option("--cf", type=str, required=True, help="Comma-separated partial quotients.")
@click.option("--lambda", "lam", type=float, required=True)
@click.option("--gauge", "gauge_spec", default="omega_tilde:2")
@click.option("--levels", type=int, default=3)
@click.pass_obj
def hausdorff(obj, cf, lam, gauge_spec, levels):
    """Cover costs along the convergent chain (columns level,scale,count,cost)."""
    from .frequency import FrequencyCF, cf_convergents
    from .regularity import hausdorff_content_upper

    alpha = FrequencyCF(tuple(int(x) for x in cf.split(",")))
    chain = cf_convergents(alpha, alpha.prefix_len)[1:]
    chain = chain[: levels + 2]
    cc = hausdorff_content_upper(chain, lam, _gauge(gauge_spec))
    _emit_csv(obj, "hausdorff", ["level", "scale", "count", "cost"],
              [(i, repr(s), n, repr(c)) for i, (s, n, c) in enumerate(cc.levels)])


@main.command()
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, required=True)
@click.option("--lambda", "lam", type=str, required=True)
@click.option("--eps", "eps_list", type=str, default="0.1,0.01,0.001")
@click.pass_obj
def homog(obj, p, q, lam, eps_list):
    """Homogeneity profile of S(p/q) (columns eps,tau)."""
    from .regularity import homogeneity_profile
    from .spectrum import spectrum

    eps = [float(x) for x in eps_list.split(",")]
    prof = homogeneity_profile(spectrum(_pq(p, q), Fraction(lam)), eps)
    _emit_csv(obj, "homog", ["eps", "tau"], [(repr(e), repr(float(t))) for e, t in prof])


@main.command()
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, required=True)
@click.option("--lambda", "lam", type=float, required=True)
@click.pass_obj
def pw(obj, p, q, lam):
    """Parreau-Widom sum over the gaps of S(p/q) (columns gap_lower,gap_upper,argmax,max)."""
    from .regularity import pw_sum

    rep = pw_sum(_pq(p, q), lam)
    _emit_csv(obj, "pw", ["gap_lower", "gap_upper", "argmax", "max"],
              [(repr(g["gap"][0]), repr(g["gap"][1]), repr(float(g["argmax"])), repr(g["max"])) for g in rep["per_gap"]])


@main.command()
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, required=True)
@click.option("--lambda", "lam", type=float, required=True)
@click.pass_obj
def duality(obj, p, q, lam):
    """Which rescaling maps S(p/q, lam) onto lam S(p/q, kappa)."""
    from .dos import duality_check

    rep = duality_check(_pq(p, q), lam)
    _emit_json(obj, "duality", "duality", {"p": p, "q": q, "lambda": lam}, rep)


@main.command()
@click.option("--instances", type=int, default=100)
@click.option("--qmax", type=int, default=34)
@click.pass_obj
def kyfan(obj, instances, qmax):
    """Randomized IDS continuity checks over golden convergent pairs."""
    from .dos import kyfan_check
    from .frequency import GOLDEN, cf_convergents

    rng = np.random.default_rng(obj["config"].seed)
    cv = [c for c in cf_convergents(GOLDEN, 12)[1:] if c.q <= qmax]
    bad = []
    for i in range(instances):
        k = int(rng.integers(0, len(cv) - 1))
        a, b = sorted(rng.uniform(-3.5, 3.5, 2))
        lam, L = float(rng.uniform(0.2, 1.5)), int(rng.integers(1, 60))
        r = kyfan_check(cv[k], cv[k + 1], lam, a, b, L)
        if not r["holds"]:
            bad.append({"i": i, "q": cv[k].q, "lambda": lam, "L": L, "r": [a, b]})
    _emit_json(obj, "kyfan", "kyfan", {"instances": instances, "qmax": qmax}, {"violations": bad})
    sys.exit(0 if not bad else 1)


@main.command()
@click.option("--instances", type=int, default=1000)
@click.option("--n", "nmax", type=int, default=200)
@click.option("--b", type=float, default=0.1)
@click.option("--c", type=float, default=0.5)
@click.pass_obj
def avalanche(obj, instances, nmax, b, c):
    """Generated avalanche instances; reports conclusion violations."""
    from .cocycle import avalanche_check, avalanche_generate

    rng = np.random.default_rng(obj["config"].seed)
    bad = []
    for i in range(instances):
        inst = avalanche_generate(int(rng.integers(1, nmax + 1)), b, c, int(rng.integers(1 << 31)))
        r = avalanche_check(inst)
        if not r["conclusion_holds"]:
            bad.append(i)
    _emit_json(obj, "avalanche", "avalanche", {"instances": instances, "n": nmax, "b": b, "c": c},
               {"violations": bad})
    sys.exit(0 if not bad else 1)


# ---------------------------------------------------------------- experiments


@main.group()
def exp():
    """Experiment recipes: ls, meager, ftau, pw."""


@exp.command("ls")
@click.option("--cf", type=str, default="3,100000,1")
@click.option("--n", type=int, default=1)
@click.option("--m", type=int, default=2)
@click.option("--lambda", "lam", type=float, default=0.5)
@click.option("--delta", type=float, default=None, help="Default c0 q^2 lam^q.")
@click.option("--r", type=float, default=1.2)
@click.option("--grid", type=int, default=101)
@click.pass_obj
def exp_ls(obj, cf, n, m, lam, delta, r, grid):
    from .experiments import InstanceError, ls_instance, ls_lower_bound_check
    from .frequency import FrequencyCF, cf_convergents

    alpha = FrequencyCF(tuple(int(x) for x in cf.split(",")))
    cfg = obj["config"]
    q = cf_convergents(alpha, n)[-1].q
    c0 = float(cfg.const("c0", "0.01"))
    d = delta if delta is not None else c0 * q * q * lam ** q
    try:
        rep = ls_lower_bound_check(ls_instance(alpha, n, m, lam, d, r, grid=grid, c0=c0))
    except InstanceError as e:
        raise click.UsageError(str(e))
    _emit_json(obj, "exp_ls", "exp ls", {"cf": cf, "n": n, "m": m, "lambda": lam, "delta": d, "r": r}, rep)
    sys.exit(0 if rep["holds"] and rep["eps_monotone"] else 1)


@exp.command("meager")
@click.option("--qn", type=int, default=3, help="q_n, reached through the quotient prefix (qn,).")
@click.option("--lambda", "lam", type=float, default=0.5)
@click.option("--delta", type=float, default=None, help="Default lam^qn.")
@click.option("--next", "nxt", type=str, default="1000,10000,100000")
@click.option("--r", type=float, default=1.0)
@click.pass_obj
def exp_meager(obj, qn, lam, delta, nxt, r):
    from .experiments import InstanceError, meagerness_check
    from .frequency import FrequencyCF

    d = delta if delta is not None else lam ** qn
    cfg = obj["config"]
    try:
        rep = meagerness_check(FrequencyCF((qn,)), lam, d, [int(x) for x in nxt.split(",")], r=r,
                               C=float(cfg.const("C", 1)), C1=float(cfg.const("C1", 1)))
    except InstanceError as e:
        raise click.UsageError(str(e))
    _emit_json(obj, "exp_meager", "exp meager", {"qn": qn, "lambda": lam, "delta": d, "next": nxt, "r": r}, rep)
    sys.exit(0 if rep["strictly_decreasing"] and rep["slope_vs_q"] < 0 else 1)


@exp.command("ftau")
@click.option("--qmax", type=int, default=20)
@click.option("--lambdas", type=str, default="0.5,0.9")
@click.option("--taus", type=str, default="0.25,0.5")
@click.pass_obj
def exp_ftau(obj, qmax, lambdas, taus):
    from .experiments import ftau_mass_check
    from .frequency import RationalFreq

    rows, bad = [], 0
    for q in range(1, qmax + 1):
        p = next(k for k in range(q // 2, q + 1) if math.gcd(k, q) == 1) if q > 1 else 0
        for lam in (float(x) for x in lambdas.split(",")):
            for tau in (float(x) for x in taus.split(",")):
                r = ftau_mass_check(RationalFreq(p, q), lam, tau)
                rows.append((p, q, lam, tau, repr(r["rho_base"]), repr(r["bound_base"]), int(r["holds_base"])))
                bad += int(not r["holds_base"])
    _emit_csv(obj, "exp_ftau", ["p", "q", "lambda", "tau", "rho", "bound", "holds"], rows)
    sys.exit(0 if bad == 0 else 1)


@exp.command("pw")
@click.option("--chain", type=str, default="21/34,34/55,55/89")
@click.option("--lambda", "lam", type=float, default=0.5)
@click.option("--r", type=float, default=1.0)
@click.option("--samples", type=int, default=32)
@click.pass_obj
def exp_pw(obj, chain, lam, r, samples):
    from .experiments import InstanceError, pw_failure_experiment

    ch = [_pq(*(int(x) for x in s.split("/"))) for s in chain.split(",")]
    try:
        rep = pw_failure_experiment(ch, lam, r, samples=samples)
    except InstanceError as e:
        raise click.UsageError(str(e))
    _emit_json(obj, "exp_pw", "exp pw", {"chain": chain, "lambda": lam, "r": r, "samples": samples}, rep)


# ---------------------------------------------------------------- verify


@main.command()
@click.option("--suite", type=click.Choice(["core", "full"]), default="core")
@click.option("--expect-hash", default=None, help="Fail unless the config hash equals this value.")
@click.pass_obj
def verify(obj, suite, expect_hash):
    """Run an invariant suite; exit 0 iff every check passes."""
    from .suites import SUITES, run_check

    cfg: RunConfig = obj["config"]
    if expect_hash is not None and expect_hash != cfg.digest():
        click.echo(json.dumps({"failures": ["config_hash"], "expected": expect_hash, "got": cfg.digest()}))
        sys.exit(1)
    jobs = [(f.__name__, cfg) for f in SUITES[suite]]
    if obj["workers"] > 1:
        with ProcessPoolExecutor(obj["workers"]) as ex:
            rows = list(ex.map(run_check, jobs))
    else:
        rows = [run_check(j) for j in jobs]
    failures = [r["name"] for r in rows if not r["passed"]]
    text = _emit_json(obj, f"verify_{suite}", "verify", {"suite": suite}, {"checks": rows, "failures": failures})
    if json.loads(text)["config_hash"] != cfg.digest():
        sys.exit(1)
    if obj.get("out"):
        click.echo(json.dumps({"failures": failures}))
    sys.exit(0 if not failures else 1)


if __name__ == "__main__":
    main()
