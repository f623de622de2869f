import json
import shutil
import subprocess

import pytest
from click.testing import CliRunner
from hypothesis import given, strategies as st

from amolab.cli import RunConfig, main


def run(*args, **kw):
    return CliRunner().invoke(main, list(args), catch_exceptions=False, **kw)


def test_bands_minus_half():
    r = run("bands", "--p", "1", "--q", "2", "--lambda", "0.5", "--level", "minus")
    assert r.exit_code == 0
    lines = [l for l in r.output.splitlines() if not l.startswith("#")]
    assert lines[-2:] == ["1,-2.0,-1.0", "2,1.0,2.0"]
    assert r.output.startswith("# amolab 0.1.0 config=")


def test_unknown_command_and_bad_precision():
    assert CliRunner().invoke(main, ["nope"]).exit_code == 2
    assert CliRunner().invoke(main, ["--precision-bits", "32", "bands", "--p", "1", "--q", "2",
                                     "--lambda", "0.5"]).exit_code == 2


def test_bad_config_file(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("colour=blue\n")
    assert CliRunner().invoke(main, ["--config", str(f), "verify"]).exit_code == 2


keys = st.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=8)


@given(st.integers(64, 4096), st.integers(0, 2 ** 31),
       st.dictionaries(keys, st.floats(1e-300, 1e3, allow_nan=False), max_size=4),
       st.dictionaries(keys, st.fractions(max_denominator=10 ** 6).map(lambda f: f"{f.numerator}/{f.denominator}"),
                       max_size=4))
def test_config_round_trip(bits, seed, tols, consts):
    cfg = RunConfig(bits, seed, tols, consts)
    back = RunConfig.from_text(cfg.to_text())
    assert back == cfg and back.digest() == cfg.digest()


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        RunConfig(precision_bits=63)
    with pytest.raises(ValueError):
        RunConfig(tolerances={"x": 0.0})
    with pytest.raises(ValueError):
        RunConfig.from_text("const.c=abc\n")


def test_config_env_var(tmp_path, monkeypatch):
    f = tmp_path / "c.cfg"
    f.write_text("seed=7\n")
    monkeypatch.setenv("AMOLAB_CONFIG", str(f))
    r = run("--out", str(tmp_path), "duality", "--p", "1", "--q", "2", "--lambda", "0.4")
    art = json.loads(next(tmp_path.glob("*.json")).read_text())
    assert art["config_hash"] == RunConfig(seed=7).digest()
    assert r.exit_code == 0


def test_verify_core_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        r = run("--out", str(d), "--workers", "1", "verify")
        assert r.exit_code == 0
    fa, fb = sorted(a.iterdir()), sorted(b.iterdir())
    assert [p.name for p in fa] == [p.name for p in fb] and fa
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(fa, fb))


def test_verify_hash_mismatch():
    r = CliRunner().invoke(main, ["verify", "--expect-hash", "0" * 16])
    assert r.exit_code == 1


def test_ftau_command_reports_literal_failure():
    r = CliRunner().invoke(main, ["ftau", "--p", "0", "--q", "1", "--lambda", "0.5", "--tau", "0.25"])
    assert "0.0710477" in r.output


@pytest.mark.skipif(shutil.which("amolab") is None, reason="console script not installed")
def test_console_script():
    out = subprocess.run(["amolab", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "0.1.0" in out.stdout
