import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from padl import io
from padl.cli import main
from padl.config import ConfigErrors, loads
from padl.dynamics import TimeTrace
from padl.errors import DataError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---- CSV and JSON artifacts ----

@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False), min_size=2, max_size=40),
       st.floats(-1e-3, 1e-3), st.floats(1e-12, 1e-6))
def test_trace_round_trip(tmp_path_factory, samples, t0, dt):
    path = tmp_path_factory.mktemp("tr") / "trace.csv"
    tr = TimeTrace(t0, dt, np.array(samples))
    io.write_trace(path, tr)
    back = io.read_trace(path)
    np.testing.assert_array_equal(back.samples, tr.samples)
    assert back.t0 == tr.t0
    assert back.dt == pytest.approx(dt, rel=1e-9)
    assert io.validate_csv(path) == "trace"


def test_schema_headers_fixed():
    assert io.SCHEMAS["trace"] == ("t_s", "re", "im", "flux")
    assert io.SCHEMAS["curve"] == ("eps2_over_kappa1", "n", "n_classical")
    assert io.SCHEMAS["spectrum"] == ("freq_hz", "psd")
    assert io.SCHEMAS["threshold"] == ("drive_amplitude", "integrated_psd")


def test_s11_round_trip(tmp_path):
    f = np.linspace(4.9e9, 5.1e9, 11)
    s = np.exp(1j * np.linspace(0, 3, 11)) * 0.9
    io.write_s11(tmp_path / "s.csv", f, s)
    f2, s2 = io.read_s11(tmp_path / "s.csv")
    np.testing.assert_array_equal(f2, f)
    np.testing.assert_array_equal(s2, s)


@pytest.mark.parametrize("body, msg", [
    ("t_s,re,im,flux\n0,1,0,1\n1,0,1,2\n", "flux"),
    ("t_s,re,im,flux\n0,1,0,1\n2,0,1,1\n3,0,1,1\n", "uniformly"),
    ("t_s,re,im\n0,1,0\n", "unknown CSV header"),
    ("freq_hz,psd\n2,1\n1,1\n", "increasing"),
    ("freq_hz,psd\n1,nan\n2,1\n", "non-finite"),
    ("freq_hz,psd\n1,x\n", "malformed"),
    ("drive_amplitude,integrated_psd\n0.1,-1\n", "non-negative"),
])
def test_validate_csv_rejects(tmp_path, body, msg):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=msg):
        io.validate_csv(p)


def test_write_csv_shape_check(tmp_path):
    with pytest.raises(DataError):
        io.write_csv(tmp_path / "x.csv", "curve", ([1, 2], [1, 2]))


def test_json_nonfinite_and_numpy(tmp_path):
    io.write_json(tmp_path / "r.json", {"a": np.float64(np.inf), "b": np.arange(3), "c": np.bool_(True), "d": 1 + 2j})
    r = io.read_json(tmp_path / "r.json")
    assert r == {"a": None, "b": [0, 1, 2], "c": True, "d": {"re": 1.0, "im": 2.0}}


# ---- config validation ----

def test_config_errors_are_field_level():
    with pytest.raises(ConfigErrors) as ei:
        loads("experiment: delay\nmodel: {preset: fitted}\npulse: {fwhm_s: -1, mean_photons: x}\n")
    fields = [f for f, _ in ei.value.problems]
    assert "pulse.fwhm_s" in fields and "pulse.mean_photons" in fields


@pytest.mark.parametrize("text, field", [
    ("experiment: nope\n", "experiment"),
    ("experiment: delay\nmodel: {preset: fitted}\n", "pulse"),
    ("experiment: mpo_curve\nmpo: {kappa2_over_kappa1: 0.05, eps2_over_kappa1: [0.5, 0.1]}\n", "mpo.eps2_over_kappa1"),
    ("experiment: tune\nmodel: {preset: ideal_comb}\ntarget: {kind: max_fidelity}\npulse: {fwhm_s: 1e-6}\nbudget: 5\n",
     "budget"),
])
def test_config_error_names(text, field):
    with pytest.raises(ConfigErrors) as ei:
        loads(text)
    assert any(f.startswith(field) for f, _ in ei.value.problems)


def test_yaml_exponent_strings_accepted():
    cfg = loads("experiment: delay\nmodel: {preset: fitted}\npulse: {fwhm_s: 471e-9}\n")
    assert cfg.experiment == "delay"


# ---- command line ----

def test_fwhm_negative_exit_2(capsys):
    assert main(["run", str(CONFIGS / "bad_fwhm.yaml")]) == 2
    err = capsys.readouterr().err
    assert "pulse.fwhm_s" in err and "> 0" in err


def test_validate_command(capsys):
    assert main(["validate", str(CONFIGS / "delay_fitted.yaml")]) == 0
    assert main(["validate", str(CONFIGS / "bad_fwhm.yaml")]) == 2


def test_missing_config_exit_2(tmp_path):
    assert main(["validate", str(tmp_path / "none.yaml")]) == 2


def test_version_command(capsys):
    assert main(["version"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("padl ") and "kernel_backend" in out


def test_mpo_zero_grid_reports_zero(tmp_path):
    cfg = _write(tmp_path, "experiment: mpo_curve\nmpo: {kappa2_over_kappa1: 0.05, eps2_over_kappa1: [0]}\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = io.read_json(tmp_path / "o" / "report.json")
    assert rep["n"] == [0.0]
    assert io.read_csv(tmp_path / "o" / "curve.csv", "curve")["n"].tolist() == [0.0]


def test_numeric_failure_exit_3(tmp_path, capsys):
    cfg = _write(tmp_path, "experiment: mpo_curve\n"
                           "mpo: {kappa2_over_kappa1: 0.01, eps2_over_kappa1: [1.0], fock_cutoff: 8}\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "padl.errors" in err and "cutoff exhausted" in err


def test_delay_preset_peaks_near_two_microseconds(tmp_path):
    assert main(["run", str(CONFIGS / "delay_fitted.yaml"), "--out", str(tmp_path)]) == 0
    out = io.read_trace(tmp_path / "output.csv")
    after = out.times > 1e-6
    t_peak = out.times[after][np.argmax(out.flux[after])]
    assert abs(t_peak - 2e-6) < 0.15e-6
    man = io.read_json(tmp_path / "manifest.json")
    assert set(man["outputs"]) == {"input.csv", "output.csv", "report.json"}
    assert len(man["config_sha256"]) == 64
    assert man["wall_time_s"] > 0
    for name in man["outputs"]:
        if name.endswith(".csv"):
            io.validate_csv(tmp_path / name)


@pytest.mark.parametrize("name", ["delay_fitted", "mpo_curve", "swap"])
def test_manifest_replay_byte_identical(tmp_path, name):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(CONFIGS / f"{name}.yaml"), "--out", str(a)]) == 0
    assert main(["run", str(a / "manifest.json"), "--out", str(b)]) == 0
    man = json.loads((a / "manifest.json").read_text())
    for out in man["outputs"]:
        assert (a / out).read_bytes() == (b / out).read_bytes(), out
    man_b = json.loads((b / "manifest.json").read_text())
    assert man_b["config_sha256"] == man["config_sha256"]


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "padl.cli", "version"], capture_output=True, text=True)
    assert r.returncode == 0 and "numpy" in r.stdout
