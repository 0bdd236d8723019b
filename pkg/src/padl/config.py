"""Experiment config loading and schema validation.

Configs are YAML.  Every quantity carries its unit in the key name
(``_s``, ``_hz``, ``_2pi_hz``, ``_rad``); validation converts numbers
(including YAML strings such as ``471e-9``) and collects every problem with
its dotted field path before anything runs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError

EXPERIMENTS = ("s11_sweep", "delay", "echo_select", "translate", "swap", "two_pulse",
               "mpo_curve", "calibrate", "added_noise", "tune")
PRESETS = ("fitted", "ideal_comb")
SCHEDULE_KINDS = ("continuous", "echo_select", "translate", "swap")


class ConfigErrors(ConfigError):
    """Several field-level problems at once."""

    def __init__(self, problems):
        self.problems = list(problems)
        first = self.problems[0]
        super().__init__(first[0], first[1] + (f" (+{len(self.problems) - 1} more)" if len(self.problems) > 1 else ""))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    data: dict
    path: Path | None
    text: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def section(self, name: str) -> dict:
        return self.data.get(name) or {}

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path is not None else Path.cwd()

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p


class _Checker:
    def __init__(self, data: Mapping):
        self.data = data
        self.problems: list[tuple[str, str]] = []

    def fail(self, path: str, msg: str):
        self.problems.append((path, msg))

    def get(self, path: str):
        node: Any = self.data
        for part in path.split("."):
            if not isinstance(node, Mapping) or part not in node:
                return None
            node = node[part]
        return node

    def num(self, path: str, required=False, positive=False, nonneg=False, integer=False):
        v = self.get(path)
        if v is None:
            if required:
                self.fail(path, "required field missing")
            return None
        try:
            if isinstance(v, bool):
                raise ValueError
            x = float(v)
        except (TypeError, ValueError):
            self.fail(path, f"expected a number, got {v!r}")
            return None
        if x != x or x in (float("inf"), float("-inf")):
            self.fail(path, "must be finite")
        elif positive and not x > 0:
            self.fail(path, f"must be > 0, got {v!r}")
        elif nonneg and x < 0:
            self.fail(path, f"must be >= 0, got {v!r}")
        elif integer and x != int(x):
            self.fail(path, f"must be an integer, got {v!r}")
        return x

    def nums(self, path: str, required=False, nonneg=False, positive=False, min_len=1, scalar_ok=True):
        v = self.get(path)
        if v is None:
            if required:
                self.fail(path, "required field missing")
            return None
        items = v if isinstance(v, (list, tuple)) else ([v] if scalar_ok else None)
        if items is None or len(items) < min_len:
            self.fail(path, f"expected a list of at least {min_len} numbers")
            return None
        out = []
        for i, item in enumerate(items):
            try:
                x = float(item)
            except (TypeError, ValueError):
                self.fail(f"{path}[{i}]", f"expected a number, got {item!r}")
                continue
            if nonneg and x < 0:
                self.fail(f"{path}[{i}]", f"must be >= 0, got {item!r}")
            if positive and not x > 0:
                self.fail(f"{path}[{i}]", f"must be > 0, got {item!r}")
            out.append(x)
        return out

    def choice(self, path: str, options, required=False, default=None):
        v = self.get(path)
        if v is None:
            if required:
                self.fail(path, f"required field missing (one of {', '.join(options)})")
            return default
        if v not in options:
            self.fail(path, f"must be one of {', '.join(options)}, got {v!r}")
        return v

    def mapping(self, path: str, required=False):
        v = self.get(path)
        if v is None:
            if required:
                self.fail(path, "required block missing")
            return False
        if not isinstance(v, Mapping):
            self.fail(path, "expected a mapping")
            return False
        return True


def _check_model(c: _Checker):
    if not c.mapping("model", required=True):
        return
    m = c.get("model")
    if "preset" in m:
        c.choice("model.preset", PRESETS)
        c.num("model.n_modes", positive=True, integer=True)
        c.num("model.span_2pi_hz", positive=True)
        c.num("model.q_int", positive=True)
        c.num("model.g_2pi_hz", positive=True)
        c.num("model.kappa_ext_2pi_hz", positive=True)
        drop = m.get("drop_loss", [])
        for i, d in enumerate(drop if isinstance(drop, list) else [drop]):
            if d not in ("buffer", "storage", "all"):
                c.fail(f"model.drop_loss[{i}]", f"must be buffer, storage or all, got {d!r}")
    else:
        if c.mapping("model.buffer", required=True):
            c.num("model.buffer.omega_b_2pi_hz", required=True, positive=True)
            c.num("model.buffer.kappa_ext_2pi_hz", required=True, positive=True)
            c.num("model.buffer.kappa_int_2pi_hz", nonneg=True)
        st = m.get("storage")
        if not isinstance(st, list) or not st:
            c.fail("model.storage", "expected a non-empty list of storage modes")
        else:
            for k, e in enumerate(st):
                base = f"model.storage.{k}"
                if not isinstance(e, Mapping):
                    c.fail(base, "expected a mapping")
                    continue
                sub = _Checker(e)
                sub.num("omega_k_2pi_hz", required=True, positive=True)
                sub.num("kappa_int_2pi_hz", nonneg=True)
                sub.num("kappa_ext_2pi_hz", nonneg=True)
                if m.get("comb") != "ideal" and "delta_2pi_hz" not in e and "omega_prime_2pi_hz" not in e:
                    sub.fail("delta_2pi_hz", "need delta_2pi_hz or omega_prime_2pi_hz")
                if "g_2pi_hz" not in e and "beta" not in e:
                    sub.fail("g_2pi_hz", "need g_2pi_hz or physical beta")
                sub.num("g_2pi_hz", positive=True)
                sub.num("delta_2pi_hz")
                sub.num("omega_prime_2pi_hz", positive=True)
                for p, msg in sub.problems:
                    c.fail(f"{base}.{p}", msg)
    c.num("model.fsr_2pi_hz", positive=True)
    c.num("model.center_2pi_hz", positive=True)


def _check_pulse(c: _Checker, required=True):
    if not c.mapping("pulse", required=required):
        return
    c.num("pulse.fwhm_s", required=True, positive=True)
    c.num("pulse.center_s")
    c.num("pulse.mean_photons", nonneg=True)
    c.num("pulse.phase_rad")
    c.num("pulse.carrier_2pi_hz")


def _check_grid(c: _Checker):
    if not c.mapping("grid"):
        return
    t0 = c.num("grid.t0_s")
    t1 = c.num("grid.t1_s")
    c.num("grid.dt_s", positive=True)
    if t0 is not None and t1 is not None and t1 <= t0:
        c.fail("grid.t1_s", "must exceed grid.t0_s")


def _check_schedule(c: _Checker, kind: str | None):
    present = c.mapping("schedule", required=kind not in (None, "continuous"))
    if not present:
        return
    found = c.choice("schedule.kind", SCHEDULE_KINDS, default=kind)
    if kind is not None and found != kind:
        c.fail("schedule.kind", f"experiment requires schedule kind {kind!r}")
    if found == "echo_select":
        c.nums("schedule.tau_off_s", required=True, nonneg=True)
        c.num("schedule.t_gate_s", required=True)
    elif found == "translate":
        c.nums("schedule.tau_s", required=True)
        c.num("schedule.t_event_s")
    elif found == "swap":
        v = c.get("schedule.t_event_s")
        if v != "auto":
            c.num("schedule.t_event_s")


def _check_two_pulse(c: _Checker, need_swap: bool):
    if not c.mapping("pulses", required=True):
        return
    a = c.nums("pulses.amplitudes", required=True, min_len=2, scalar_ok=False)
    p = c.nums("pulses.phases_rad", min_len=2, scalar_ok=False)
    if a is not None and len(a) != 2:
        c.fail("pulses.amplitudes", "exactly two amplitudes required")
    if p is not None and len(p) != 2:
        c.fail("pulses.phases_rad", "exactly two phases required")
    c.num("pulses.fwhm_s", required=True, positive=True)
    c.num("pulses.separation_s", required=True, positive=True)
    c.num("pulses.first_center_s")
    sw = c.get("swap_at_s")
    if sw is None:
        if need_swap:
            c.fail("swap_at_s", "required for the swap experiment (seconds or 'auto')")
    elif sw != "auto":
        c.num("swap_at_s")


def _check_mode(c: _Checker):
    if c.mapping("mode", required=True):
        c.num("mode.omega_k_2pi_hz", required=True, positive=True)
        c.num("mode.kappa_ext_2pi_hz", required=True, positive=True)


def validate(data: Any) -> None:
    """Raise :class:`ConfigErrors` listing every schema violation."""
    if not isinstance(data, Mapping):
        raise ConfigErrors([("<root>", "config must be a mapping")])
    c = _Checker(data)
    exp = c.choice("experiment", EXPERIMENTS, required=True)
    if c.mapping("output"):
        if "dir" in data["output"] and not isinstance(data["output"]["dir"], str):
            c.fail("output.dir", "expected a path string")

    if exp in ("s11_sweep", "delay", "echo_select", "translate", "swap", "two_pulse", "tune"):
        _check_model(c)
    if exp == "s11_sweep" and c.mapping("sweep"):
        lo = c.num("sweep.start_hz", positive=True)
        hi = c.num("sweep.stop_hz", positive=True)
        c.num("sweep.points", positive=True, integer=True)
        if lo is not None and hi is not None and hi <= lo:
            c.fail("sweep.stop_hz", "must exceed sweep.start_hz")
    if exp in ("delay", "echo_select", "translate"):
        _check_pulse(c)
        _check_grid(c)
        if c.mapping("fidelity"):
            c.num("fidelity.search_min_s")
            c.num("fidelity.search_max_s")
    if exp == "delay":
        _check_schedule(c, None)
    if exp == "echo_select":
        _check_schedule(c, "echo_select")
    if exp == "translate":
        _check_schedule(c, "translate")
    if exp in ("swap", "two_pulse"):
        _check_two_pulse(c, exp == "swap")
        _check_grid(c)
    if exp == "mpo_curve":
        if c.mapping("mpo", required=True):
            c.num("mpo.kappa2_over_kappa1", required=True, nonneg=True)
            grid = c.nums("mpo.eps2_over_kappa1", required=True, nonneg=True)
            if grid and any(b < a for a, b in zip(grid, grid[1:])):
                c.fail("mpo.eps2_over_kappa1", "grid must be sorted ascending")
            v = c.num("mpo.fock_cutoff", positive=True, integer=True)
            if v is not None and 0 < v < 5:
                c.fail("mpo.fock_cutoff", "must be >= 5")
    if exp == "calibrate":
        _check_mode(c)
        if not (c.get("data.threshold_csv") or c.mapping("synthetic")):
            c.fail("data.threshold_csv", "need data.threshold_csv or a synthetic block")
        if c.get("synthetic") is not None and c.mapping("synthetic"):
            c.num("synthetic.drive_scale", required=True, positive=True)
            c.num("synthetic.gain_db", required=True)
            c.num("synthetic.kappa2_over_kappa1", required=True, positive=True)
            c.nums("synthetic.drive", required=True, positive=True, min_len=4, scalar_ok=False)
            c.num("synthetic.noise", nonneg=True)
            c.num("synthetic.seed", nonneg=True, integer=True)
    if exp == "added_noise":
        _check_mode(c)
        c.num("gain_db", required=True)
        if not (c.get("data.spectrum_csv") or c.mapping("synthetic")):
            c.fail("data.spectrum_csv", "need data.spectrum_csv or a synthetic block")
        if c.get("synthetic") is not None and c.mapping("synthetic"):
            c.num("synthetic.photons", required=True, nonneg=True)
            c.num("synthetic.linewidth_hz", required=True, positive=True)
            c.num("synthetic.noise", nonneg=True)
            c.num("synthetic.seed", nonneg=True, integer=True)
    if exp == "tune":
        if c.mapping("target", required=True):
            kind = c.choice("target.kind", ("max_fidelity", "linear_phase"), required=True)
            if kind == "max_fidelity":
                _check_pulse(c)
            if kind == "linear_phase":
                c.num("target.band_2pi_hz", positive=True)
        c.num("budget", positive=True, integer=True)
        if c.get("budget") is not None and c.num("budget") is not None and c.num("budget") < 10:
            c.fail("budget", "must be >= 10")
        c.num("seed", nonneg=True, integer=True)
        if c.mapping("jitter"):
            c.num("jitter.delta_frac", nonneg=True)
            c.num("jitter.seed", nonneg=True, integer=True)
    if c.problems:
        # de-duplicate while keeping order
        seen, uniq = set(), []
        for p in c.problems:
            if p not in seen:
                seen.add(p)
                uniq.append(p)
        raise ConfigErrors(uniq)


def loads(text: str, path: Path | None = None) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigErrors([("<root>", f"not valid YAML: {exc}")]) from exc
    validate(data)
    return ExperimentConfig(data["experiment"], data, path, text)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigErrors([("<file>", f"cannot read {path}: {exc}")]) from exc
    return loads(text, path)


def num(block: Mapping, key: str, default=None):
    """Fetch a validated number from a config block."""
    v = block.get(key, default)
    return None if v is None else float(v)
