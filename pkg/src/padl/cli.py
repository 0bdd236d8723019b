"""Command-line experiment runner.

    padl run <config.yaml> [--out DIR]
    padl validate <config.yaml>
    padl version

``run`` also accepts a ``manifest.json`` written by an earlier run and
replays the configuration recorded in it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, io, mpo
from ._kernels import BACKEND
from .config import ConfigErrors, ExperimentConfig, load, loads, num
from .dynamics import energy_ledger, gaussian_pulse, simulate
from .errors import (ConfigError, DataError, FitError, ModelError, PadlError, ScheduleError, SimulationError,
                     SingularEvaluation, SteadyStateError, UndefinedFidelity, UnresolvablePhaseSlope)
from .model import build_delay_line, dbp, group_delay, model_report, s11
from .presets import fitted_delay_line, ideal_comb
from .protocols import (Continuous, EchoSelect, SwapDetunings, Translate, build_schedule, default_swap_time,
                        fidelity, line_phase, peak_time, quadrature_peaks, two_pulse_experiment)
from .tuner import TuneTarget, tune_drives

TWO_PI = 2 * np.pi

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


# model and pulse blocks


def make_model(block: dict):
    if "preset" not in block:
        model = build_delay_line(block)
    elif block["preset"] == "fitted":
        model = fitted_delay_line()
    else:
        kw = {}
        if "n_modes" in block:
            kw["n_modes"] = int(num(block, "n_modes"))
        if "q_int" in block:
            kw["q_int"] = num(block, "q_int")
        if "span_2pi_hz" in block:
            kw["span"] = TWO_PI * num(block, "span_2pi_hz")
        if "g_2pi_hz" in block:
            kw["g"] = TWO_PI * num(block, "g_2pi_hz")
        if "kappa_ext_2pi_hz" in block:
            kw["kappa_ext"] = TWO_PI * num(block, "kappa_ext_2pi_hz")
        model = ideal_comb(**kw)
    drop = block.get("drop_loss", [])
    for d in drop if isinstance(drop, list) else [drop]:
        if d in ("buffer", "all"):
            model = model.without_buffer_loss()
        if d in ("storage", "all"):
            model = model.without_intrinsic_loss()
    return model


def make_pulse(block: dict):
    carrier = block.get("carrier_2pi_hz")
    return gaussian_pulse(
        num(block, "center_s", 0.0),
        num(block, "fwhm_s"),
        num(block, "mean_photons", 1.0),
        num(block, "phase_rad", 0.0),
        None if carrier is None else TWO_PI * float(carrier),
    )


def _grid(cfg: ExperimentConfig, default):
    g = cfg.section("grid")
    return (num(g, "t0_s", default[0]), num(g, "t1_s", default[1]), num(g, "dt_s", None))


def _t_rt(model) -> float:
    t = model.round_trip_time
    if t is None:
        raise ModelError("model has no round-trip time: set fsr_2pi_hz or use an evenly spaced comb")
    return t


def _search(cfg: ExperimentConfig, t_rt: float):
    f = cfg.section("fidelity")
    return (num(f, "search_min_s", 0.5 * t_rt), num(f, "search_max_s", 1.5 * t_rt))


def _schedule_spec(block: dict, model, t_rt: float):
    kind = block.get("kind", "continuous")
    if kind == "continuous":
        return Continuous()
    if kind == "echo_select":
        return EchoSelect(float(np.atleast_1d(block["tau_off_s"])[0]), num(block, "t_gate_s"))
    if kind == "translate":
        return Translate(float(np.atleast_1d(block["tau_s"])[0]), num(block, "t_event_s", 0.5 * t_rt))
    return SwapDetunings(num(block, "t_event_s"))


# experiments


def run_s11_sweep(cfg, out: Path) -> dict:
    model = make_model(cfg.section("model"))
    sw = cfg.section("sweep")
    center = model.center_freq / TWO_PI
    half = 1.5 * model.buffer.kappa_ext / TWO_PI
    points = int(num(sw, "points", 2001))
    freq = np.linspace(num(sw, "start_hz", center - half), num(sw, "stop_hz", center + half), points)
    if np.any(model.kappas == 0):
        # keep samples off the poles of lossless storage modes
        freq = freq + 0.3819660113 * (freq[1] - freq[0])
    s = s11(model, TWO_PI * freq)
    phase = np.unwrap(np.angle(s))
    tau_local = np.gradient(phase, TWO_PI * freq)
    io.write_s11(out / "s11.csv", freq, s)
    io.write_csv(out / "delay.csv", "delay", (freq, phase, tau_local))
    step = 0.5 * model.fsr if model.fsr else TWO_PI * 100.0
    return {
        "group_delay_center_s": group_delay(model, model.center_freq, step=step),
        "group_delay_step_2pi_hz": step / TWO_PI,
        "round_trip_time_s": model.round_trip_time,
        "dbp": dbp(model),
        "min_abs_s11": float(np.min(np.abs(s))),
        "max_abs_s11": float(np.max(np.abs(s))),
    }


def _delay_run(model, pulse, spec, grid):
    schedule = build_schedule(model, spec, (grid[0], grid[1]))
    return simulate(model, schedule, pulse, grid)


def run_delay(cfg, out: Path) -> dict:
    model = make_model(cfg.section("model"))
    pulse = make_pulse(cfg.section("pulse"))
    t_rt = _t_rt(model)
    grid = _grid(cfg, (pulse.center - 4 * pulse.fwhm, pulse.center + 1.6 * t_rt))
    spec = _schedule_spec(cfg.section("schedule"), model, t_rt)
    res = _delay_run(model, pulse, spec, grid)
    io.write_trace(out / "input.csv", res.input)
    io.write_trace(out / "output.csv", res.output)
    search = _search(cfg, t_rt)
    rep = fidelity(res.input, res.output, search)
    ledger = energy_ledger(res, model)
    return {
        "peak_time_s": peak_time(res.output),
        "delayed_peak_time_s": peak_time(res.output, after=pulse.center + search[0]),
        "round_trip_time_s": t_rt,
        "fidelity": rep.to_dict(),
        "energy": {"input": ledger.input_photons, "output": ledger.output_photons,
                   "dissipated": ledger.dissipated_photons, "stored_final": ledger.stored_photons_final},
        "dt_s": res.input.dt,
        "backend": res.backend,
    }


def run_echo_select(cfg, out: Path) -> dict:
    model = make_model(cfg.section("model"))
    pulse = make_pulse(cfg.section("pulse"))
    t_rt = _t_rt(model)
    sch = cfg.section("schedule")
    taus = [float(v) for v in np.atleast_1d(sch["tau_off_s"])]
    t_gate = num(sch, "t_gate_s")
    grid = _grid(cfg, (pulse.center - 4 * pulse.fwhm, t_gate + max(taus) + 1.6 * t_rt))
    rows = []
    for i, tau in enumerate(taus):
        res = _delay_run(model, pulse, EchoSelect(tau, t_gate), grid)
        io.write_trace(out / f"output_{i:03d}.csv", res.output)
        t_peak = peak_time(res.output, after=t_gate)
        predicted = max(1, int(np.ceil((t_gate + tau) / t_rt - 1e-12)))
        rows.append({"tau_off_s": tau, "peak_time_s": t_peak, "predicted_echo": predicted,
                     "observed_echo": int(round((t_peak - pulse.center) / t_rt)),
                     "offset_over_t_rt": (t_peak - pulse.center - predicted * t_rt) / t_rt})
    return {"round_trip_time_s": t_rt, "t_gate_s": t_gate, "sweep": rows}


def run_translate(cfg, out: Path) -> dict:
    model = make_model(cfg.section("model"))
    pulse = make_pulse(cfg.section("pulse"))
    t_rt = _t_rt(model)
    sch = cfg.section("schedule")
    taus = np.array([float(v) for v in np.atleast_1d(sch["tau_s"])])
    t_event = num(sch, "t_event_s", 0.5 * t_rt)
    span = float(np.max(np.abs(taus)))
    grid = _grid(cfg, (pulse.center - 4 * pulse.fwhm, pulse.center + 1.5 * t_rt + span))
    peaks = []
    dt = None
    for i, tau in enumerate(taus):
        res = _delay_run(model, pulse, Translate(float(tau), t_event), grid)
        dt = res.output.dt
        io.write_trace(out / f"output_{i:03d}.csv", res.output)
        peaks.append(peak_time(res.output, after=t_event))
    peaks = np.array(peaks)
    shift = peaks - peaks[np.argmin(np.abs(taus))]
    report = {"round_trip_time_s": t_rt, "t_event_s": t_event, "dt_s": dt,
              "tau_s": taus, "peak_time_s": peaks}
    if taus.size >= 2:
        slope, icpt = np.polyfit(taus, shift, 1)
        resid = shift - (slope * taus + icpt)
        report.update(slope=slope, max_residual_s=float(np.max(np.abs(resid))),
                      max_residual_dt=float(np.max(np.abs(resid)) / dt))
    return report


def _two_pulse(cfg, out: Path, swap: bool) -> dict:
    model = make_model(cfg.section("model"))
    p = cfg.section("pulses")
    amps = [float(a) for a in p["amplitudes"]]
    phases = [float(v) for v in p.get("phases_rad", [np.pi, 0.0])]
    fwhm = num(p, "fwhm_s")
    sep = num(p, "separation_s")
    c0 = num(p, "first_center_s", 0.0)
    t_rt = _t_rt(model)
    g = cfg.section("grid")
    grid = None
    if g:
        grid = _grid(cfg, (c0 - 4 * fwhm, c0 + sep + 2.5 * t_rt))
    swap_cfg = cfg.data.get("swap_at_s")
    swap_at = None
    if swap_cfg is not None:
        swap_at = default_swap_time(model, c0, sep) if swap_cfg == "auto" else float(swap_cfg)

    after = max(c0 + sep + 2 * fwhm, c0 + 0.5 * t_rt)
    base = two_pulse_experiment(model, amps, phases, fwhm, sep, None, c0, grid)
    theta = line_phase(base.output, phases[0] + float(np.angle(amps[0])), after)
    io.write_trace(out / "input.csv", base.input)
    io.write_trace(out / "output_continuous.csv", base.output)
    phases_eff = [ph + float(np.angle(a)) for a, ph in zip(amps, phases)]
    report = {"round_trip_time_s": t_rt, "line_phase_rad": theta, "search_after_s": after,
              "continuous": _order(base.output, phases_eff, theta, after)}
    if swap_at is not None:
        res = two_pulse_experiment(model, amps, phases, fwhm, sep, swap_at, c0, grid)
        io.write_trace(out / "output_swapped.csv", res.output)
        report["swap_at_s"] = swap_at
        report["swapped"] = _order(res.output, phases_eff, theta, after)
        report["order_reversed"] = report["swapped"]["order"] == report["continuous"]["order"][::-1]
    elif swap:
        raise ConfigError("swap_at_s", "required for the swap experiment")
    return report


def _order(output, phases, theta, after) -> dict:
    times = quadrature_peaks(output, phases, theta, after)
    flux = [float(np.interp(t, output.times, output.flux)) for t in times]
    return {"peak_times_s": times, "peak_flux": flux, "order": [int(i) + 1 for i in np.argsort(times)]}


def run_swap(cfg, out):
    return _two_pulse(cfg, out, True)


def run_two_pulse(cfg, out):
    return _two_pulse(cfg, out, False)


def run_mpo_curve(cfg, out: Path) -> dict:
    m = cfg.section("mpo")
    ratio = num(m, "kappa2_over_kappa1")
    grid = np.array([float(v) for v in np.atleast_1d(m["eps2_over_kappa1"])])
    base = mpo.MPOParams(0.0, 1.0, ratio)
    # fock_cutoff caps the adaptive cutoff search
    hard_max = int(num(m, "fock_cutoff", mpo.HARD_MAX_CUTOFF))
    n, n_cl, cutoffs = [], [], []
    for e in grid:
        ss = mpo.mpo_steady_state(base.with_eps2(float(e)), hard_max=hard_max)
        n.append(ss.n)
        cutoffs.append(ss.cutoff)
        n_cl.append(mpo.classical_steady_state(base.with_eps2(float(e))).n)
    io.write_csv(out / "curve.csv", "curve", (grid, n, n_cl))
    return {"kappa2_over_kappa1": ratio, "eps2_over_kappa1": grid, "n": n, "n_classical": n_cl,
            "cutoff": cutoffs, "threshold_eps2_over_kappa1": 0.25}


def _mode(cfg):
    m = cfg.section("mode")
    return TWO_PI * num(m, "omega_k_2pi_hz"), TWO_PI * num(m, "kappa_ext_2pi_hz")


def run_calibrate(cfg, out: Path) -> dict:
    omega_k, kappa_ext = _mode(cfg)
    syn = cfg.section("synthetic")
    path = cfg.section("data").get("threshold_csv")
    truth = None
    if path:
        cols = io.read_csv(cfg.resolve(path), "threshold")
        drive, psd = cols["drive_amplitude"], cols["integrated_psd"]
    else:
        drive = np.array([float(v) for v in syn["drive"]])
        truth = {"drive_scale": num(syn, "drive_scale"), "gain_db": num(syn, "gain_db"),
                 "kappa2_over_kappa1": num(syn, "kappa2_over_kappa1")}
        psd = mpo.synthetic_threshold_data(drive, truth["drive_scale"], truth["gain_db"],
                                           truth["kappa2_over_kappa1"], omega_k, kappa_ext)
        noise = num(syn, "noise", 0.0)
        if noise:
            rng = np.random.default_rng(int(num(syn, "seed", 0)))
            psd = psd * (1 + noise * rng.standard_normal(psd.size))
        io.write_csv(out / "threshold.csv", "threshold", (drive, psd))
    fit = mpo.fit_threshold(drive, psd, omega_k, kappa_ext)
    report = {"omega_k/2pi_hz": omega_k / TWO_PI, **fit.to_dict(), "nfev": fit.nfev}
    if truth is not None:
        report["truth"] = truth
        report["relative_error"] = {k: abs(report[k] - v) / abs(v) for k, v in truth.items()}
    return report


def run_added_noise(cfg, out: Path) -> dict:
    omega_k, kappa_ext = _mode(cfg)
    gain_db = num(cfg.data, "gain_db")
    syn = cfg.section("synthetic")
    path = cfg.section("data").get("spectrum_csv")
    truth = None
    if path:
        cols = io.read_csv(cfg.resolve(path), "spectrum")
        freq, psd = cols["freq_hz"], cols["psd"]
    else:
        truth = num(syn, "photons")
        lw = num(syn, "linewidth_hz")
        center = num(syn, "center_hz", 0.0)
        freq = center + np.linspace(-10 * lw, 10 * lw, int(num(syn, "points", 801)))
        psd = mpo.spectrum_for_photons(truth, gain_db, omega_k, kappa_ext, freq, center, lw,
                                       num(syn, "offset", 0.0))
        noise = num(syn, "noise", 0.0)
        if noise:
            rng = np.random.default_rng(int(num(syn, "seed", 0)))
            psd = psd + noise * float(np.max(psd)) * rng.standard_normal(psd.size)
        io.write_csv(out / "spectrum.csv", "spectrum", (freq, psd))
    fit = mpo.fit_lorentzian(freq, psd)
    n = mpo.added_noise(fit, gain_db, omega_k, kappa_ext)
    report = {"lorentzian": fit.to_dict(), "added_photons": n, "gain_db": gain_db,
              "omega_k/2pi_hz": omega_k / TWO_PI}
    if truth is not None:
        report["truth_photons"] = truth
        report["relative_error"] = abs(n - truth) / truth if truth else None
    return report


def run_tune(cfg, out: Path) -> dict:
    model = make_model(cfg.section("model"))
    jit = cfg.section("jitter")
    if jit:
        rng = np.random.default_rng(int(num(jit, "seed", 0)))
        frac = num(jit, "delta_frac", 0.0)
        couplings = [dataclasses.replace(c, delta=c.delta * (1 + frac * rng.uniform(-1, 1)))
                     for c in model.couplings]
        model = model.replace_storage(couplings=couplings)
    t = cfg.section("target")
    t_rt = _t_rt(model)
    params = tuple(t.get("params", ["g", "delta"]))
    if t["kind"] == "linear_phase":
        half = 0.5 * (TWO_PI * num(t, "band_2pi_hz") if "band_2pi_hz" in t else 0.4 * model.buffer.kappa_ext)
        c = model.center_freq
        target = TuneTarget("linear_phase", t_rt=t_rt, band=(c - half, c + half), params=params)
    else:
        target = TuneTarget("max_fidelity", t_rt=t_rt, pulse=make_pulse(cfg.section("pulse")), params=params)
    result = tune_drives(model, target, budget=int(num(cfg.data, "budget", 200)), seed=int(num(cfg.data, "seed", 0)))
    io.write_json(out / "tuned_model.json", model_report(result.model))
    io.write_json(out / "initial_model.json", model_report(model))
    return {"kind": t["kind"], "objective_trace": result.trace, "initial_objective": result.trace[0],
            "final_objective": result.trace[-1], "stalled": result.stalled, "evaluations": result.evaluations}


RUNNERS = {
    "s11_sweep": run_s11_sweep,
    "delay": run_delay,
    "echo_select": run_echo_select,
    "translate": run_translate,
    "swap": run_swap,
    "two_pulse": run_two_pulse,
    "mpo_curve": run_mpo_curve,
    "calibrate": run_calibrate,
    "added_noise": run_added_noise,
    "tune": run_tune,
}

# numeric failures first: SingularEvaluation is a ModelError but means the evaluation itself failed
NUMERIC_ERRORS = (SimulationError, SteadyStateError, FitError, SingularEvaluation, UnresolvablePhaseSlope,
                  UndefinedFidelity, FloatingPointError, np.linalg.LinAlgError)
VALIDATION_ERRORS = (ConfigError, ModelError, DataError, ScheduleError, ValueError, KeyError, OSError)


def versions() -> dict:
    return {"padl": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernel_backend": BACKEND}


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    if override is not None:
        return Path(override)
    rel = cfg.section("output").get("dir")
    if rel is None:
        stem = cfg.path.stem if cfg.path is not None else cfg.experiment
        return cfg.base_dir / f"{stem}_out"
    return cfg.resolve(rel)


def run_experiment(cfg: ExperimentConfig, out: Path) -> dict:
    """Run one experiment, write its artifacts and a manifest; returns the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    report = RUNNERS[cfg.experiment](cfg, out)
    io.write_json(out / "report.json", {"experiment": cfg.experiment, **report})
    wall = time.perf_counter() - start
    outputs = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    for name in outputs:
        if name.endswith(".csv"):
            io.validate_csv(out / name)
    manifest = {
        "experiment": cfg.experiment,
        "config_sha256": cfg.sha256,
        "config_path": str(cfg.path) if cfg.path is not None else None,
        "config_text": cfg.text,
        "versions": versions(),
        "wall_time_s": wall,
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": outputs,
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest


def load_any(path) -> ExperimentConfig:
    """Load a YAML config, or the config recorded in a run manifest."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            man = json.loads(path.read_text())
            text = man["config_text"]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigErrors([("<manifest>", f"cannot read recorded config from {path}: {exc}")]) from exc
        origin = man.get("config_path")
        return loads(text, Path(origin) if origin else path)
    return load(path)


def _report_config_error(exc: ConfigError):
    if isinstance(exc, ConfigErrors):
        for field_path, msg in exc.problems:
            print(f"config error: {field_path}: {msg}", file=sys.stderr)
    else:
        print(f"config error: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="padl", description="Delay-line experiment runner.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config (or replay a manifest)")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (default from the config)")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    sub.add_parser("version", help="print versions")
    args = parser.parse_args(argv)

    if args.command == "version":
        for k, v in versions().items():
            print(f"{k} {v}")
        return EXIT_OK

    try:
        cfg = load_any(args.config)
        if args.command == "validate":
            # building the model catches cross-field problems the schema cannot see
            if "model" in cfg.data:
                make_model(cfg.section("model"))
            print(f"ok: {cfg.experiment} config {args.config}")
            return EXIT_OK
        out = output_dir(cfg, args.out)
        manifest = run_experiment(cfg, out)
    except ConfigError as exc:
        _report_config_error(exc)
        return EXIT_VALIDATION
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure ({type(exc).__module__}.{type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except VALIDATION_ERRORS as exc:
        print(f"invalid input ({type(exc).__module__}.{type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PadlError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"wrote {len(manifest['outputs'])} artifacts to {out} in {manifest['wall_time_s']:.2f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
