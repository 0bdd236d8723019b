"""Control schedules for the four drive protocols, and temporal-mode fidelity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import SimulationResult, TimeTrace, composite_pulse, gaussian_pulse, simulate
from .errors import ScheduleError, UndefinedFidelity
from .model import DelayLineModel


@dataclass(frozen=True)
class Segment:
    """Drive state over ``[t_start, t_end)``: per-mode on/off, phase offset on g_k, detuning sign."""

    t_start: float
    t_end: float
    on: tuple
    phase: tuple
    sign: tuple


@dataclass(frozen=True)
class ControlSchedule:
    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ScheduleError("schedule needs at least one segment")
        for a, b in zip(segs, segs[1:]):
            if not np.isclose(a.t_end, b.t_start, rtol=0, atol=1e-15):
                raise ScheduleError("schedule segments must be contiguous")
        for s in segs:
            if s.t_end < s.t_start:
                raise ScheduleError("segment ends before it starts")
            if not np.all(np.isfinite(s.phase)):
                raise ScheduleError("phase offsets must be finite")
            if any(x not in (1, -1) for x in s.sign):
                raise ScheduleError("detuning signs must be +1 or -1")
        object.__setattr__(self, "segments", segs)

    @property
    def window(self) -> tuple[float, float]:
        return self.segments[0].t_start, self.segments[-1].t_end

    def state_at(self, t: float) -> Segment:
        for s in self.segments:
            if s.t_start <= t < s.t_end:
                return s
        return self.segments[-1]

    def equivalent_after(self, other: "ControlSchedule", t: float) -> bool:
        """True when both schedules apply the same drive state from ``t`` on."""
        times = sorted({s.t_start for s in self.segments + other.segments if s.t_start >= t} | {t})
        for x in times:
            a, b = self.state_at(x), other.state_at(x)
            if (a.on != b.on or a.sign != b.sign
                    or not np.allclose(np.angle(np.exp(1j * (np.array(a.phase) - np.array(b.phase)))), 0)):
                return False
        return True


# protocol specifications


@dataclass(frozen=True)
class Continuous:
    pass


@dataclass(frozen=True)
class EchoSelect:
    tau_off: float
    t_gate: float


@dataclass(frozen=True)
class Translate:
    tau: float
    t_event: float


@dataclass(frozen=True)
class SwapDetunings:
    t_event: float


def build_schedule(model: DelayLineModel, spec, window: tuple[float, float]) -> ControlSchedule:
    """Turn one protocol spec, or a sequence of them, into piecewise-constant segments.

    Events of several specs are applied in time order; simultaneous
    Translate events add up, any other coincidence is a conflict.  Translate adds
    ``Delta_k * tau`` to each mode's phase, using the detuning in force at
    the event; SwapDetunings reflects each detuning about the band centre.
    """
    t0, t1 = window
    specs = list(spec) if isinstance(spec, (list, tuple)) else [spec]
    n = model.n_modes
    events: list[tuple[float, str, object]] = []
    gates = []
    for s in specs:
        if isinstance(s, Continuous):
            continue
        if isinstance(s, EchoSelect):
            if s.tau_off < 0:
                raise ScheduleError("tau_off must be >= 0")
            if s.tau_off == 0:
                continue
            gates.append((s.t_gate, s.t_gate + s.tau_off))
            events.append((s.t_gate, "off", None))
            events.append((s.t_gate + s.tau_off, "on", None))
        elif isinstance(s, Translate):
            if s.tau == 0:
                continue
            events.append((s.t_event, "translate", s.tau))
        elif isinstance(s, SwapDetunings):
            events.append((s.t_event, "swap", None))
        else:
            raise ScheduleError(f"unknown protocol {s!r}")

    for t, _, _ in events:
        if not t0 <= t <= t1:
            raise ScheduleError(f"event at {t:.6g} s lies outside window [{t0:.6g}, {t1:.6g}]")
    gates.sort()
    for (a0, a1), (b0, b1) in zip(gates, gates[1:]):
        if b0 < a1:
            raise ScheduleError("conflicting schedule: drive-off windows overlap")
    by_time: dict = {}
    for t, kind, _ in events:
        by_time.setdefault(t, []).append(kind)
    for t, kinds in by_time.items():
        # phase translations commute with each other, nothing else may coincide
        if len(kinds) > 1 and any(k != "translate" for k in kinds):
            raise ScheduleError(f"conflicting schedule: {' and '.join(kinds)} both at t = {t:.6g} s")

    on = np.ones(n, dtype=bool)
    phase = np.zeros(n)
    sign = np.ones(n, dtype=int)
    offset = model.center_offset
    segments = []
    start = t0
    for t, kind, arg in sorted(events, key=lambda e: e[0]):
        if t > start:
            segments.append(Segment(start, t, tuple(on), tuple(phase), tuple(int(x) for x in sign)))
            start = t
        if kind == "off":
            on[:] = False
        elif kind == "on":
            on[:] = True
        elif kind == "translate":
            delta = offset + sign * (model.deltas - offset)
            phase = phase + delta * arg
        elif kind == "swap":
            sign = -sign
    segments.append(Segment(start, t1, tuple(on), tuple(phase), tuple(int(x) for x in sign)))
    return ControlSchedule(tuple(segments))


# fidelity


@dataclass(frozen=True)
class FidelityReport:
    f_shape: float
    f_loss_inclusive: float
    best_delay: float

    def to_dict(self) -> dict:
        return {"f_shape": self.f_shape, "f_loss_inclusive": self.f_loss_inclusive,
                "best_delay_s": self.best_delay}


def _centroid_and_fwhm(trace: TimeTrace) -> tuple[float, float]:
    w = trace.flux
    t = trace.times
    c = float(np.sum(w * t) / np.sum(w))
    var_flux = float(np.sum(w * (t - c) ** 2) / np.sum(w))
    # a Gaussian field with width sigma has flux variance sigma^2 / 2
    return c, 2.0 * np.sqrt(2.0 * np.log(2.0)) * np.sqrt(2.0 * var_flux)


def _parabolic(y_m, y_0, y_p):
    den = y_m - 2 * y_0 + y_p
    if den >= 0:
        return 0.0, y_0
    shift = 0.5 * (y_m - y_p) / den
    return shift, y_0 - 0.25 * (y_m - y_p) * shift


def fidelity(input: TimeTrace, output: TimeTrace, search: Sequence[float],
             exclude_before: float | None = None) -> FidelityReport:
    """Best overlap ``|sum f*(t - tau) g(t) dt|^2`` over delays ``tau`` in ``search``.

    ``f`` is the input normalised to unit energy.  The loss-inclusive value
    scales the output by the same constant; the shape-only value normalises
    the output itself.  Output samples before ``exclude_before`` are
    dropped; the default sits ``min(2 FWHM, tau_min / 2)`` after the input
    centroid so the prompt reflection is ignored.
    """
    if len(input) != len(output) or not np.isclose(input.dt, output.dt) or not np.isclose(input.t0, output.t0):
        raise ValueError("input and output traces must share sampling")
    dt = input.dt
    energy = float(np.sum(input.flux) * dt)
    if energy <= 0:
        raise UndefinedFidelity("undefined fidelity: input has zero energy")
    tau_min, tau_max = float(search[0]), float(search[1])
    dtau = float(search[2]) if len(search) > 2 and search[2] else dt

    norm = np.sqrt(energy)
    f = input.samples / norm
    g = output.samples / norm
    if exclude_before is None and tau_min > 0:
        c, fwhm = _centroid_and_fwhm(input)
        exclude_before = c + min(2 * fwhm, 0.5 * tau_min)
    if exclude_before is not None:
        g = np.where(output.times >= exclude_before, g, 0.0)
    g_energy = float(np.sum(np.abs(g) ** 2) * dt)

    n = f.size
    size = 1 << int(np.ceil(np.log2(2 * n)))
    # circular cross-correlation: corr[s] = sum_j conj(f_j) g_{j+s}, negative lags wrap around
    corr = np.fft.ifft(np.conj(np.fft.fft(f, size)) * np.fft.fft(g, size))
    power = np.abs(corr * dt) ** 2

    def overlap(s: int) -> float:
        if s >= n or s <= -n:
            return 0.0
        return float(power[s % size])

    lo = int(np.ceil(tau_min / dt - 1e-9))
    hi = int(np.floor(tau_max / dt + 1e-9))
    if hi < lo:
        raise ValueError("empty delay search window")
    stride = max(1, int(round(dtau / dt)))
    shifts = np.arange(lo, hi + 1, stride)
    values = np.where(np.abs(shifts) < n, power[shifts % size], 0.0)
    best = int(shifts[int(np.argmax(values))])
    if stride > 1:
        window = range(max(lo, best - stride), min(hi, best + stride) + 1)
        best = max(window, key=overlap)
    f0 = overlap(best)
    frac, f_peak = _parabolic(overlap(best - 1), f0, overlap(best + 1))
    f_peak = max(float(f_peak), f0)
    f_shape = 0.0 if g_energy == 0 else float(np.clip(f_peak / g_energy, 0.0, 1.0))
    f_loss = min(float(np.clip(f_peak, 0.0, 1.0)), f_shape)
    return FidelityReport(f_shape, f_loss, (best + frac) * dt)


# analysis helpers


def peak_time(trace: TimeTrace, after: float | None = None, before: float | None = None,
              values: np.ndarray | None = None) -> float:
    """Time of the flux maximum inside ``[after, before]``, refined by a parabola."""
    y = trace.flux if values is None else np.asarray(values)
    t = trace.times
    mask = np.ones(t.size, bool)
    if after is not None:
        mask &= t >= after
    if before is not None:
        mask &= t <= before
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty peak search window")
    i = idx[int(np.argmax(y[idx]))]
    if 0 < i < t.size - 1:
        frac, _ = _parabolic(y[i - 1], y[i], y[i + 1])
        return float(t[i] + frac * trace.dt)
    return float(t[i])


def find_pulses(trace: TimeTrace, count: int, after: float, min_separation: float):
    """Greedy peak picking on the flux: the ``count`` largest maxima at least ``min_separation`` apart.

    Returns ``(time, complex sample)`` pairs sorted by time.
    """
    t = trace.times
    flux = trace.flux.copy()
    flux[t < after] = 0.0
    found = []
    for _ in range(count):
        i = int(np.argmax(flux))
        if flux[i] <= 0:
            break
        found.append((float(t[i]), complex(trace.samples[i])))
        flux[np.abs(t - t[i]) < min_separation] = 0.0
    return sorted(found)


def default_swap_time(model: DelayLineModel, first_center: float, separation: float) -> float:
    """Midway between the second input pulse and the first pulse's echo."""
    return first_center + 0.5 * (separation + model.round_trip_time)


def two_pulse_experiment(model: DelayLineModel, amplitudes=(1.0, 1.0), phases=(np.pi, 0.0),
                         fwhm: float = 283e-9, separation: float = 1e-6, swap_at: float | None = None,
                         first_center: float = 0.0, grid=None) -> SimulationResult:
    """Send two Gaussian pulses and optionally swap the detunings at ``swap_at``.

    Amplitudes are field amplitudes: pulse ``j`` carries ``|A_j|^2`` photons.
    """
    if separation <= 0:
        raise ValueError("separation must be positive")
    pulses = [
        gaussian_pulse(first_center + j * separation, fwhm, float(abs(a) ** 2), float(ph + np.angle(a)))
        for j, (a, ph) in enumerate(zip(amplitudes, phases))
    ]
    pulse = composite_pulse(pulses)
    t_rt = model.round_trip_time
    if grid is None:
        t0 = first_center - 4 * fwhm
        t1 = first_center + separation + 2.5 * t_rt
        grid = (t0, t1, None)
    spec = Continuous() if swap_at is None else SwapDetunings(swap_at)
    schedule = build_schedule(model, spec, (grid[0], grid[1]))
    return simulate(model, schedule, pulse, grid)


def line_phase(output: TimeTrace, input_phase: float, after: float) -> float:
    """Phase the line adds to a pulse: arg of the strongest output sample after ``after`` minus ``input_phase``."""
    t = output.times
    flux = np.where(t >= after, output.flux, 0.0)
    i = int(np.argmax(flux))
    if flux[i] <= 0:
        raise ValueError("no output after the given time")
    return float(np.angle(output.samples[i]) - input_phase)


def quadrature_peaks(output: TimeTrace, phases, theta: float, after: float) -> list[float]:
    """Peak time of ``Re(out exp(-i(phi_j + theta)))`` for each input phase ``phi_j``.

    Pulses sent with distinct phases are told apart by the quadrature they
    come back in; ``theta`` is the line phase from :func:`line_phase`.
    """
    out = []
    for ph in phases:
        proj = np.real(output.samples * np.exp(-1j * (ph + theta)))
        out.append(peak_time(output, after=after, values=proj))
    return out
