"""Mean-field time-domain simulation of the buffer and storage amplitudes.

The state vector is ``[beta, alpha_1, ..., alpha_N]`` in the frame where the
beamsplitter Hamiltonian is time independent (buffer frame).  Input pulses
carry an explicit carrier detuning in that frame; by default they sit at the
model's band centre.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from . import _kernels
from .errors import IntegrationBlewUp, NonphysicalRun, SimulationError, TimestepTooCoarse
from .model import DelayLineModel

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
MAX_RATE_DT = 0.02


@dataclass(frozen=True)
class PulseEnvelope:
    """Gaussian field envelope, or a composite of several.

    ``carrier`` is the angular-frequency offset of the pulse in the buffer
    frame; ``None`` places it at the band centre of whatever model it is sent
    into.
    """

    kind: str
    center: float
    fwhm: float
    mean_photons: float
    phase: float = 0.0
    components: tuple = ()
    carrier: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "composite"):
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if self.kind == "gaussian":
            if not self.fwhm > 0:
                raise ValueError("fwhm must be positive")
            if self.mean_photons < 0:
                raise ValueError("mean_photons must be non-negative")
        else:
            centers = [c.center for c in self.components]
            if not self.components or any(b < a for a, b in zip(centers, centers[1:])):
                raise ValueError("composite components must be non-empty and time-ordered")

    @property
    def sigma(self) -> float:
        return self.fwhm * FWHM_TO_SIGMA

    @property
    def amplitude(self) -> float:
        """Peak field amplitude sqrt(photons/s)."""
        return float(np.sqrt(self.mean_photons / (self.sigma * np.sqrt(np.pi))))

    def sample(self, t, carrier: float = 0.0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "composite":
            out = np.zeros(t.shape, dtype=complex)
            for comp in self.components:
                out += comp.sample(t, carrier)
            return out
        w = carrier if self.carrier is None else self.carrier
        env = self.amplitude * np.exp(-((t - self.center) ** 2) / (2 * self.sigma**2))
        return env * np.exp(1j * self.phase) * np.exp(-1j * w * t)

    def scaled(self, c: complex) -> "PulseEnvelope":
        """Same pulse with the field multiplied by ``c``."""
        if self.kind == "composite":
            return composite_pulse([p.scaled(c) for p in self.components])
        return PulseEnvelope(
            "gaussian", self.center, self.fwhm, self.mean_photons * abs(c) ** 2,
            self.phase + float(np.angle(c)), (), self.carrier,
        )

    def shifted(self, dt: float) -> "PulseEnvelope":
        if self.kind == "composite":
            return composite_pulse([p.shifted(dt) for p in self.components])
        return PulseEnvelope("gaussian", self.center + dt, self.fwhm, self.mean_photons,
                             self.phase, (), self.carrier)


def gaussian_pulse(center: float, fwhm: float, mean_photons: float = 1.0, phase: float = 0.0,
                   carrier: float | None = None) -> PulseEnvelope:
    """Gaussian pulse whose flux integrates to ``mean_photons``; ``fwhm`` is of the field envelope."""
    return PulseEnvelope("gaussian", center, fwhm, mean_photons, phase, (), carrier)


def composite_pulse(components: Sequence[PulseEnvelope]) -> PulseEnvelope:
    comps = tuple(components)
    return PulseEnvelope(
        "composite",
        comps[0].center if comps else 0.0,
        min((c.fwhm for c in comps), default=1.0),
        sum(c.mean_photons for c in comps),
        0.0,
        comps,
    )


@dataclass(frozen=True)
class TimeTrace:
    """Uniformly sampled complex envelope in sqrt(photons/s)."""

    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("trace samples must be finite")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def flux(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def photons(self) -> float:
        """Integrated photon number (Simpson's rule)."""
        if self.samples.size < 2:
            return 0.0
        return float(integrate.simpson(self.flux, dx=self.dt))


@dataclass(frozen=True)
class SimulationResult:
    input: TimeTrace
    output: TimeTrace
    buffer_amp: TimeTrace
    storage_amps: list = field(default_factory=list)
    backend: str = ""

    @property
    def times(self) -> np.ndarray:
        return self.output.times


def _segments(schedule, model: DelayLineModel, t0: float, dt: float, nsteps: int):
    """Yield (start_step, on, phase, sign) with starts snapped to the time grid."""
    n = model.n_modes
    if schedule is None:
        return [(0, np.ones(n, bool), np.zeros(n), np.ones(n))]
    out = []
    for seg in schedule.segments:
        on = np.asarray(seg.on, dtype=bool)
        if on.size != n:
            raise SimulationError(f"schedule has {on.size} modes, model has {n}")
        start = int(round((seg.t_start - t0) / dt))
        out.append((min(max(start, 0), nsteps), on, np.asarray(seg.phase, float), np.asarray(seg.sign, float)))
    out.sort(key=lambda s: s[0])
    # segments snapped to the same step: the later one wins
    merged = []
    for s in out:
        if merged and merged[-1][0] == s[0]:
            merged[-1] = s
        else:
            merged.append(s)
    if merged[0][0] != 0:
        merged[0] = (0,) + merged[0][1:]
    return merged


def _coefficients(model: DelayLineModel, on, phase, sign):
    n = model.n_modes
    kb = model.buffer.kappa
    g = model.gains * on * np.exp(1j * phase)
    offset = model.center_offset
    delta = offset + sign * (model.deltas - offset)
    m = np.zeros((n + 1, n + 1), dtype=complex)
    m[0, 0] = -0.5 * kb
    m[0, 1:] = -1j * g
    m[1:, 0] = -1j * np.conj(g)
    m[1:, 1:] = np.diag(-1j * delta - 0.5 * model.kappas)
    return m, np.max(np.abs(delta)), np.max(np.abs(g))


def required_dt(model: DelayLineModel, schedule=None, pulse: PulseEnvelope | None = None) -> float:
    """Largest step allowed by ``dt * max(kappa_b, |Delta_k|, |g_k|, |carrier|) <= 0.02``."""
    segs = _segments(schedule, model, 0.0, 1.0, 1 << 30)
    rate = model.buffer.kappa
    for _, on, phase, sign in segs:
        _, dmax, gmax = _coefficients(model, on, phase, sign)
        rate = max(rate, dmax, gmax)
    if pulse is not None:
        rate = max(rate, max(abs(_carrier(p, model)) for p in _leaves(pulse)))
    return MAX_RATE_DT / rate


def _leaves(pulse: PulseEnvelope):
    return pulse.components if pulse.kind == "composite" else (pulse,)


def _carrier(pulse: PulseEnvelope, model: DelayLineModel) -> float:
    return model.center_offset if pulse.carrier is None else pulse.carrier


def simulate(model: DelayLineModel, schedule, pulse: PulseEnvelope, grid) -> SimulationResult:
    """Integrate the coupled-mode equations with fixed-step RK4.

    ``grid`` is ``(t0, t1, dt)``; ``dt=None`` selects the largest step the
    resolution rule allows.  ``schedule=None`` means continuous drives.
    """
    t0, t1, dt = grid
    if t1 <= t0:
        raise SimulationError("grid needs t1 > t0")
    limit = required_dt(model, schedule, pulse)
    if dt is None:
        dt = limit
    elif dt > limit * (1 + 1e-12):
        raise TimestepTooCoarse(dt, limit)
    nsteps = int(np.ceil((t1 - t0) / dt - 1e-9))
    if schedule is not None:
        for seg in schedule.segments[1:]:
            if not t0 <= seg.t_start <= t1:
                raise SimulationError(f"schedule event at {seg.t_start:.6g} s lies outside the window")

    segs = _segments(schedule, model, t0, dt, nsteps)
    mats = np.empty((len(segs), model.n_modes + 1, model.n_modes + 1), dtype=complex)
    for i, (_, on, phase, sign) in enumerate(segs):
        mats[i] = _coefficients(model, on, phase, sign)[0]
    starts = np.array([s[0] for s in segs], dtype=np.int64)

    half_times = t0 + 0.5 * dt * np.arange(2 * nsteps + 1)
    u = np.zeros(half_times.size, dtype=complex)
    for p in _leaves(pulse):
        u += p.sample(half_times, model.center_offset)

    b = np.zeros(model.n_modes + 1, dtype=complex)
    b[0] = -np.sqrt(model.buffer.kappa_ext)
    y0 = np.zeros(model.n_modes + 1, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        y = _kernels.rk4_linear(mats, starts, b, u, float(dt), y0)
    y = np.asarray(y)
    bad = ~np.all(np.isfinite(y), axis=1)
    if np.any(bad):
        first = int(np.argmax(bad))
        raise IntegrationBlewUp(t0 + (first - 1) * dt)

    u_full = u[::2]
    beta = y[:, 0]
    beta_out = u_full + np.sqrt(model.buffer.kappa_ext) * beta
    mk = lambda s: TimeTrace(t0, dt, s)
    return SimulationResult(
        input=mk(u_full),
        output=mk(beta_out),
        buffer_amp=mk(beta),
        storage_amps=[mk(y[:, k + 1]) for k in range(model.n_modes)],
        backend=_kernels.BACKEND,
    )


@dataclass(frozen=True)
class EnergyLedger:
    input_photons: float
    output_photons: float
    dissipated_photons: float
    stored_photons_final: float

    @property
    def imbalance(self) -> float:
        return self.input_photons - self.output_photons - self.dissipated_photons - self.stored_photons_final


def energy_ledger(result: SimulationResult, model: DelayLineModel, tol: float = 1e-4) -> EnergyLedger:
    """Photon bookkeeping of a run; raises :class:`NonphysicalRun` beyond ``10 * tol`` relative imbalance."""
    dt = result.output.dt
    loss = model.buffer.kappa_int * result.buffer_amp.flux
    for kappa, amp in zip(model.kappas, result.storage_amps):
        loss = loss + kappa * amp.flux
    stored = result.buffer_amp.flux[-1] + sum(a.flux[-1] for a in result.storage_amps)
    ledger = EnergyLedger(
        result.input.photons(),
        result.output.photons(),
        float(integrate.simpson(loss, dx=dt)) if loss.size > 1 else 0.0,
        float(stored),
    )
    scale = max(ledger.input_photons, ledger.output_photons)
    if scale > 0 and abs(ledger.imbalance) > 10 * tol * scale:
        raise NonphysicalRun(f"nonphysical run: photon imbalance {ledger.imbalance:.3g} of {scale:.3g}")
    return ledger
