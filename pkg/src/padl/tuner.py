"""Derivative-free tuning of drive parameters (|g_k|, Delta_k, drive phases).

The search is a coordinate-adaptive pattern search: every parameter carries
its own step, which doubles after an accepted move and halves after a
failed pair of probes.  Only strict improvements are accepted, so the
objective trace is monotone.  Gains at the level of floating-point noise
(relative 1e-12) do not count as improvements.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import PulseEnvelope, simulate
from .model import DelayLineModel, s11
from .protocols import Continuous, build_schedule, fidelity

KINDS = ("linear_phase", "max_fidelity")
PARAM_KINDS = ("g", "delta", "phase")


@dataclass(frozen=True)
class TuneTarget:
    """What to optimise.

    ``linear_phase``: weighted RMS distance (radians) of the unwrapped S11
    phase over ``band`` (rad/s, absolute) from its best-fit line of slope
    ``t_rt``.  ``max_fidelity``: ``1 - F_loss_inclusive`` of a simulated
    delay of ``pulse``.  ``bounds`` maps ``"g"``, ``"delta"`` and ``"phase"``
    to ``(lo, hi)`` arrays per mode; missing kinds default to boxes around
    the initial model.
    """

    kind: str
    t_rt: float | None = None
    band: tuple | None = None
    pulse: PulseEnvelope | None = None
    schedule: object = None
    search: tuple | None = None
    grid: tuple | None = None
    bounds: Mapping = field(default_factory=dict)
    weights: np.ndarray | None = None
    params: tuple = ("g", "delta")
    n_points: int = 400

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tune target {self.kind!r}")
        if self.kind == "linear_phase" and (self.t_rt is None or self.band is None):
            raise ValueError("linear_phase target needs t_rt and band")
        if self.kind == "max_fidelity" and self.pulse is None:
            raise ValueError("max_fidelity target needs a pulse")
        if any(p not in PARAM_KINDS for p in self.params):
            raise ValueError(f"tunable parameters must be among {PARAM_KINDS}")
        for key, (lo, hi) in self.bounds.items():
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ValueError(f"bounds for {key} must be finite")


@dataclass(frozen=True)
class TuneResult:
    model: DelayLineModel
    trace: list
    stalled: bool
    evaluations: int


def _layout(model: DelayLineModel, target: TuneTarget):
    """Initial vector, bounds, steps and a labelled index for each tunable parameter."""
    n = model.n_modes
    g = model.gains
    spacing = model.fsr if model.fsr else model.buffer.kappa
    x, lo, hi, step, labels = [], [], [], [], []
    for kind in target.params:
        if kind == "g":
            v0 = np.abs(g)
            b = target.bounds.get("g", (0.5 * v0, 1.5 * v0))
            h = 0.05 * np.maximum(v0, 1e-3 * model.buffer.kappa)
        elif kind == "delta":
            v0 = model.deltas
            b = target.bounds.get("delta", (v0 - 0.5 * spacing, v0 + 0.5 * spacing))
            h = np.full(n, 0.05 * spacing)
        else:
            v0 = np.angle(g)
            b = target.bounds.get("phase", (np.full(n, -np.pi), np.full(n, np.pi)))
            h = np.full(n, 0.2)
        b_lo = np.broadcast_to(np.asarray(b[0], float), (n,))
        b_hi = np.broadcast_to(np.asarray(b[1], float), (n,))
        if np.any(b_lo > b_hi):
            raise ValueError(f"empty bounds for {kind}")
        x.append(np.clip(v0, b_lo, b_hi))
        lo.append(b_lo)
        hi.append(b_hi)
        step.append(h)
        labels += [(kind, k) for k in range(n)]
    return np.concatenate(x), np.concatenate(lo), np.concatenate(hi), np.concatenate(step), labels


def _apply(model: DelayLineModel, x: np.ndarray, labels) -> DelayLineModel:
    g = model.gains.copy()
    delta = model.deltas.copy()
    mag, phase = np.abs(g), np.angle(g)
    for v, (kind, k) in zip(x, labels):
        if kind == "g":
            mag[k] = v
        elif kind == "delta":
            delta[k] = v
        else:
            phase[k] = v
    couplings = [dataclasses.replace(c, g=complex(mag[k] * np.exp(1j * phase[k])), delta=float(delta[k]))
                 for k, c in enumerate(model.couplings)]
    return model.replace_storage(couplings=couplings)


def linear_phase_objective(model: DelayLineModel, t_rt: float, band, weights=None, n_points: int = 400) -> float:
    omega = np.linspace(band[0], band[1], n_points)
    # an irrational fraction of a grid step keeps samples off lossless poles at comb teeth
    omega = omega + 0.3819660113 * (omega[1] - omega[0])
    phase = np.unwrap(np.angle(s11(model, omega)))
    w = np.ones_like(omega) if weights is None else np.asarray(weights, float)
    # the phase advances by +t_rt per unit frequency with e^{-i w t} fields
    r = phase - t_rt * (omega - omega[0])
    r = r - np.sum(w * r) / np.sum(w)
    return float(np.sqrt(np.sum(w * r**2) / np.sum(w)))


def fidelity_objective(model: DelayLineModel, target: TuneTarget) -> float:
    t_rt = model.round_trip_time or target.t_rt
    pulse = target.pulse
    if target.grid is not None:
        grid = target.grid
    else:
        grid = (pulse.center - 4 * pulse.fwhm, pulse.center + 1.6 * t_rt, None)
    spec = target.schedule if target.schedule is not None else Continuous()
    schedule = build_schedule(model, spec, (grid[0], grid[1]))
    result = simulate(model, schedule, pulse, grid)
    search = target.search or (0.5 * t_rt, 1.5 * t_rt)
    return 1.0 - fidelity(result.input, result.output, search).f_loss_inclusive


def objective(model: DelayLineModel, target: TuneTarget) -> float:
    if target.kind == "linear_phase":
        return linear_phase_objective(model, target.t_rt, target.band, target.weights, target.n_points)
    return fidelity_objective(model, target)


def tune_drives(model_init: DelayLineModel, target: TuneTarget, budget: int = 200, seed: int = 0,
                min_rel_step: float = 1e-4, rel_tol: float = 1e-12) -> TuneResult:
    """Pattern search from ``model_init``; ``budget`` counts objective evaluations."""
    if budget < 10:
        raise ValueError("budget must be >= 10")
    rng = np.random.default_rng(seed)
    x, lo, hi, step, labels = _layout(model_init, target)
    step0 = step.copy()
    periodic = np.array([kind == "phase" for kind, _ in labels])

    def evaluate(v):
        return objective(_apply(model_init, v, labels), target)

    best = evaluate(x)
    evals = 1
    trace = [best]
    accepted = False
    while evals < budget:
        active = np.flatnonzero(step > min_rel_step * step0)
        if active.size == 0:
            break
        moved = False
        for i in rng.permutation(active):
            for direction in (1.0, -1.0):
                if evals >= budget:
                    break
                trial = x.copy()
                trial[i] = x[i] + direction * step[i]
                if periodic[i]:
                    trial[i] = np.angle(np.exp(1j * trial[i]))
                trial[i] = np.clip(trial[i], lo[i], hi[i])
                if trial[i] == x[i]:
                    continue
                value = evaluate(trial)
                evals += 1
                if value < best - rel_tol * abs(best):
                    x, best = trial, value
                    trace.append(best)
                    step[i] *= 2.0
                    moved = accepted = True
                    break
            else:
                step[i] *= 0.5
            if evals >= budget:
                break
        if not moved and np.all(step <= min_rel_step * step0):
            break
    if not accepted:
        return TuneResult(model_init, trace, True, evals)
    return TuneResult(_apply(model_init, x, labels), trace, False, evals)
