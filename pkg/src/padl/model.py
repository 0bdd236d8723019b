"""Coupled-mode model of the delay line: construction, S11, group delay, fitting, DBP.

Everything internal is in angular frequency (rad/s).  Config blocks and
report files use Hz; the conversion happens in :func:`build_delay_line` and
:func:`model_report`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import constants as sc
from scipy import optimize

from .errors import FitError, ModelError, SingularEvaluation, UnresolvablePhaseSlope

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class BufferMode:
    omega_b: float
    kappa_ext: float
    kappa_int: float = 0.0
    zpf: float | None = None

    def __post_init__(self):
        if self.omega_b <= 0 or self.kappa_ext <= 0 or self.kappa_int < 0:
            raise ModelError("buffer requires omega_b > 0, kappa_ext > 0, kappa_int >= 0")

    @property
    def kappa(self) -> float:
        return self.kappa_ext + self.kappa_int


@dataclass(frozen=True)
class StorageMode:
    omega_k: float
    kappa_ext: float = 0.0
    kappa_int: float = 0.0
    zpf: float | None = None

    def __post_init__(self):
        if self.omega_k <= 0 or self.kappa_ext < 0 or self.kappa_int < 0:
            raise ModelError("storage mode requires omega_k > 0 and non-negative rates")

    @property
    def kappa(self) -> float:
        """Total loss rate; the parasitic extrinsic part is lumped in with intrinsic loss."""
        return self.kappa_ext + self.kappa_int

    @property
    def q_int(self) -> float:
        return self.omega_k / self.kappa_int if self.kappa_int > 0 else np.inf


@dataclass(frozen=True)
class ParametricCoupling:
    g: complex
    delta: float  # detuning of the converted photon from omega_b, rad/s
    drive_freq: float | None = None
    drive_amp: complex | None = None


def physical_coupling(E_J: float, eps_p: float, phi_b: float, phi_k: float, beta_k: complex) -> complex:
    """Beamsplitter rate ``E_J eps_p phi_b^2 phi_k beta_k / hbar`` in rad/s (E_J in joules)."""
    return E_J * eps_p * phi_b**2 * phi_k * beta_k / sc.hbar


@dataclass(frozen=True)
class DelayLineModel:
    buffer: BufferMode
    storage: tuple
    fsr: float | None = None
    center_freq: float | None = None

    def __post_init__(self):
        storage = tuple(tuple(entry) for entry in self.storage)
        if len(storage) < 1:
            raise ModelError("delay line needs at least one storage mode")
        object.__setattr__(self, "storage", storage)
        deltas = np.sort(self.deltas)
        if deltas.size > 1 and np.min(np.diff(deltas)) < TWO_PI * 1.0:
            raise ModelError("degenerate comb teeth: two detunings within 1 Hz")
        if self.fsr is None and deltas.size > 1:
            object.__setattr__(self, "fsr", float((deltas[-1] - deltas[0]) / (deltas.size - 1)))
        if self.fsr is not None and self.fsr <= 0:
            raise ModelError("fsr must be positive")
        if self.center_freq is None:
            object.__setattr__(self, "center_freq", float(np.mean(self.omega_prime)))

    @property
    def n_modes(self) -> int:
        return len(self.storage)

    @property
    def modes(self) -> list[StorageMode]:
        return [s for s, _ in self.storage]

    @property
    def couplings(self) -> list[ParametricCoupling]:
        return [c for _, c in self.storage]

    @property
    def deltas(self) -> np.ndarray:
        return np.array([c.delta for _, c in self.storage], dtype=float)

    @property
    def gains(self) -> np.ndarray:
        return np.array([c.g for _, c in self.storage], dtype=complex)

    @property
    def kappas(self) -> np.ndarray:
        return np.array([s.kappa for s, _ in self.storage], dtype=float)

    @property
    def omega_prime(self) -> np.ndarray:
        return self.buffer.omega_b + self.deltas

    @property
    def center_offset(self) -> float:
        """Band centre measured from the buffer frequency (the simulation frame)."""
        return float(self.center_freq - self.buffer.omega_b)

    @property
    def has_round_trip(self) -> bool:
        return self.n_modes > 1

    @property
    def round_trip_time(self) -> float | None:
        return TWO_PI / self.fsr if self.has_round_trip else None

    def replace_storage(self, modes=None, couplings=None) -> "DelayLineModel":
        modes = self.modes if modes is None else list(modes)
        couplings = self.couplings if couplings is None else list(couplings)
        return dataclasses.replace(self, storage=tuple(zip(modes, couplings)))

    def without_buffer_loss(self) -> "DelayLineModel":
        return dataclasses.replace(self, buffer=dataclasses.replace(self.buffer, kappa_int=0.0))

    def without_intrinsic_loss(self) -> "DelayLineModel":
        modes = [dataclasses.replace(m, kappa_int=0.0, kappa_ext=0.0) for m in self.modes]
        return self.without_buffer_loss().replace_storage(modes=modes)

    def with_storage_q(self, q_int: float) -> "DelayLineModel":
        modes = [dataclasses.replace(m, kappa_int=m.omega_k / q_int, kappa_ext=0.0) for m in self.modes]
        return self.replace_storage(modes=modes)


def _hz(block: Mapping, key: str, default=None, required=True):
    if key in block:
        return TWO_PI * float(block[key])
    if required and default is None:
        raise ModelError(f"missing field {key}")
    return default


def ideal_comb_deltas(n_modes: int, span: float) -> np.ndarray:
    """Evenly spaced detunings covering ``[-span/2, +span/2]``."""
    if n_modes == 1:
        return np.zeros(1)
    return np.linspace(-span / 2, span / 2, n_modes)


def build_delay_line(config: Mapping) -> DelayLineModel:
    """Assemble a validated model from a config mapping (frequencies in Hz).

    Storage entries give either ``g_2pi_hz`` directly or the physical inputs
    ``beta`` and ``zpf`` together with a top-level ``physical`` block
    (``E_J_hz``, ``eps_p``, ``phi_b``).  Detunings come from ``delta_2pi_hz``
    or ``omega_prime_2pi_hz``; with ``comb: ideal`` they are laid out evenly
    over the buffer's extrinsic linewidth.
    """
    b = config["buffer"]
    buffer = BufferMode(
        omega_b=_hz(b, "omega_b_2pi_hz"),
        kappa_ext=_hz(b, "kappa_ext_2pi_hz"),
        kappa_int=_hz(b, "kappa_int_2pi_hz", 0.0, required=False),
        zpf=b.get("zpf"),
    )
    entries = list(config["storage"])
    if not entries:
        raise ModelError("storage list is empty")
    phys = config.get("physical")
    comb = config.get("comb")
    if comb == "ideal" or isinstance(comb, Mapping):
        span = buffer.kappa_ext
        if isinstance(comb, Mapping) and "span_2pi_hz" in comb:
            span = TWO_PI * float(comb["span_2pi_hz"])
        comb_deltas = ideal_comb_deltas(len(entries), span)
    else:
        comb_deltas = None

    modes, couplings = [], []
    for k, e in enumerate(entries):
        omega_k = _hz(e, "omega_k_2pi_hz")
        kappa_int = _hz(e, "kappa_int_2pi_hz", 0.0, required=False)
        if "q_int" in e:
            kappa_int = omega_k / float(e["q_int"])
        modes.append(
            StorageMode(omega_k, _hz(e, "kappa_ext_2pi_hz", 0.0, required=False), kappa_int, e.get("zpf"))
        )
        if comb_deltas is not None:
            delta = float(comb_deltas[k])
        elif "delta_2pi_hz" in e:
            delta = TWO_PI * float(e["delta_2pi_hz"])
        elif "omega_prime_2pi_hz" in e:
            delta = TWO_PI * float(e["omega_prime_2pi_hz"]) - buffer.omega_b
        else:
            raise ModelError(f"storage[{k}]: need delta_2pi_hz or omega_prime_2pi_hz")
        phase = float(e.get("g_phase", 0.0))
        if "g_2pi_hz" in e:
            g = TWO_PI * float(e["g_2pi_hz"]) * np.exp(1j * phase)
            beta = None
        elif phys is not None and "beta" in e:
            beta = complex(e["beta"])
            g = physical_coupling(
                sc.h * float(phys["E_J_hz"]), float(phys["eps_p"]), float(phys.get("phi_b", buffer.zpf)),
                float(e.get("zpf")), beta,
            ) * np.exp(1j * phase)
        else:
            raise ModelError(f"storage[{k}]: need g_2pi_hz or physical beta/zpf")
        couplings.append(ParametricCoupling(complex(g), delta, _hz(e, "drive_2pi_hz", None, required=False), beta))

    fsr = _hz(config, "fsr_2pi_hz", None, required=False)
    center = _hz(config, "center_2pi_hz", None, required=False)
    return DelayLineModel(buffer, tuple(zip(modes, couplings)), fsr, center)


def s11(model: DelayLineModel, omega):
    """Reflection coefficient at angular frequency ``omega`` (scalar or array)."""
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    wp = model.omega_prime
    kk = model.kappas
    g2 = np.abs(model.gains) ** 2
    diff = w[:, None] - wp[None, :]
    lossless = kk == 0
    if np.any(lossless) and np.any(diff[:, lossless] == 0):
        raise SingularEvaluation("singular evaluation point: omega sits on a lossless storage pole")
    storage_term = np.sum(g2 / (diff + 0.5j * kk), axis=1)
    b = model.buffer
    den = 1j * (b.omega_b - w) + 0.5 * b.kappa + 1j * storage_term
    out = 1.0 - b.kappa_ext / den
    return out[0] if scalar else out


def _phase_span(model, lo, hi):
    """Unwrapped phase change of S11 between ``lo`` and ``hi`` with adaptive sampling.

    The grid is doubled until every sample-to-sample step is small and the
    total agrees with the previous grid, so a tooth that winds the phase by
    a full turn between two samples cannot hide.
    """
    prev = None
    n = 16  # even counts keep the midpoint, often a lossless tooth, off the grid
    while n <= 1 << 16:
        w = np.linspace(lo, hi, n)
        steps = np.angle(np.exp(1j * np.diff(np.angle(s11(model, w)))))
        total = float(np.sum(steps))
        if np.all(np.abs(steps) < np.pi / 4) and prev is not None and abs(total - prev) < 1e-3:
            return total
        prev = total
        n *= 2
    return None


def group_delay(model: DelayLineModel, omega, step: float = TWO_PI * 100.0):
    """Group delay d(arg S11)/d(omega) in seconds by central differences.

    Fields rotate as exp(-i w t), so a delayed response has phase that grows
    with frequency.  The half-width ``step`` is refined with denser phase
    sampling, then shrunk, until the unwrapped phase is consistent.  A step
    of half the FSR gives the delay averaged over one comb period.
    """
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    out = []
    for wi in np.atleast_1d(w):
        h = step
        for _ in range(4):
            span = _phase_span(model, wi - h, wi + h)
            if span is not None:
                out.append(span / (2 * h))
                break
            h /= 10
        else:
            raise UnresolvablePhaseSlope(f"unresolvable phase slope at omega = {wi:.9g} rad/s")
    return out[0] if scalar else np.array(out)


def dbp(model: DelayLineModel) -> int:
    """Delay-bandwidth product of an evenly spaced comb spanning the buffer linewidth."""
    return model.n_modes - 1


# ---------------------------------------------------------------- fitting


@dataclass
class S11Fit:
    model: DelayLineModel
    uncertainty: dict  # parameter name -> 1 sigma (rad/s)
    residual_norm: float
    init_residual_norm: float
    pinned: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    nfev: int = 0


_RATE_FLOOR = 1e-9


def _pack(model: DelayLineModel, ref: DelayLineModel, scale: float) -> np.ndarray:
    b = model.buffer
    x = [
        (b.omega_b - ref.buffer.omega_b) / scale,
        np.log(b.kappa_ext / scale),
        np.log(max(b.kappa_int, _RATE_FLOOR * scale) / scale),
    ]
    for wp, wp0, kk, g in zip(model.omega_prime, ref.omega_prime, model.kappas, model.gains):
        x += [(wp - wp0) / scale, np.log(max(kk, _RATE_FLOOR * scale) / scale), np.log(abs(g) / scale)]
    return np.array(x)


def _unpack(x: np.ndarray, ref: DelayLineModel, scale: float) -> DelayLineModel:
    omega_b = ref.buffer.omega_b + x[0] * scale
    buffer = dataclasses.replace(ref.buffer, omega_b=omega_b, kappa_ext=scale * np.exp(x[1]),
                                 kappa_int=scale * np.exp(x[2]))
    modes, couplings = [], []
    for k, (mode, coup) in enumerate(ref.storage):
        wp = ref.omega_prime[k] + x[3 + 3 * k] * scale
        kk = scale * np.exp(x[4 + 3 * k])
        g = scale * np.exp(x[5 + 3 * k])
        modes.append(dataclasses.replace(mode, kappa_ext=0.0, kappa_int=kk))
        phase = np.angle(coup.g) if coup.g != 0 else 0.0
        couplings.append(dataclasses.replace(coup, g=complex(g * np.exp(1j * phase)), delta=wp - omega_b))
    return DelayLineModel(buffer, tuple(zip(modes, couplings)), ref.fsr, None)


def param_names(n_modes: int) -> list[str]:
    names = ["omega_b", "kappa_b_e", "kappa_b_i"]
    for k in range(n_modes):
        names += [f"omega_prime_{k}", f"kappa_{k}", f"g_{k}"]
    return names


def fit_s11(omega, data, init: DelayLineModel, max_nfev: int = 2000) -> S11Fit:
    """Levenberg-Marquardt fit of the S11 model to complex reflection data.

    Rates are fitted as logarithms so they stay positive; frequencies are
    fitted as offsets in units of the initial extrinsic buffer linewidth.
    Uncertainties are 1-sigma values from the linearised covariance.
    """
    omega = np.asarray(omega, dtype=float)
    data = np.asarray(data, dtype=complex)
    if omega.shape != data.shape or omega.size < 3 * init.n_modes + 3:
        raise FitError("fit needs matching frequency and data arrays with more points than parameters")
    scale = init.buffer.kappa_ext
    trace: list[float] = []
    ref = init

    def resid(x):
        try:
            r = s11(_unpack(x, ref, scale), omega) - data
        except (ModelError, FloatingPointError):
            r = np.full(omega.shape, 1e3 + 0j)
        out = np.concatenate([r.real, r.imag])
        trace.append(float(np.linalg.norm(out)))
        return out

    x0 = _pack(init, init, scale)
    r0 = float(np.linalg.norm(resid(x0)))
    best, r_best, nfev = None, r0, 0
    # LM can stall in the long valleys of this problem; re-centring the
    # parametrisation on the current optimum and restarting gets it moving again
    for _ in range(6):
        res = optimize.least_squares(resid, _pack(ref, ref, scale), method="lm", max_nfev=max_nfev,
                                     xtol=1e-12, ftol=1e-12, gtol=1e-12)
        nfev += res.nfev
        if res.status <= 0 or not np.all(np.isfinite(res.x)):
            raise FitError("fit diverged", trace)
        r1 = float(np.linalg.norm(res.fun))
        if r1 > r_best:
            break
        improved = r1 < 0.5 * r_best
        best, r_best = res, r1
        ref = _unpack(res.x, ref, scale)
        if not improved or r1 < 1e-12 * max(r0, 1e-300):
            break
    if best is None:
        raise FitError("fit diverged: residual increased", trace)

    fitted = ref
    # rates are absolute logs and frequencies plain offsets, so the last
    # Jacobian applies at the optimum whatever centre it was taken about
    x = best.x
    dof = max(best.fun.size - x.size, 1)
    s2 = np.sum(best.fun**2) / dof
    jtj = best.jac.T @ best.jac
    try:
        cov = np.linalg.inv(jtj) * s2
        sig_x = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        sig_x = np.full(x.size, np.inf)

    names = param_names(init.n_modes)
    values = _physical_values(fitted)
    unc = {}
    pinned = []
    for i, name in enumerate(names):
        if _is_frequency(name):
            unc[name] = float(sig_x[i] * scale)
        else:
            unc[name] = float(sig_x[i] * values[name])
            if x[i] < np.log(1e-6) or x[i] > np.log(1e3):
                pinned.append(name)
    return S11Fit(fitted, unc, r_best, r0, pinned, trace, nfev)


def _is_frequency(name: str) -> bool:
    return name == "omega_b" or name.startswith("omega_prime")


def _physical_values(model: DelayLineModel) -> dict:
    vals = {
        "omega_b": model.buffer.omega_b,
        "kappa_b_e": model.buffer.kappa_ext,
        "kappa_b_i": model.buffer.kappa_int,
    }
    for k, (wp, kk, g) in enumerate(zip(model.omega_prime, model.kappas, model.gains)):
        vals[f"omega_prime_{k}"] = wp
        vals[f"kappa_{k}"] = kk
        vals[f"g_{k}"] = abs(g)
    return vals


def model_report(model: DelayLineModel, uncertainty: Mapping | None = None) -> dict:
    """JSON-ready description using the fitted-parameter symbols (values in Hz)."""
    unc = uncertainty or {}

    def entry(name, value):
        d = {"value_hz": value / TWO_PI}
        if name in unc:
            d["sigma_hz"] = unc[name] / TWO_PI
        return d

    vals = _physical_values(model)
    report = {
        "omega_b/2pi": entry("omega_b", vals["omega_b"]),
        "kappa_b,e/2pi": entry("kappa_b_e", vals["kappa_b_e"]),
        "kappa_b,i/2pi": entry("kappa_b_i", vals["kappa_b_i"]),
        "storage": [],
    }
    for k, mode in enumerate(model.modes):
        report["storage"].append(
            {
                "omega_k/2pi": {"value_hz": mode.omega_k / TWO_PI},
                "omega_k'/2pi": entry(f"omega_prime_{k}", vals[f"omega_prime_{k}"]),
                "kappa_k/2pi": entry(f"kappa_{k}", vals[f"kappa_{k}"]),
                "g_k/2pi": entry(f"g_{k}", vals[f"g_{k}"]),
                "g_k_phase": float(np.angle(model.gains[k])),
            }
        )
    if model.fsr is not None:
        report["fsr/2pi"] = {"value_hz": model.fsr / TWO_PI}
    report["center/2pi"] = {"value_hz": model.center_freq / TWO_PI}
    return report


def model_from_report(report: Mapping) -> DelayLineModel:
    """Inverse of :func:`model_report` (uncertainties are dropped)."""
    cfg = {
        "buffer": {
            "omega_b_2pi_hz": report["omega_b/2pi"]["value_hz"],
            "kappa_ext_2pi_hz": report["kappa_b,e/2pi"]["value_hz"],
            "kappa_int_2pi_hz": report["kappa_b,i/2pi"]["value_hz"],
        },
        "storage": [
            {
                "omega_k_2pi_hz": s["omega_k/2pi"]["value_hz"],
                "omega_prime_2pi_hz": s["omega_k'/2pi"]["value_hz"],
                "kappa_int_2pi_hz": s["kappa_k/2pi"]["value_hz"],
                "g_2pi_hz": s["g_k/2pi"]["value_hz"],
                "g_phase": s.get("g_k_phase", 0.0),
            }
            for s in report["storage"]
        ],
    }
    if "fsr/2pi" in report:
        cfg["fsr_2pi_hz"] = report["fsr/2pi"]["value_hz"]
    if "center/2pi" in report:
        cfg["center_2pi_hz"] = report["center/2pi"]["value_hz"]
    return build_delay_line(cfg)
