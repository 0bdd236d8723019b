"""Quantum parametric oscillator: Lindblad steady state, threshold curve, gain and noise calibration.

The master equation is

    drho/dt = -i[H, rho] + D[sqrt(k1) a] rho + D[sqrt(k2) a^2] rho,
    H = i eps2 (a^2 - a^dag^2),

with eps2 real.  All its coefficients are real in the Fock basis and it
only couples elements rho_mn with equal parity of m - n, so the steady
state is found from the even-parity block alone.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import constants as sc
from scipy import optimize

from .errors import DataError, FitError, SteadyStateError

HARD_MAX_CUTOFF = 400
CONVERGENCE_RTOL = 1e-6


@dataclass(frozen=True)
class MPOParams:
    eps2: float
    kappa1: float
    kappa2: float
    fock_cutoff: int = 16

    def __post_init__(self):
        if not self.kappa1 > 0:
            raise ValueError("kappa1 must be positive")
        if self.kappa2 < 0 or self.eps2 < 0:
            raise ValueError("kappa2 and eps2 must be non-negative")
        if self.fock_cutoff < 4:
            raise ValueError("fock_cutoff must be >= 4")

    def with_eps2(self, eps2: float) -> "MPOParams":
        return MPOParams(eps2, self.kappa1, self.kappa2, self.fock_cutoff)


@dataclass(frozen=True)
class SteadyState:
    rho: np.ndarray
    n: float
    cutoff: int
    history: tuple = ()  # (cutoff, n) pairs visited


def liouvillian(params: MPOParams, cutoff: int, full: bool = False):
    """Sparse real Liouvillian acting on the stacked elements of rho.

    Returns ``(L, idx)`` where ``idx[m, n]`` is the position of rho_mn in
    the vector, or -1 when it is outside the block (``full=False`` keeps
    only ``m - n`` even).
    """
    N = int(cutoff)
    m, n = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    mask = np.ones((N, N), bool) if full else ((m - n) % 2 == 0)
    idx = -np.ones((N, N), dtype=np.int64)
    idx[mask] = np.arange(int(mask.sum()))
    mm, nn, row = m[mask].astype(float), n[mask].astype(float), idx[mask]
    mi, ni = m[mask], n[mask]
    e, k1, k2 = params.eps2, params.kappa1, params.kappa2
    rows, cols, vals = [], [], []

    def add(dm, dn, coef):
        m2, n2 = mi + dm, ni + dn
        ok = (m2 >= 0) & (m2 < N) & (n2 >= 0) & (n2 < N) & (coef != 0)
        rows.append(row[ok])
        cols.append(idx[m2[ok], n2[ok]])
        vals.append(coef[ok])

    # -i[H, rho] = eps2 [a^2 - a^dag^2, rho]
    add(2, 0, e * np.sqrt((mm + 1) * (mm + 2)))
    add(-2, 0, -e * np.sqrt(np.clip(mm * (mm - 1), 0, None)))
    add(0, -2, -e * np.sqrt(np.clip(nn * (nn - 1), 0, None)))
    add(0, 2, e * np.sqrt((nn + 1) * (nn + 2)))
    # jump terms a rho a^dag and a^2 rho a^dag^2
    add(1, 1, k1 * np.sqrt((mm + 1) * (nn + 1)))
    add(2, 2, k2 * np.sqrt((mm + 1) * (mm + 2) * (nn + 1) * (nn + 2)))
    # anticommutator terms
    add(0, 0, -0.5 * k1 * (mm + nn) - 0.5 * k2 * (mm * (mm - 1) + nn * (nn - 1)))
    size = int(mask.sum())
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size))
    return L, idx


def _solve_block(params: MPOParams, cutoff: int) -> np.ndarray:
    L, idx = liouvillian(params, cutoff)
    diag = idx[np.arange(cutoff), np.arange(cutoff)]
    # trace condition replaces the (redundant) vacuum-population row
    L = L.tocoo()
    keep = L.row != diag[0]
    rows = np.concatenate([L.row[keep], np.full(cutoff, diag[0])])
    cols = np.concatenate([L.col[keep], diag])
    vals = np.concatenate([L.data[keep], np.ones(cutoff)])
    A = sp.csc_matrix((vals, (rows, cols)), shape=L.shape)
    rhs = np.zeros(L.shape[0])
    rhs[diag[0]] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A, rhs, permc_spec="MMD_AT_PLUS_A")
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SteadyStateError("degenerate steady state: Liouvillian null space is not one dimensional") from exc
    if not np.all(np.isfinite(x)):
        raise SteadyStateError("degenerate steady state: Liouvillian null space is not one dimensional")
    rho = np.zeros((cutoff, cutoff))
    mask = idx >= 0
    rho[mask] = x[idx[mask]]
    return 0.5 * (rho + rho.T)


def photon_number(rho: np.ndarray) -> float:
    return float(np.real(np.sum(np.arange(rho.shape[0]) * np.diag(rho))))


def initial_cutoff(params: MPOParams) -> int:
    """Cutoff guess from the classical photon number; broad enough for the smeared threshold."""
    r = params.kappa2 / params.kappa1
    n_cl = classical_steady_state(params).n
    n_cl = 0.0 if not np.isfinite(n_cl) else n_cl
    # near threshold the smeared curve sits near 1/sqrt(r); far above it the classical branch takes over
    n_est = max(n_cl, min((4 * params.eps2 / params.kappa1) ** 4, 4.0) / np.sqrt(r) if r > 0 else 0.0)
    guess = int(np.ceil(2.2 * n_est + 6 * np.sqrt(n_est) + 24))
    return max(params.fock_cutoff, min(guess, HARD_MAX_CUTOFF))


def steady_state_at(params: MPOParams, cutoff: int) -> SteadyState:
    """Single solve at a fixed cutoff, no convergence loop."""
    rho = _solve_block(params, cutoff)
    return SteadyState(rho, photon_number(rho), cutoff, ((cutoff, photon_number(rho)),))


def mpo_steady_state(params: MPOParams, hard_max: int = HARD_MAX_CUTOFF,
                     rtol: float = CONVERGENCE_RTOL) -> SteadyState:
    """Steady state with the Fock cutoff raised by 25% until ``n`` settles to ``rtol``."""
    if params.eps2 == 0:
        rho = np.zeros((params.fock_cutoff, params.fock_cutoff))
        rho[0, 0] = 1.0
        return SteadyState(rho, 0.0, params.fock_cutoff, ((params.fock_cutoff, 0.0),))
    # leave room for at least one 25% step so convergence can be checked
    cutoff = min(initial_cutoff(params), int(hard_max / 1.25))
    history = []
    prev = None
    while True:
        ss = steady_state_at(params, cutoff)
        history.append((cutoff, ss.n))
        if prev is not None and abs(ss.n - prev) <= rtol * max(abs(ss.n), 1e-300):
            return SteadyState(ss.rho, ss.n, cutoff, tuple(history))
        prev = ss.n
        if cutoff >= hard_max:
            raise SteadyStateError(f"cutoff exhausted: n = {ss.n:.6g} not converged at cutoff {cutoff}")
        cutoff = min(int(np.ceil(1.25 * cutoff)), hard_max)


@dataclass(frozen=True)
class ClassicalState:
    n: float
    threshold: float  # eps2 at the oscillation threshold
    above: bool


def classical_steady_state(params: MPOParams) -> ClassicalState:
    """Mean-field branch of ``da/dt = -2 eps2 a* - k1/2 a - k2 |a|^2 a``.

    Below and at threshold ``eps2 = k1/4`` the only stable point is
    ``a = 0``; above it ``|a|^2 = (2 eps2 - k1/2) / k2``.
    """
    thr = 0.25 * params.kappa1
    if params.eps2 <= thr:
        return ClassicalState(0.0, thr, False)
    if params.kappa2 == 0:
        return ClassicalState(np.inf, thr, True)
    return ClassicalState((2 * params.eps2 - 0.5 * params.kappa1) / params.kappa2, thr, True)


def classical_residual(params: MPOParams, n: float) -> float:
    """|da/dt| at ``a = i sqrt(n)``, the fixed point that solves the mean-field equation."""
    a = 1j * np.sqrt(n)
    return float(abs(-2 * params.eps2 * np.conj(a) - 0.5 * params.kappa1 * a - params.kappa2 * abs(a) ** 2 * a))


def threshold_curve(params_base: MPOParams, eps2_grid) -> np.ndarray:
    """Steady-state photon number at each ``eps2`` (same units as ``params_base``)."""
    grid = np.asarray(eps2_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("eps2 grid must be sorted ascending")
    return np.array([mpo_steady_state(params_base.with_eps2(e)).n for e in grid])


# calibration


def linear_gain(gain_db: float) -> float:
    return 10.0 ** (gain_db / 10.0)


def psd_per_photon(gain_db: float, omega_k: float, kappa_ext: float) -> float:
    """Integrated PSD at the instrument per intracavity photon: G hbar w_k kappa_e."""
    return linear_gain(gain_db) * sc.hbar * omega_k * kappa_ext


@dataclass(frozen=True)
class CalibrationFit:
    drive_scale: float
    gain_db: float
    kappa2_over_kappa1: float
    fit_residual: float
    uncertainty: dict = field(default_factory=dict)
    nfev: int = 0

    def to_dict(self) -> dict:
        return {"drive_scale": self.drive_scale, "gain_db": self.gain_db,
                "kappa2_over_kappa1": self.kappa2_over_kappa1, "fit_residual": self.fit_residual,
                "uncertainty": dict(self.uncertainty)}


FIT_MAX_PHOTONS = 150.0


def _fit_cutoff(e: float, ratio: float) -> int:
    # rounded up to a multiple of 8 so the cutoff only changes in coarse steps
    c = initial_cutoff(MPOParams(float(e), 1.0, ratio))
    return min(HARD_MAX_CUTOFF, 8 * int(np.ceil(1.15 * c / 8)))


def _n_curve(eps_over_k1: np.ndarray, ratio: float, scale: float = 1.0) -> np.ndarray:
    out = np.zeros(eps_over_k1.size)
    for i, e in enumerate(eps_over_k1):
        if e > 0:
            out[i] = steady_state_at(MPOParams(float(e), 1.0, ratio), int(np.ceil(scale * _fit_cutoff(e, ratio)))).n
    return out


def synthetic_threshold_data(drive, drive_scale: float, gain_db: float, ratio: float,
                             omega_k: float, kappa_ext: float) -> np.ndarray:
    """Integrated PSD the calibration model predicts for the given instrument drive amplitudes."""
    n = threshold_curve(MPOParams(0.0, 1.0, ratio), drive_scale * np.asarray(drive, float))
    return psd_per_photon(gain_db, omega_k, kappa_ext) * n


def fit_threshold(drive, psd, omega_k: float, kappa_ext: float, drive_scale0: float | None = None,
                  ratio0: float | None = None, max_nfev: int = 200) -> CalibrationFit:
    """Fit drive scale, gain and kappa2/kappa1 to integrated PSD versus drive amplitude.

    Residuals are in log space.  The gain enters as an additive constant in
    log PSD, so it is profiled out exactly and only ``(log s, log k2/k1)``
    are searched.  The Fock cutoff of each point follows its classical
    estimate with a wide margin; convergence is re-checked at the optimum.
    """
    x = np.asarray(drive, dtype=float)
    y = np.asarray(psd, dtype=float)
    if x.shape != y.shape or x.size < 4:
        raise DataError("threshold data needs matching drive and psd arrays with at least 4 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DataError("threshold data must be strictly positive for a log-space fit")
    order = np.argsort(x)
    x, y = x[order], y[order]
    ly = np.log(y)
    unit = sc.hbar * omega_k * kappa_ext

    if drive_scale0 is None:
        # the steepest log-log rise marks the smeared threshold at eps2/k1 ~ 1/4
        slope = np.diff(ly) / np.diff(np.log(x))
        j = int(np.argmax(slope))
        drive_scale0 = 0.25 / np.sqrt(x[j] * x[j + 1])
    if ratio0 is None:
        # the lowest point is deep in the linear regime where k2 barely matters;
        # the PSD dynamic range then fixes n at the top, and the classical branch fixes k2/k1
        n_low = _n_curve(np.array([drive_scale0 * x[0]]), 1e-3)[0]
        n_top = n_low * y[-1] / y[0]
        ratio0 = float(np.clip(max(2 * drive_scale0 * x[-1] - 0.5, 0.05) / n_top, 1e-6, 1.0))

    trace: list[float] = []

    def resid(p):
        s, r = np.exp(p)
        top = classical_steady_state(MPOParams(float(s * x[-1]), 1.0, float(r))).n
        if top > 2 * FIT_MAX_PHOTONS:
            # outside the tractable region: penalise smoothly instead of solving
            res = np.full(x.size, np.log(top / FIT_MAX_PHOTONS) + 10.0)
            trace.append(float(np.linalg.norm(res)))
            return res
        ln = np.log(np.maximum(_n_curve(s * x, float(r)), 1e-300))
        res = ly - ln
        res = res - np.mean(res)
        trace.append(float(np.linalg.norm(res)))
        return res

    p0 = np.log([drive_scale0, ratio0])
    try:
        sol = optimize.least_squares(resid, p0, method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12,
                                     max_nfev=max_nfev, diff_step=1e-6)
    except (SteadyStateError, ValueError) as exc:
        raise FitError(f"fit diverged: {exc}", trace) from exc
    if sol.status == 0:
        raise FitError("fit diverged: evaluation budget exhausted", trace)
    s, r = (float(v) for v in np.exp(sol.x))

    n = _n_curve(s * x, r)
    n_check = _n_curve(s * x, r, scale=1.25)
    if np.max(np.abs(n_check - n) / np.maximum(n, 1e-300)) > 1e-6:
        raise FitError("fit diverged: Fock cutoff not converged at the optimum", trace)

    thr = 0.25 / s
    below, above = int(np.sum(x < thr)), int(np.sum(x > thr))
    if below < 1 or above < 1:
        raise DataError(f"uninformative data: {below} points below and {above} above the fitted threshold")

    lg = float(np.mean(ly - np.log(n)))
    gain_lin = np.exp(lg) / unit
    res = sol.fun
    dof = max(x.size - 3, 1)
    unc = {}
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac) * float(res @ res) / dof
        unc = {"drive_scale": float(s * np.sqrt(cov[0, 0])),
               "kappa2_over_kappa1": float(r * np.sqrt(cov[1, 1]))}
    except np.linalg.LinAlgError:
        pass
    return CalibrationFit(s, float(10 * np.log10(gain_lin)), r, float(np.sqrt(np.mean(res**2))), unc, int(sol.nfev))


# spectra


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    linewidth: float
    area: float
    offset: float
    residual_sigma: float = 0.0
    area_sigma: float = 0.0

    def __post_init__(self):
        if not self.linewidth > 0:
            raise ValueError("linewidth must be positive")
        if self.area < 0:
            raise ValueError("area must be non-negative")

    def evaluate(self, freq) -> np.ndarray:
        return lorentzian(np.asarray(freq, float), self.center, self.linewidth, self.area, self.offset)

    @property
    def peak_height(self) -> float:
        return 2 * self.area / (np.pi * self.linewidth)

    def to_dict(self) -> dict:
        return {"center_hz": self.center, "linewidth_hz": self.linewidth, "area": self.area,
                "offset": self.offset, "area_sigma": self.area_sigma}


def lorentzian(nu, center, linewidth, area, offset):
    """``offset + area (w / 2pi) / ((nu - nu0)^2 + (w / 2)^2)``; the peak integrates to ``area``."""
    return offset + area * (linewidth / (2 * np.pi)) / ((nu - center) ** 2 + (0.5 * linewidth) ** 2)


def fit_lorentzian(freq, psd) -> LorentzianFit:
    nu = np.asarray(freq, dtype=float)
    y = np.asarray(psd, dtype=float)
    if nu.shape != y.shape or nu.size < 8:
        raise DataError("spectrum needs matching freq and psd arrays with at least 8 points")
    # work relative to the grid so the fit is well scaled
    nu_mid = 0.5 * (nu[0] + nu[-1])
    span = float(np.ptp(nu))
    x = (nu - nu_mid) / span
    ys = float(np.max(np.abs(y))) or 1.0
    yn = y / ys

    off0 = float(np.median(yn))
    i = int(np.argmax(yn))
    height = yn[i] - off0
    above = np.flatnonzero(yn - off0 > 0.5 * height)
    w0 = max(float(x[above[-1]] - x[above[0]]), 2 * float(np.min(np.diff(np.sort(x)))))
    a0 = max(height, 1e-12) * np.pi * w0 / 2

    def model(p):
        c, lw, la, off = p
        return lorentzian(x, c, np.exp(lw), np.exp(la), off)

    sol = optimize.least_squares(lambda p: model(p) - yn, [x[i], np.log(w0), np.log(a0), off0],
                                 method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    c, lw, la, off = sol.x
    res = sol.fun
    sigma = float(np.sqrt(np.sum(res**2) / max(nu.size - 4, 1)))
    area = float(np.exp(la))
    width = float(np.exp(lw))
    area_sigma = 0.0
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac) * sigma**2
        area_sigma = float(area * np.sqrt(cov[2, 2]))
    except np.linalg.LinAlgError:
        pass
    peak = 2 * area / (np.pi * width)
    spacing = float(np.min(np.diff(np.sort(x))))
    if (not sol.success or not np.isfinite(peak) or peak < 2 * sigma or area < 3 * area_sigma
            or width > 2.0 or width < spacing):
        raise DataError("no significant peak: fitted area below three standard errors or height within twice the scatter")
    return LorentzianFit(float(nu_mid + c * span), width * span, area * ys * span, float(off * ys),
                         sigma * ys, area_sigma * ys * span)


def added_noise(fit: LorentzianFit, gain_db: float, omega_k: float, kappa_ext: float) -> float:
    """Photons in the mode implied by the spectral area: ``area / (G hbar w_k kappa_e)``."""
    if omega_k <= 0 or kappa_ext <= 0:
        raise ValueError("omega_k and kappa_ext must be positive")
    return float(fit.area / psd_per_photon(gain_db, omega_k, kappa_ext))


def spectrum_for_photons(n: float, gain_db: float, omega_k: float, kappa_ext: float, freq,
                         center: float, linewidth: float, offset: float = 0.0) -> np.ndarray:
    """PSD of a Lorentzian line whose area corresponds to ``n`` photons (inverse of :func:`added_noise`)."""
    area = n * psd_per_photon(gain_db, omega_k, kappa_ext)
    return lorentzian(np.asarray(freq, float), center, linewidth, area, offset)
