import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import constants as sc

from padl.errors import DataError, SteadyStateError
from padl.mpo import (LorentzianFit, MPOParams, added_noise, classical_residual, classical_steady_state,
                      fit_lorentzian, fit_threshold, liouvillian, lorentzian, mpo_steady_state,
                      psd_per_photon, spectrum_for_photons, steady_state_at, synthetic_threshold_data,
                      threshold_curve)

from .oracles import master_equation_rk4

TWO_PI = 2 * np.pi
OMEGA_K = TWO_PI * 6.975562e9
KAPPA_E = TWO_PI * 40e3


def test_vacuum_without_drive():
    ss = mpo_steady_state(MPOParams(0.0, 1.0, 0.05))
    assert ss.n == 0.0
    assert ss.rho[0, 0] == 1.0


def test_solver_matches_time_evolution_at_fixed_cutoff():
    p = MPOParams(0.3, 1.0, 0.05)
    _, n_ref, _ = master_equation_rk4(0.3, 1.0, 0.05, 24)
    assert steady_state_at(p, 24).n == pytest.approx(n_ref, rel=1e-6)


def test_large_drive_approaches_classical_branch():
    p = MPOParams(10.0, 1.0, 0.2)
    n = mpo_steady_state(p).n
    assert n == pytest.approx(classical_steady_state(p).n, rel=0.05)


@given(st.floats(0.0, 3.0), st.floats(1e-3, 1.0))
def test_classical_branch(e, r):
    p = MPOParams(e, 1.0, r)
    c = classical_steady_state(p)
    assert c.threshold == 0.25
    if e <= 0.25:
        assert c.n == 0 and not c.above
    else:
        assert c.n > 0
        assert classical_residual(p, c.n) < 1e-12 * max(1.0, e * np.sqrt(c.n))


def test_classical_at_threshold_and_double():
    assert classical_steady_state(MPOParams(0.25, 1.0, 0.01)).n == 0
    p = MPOParams(0.5, 1.0, 0.01)
    c = classical_steady_state(p)
    assert c.n == pytest.approx(50.0)
    assert classical_residual(p, c.n) < 1e-12


def test_grid_zero():
    assert list(threshold_curve(MPOParams(0.0, 1.0, 1e-3), [0.0])) == [0.0]


def test_curve_smooth_and_monotone():
    grid = np.geomspace(0.01, 1.0, 25)
    n = threshold_curve(MPOParams(0.0, 1.0, 0.02), grid)
    assert np.all(np.diff(n) > 0)
    # no jump larger than the local spacing allows: log-log slope stays bounded
    slope = np.diff(np.log(n)) / np.diff(np.log(grid))
    assert np.max(slope) < 12
    cl = np.array([classical_steady_state(MPOParams(e, 1.0, 0.02)).n for e in grid])
    assert cl[grid <= 0.25].max() == 0 and cl[-1] > 0


def test_subthreshold_quadratic():
    grid = np.array([0.005, 0.01, 0.02, 0.05])
    n = threshold_curve(MPOParams(0.0, 1.0, 22.09e-4), grid)
    slope = np.polyfit(np.log(grid), np.log(n), 1)[0]
    assert slope == pytest.approx(2.0, rel=0.05)


def test_unsorted_grid_rejected():
    with pytest.raises(ValueError):
        threshold_curve(MPOParams(0.0, 1.0, 0.01), [0.2, 0.1])


def test_cutoff_exhausted():
    with pytest.raises(SteadyStateError, match="cutoff exhausted"):
        mpo_steady_state(MPOParams(1.0, 1.0, 22.09e-4), hard_max=64)


@pytest.mark.parametrize("e", [0.1, 0.3, 0.6])
def test_state_properties_and_convergence(e):
    p = MPOParams(e, 1.0, 0.05)
    ss = mpo_steady_state(p)
    rho = ss.rho
    assert np.allclose(rho, rho.T.conj(), atol=1e-14)
    assert np.trace(rho) == pytest.approx(1.0, abs=1e-12)
    assert np.min(np.linalg.eigvalsh(rho)) > -1e-10
    bigger = steady_state_at(p, int(np.ceil(1.25 * ss.cutoff))).n
    assert abs(bigger - ss.n) < 1e-6 * ss.n


def test_parity_preserved_in_full_basis():
    p = MPOParams(0.4, 1.0, 0.1)
    N = 14
    L, idx = liouvillian(p, N, full=True)
    L = L.toarray()
    # null vector from the SVD of the full Liouvillian
    _, s, vh = np.linalg.svd(L)
    v = vh[-1]
    rho = np.zeros((N, N))
    rho[idx >= 0] = v[idx[idx >= 0]]
    rho /= np.trace(rho)
    m, n = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    assert np.max(np.abs(rho[(m - n) % 2 == 1])) < 1e-10
    assert np.trace(np.diag(np.arange(N)) @ rho) == pytest.approx(steady_state_at(p, N).n, rel=1e-9)


def test_noise_free_calibration_round_trip():
    drive = np.geomspace(0.03, 0.32, 12) / 0.8
    psd = synthetic_threshold_data(drive, 0.8, 96.53, 22.09e-4, OMEGA_K, KAPPA_E)
    fit = fit_threshold(drive, psd, OMEGA_K, KAPPA_E)
    assert fit.drive_scale == pytest.approx(0.8, rel=1e-4)
    assert fit.gain_db == pytest.approx(96.53, abs=1e-4 * 96.53)
    assert fit.kappa2_over_kappa1 == pytest.approx(22.09e-4, rel=1e-4)

    rescaled = fit_threshold(10 * drive, psd, OMEGA_K, KAPPA_E)
    assert rescaled.drive_scale == pytest.approx(0.1 * fit.drive_scale, rel=1e-6)
    assert rescaled.gain_db == pytest.approx(fit.gain_db, rel=1e-6)
    assert rescaled.kappa2_over_kappa1 == pytest.approx(fit.kappa2_over_kappa1, rel=1e-6)


def test_uninformative_calibration_data():
    drive = np.geomspace(0.01, 0.1, 8)
    psd = synthetic_threshold_data(drive, 1.0, 96.53, 22.09e-4, OMEGA_K, KAPPA_E)
    with pytest.raises(DataError, match="uninformative"):
        fit_threshold(drive, psd, OMEGA_K, KAPPA_E)


def test_psd_per_photon():
    assert psd_per_photon(0.0, OMEGA_K, KAPPA_E) == pytest.approx(sc.hbar * OMEGA_K * KAPPA_E)
    assert psd_per_photon(10.0, OMEGA_K, KAPPA_E) == pytest.approx(10 * sc.hbar * OMEGA_K * KAPPA_E)


def test_lorentzian_area():
    nu = np.linspace(-5e6, 5e6, 400001)
    y = lorentzian(nu, 1e5, 4e4, 3.0, 0.0)
    assert np.trapezoid(y, nu) == pytest.approx(3.0, rel=1e-2)  # tails beyond the window
    assert lorentzian(1e5, 1e5, 4e4, 3.0, 0.0) == pytest.approx(2 * 3.0 / (np.pi * 4e4))


def test_lorentzian_exact_recovery():
    nu = np.linspace(-4e5, 4e5, 801)
    y = lorentzian(nu, 1.2e4, 4e4, 2e-10, 3e-16)
    fit = fit_lorentzian(nu, y)
    assert fit.center == pytest.approx(1.2e4, rel=1e-8)
    assert fit.linewidth == pytest.approx(4e4, rel=1e-8)
    assert fit.area == pytest.approx(2e-10, rel=1e-8)


def test_lorentzian_noisy_monte_carlo():
    nu = np.linspace(-4e5, 4e5, 801)
    clean = lorentzian(nu, 0.0, 4e4, 2e-10, 0.0)
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = clean + 0.05 * clean.max() * rng.standard_normal(nu.size)
        errs.append(fit_lorentzian(nu, y).area / 2e-10 - 1)
    errs = np.array(errs)
    # 95% of realisations inside 3%, no bias
    assert np.percentile(np.abs(errs), 95) < 0.03
    assert abs(np.mean(errs)) < 0.005


def test_flat_spectrum_rejected():
    nu = np.linspace(-4e5, 4e5, 801)
    rng = np.random.default_rng(0)
    with pytest.raises(DataError, match="no significant peak"):
        fit_lorentzian(nu, 1e-15 + 1e-17 * rng.standard_normal(nu.size))


def test_added_noise_zero_area():
    assert added_noise(LorentzianFit(0.0, 1e4, 0.0, 0.0), 96.53, OMEGA_K, KAPPA_E) == 0.0


@pytest.mark.parametrize("n", [0.092, 0.11])
def test_added_noise_round_trip(n):
    nu = np.linspace(-4e5, 4e5, 801)
    y = spectrum_for_photons(n, 96.53, OMEGA_K, KAPPA_E, nu, 0.0, 4e4)
    assert added_noise(fit_lorentzian(nu, y), 96.53, OMEGA_K, KAPPA_E) == pytest.approx(n, rel=0.01)


def test_params_validation():
    with pytest.raises(ValueError):
        MPOParams(0.1, 0.0, 0.1)
    with pytest.raises(ValueError):
        MPOParams(0.1, 1.0, -0.1)
    with pytest.raises(ValueError):
        MPOParams(0.1, 1.0, 0.1, fock_cutoff=3)
