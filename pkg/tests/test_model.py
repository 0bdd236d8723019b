import dataclasses

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from padl.errors import FitError, ModelError, SingularEvaluation
from padl.model import (BufferMode, DelayLineModel, ParametricCoupling, StorageMode, build_delay_line, dbp,
                        fit_s11, group_delay, model_from_report, model_report, param_names, physical_coupling, s11)
from padl.presets import FIT_STORAGE, fitted_delay_line, ideal_comb

TWO_PI = 2 * np.pi


def single_pole(kappa_ext=TWO_PI * 3.37e6, kappa_int=0.0, omega_b=TWO_PI * 5.03123e9):
    buf = BufferMode(omega_b, kappa_ext, kappa_int)
    # one storage mode with g = 0 far away
    return DelayLineModel(buf, ((StorageMode(TWO_PI * 7e9), ParametricCoupling(0j, TWO_PI * 50e6)),))


def test_ideal_comb_request():
    m = build_delay_line({
        "buffer": {"omega_b_2pi_hz": 5.03123e9, "kappa_ext_2pi_hz": 3.37e6},
        "storage": [{"omega_k_2pi_hz": 6.9e9 + 1e8 * k, "g_2pi_hz": 562.4e3} for k in range(7)],
        "comb": "ideal",
    })
    np.testing.assert_allclose(m.deltas / TWO_PI, np.linspace(-1.685e6, 1.685e6, 7), rtol=1e-12)
    np.testing.assert_allclose(np.abs(m.gains) / TWO_PI, 562.4e3)
    assert m.round_trip_time == pytest.approx(1 / (3.37e6 / 6))


def test_single_mode_has_no_round_trip():
    m = single_pole()
    assert not m.has_round_trip
    assert m.round_trip_time is None
    assert dbp(m) == 0


def test_fitted_preset_ingestion():
    m = fitted_delay_line()
    f = m.omega_prime / TWO_PI
    assert f.min() == pytest.approx(5.03058e9)
    assert f.max() == pytest.approx(5.033617e9)
    assert m.n_modes == 7


def test_degenerate_teeth():
    cfg = {"buffer": {"omega_b_2pi_hz": 5e9, "kappa_ext_2pi_hz": 3e6},
           "storage": [{"omega_k_2pi_hz": 7e9, "g_2pi_hz": 5e5, "delta_2pi_hz": 1e5},
                       {"omega_k_2pi_hz": 7.1e9, "g_2pi_hz": 5e5, "delta_2pi_hz": 1e5 + 0.5}]}
    with pytest.raises(ModelError, match="degenerate comb teeth"):
        build_delay_line(cfg)


def test_physical_coupling_input():
    cfg = {"buffer": {"omega_b_2pi_hz": 5e9, "kappa_ext_2pi_hz": 3e6, "zpf": 0.336},
           "physical": {"E_J_hz": 30e9, "eps_p": 0.01},
           "storage": [{"omega_k_2pi_hz": 7e9, "zpf": 0.02, "beta": 0.1, "delta_2pi_hz": 0.0}]}
    m = build_delay_line(cfg)
    from scipy import constants as sc
    expected = sc.h * 30e9 * 0.01 * 0.336**2 * 0.02 * 0.1 / sc.hbar
    assert m.gains[0] == pytest.approx(expected)
    assert physical_coupling(sc.h * 30e9, 0.01, 0.336, 0.02, 0.1) == pytest.approx(expected)


def test_q_int_property():
    s = StorageMode(TWO_PI * 7e9, 0.0, TWO_PI * 7e9 / 15e6)
    assert s.q_int == pytest.approx(15e6)


def test_bare_mirror_limit():
    m = single_pole()
    w = m.buffer.omega_b + 2000 * m.buffer.kappa
    assert abs(s11(m, w) - 1) < 1e-3


def test_lossless_reflection_unimodular(fitted):
    m = fitted.without_buffer_loss().without_intrinsic_loss()
    w = np.linspace(m.center_freq - 3 * m.buffer.kappa, m.center_freq + 3 * m.buffer.kappa, 4001) + 0.123
    assert np.max(np.abs(np.abs(s11(m, w)) - 1)) < 1e-9


def test_singular_point(comb):
    with pytest.raises(SingularEvaluation, match="singular evaluation point"):
        s11(comb, comb.omega_prime[2])


def test_dips_at_converted_frequencies(fitted):
    for k, wp in enumerate(fitted.omega_prime):
        half = 0.5 * fitted.kappas[k]
        w = np.linspace(wp - 3 * half, wp + 3 * half, 2001)
        w_min = w[np.argmin(np.abs(s11(fitted, w)))]
        assert abs(w_min - wp) < half + 0.25 * fitted.fsr


def test_direct_formula_at_tooth(fitted):
    # independent evaluation of the reflection formula at each converted frequency
    b = fitted.buffer
    for wp in fitted.omega_prime:
        total = 0j
        for (mode, coup) in fitted.storage:
            total += abs(coup.g) ** 2 / (wp - (b.omega_b + coup.delta) + 0.5j * mode.kappa)
        ref = 1 - b.kappa_ext / (1j * (b.omega_b - wp) + 0.5 * (b.kappa_ext + b.kappa_int) + 1j * total)
        assert s11(fitted, wp) == pytest.approx(ref, rel=1e-12)


def test_single_pole_group_delay():
    m = single_pole()
    # d/dw of arg(1 - k/(i(wb - w) + k/2)) at resonance is 4/k for the over-coupled lossless pole
    assert group_delay(m, m.buffer.omega_b) == pytest.approx(4 / m.buffer.kappa, rel=1e-6)


def test_group_delay_far_detuned_vanishes():
    m = single_pole()
    assert abs(group_delay(m, m.buffer.omega_b + 1e4 * m.buffer.kappa)) < 1e-12


def test_group_delay_ideal_comb(comb):
    local = group_delay(comb, comb.center_freq)
    averaged = group_delay(comb, comb.center_freq, step=0.5 * comb.fsr)
    assert local == pytest.approx(comb.round_trip_time, rel=0.10)
    assert averaged == pytest.approx(comb.round_trip_time, rel=0.10)


def test_dbp_values():
    assert dbp(ideal_comb(7)) == 6
    assert dbp(ideal_comb(3)) == 2
    assert dbp(single_pole()) == 0


@given(st.permutations(list(range(7))))
def test_dbp_permutation_invariant(perm):
    m = fitted_delay_line()
    shuffled = DelayLineModel(m.buffer, tuple(m.storage[i] for i in perm), m.fsr)
    assert dbp(shuffled) == dbp(m)
    w = np.linspace(m.center_freq - 5e6, m.center_freq + 5e6, 101)
    np.testing.assert_allclose(s11(shuffled, w), s11(m, w), rtol=1e-12)


@st.composite
def models(draw):
    n = draw(st.integers(1, 6))
    kbe = TWO_PI * draw(st.floats(0.5e6, 5e6))
    kbi = TWO_PI * draw(st.floats(0, 1e6))
    buf = BufferMode(TWO_PI * 5e9, kbe, kbi)
    storage = []
    for k in range(n):
        mode = StorageMode(TWO_PI * (6.9e9 + 0.1e9 * k), 0.0, TWO_PI * draw(st.floats(0, 300e3)))
        coup = ParametricCoupling(TWO_PI * draw(st.floats(0, 1e6)) * np.exp(1j * draw(st.floats(-3, 3))),
                                  TWO_PI * draw(st.floats(-2e6, 2e6)))
        storage.append((mode, coup))
    deltas = sorted(c.delta for _, c in storage)
    assume(all(b - a > TWO_PI * 10 for a, b in zip(deltas, deltas[1:])))
    return DelayLineModel(buf, tuple(storage), TWO_PI * 500e3)


@given(models())
def test_passivity(m):
    w = m.buffer.omega_b + np.linspace(-4, 4, 801) * m.buffer.kappa + 0.371
    assert np.max(np.abs(s11(m, w))) <= 1 + 1e-9


@given(models())
def test_unimodular_when_lossless(m):
    m = m.without_buffer_loss().without_intrinsic_loss()
    w = m.buffer.omega_b + np.linspace(-4, 4, 801) * m.buffer.kappa + 0.371
    assert np.max(np.abs(np.abs(s11(m, w)) - 1)) < 1e-9


@given(st.integers(2, 9), st.floats(0, 200e3), st.floats(1e3, 1e6))
def test_ideal_comb_symmetry(n, kappa_hz, delta_hz):
    m = ideal_comb(n)
    modes = [dataclasses.replace(md, kappa_int=TWO_PI * kappa_hz) for md in m.modes]
    m = m.replace_storage(modes=modes)
    d = TWO_PI * delta_hz + 0.37
    up, down = s11(m, m.center_freq + d), s11(m, m.center_freq - d)
    assert abs(abs(up) - abs(down)) < 1e-6


def _sweep(m, n=1200):
    span = 1.5 * m.buffer.kappa
    return np.linspace(m.center_freq - span, m.center_freq + span, n)


def test_fit_noise_free_round_trip(fitted):
    w = _sweep(fitted)
    data = s11(fitted, w)
    init = fitted.replace_storage(couplings=[dataclasses.replace(c, g=c.g * 1.05, delta=c.delta + TWO_PI * 5e3)
                                              for c in fitted.couplings])
    fit = fit_s11(w, data, init)
    for name, ref in zip(param_names(7), _values(fitted)):
        got = _values(fit.model)[param_names(7).index(name)]
        assert got == pytest.approx(ref, rel=1e-6), name
    assert fit.residual_norm <= fit.init_residual_norm


def _values(m):
    out = [m.buffer.omega_b, m.buffer.kappa_ext, m.buffer.kappa_int]
    for wp, kk, g in zip(m.omega_prime, m.kappas, np.abs(m.gains)):
        out += [wp, kk, g]
    return out


def test_fit_with_noise_within_uncertainty(fitted):
    rng = np.random.default_rng(11)
    w = _sweep(fitted, 3000)
    data = s11(fitted, w) + 0.01 * (rng.standard_normal(w.size) + 1j * rng.standard_normal(w.size)) / np.sqrt(2)
    fit = fit_s11(w, data, fitted)
    names = param_names(7)
    truth = dict(zip(names, _values(fitted)))
    got = dict(zip(names, _values(fit.model)))
    for name in names:
        assert abs(got[name] - truth[name]) <= 4 * fit.uncertainty[name] + 1e-9 * abs(truth[name]), name


def test_fit_basin(fitted):
    w = _sweep(fitted)
    data = s11(fitted, w)
    perturbed = fitted.replace_storage(couplings=[
        dataclasses.replace(c, delta=c.delta + 0.25 * k) for c, k in zip(fitted.couplings, fitted.kappas)])
    a = fit_s11(w, data, fitted)
    b = fit_s11(w, data, perturbed)
    np.testing.assert_allclose(_values(a.model), _values(b.model), rtol=1e-8)


def test_fit_single_mode():
    m = single_pole()
    m = DelayLineModel(m.buffer, ((StorageMode(TWO_PI * 7e9, 0, TWO_PI * 100e3),
                                   ParametricCoupling(TWO_PI * 400e3 + 0j, TWO_PI * 0.2e6)),))
    w = np.linspace(m.buffer.omega_b - 2 * m.buffer.kappa, m.buffer.omega_b + 2 * m.buffer.kappa, 800)
    init = dataclasses.replace(m, buffer=dataclasses.replace(m.buffer, kappa_ext=1.1 * m.buffer.kappa_ext,
                                                             kappa_int=TWO_PI * 1e4))
    fit = fit_s11(w, s11(m, w), init)
    assert fit.model.buffer.kappa_ext == pytest.approx(m.buffer.kappa_ext, rel=1e-6)


def test_fit_needs_data(fitted):
    with pytest.raises(FitError):
        fit_s11(np.arange(5.0), np.ones(5, complex), fitted)


def test_report_round_trip(fitted):
    rep = model_report(fitted)
    assert set(rep) >= {"omega_b/2pi", "kappa_b,e/2pi", "kappa_b,i/2pi", "storage", "fsr/2pi"}
    assert rep["storage"][0]["g_k/2pi"]["value_hz"] == pytest.approx(FIT_STORAGE[0][3])
    back = model_from_report(rep)
    np.testing.assert_allclose(_values(back), _values(fitted), rtol=1e-12)
    assert back.fsr == pytest.approx(fitted.fsr)
