"""Device parameter sets measured on the reference delay-line chip.

Frequencies are stored as f/2pi in Hz exactly as tabulated and converted to
angular units by the builders.
"""

from __future__ import annotations

import numpy as np

from .model import (
    BufferMode,
    DelayLineModel,
    ParametricCoupling,
    StorageMode,
    ideal_comb_deltas,
)

TWO_PI = 2 * np.pi

# Bare device: buffer and CPW resonators at the saddle point.
DEVICE_BUFFER = {"omega_b_hz": 5.0073e9, "L_b_h": 7.50e-9, "phi_b": 0.336,
                 "kappa_ext_hz": 3.95e6, "kappa_int_hz": 130e3, "E_J_hz": 5.28e9,
                 "E_Lb_hz": 21.8e9}
DEVICE_STORAGE = [
    # omega_k/2pi, phi_k, kappa_ke/2pi, kappa_ki/2pi, Q_i
    (6.904939e9, 0.0186, 37e3, 32e3, 220e3),
    (6.975562e9, 0.0228, 40e3, 29e3, 240e3),
    (7.156324e9, 0.0210, 70e3, 41e3, 170e3),
    (7.247145e9, 0.0175, 57e3, 34e3, 210e3),
    (7.318975e9, 0.0179, 74e3, 39e3, 190e3),
    (7.389379e9, 0.0186, 102e3, 25e3, 300e3),
    (7.460333e9, 0.0211, 132e3, 67e3, 110e3),
]

# Fitted S11 parameters of the seven-mode delay line.
FIT_BUFFER = {"omega_b_hz": 5.03123e9, "kappa_ext_hz": 3.37e6, "kappa_int_hz": 440e3}
FIT_STORAGE = [
    # omega_k/2pi, omega_k'/2pi, kappa_k/2pi, |g_k|/2pi
    (6.904939e9, 5.032140e9, 67e3, 530e3),
    (6.975562e9, 5.032625e9, 78e3, 530e3),
    (7.156324e9, 5.031112e9, 109e3, 540e3),
    (7.247145e9, 5.031607e9, 90e3, 560e3),
    (7.318975e9, 5.033132e9, 130e3, 520e3),
    (7.389379e9, 5.033617e9, 140e3, 520e3),
    (7.460333e9, 5.03058e9, 210e3, 520e3),
]
FIT_FSR_HZ = 500e3

# Parametric drive and flux pump tones used for the delay line (Hz).
DRIVE_FREQS_HZ = [4.719403e9, 4.789553e9, 4.971818e9, 5.062160e9, 5.132469e9, 5.202372e9, 5.276428e9]
PUMP_FREQ_HZ = 2.84654e9

# MPO calibration per CPW: omega_k/2pi, gain (dB), kappa2/kappa1, added photons.
MPO_CALIBRATION = [
    (6.904939e9, 95.70, 8.406e-4, 0.143),
    (6.975562e9, 96.53, 22.09e-4, 0.092),
    (7.156324e9, 94.72, 6.323e-4, 0.109),
    (7.247145e9, 94.59, 5.523e-4, 0.143),
    (7.318975e9, 96.07, 7.165e-4, 0.083),
    (7.389379e9, 96.78, 12.73e-4, 0.065),
    (7.460333e9, 99.11, 70.65e-4, 0.021),
]
# Added-noise value for the 6.975562 GHz mode from a separate run.
ALT_ADDED_PHOTONS = 0.11

IDEAL_G_HZ = 562.4e3


def fitted_delay_line() -> DelayLineModel:
    """The seven-mode delay line as fitted from its reflection spectrum."""
    b = FIT_BUFFER
    buffer = BufferMode(TWO_PI * b["omega_b_hz"], TWO_PI * b["kappa_ext_hz"], TWO_PI * b["kappa_int_hz"])
    storage = []
    for f_k, f_prime, kap, g in FIT_STORAGE:
        storage.append((
            StorageMode(TWO_PI * f_k, 0.0, TWO_PI * kap),
            ParametricCoupling(complex(TWO_PI * g), TWO_PI * (f_prime - b["omega_b_hz"])),
        ))
    return DelayLineModel(buffer, tuple(storage), fsr=TWO_PI * FIT_FSR_HZ)


def ideal_comb(
    n_modes: int = 7,
    kappa_ext: float = TWO_PI * FIT_BUFFER["kappa_ext_hz"],
    g: float = TWO_PI * IDEAL_G_HZ,
    q_int: float | None = None,
    omega_b: float = TWO_PI * FIT_BUFFER["omega_b_hz"],
    span: float | None = None,
) -> DelayLineModel:
    """Lossless-buffer comb with detunings evenly spread over ``span`` (default kappa_ext).

    With ``q_int`` the storage modes get ``kappa = omega_k / q_int`` using the
    device CPW frequencies (cycled when more than seven modes are requested).
    """
    deltas = ideal_comb_deltas(n_modes, kappa_ext if span is None else span)
    buffer = BufferMode(omega_b, kappa_ext, 0.0)
    storage = []
    for k, delta in enumerate(deltas):
        omega_k = TWO_PI * DEVICE_STORAGE[k % len(DEVICE_STORAGE)][0]
        kappa = 0.0 if q_int is None else omega_k / q_int
        storage.append((StorageMode(omega_k, 0.0, kappa), ParametricCoupling(complex(g), float(delta))))
    return DelayLineModel(buffer, tuple(storage), center_freq=omega_b)
