"""Linear circuit normal modes, the ATS potential, and resonant-term selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import constants as sc
from scipy import linalg

from .errors import CircuitError, UnresonantDrive

HBAR = sc.hbar
PHI0_REDUCED = sc.hbar / (2 * sc.e)  # flux quantum / 2pi
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class LumpedCircuit:
    """Capacitive network with inductors to ground.

    ``node_inductances[i]`` is the inductance from node ``i`` to ground in
    henries, or ``None`` when the node has no inductor.
    """

    node_capacitance_matrix: np.ndarray
    node_inductances: tuple
    ats_node_index: int

    def __post_init__(self):
        c = np.array(self.node_capacitance_matrix, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise CircuitError("ill-posed circuit: capacitance matrix must be square")
        if not np.allclose(c, c.T, rtol=1e-12, atol=0.0):
            raise CircuitError("ill-posed circuit: capacitance matrix is not symmetric")
        inds = tuple(None if x is None else float(x) for x in self.node_inductances)
        if len(inds) != c.shape[0]:
            raise CircuitError("ill-posed circuit: one inductance entry per node required")
        if any(x is not None and x <= 0 for x in inds):
            raise CircuitError("ill-posed circuit: inductances must be positive")
        if not 0 <= self.ats_node_index < c.shape[0]:
            raise CircuitError("ill-posed circuit: ats_node_index out of range")
        object.__setattr__(self, "node_capacitance_matrix", c)
        object.__setattr__(self, "node_inductances", inds)

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "LumpedCircuit":
        """Build from a config block: ``capacitance_f`` (dense), ``inductance_h`` (node -> H)."""
        c = np.asarray(cfg["capacitance_f"], dtype=float)
        inds: list = [None] * c.shape[0]
        for node, value in dict(cfg.get("inductance_h", {})).items():
            idx = int(node)
            if not 0 <= idx < c.shape[0]:
                raise CircuitError(f"ill-posed circuit: inductor on unknown node {node}")
            inds[idx] = value
        return cls(c, tuple(inds), int(cfg.get("ats_node", 0)))

    @property
    def inverse_inductance(self) -> np.ndarray:
        return np.diag([0.0 if x is None else 1.0 / x for x in self.node_inductances])


@dataclass(frozen=True)
class NormalModes:
    """Eigenfrequencies (rad/s) and dimensionless ATS-node flux ZPFs, ascending in frequency."""

    frequencies: np.ndarray
    zpf_at_ats: np.ndarray
    # node x mode matrix of dimensionless flux ZPFs (signed), when known
    node_zpf: np.ndarray | None = None

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        z = np.asarray(self.zpf_at_ats, dtype=float)
        if f.shape != z.shape:
            raise CircuitError("frequencies and zpf_at_ats must have equal length")
        if np.any(f <= 0) or np.any(np.diff(f) < 0):
            raise CircuitError("mode frequencies must be positive and ascending")
        if np.any(z < 0):
            raise CircuitError("zpf values must be non-negative")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "zpf_at_ats", z)


def single_mode_zpf(inductance: float, capacitance: float) -> float:
    """Dimensionless flux ZPF of an isolated LC oscillator, sqrt(2 e^2 Z / hbar)."""
    z = np.sqrt(inductance / capacitance)
    return float(np.sqrt(2 * sc.e**2 * z / sc.hbar))


def diagonalize_circuit(circuit: LumpedCircuit) -> NormalModes:
    """Solve ``L^-1 v = w^2 C v`` and return frequencies with ATS-node ZPFs.

    The capacitance matrix is whitened with its Cholesky factor so the
    problem becomes a symmetric eigenproblem.
    """
    c = circuit.node_capacitance_matrix
    linv = circuit.inverse_inductance
    try:
        chol = linalg.cholesky(c, lower=True)
    except linalg.LinAlgError as exc:
        raise CircuitError("ill-posed circuit: capacitance matrix not positive definite") from exc

    kinv_linv = linalg.solve_triangular(chol, linv, lower=True)
    m = linalg.solve_triangular(chol, kinv_linv.T, lower=True).T
    m = 0.5 * (m + m.T)
    w2, u = linalg.eigh(m)
    scale = np.max(np.abs(w2)) if w2.size else 1.0
    if np.any(w2 <= 1e-12 * scale):
        bad = int(np.argmin(w2))
        raise CircuitError(f"non-oscillatory mode: eigenvalue {w2[bad]:.3g} (rad/s)^2 at index {bad}")

    # v normalized so that v^T C v = 1
    v = linalg.solve_triangular(chol.T, u, lower=False)
    omega = np.sqrt(w2)

    resid = linv @ v - c @ v * w2
    ref = np.linalg.norm(linv @ v)
    if np.linalg.norm(resid) > 1e-10 * ref:
        raise CircuitError("ill-posed circuit: generalized eigenproblem residual too large")

    flux_zpf = v * np.sqrt(HBAR / (2 * omega))  # webers
    node_zpf = flux_zpf / PHI0_REDUCED
    return NormalModes(omega, np.abs(node_zpf[circuit.ats_node_index]), node_zpf)


def ground_state_flux_variance(circuit: LumpedCircuit) -> np.ndarray:
    """Node-flux covariance of the circuit ground state, in dimensionless phase units.

    Computed from a matrix square root rather than the eigendecomposition so it
    can serve as a completeness check on :func:`diagonalize_circuit`.
    """
    c = circuit.node_capacitance_matrix
    chol = linalg.cholesky(c, lower=True)
    kinv = linalg.solve_triangular(chol, np.eye(c.shape[0]), lower=True)
    m = kinv @ circuit.inverse_inductance @ kinv.T
    root = linalg.sqrtm(0.5 * (m + m.T))
    cov_x = 0.5 * HBAR * linalg.inv(np.real(root))
    cov = kinv.T @ cov_x @ kinv
    return cov / PHI0_REDUCED**2


@dataclass(frozen=True)
class AtsBias:
    """Flux bias of the ATS (radians) with the instantaneous pump modulation and energies (J)."""

    phi_sum: float
    phi_delta: float
    pump_eps: float
    E_J: float
    E_Lb: float
    eps_bound: float = 0.1

    def __post_init__(self):
        if abs(self.pump_eps) > self.eps_bound:
            raise CircuitError(
                f"pump modulation |eps_p| = {abs(self.pump_eps):.3g} exceeds bound {self.eps_bound}"
            )
        if self.E_J < 0 or self.E_Lb <= 0:
            raise CircuitError("E_J must be >= 0 and E_Lb > 0")

    @classmethod
    def saddle(cls, pump_eps: float, E_J: float, E_Lb: float, **kw) -> "AtsBias":
        return cls(np.pi / 2, np.pi / 2, pump_eps, E_J, E_Lb, **kw)


def energy_from_hz(freq_hz: float) -> float:
    """Convert an energy quoted as E/h in Hz to joules."""
    return sc.h * freq_hz


def ats_potential(bias: AtsBias, phi, first_order: bool = False):
    """ATS potential in joules at node phase ``phi``.

    The full form evaluates the cosine at ``phi_sum + pump_eps``.  The first
    order form linearises in ``pump_eps``; at the saddle point it is
    ``E_Lb phi^2 / 2 - 2 E_J eps_p sin(phi)``.
    """
    phi = np.asarray(phi, dtype=float)
    quad = 0.5 * bias.E_Lb * phi**2
    if first_order:
        c_sum = np.cos(bias.phi_sum) - bias.pump_eps * np.sin(bias.phi_sum)
    else:
        c_sum = np.cos(bias.phi_sum + bias.pump_eps)
    return quad - 2 * bias.E_J * c_sum * np.cos(phi + bias.phi_delta)


@dataclass(frozen=True)
class InteractionTerm:
    kind: str  # "beamsplitter" or "two_photon"
    mode: int  # index into NormalModes
    detuning: float = 0.0  # rad/s; Delta_k for beamsplitters, pump mismatch for two-photon
    drive: int | None = None


def select_resonant_terms(
    pump_freq: float,
    drive_freqs: Sequence[float],
    modes: NormalModes,
    buffer_index: int,
    tol: float = TWO_PI * 1e3,
    band: float = TWO_PI * 5e6,
) -> list[InteractionTerm]:
    """Identify the terms made resonant by a pump and a set of buffer drives.

    A drive at ``w_d`` converts storage mode ``k`` to ``w_b + Delta_k`` with
    ``Delta_k = w_p - w_d - w_b + w_k``.  The drive is accepted for the mode
    with the smallest ``|Delta_k|`` provided it lies within ``band`` (plus
    ``tol``).  Two-photon terms are flagged where ``w_p = 2 w_k - w_b``
    holds within ``tol``.
    """
    freqs = modes.frequencies
    if pump_freq <= 0 or any(f <= 0 for f in drive_freqs):
        raise CircuitError("frequencies must be positive")
    if not 0 <= buffer_index < freqs.size:
        raise CircuitError("buffer_index out of range")
    wb = freqs[buffer_index]
    storage = [k for k in range(freqs.size) if k != buffer_index]
    terms: list[InteractionTerm] = []

    for d, wd in enumerate(drive_freqs):
        deltas = np.array([pump_freq - wd - wb + freqs[k] for k in storage])
        j = int(np.argmin(np.abs(deltas)))
        if abs(deltas[j]) > band + tol:
            raise UnresonantDrive(d, storage[j], abs(deltas[j]) - band)
        terms.append(InteractionTerm("beamsplitter", storage[j], float(deltas[j]), d))

    for k in storage:
        mismatch = pump_freq - (2 * freqs[k] - wb)
        if abs(mismatch) <= tol:
            terms.append(InteractionTerm("two_photon", k, float(mismatch)))
    return terms
