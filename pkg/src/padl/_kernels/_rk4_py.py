"""Pure numpy fallback for the RK4 kernel.

For a linear system with constant coefficients over a segment, one RK4 step
is an affine map ``y -> P y + q0 u0 + qh uh + q1 u1``.  The matrices are
obtained by pushing basis vectors through a single RK4 step, so the result is
the same recurrence the compiled kernel evaluates stage by stage.
"""

import numpy as np


def _rk4_step(m, b, y, u0, uh, u1, dt):
    k1 = m @ y + b * u0
    k2 = m @ (y + 0.5 * dt * k1) + b * uh
    k3 = m @ (y + 0.5 * dt * k2) + b * uh
    k4 = m @ (y + dt * k3) + b * u1
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_maps(m, b, dt):
    """Return ``(P, q0, qh, q1)`` for one RK4 step of ``dy/dt = m y + b u``."""
    n = m.shape[0]
    eye = np.eye(n, dtype=np.complex128)
    zero = np.zeros(n, dtype=np.complex128)
    bcol = b[:, None]
    p = _rk4_step(m, bcol * 0, eye, 0.0, 0.0, 0.0, dt)
    q0 = _rk4_step(m, b, zero, 1.0, 0.0, 0.0, dt)
    qh = _rk4_step(m, b, zero, 0.0, 1.0, 0.0, dt)
    q1 = _rk4_step(m, b, zero, 0.0, 0.0, 1.0, dt)
    return p, q0, qh, q1


def rk4_linear(mats, starts, b, u, dt, y0):
    mats = np.asarray(mats, dtype=np.complex128)
    starts = np.asarray(starts, dtype=np.int64)
    b = np.asarray(b, dtype=np.complex128)
    u = np.asarray(u, dtype=np.complex128)
    nsteps = (u.shape[0] - 1) // 2
    n = b.shape[0]
    out = np.empty((nsteps + 1, n), dtype=np.complex128)
    y = np.array(y0, dtype=np.complex128)
    out[0] = y
    bounds = list(starts[1:]) + [nsteps]
    u0 = u[0:-1:2]
    uh = u[1::2]
    u1 = u[2::2]
    for seg, (lo, hi) in enumerate(zip(starts, bounds)):
        lo, hi = int(lo), int(min(hi, nsteps))
        if hi <= lo:
            continue
        p, q0, qh, q1 = step_maps(mats[seg], b, dt)
        forcing = (
            np.outer(u0[lo:hi], q0) + np.outer(uh[lo:hi], qh) + np.outer(u1[lo:hi], q1)
        )
        for i in range(lo, hi):
            y = p @ y + forcing[i - lo]
            out[i + 1] = y
    return out
