# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-step RK4 for piecewise-constant linear systems driven by one input."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _deriv(double complex[:, :] m, double complex[:] b,
                        double complex[:] y, double complex u,
                        double complex[:] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double complex acc
    for i in range(n):
        acc = b[i] * u
        for j in range(n):
            acc = acc + m[i, j] * y[j]
        out[i] = acc


def rk4_linear(double complex[:, :, :] mats, long[:] starts,
               double complex[:] b, double complex[:] u, double dt,
               double complex[:] y0):
    """Integrate dy/dt = M_s y + b u(t) with classical RK4.

    ``u`` holds the input at half-step resolution (length ``2*nsteps + 1``);
    segment ``s`` uses ``mats[s]`` from step ``starts[s]`` onward.
    """
    cdef Py_ssize_t n = y0.shape[0]
    cdef Py_ssize_t nsteps = (u.shape[0] - 1) // 2
    cdef Py_ssize_t nseg = mats.shape[0]
    out_arr = np.empty((nsteps + 1, n), dtype=np.complex128)
    cdef double complex[:, :] out = out_arr
    cdef double complex[:] y = np.array(y0, dtype=np.complex128)
    cdef double complex[:] tmp = np.empty(n, dtype=np.complex128)
    cdef double complex[:] k1 = np.empty(n, dtype=np.complex128)
    cdef double complex[:] k2 = np.empty(n, dtype=np.complex128)
    cdef double complex[:] k3 = np.empty(n, dtype=np.complex128)
    cdef double complex[:] k4 = np.empty(n, dtype=np.complex128)
    cdef Py_ssize_t step, i, seg = 0
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    cdef double complex u0, uh, u1
    cdef double complex[:, :] m

    with nogil:
        for i in range(n):
            out[0, i] = y[i]
        for step in range(nsteps):
            while seg + 1 < nseg and starts[seg + 1] <= step:
                seg += 1
            m = mats[seg]
            u0 = u[2 * step]
            uh = u[2 * step + 1]
            u1 = u[2 * step + 2]
            _deriv(m, b, y, u0, k1, n)
            for i in range(n):
                tmp[i] = y[i] + half * k1[i]
            _deriv(m, b, tmp, uh, k2, n)
            for i in range(n):
                tmp[i] = y[i] + half * k2[i]
            _deriv(m, b, tmp, uh, k3, n)
            for i in range(n):
                tmp[i] = y[i] + dt * k3[i]
            _deriv(m, b, tmp, u1, k4, n)
            for i in range(n):
                y[i] = y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                out[step + 1, i] = y[i]
    return out_arr
