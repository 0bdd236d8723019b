"""Compare the compiled RK4 kernel with the numpy fallback on a delay simulation.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from padl import _kernels
from padl.dynamics import _coefficients, gaussian_pulse, required_dt
from padl.presets import fitted_delay_line


def workload():
    model = fitted_delay_line()
    pulse = gaussian_pulse(0.0, 471e-9)
    dt = required_dt(model, None, pulse)
    t0, t1 = -4 * pulse.fwhm, 1.6 * model.round_trip_time
    nsteps = int(np.ceil((t1 - t0) / dt))
    n = model.n_modes
    mats = _coefficients(model, np.ones(n, bool), np.zeros(n), np.ones(n, int))[0][None]
    starts = np.zeros(1, dtype=np.int64)
    b = np.zeros(n + 1, complex)
    b[0] = -np.sqrt(model.buffer.kappa_ext)
    u = pulse.sample(t0 + 0.5 * dt * np.arange(2 * nsteps + 1), model.center_offset)
    return mats, starts, b, u, dt, np.zeros(n + 1, complex)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), np.asarray(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    work = workload()
    steps = work[3].size // 2
    t_py, y_py = best_of(_kernels.rk4_linear_py, work, args.repeat)
    print(f"python  {t_py * 1e3:8.2f} ms  ({steps} steps)")
    if _kernels.rk4_linear_compiled is None:
        print("cython  not built")
        return
    t_cy, y_cy = best_of(_kernels.rk4_linear_compiled, work, args.repeat)
    diff = np.max(np.abs(y_cy - y_py)) / np.max(np.abs(y_py))
    print(f"cython  {t_cy * 1e3:8.2f} ms  speedup {t_py / t_cy:5.1f}x  max rel diff {diff:.2e}")


if __name__ == "__main__":
    main()
