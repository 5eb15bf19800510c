"""Time the numba kernels against their pure-numpy twins.

Usage::

    python benchmarks/bench_kernels.py [--n-steps 1024] [--repeat 5] [--n-traj 256]

Inputs are built from the reference working point so the shapes match
what the solvers see.  The first numba call (compilation) is excluded.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from modent import kernels
from modent._accel import HAS_NUMBA
from modent.model import SystemParams, drift_matrix
from modent.noise import closed_loop_drift, innovation_gain, stage_values
from modent.riccati import (
    _filter_hamiltonian,
    filter_coefficients,
    lqr_gain,
    magnus_steps,
    periodic_riccati_schur,
    stage_times,
)


def build_inputs(n_steps: int, n_traj: int) -> dict:
    p = SystemParams(g1=0.17, omega_mod=2.7)
    T = p.period
    dt = T / n_steps
    sol = periodic_riccati_schur(p, n_steps).merge(lqr_gain(p, n_steps=n_steps))
    shift, Q, G = filter_coefficients(p)
    F_filt = np.ascontiguousarray(drift_matrix(p, stage_times(T, n_steps)) - shift)
    F_cl = closed_loop_drift(p, sol)
    L = innovation_gain(p, sol.sigma_c)
    src = np.ascontiguousarray(stage_values(L @ np.swapaxes(L, -1, -2)))
    E = np.ascontiguousarray(magnus_steps(lambda t: -_filter_hamiltonian(p, t), T, n_steps))
    Z0, _ = np.linalg.qr(np.vstack([np.eye(4), 0.5 * np.eye(4)]))
    rng = np.random.default_rng(0)
    xi = rng.standard_normal((n_traj, n_steps, 2))
    Fem = np.ascontiguousarray(F_cl[:, 0])
    Lem = np.ascontiguousarray(L[:-1] * np.sqrt(dt))
    rec = np.arange(0, n_steps, n_steps // 4, dtype=np.int64)
    return {
        "riccati_rk4_period": lambda k: k(sol.sigma_c[0], F_filt, Q, G, dt),
        "lyapunov_rk4_period": lambda k: k(np.zeros((4, 4)), F_cl, src, dt),
        "linear_rk4_period": lambda k: k(np.eye(4), F_cl, dt),
        "subspace_propagate": lambda k: k(np.ascontiguousarray(Z0), E),
        "em_period": lambda k: k(np.zeros((n_traj, 4)), xi, Fem, Lem, dt, rec,
                                 np.empty((n_traj, len(rec), 4))),
    }


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n-steps", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n-traj", type=int, default=256, help="trajectories for the EM kernel")
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba unavailable or disabled: only the numpy timings are meaningful")

    calls = build_inputs(args.n_steps, args.n_traj)
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call in calls.items():
        t_np = best_of(lambda: call(kernels.NUMPY_KERNELS[name]), args.repeat)
        if HAS_NUMBA:
            call(kernels.NUMBA_KERNELS[name])  # compile
            t_nb = best_of(lambda: call(kernels.NUMBA_KERNELS[name]), args.repeat)
            print(f"{name:<22}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<22}{1e3 * t_np:>12.2f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
