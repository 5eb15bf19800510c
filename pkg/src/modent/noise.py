"""Excess noise of the feedback-controlled conditional mean.

The unconditional covariance is the conditional one plus the excess noise
``Xi``, the covariance of the conditional mean across measurement
records.  ``Xi`` solves a linear periodic Lyapunov equation driven by the
filter's innovation gain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import kernels
from .model import SystemParams, control_matrix, drift_matrix, measurement_model
from .riccati import ConvergenceError, PeriodicSolution, RiccatiError, floquet_multipliers, stage_times


class ClosedLoopUnstableError(RiccatiError):
    """Feedback does not stabilise the conditional mean."""


@dataclass(frozen=True)
class ExcessNoise:
    times: np.ndarray
    xi: np.ndarray
    floquet_multipliers: np.ndarray
    periods: int
    defect: float


def periodic_midpoints(samples: np.ndarray) -> np.ndarray:
    """Cubic midpoint interpolation of periodic samples ``x_0 .. x_n``.

    ``x_n`` must repeat ``x_0``; the result has one entry per step.
    """
    x = samples[:-1]
    return (9.0 * (x + np.roll(x, -1, axis=0)) - np.roll(x, 1, axis=0) - np.roll(x, -2, axis=0)) / 16.0


def stage_values(samples: np.ndarray) -> np.ndarray:
    """Stack start, midpoint and end values of every step, shape (n, 3, ...)."""
    return np.stack([samples[:-1], periodic_midpoints(samples), samples[1:]], axis=1)


def closed_loop_drift(params: SystemParams, sol: PeriodicSolution) -> np.ndarray:
    """Stage array of ``A(t) - B K(t)``."""
    B = control_matrix()
    A = drift_matrix(params, stage_times(sol.period, sol.n_steps))
    return np.ascontiguousarray(A - B @ stage_values(sol.gain))


def innovation_gain(params: SystemParams, sigma_c: np.ndarray) -> np.ndarray:
    """``(Sigma C^T + M) W^-1`` for every sample, shape (..., 4, 2)."""
    C, W, M = measurement_model(params)
    return (sigma_c @ C.T + M) @ np.linalg.inv(W)


def closed_loop_multipliers(params: SystemParams, sol: PeriodicSolution) -> np.ndarray:
    """Floquet multipliers of the controlled conditional-mean dynamics."""
    return floquet_multipliers(params, drift=closed_loop_drift(params, sol))


def excess_noise(params: SystemParams, sol: PeriodicSolution, n_periods_max: int = 2000,
                 tol: float = 1e-8) -> ExcessNoise:
    """Periodic excess-noise matrix Xi(t) on the solution grid.

    The periodic start value is obtained from the one-period map
    ``Xi -> Phi Xi Phi^T + Xi_p`` (a discrete Lyapunov equation); the
    period is then integrated from it, and further periods are added
    only if the result does not yet close to ``tol``.
    """
    if sol.sigma_c is None or sol.gain is None:
        raise ValueError("solution needs both the filter covariance and the feedback gain")
    dt = sol.period / sol.n_steps
    F = closed_loop_drift(params, sol)
    L = innovation_gain(params, sol.sigma_c)
    W = measurement_model(params)[1]
    src = np.ascontiguousarray(stage_values(L @ W @ np.swapaxes(L, -1, -2)))

    Phi = kernels.linear_rk4_period(np.eye(4), F, dt)
    mult = np.linalg.eigvals(Phi)
    if np.abs(mult).max() >= 1.0:
        raise ClosedLoopUnstableError(
            f"closed-loop Floquet multiplier of modulus {np.abs(mult).max():.6f}"
        )
    xi_p = kernels.lyapunov_rk4_period(np.zeros((4, 4)), F, src, dt)[-1]
    xi0 = sla.solve_discrete_lyapunov(Phi, xi_p)
    xi0 = 0.5 * (xi0 + xi0.T)

    scale = max(np.linalg.norm(xi0), 1e-300)
    for k in range(1, n_periods_max + 1):
        out = kernels.lyapunov_rk4_period(xi0, F, src, dt)
        defect = float(np.linalg.norm(out[-1] - out[0]) / scale)
        if defect < tol or np.linalg.norm(out[-1]) == 0:
            break
        xi0 = out[-1]
        scale = max(np.linalg.norm(xi0), 1e-300)
    else:
        raise ConvergenceError(f"excess noise not periodic after {n_periods_max} periods")
    return ExcessNoise(sol.times, out, mult, k, defect)


def unconditional_covariance(sigma_c, xi):
    """Sigma_u = Sigma_c + Xi."""
    return np.asarray(sigma_c) + np.asarray(xi)


def propagate_series(params: SystemParams, sol: PeriodicSolution, xi0, n_periods: int):
    """Integrate Sigma_c and Xi forward over several periods from given start values.

    Unlike tiling the periodic solution, this re-integrates both equations
    (RK4 on the solver grid), so recurrence of features with the
    modulation period is a genuine property of the dynamics.
    Returns ``(times, sigma_c, xi)`` with ``n_periods * n_steps + 1`` samples.
    """
    from .riccati import filter_coefficients

    n = sol.n_steps
    dt = sol.period / n
    shift, Q, G = filter_coefficients(params)
    F_filt = np.ascontiguousarray(drift_matrix(params, stage_times(sol.period, n)) - shift)
    F_cl = closed_loop_drift(params, sol)
    W = measurement_model(params)[1]
    sig = [sol.sigma_c[0][None]]
    xis = [np.asarray(xi0, float)[None]]
    s0 = sol.sigma_c[0]
    x0 = np.asarray(xi0, float)
    for _ in range(n_periods):
        s_out = kernels.riccati_rk4_period(s0, F_filt, Q, G, dt)
        L = innovation_gain(params, s_out)
        src = np.ascontiguousarray(stage_values(L @ W @ np.swapaxes(L, -1, -2)))
        x_out = kernels.lyapunov_rk4_period(x0, F_cl, src, dt)
        sig.append(s_out[1:])
        xis.append(x_out[1:])
        s0, x0 = s_out[-1], x_out[-1]
    times = np.arange(n_periods * n + 1) * dt
    return times, np.concatenate(sig), np.concatenate(xis)
