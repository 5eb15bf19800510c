"""Monte-Carlo trajectories of the filtered mean under LQR feedback.

The conditional mean follows

    dX = (A(t) - B K(t)) X dt + (Sigma(t) C^T + M) W^-1 dw,   <dw dw^T> = W dt,

integrated with Euler-Maruyama.  Sigma and K are held piecewise constant
on the solver grid.  Each trajectory draws from its own Philox stream
keyed by ``(seed, index)``, so ensembles do not depend on batching or
execution order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import SystemParams, control_matrix, drift_matrix, measurement_model
from .noise import innovation_gain
from .riccati import PeriodicSolution


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    seed: int
    index: int
    dt: float
    times: np.ndarray
    samples: np.ndarray
    steps_per_period: int

    @property
    def strobe(self) -> np.ndarray:
        """Samples at t = k T."""
        return self.samples[:: self.steps_per_period]


@dataclass(frozen=True)
class Ensemble:
    """Conditional means of many trajectories at recorded phases.

    ``states`` has shape ``(n_traj, n_periods, n_phases, 4)``.
    """

    seed: int
    dt: float
    period: float
    phases: np.ndarray
    states: np.ndarray
    burn_in: int

    @property
    def n(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class EnsembleStats:
    n: int
    mean: np.ndarray
    cov: np.ndarray
    stderr_mean: np.ndarray
    stderr_cov: np.ndarray


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for trajectory ``index``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _loop_coefficients(params: SystemParams, sol: PeriodicSolution, dt: float | None):
    grid_dt = sol.period / sol.n_steps
    if dt is None:
        dt = grid_dt
    sub = grid_dt / dt
    if abs(sub - round(sub)) > 1e-9 or round(sub) < 1:
        raise GridError(f"dt={dt} does not divide the solver step {grid_dt}")
    sub = int(round(sub))
    dt = grid_dt / sub
    B = control_matrix()
    W = measurement_model(params)[1]
    A = drift_matrix(params, sol.times[:-1])
    F = A - B @ sol.gain[:-1]
    L = innovation_gain(params, sol.sigma_c[:-1]) @ np.linalg.cholesky(W) * np.sqrt(dt)
    F = np.repeat(F, sub, axis=0)
    L = np.repeat(L, sub, axis=0)
    return np.ascontiguousarray(F), np.ascontiguousarray(L), dt


def simulate_trajectory(params: SystemParams, sol: PeriodicSolution, seed: int, n_periods: int,
                        dt: float | None = None, index: int = 0, zero_noise: bool = False,
                        x0=None) -> Trajectory:
    """Integrate one conditional-mean trajectory, recording every step."""
    F, L, dt = _loop_coefficients(params, sol, dt)
    n = F.shape[0]
    total = n * n_periods
    x = np.zeros((1, 4)) if x0 is None else np.array(x0, float).reshape(1, 4)
    rng = trajectory_rng(seed, index)
    out = np.empty((1, total + 1, 4))
    rec = np.arange(total, dtype=np.int64)
    if zero_noise:
        xi = np.zeros((1, total, L.shape[-1]))
    else:
        xi = rng.standard_normal((total, L.shape[-1]))[None]
    x = kernels.em_period(x, xi, np.tile(F, (n_periods, 1, 1)), np.tile(L, (n_periods, 1, 1)),
                          dt, rec, out)
    out[0, -1] = x[0]
    if not np.isfinite(out).all():
        raise FloatingPointError("trajectory diverged")
    times = np.arange(total + 1) * dt
    return Trajectory(int(seed), index, dt, times, out[0], n)


def simulate_ensemble(params: SystemParams, sol: PeriodicSolution, n_traj: int, seed: int,
                      n_periods: int = 11, phases=(0,), dt: float | None = None,
                      burn_in: int = 10, batch: int = 256, zero_noise: bool = False) -> Ensemble:
    """Run ``n_traj`` trajectories from X = 0 and record them at ``phases``.

    ``phases`` are sample indices on the solver grid (0 .. n_steps-1);
    states are recorded at those phases in every period.
    """
    F, L, dt = _loop_coefficients(params, sol, dt)
    n = F.shape[0]
    sub = n // sol.n_steps
    phases = np.asarray(phases, dtype=np.int64)
    if np.any(phases < 0) or np.any(phases >= sol.n_steps):
        raise GridError("phase index outside the solver grid")
    rec = np.sort((np.arange(n_periods)[:, None] * n + phases[None, :] * sub).ravel())
    order = np.argsort(phases)
    Ft = np.tile(F, (n_periods, 1, 1))
    Lt = np.tile(L, (n_periods, 1, 1))
    m = L.shape[-1]
    states = np.empty((n_traj, n_periods * len(phases), 4))
    for start in range(0, n_traj, batch):
        idx = range(start, min(start + batch, n_traj))
        xi = np.zeros((len(idx), n * n_periods, m))
        if not zero_noise:
            for k, j in enumerate(idx):
                xi[k] = trajectory_rng(seed, j).standard_normal((n * n_periods, m))
        x = np.zeros((len(idx), 4))
        out = np.empty((len(idx), len(rec), 4))
        kernels.em_period(x, xi, Ft, Lt, dt, rec, out)
        states[start: start + len(idx)] = out
    states = states.reshape(n_traj, n_periods, len(phases), 4)
    # undo the sort so states[..., k, :] belongs to phases[k]
    unsorted = np.empty_like(states)
    unsorted[:, :, order] = states
    if not np.isfinite(unsorted).all():
        raise FloatingPointError("ensemble diverged")
    return Ensemble(int(seed), dt, sol.period, phases, unsorted, burn_in)


def _fsum_mean(x: np.ndarray) -> np.ndarray:
    flat = x.reshape(x.shape[0], -1)
    return np.array([math.fsum(col) for col in flat.T]).reshape(x.shape[1:]) / x.shape[0]


def ensemble_stats(ens: Ensemble, phase: int = 0, period: int = -1) -> EnsembleStats:
    """Sample mean and unbiased covariance of the conditional means.

    Uses one time point per trajectory: phase ``phase`` (an index into
    ``ens.phases``) in period ``period``, which must lie past the burn-in.
    Sums are exactly rounded, so the result does not depend on the order
    of trajectories.
    """
    n_periods = ens.states.shape[1]
    p = period % n_periods
    if p < ens.burn_in:
        raise ValueError(f"period {p} lies inside the burn-in of {ens.burn_in} periods")
    if ens.n < 2:
        raise ValueError("need at least two trajectories")
    x = ens.states[:, p, phase, :]
    n = x.shape[0]
    mean = _fsum_mean(x)
    d = x - mean
    prod = d[:, :, None] * d[:, None, :]
    cov = _fsum_mean(prod) * n / (n - 1)
    se_mean = np.sqrt(np.diag(cov) / n)
    se_cov = np.sqrt(np.var(prod, axis=0, ddof=1) / n)
    return EnsembleStats(n, mean, cov, se_mean, se_cov)
