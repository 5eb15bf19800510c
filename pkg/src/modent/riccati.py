"""Periodic Riccati solvers for the Kalman-Bucy filter and the LQR costate.

Two routes to the filter covariance are provided:

* :func:`periodic_riccati_schur` linearises the Riccati equation through
  its Hamiltonian matrix, picks the attracting invariant subspace of the
  one-period propagator with an ordered real Schur form, and then carries
  an orthonormal basis of that subspace through the period step by step.
* :func:`riccati_direct` integrates the matrix ODE with RK4 until the
  state repeats from one period to the next.  It is slow and simple, and
  serves as the oracle for the first route.

The LQR costate obeys the same kind of equation backwards in time and
reuses both machineries.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from . import kernels
from .model import (
    SystemParams,
    control_matrix,
    drift_matrix,
    epr_cost_matrix,
    measurement_model,
    process_noise,
)

J8 = np.block([[np.zeros((4, 4)), np.eye(4)], [-np.eye(4), np.zeros((4, 4))]])

_GL_NODES = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


class RiccatiError(RuntimeError):
    """Base class for solver failures."""


class NoStableSubspaceError(RiccatiError):
    pass


class IllConditionedError(RiccatiError):
    pass


class MonodromyOverflowError(RiccatiError):
    pass


class ConvergenceError(RiccatiError):
    pass


@dataclass(frozen=True)
class PeriodicSolution:
    """One period of the periodic filter/controller solution.

    Arrays are sampled at ``times = linspace(0, period, n_steps + 1)``;
    the last sample repeats the first up to the solver tolerance.
    """

    period: float
    n_steps: int
    times: np.ndarray
    sigma_c: np.ndarray | None = None
    gain: np.ndarray | None = None
    costate: np.ndarray | None = None
    info: dict = field(default_factory=dict, compare=False)

    def merge(self, other: "PeriodicSolution") -> "PeriodicSolution":
        """Combine filter and controller parts computed on the same grid."""
        if other.n_steps != self.n_steps or not np.isclose(other.period, self.period):
            raise ValueError("solutions live on different grids")
        return replace(
            self,
            sigma_c=self.sigma_c if self.sigma_c is not None else other.sigma_c,
            gain=self.gain if self.gain is not None else other.gain,
            costate=self.costate if self.costate is not None else other.costate,
            info={**self.info, **other.info},
        )


# ------------------------------------------------------------------ helpers


def time_grid(period: float, n_steps: int):
    """Return ``(times, dt)`` for a uniform grid over one period."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    return np.linspace(0.0, period, n_steps + 1), period / n_steps


def stage_times(period: float, n_steps: int) -> np.ndarray:
    """RK4 stage times (start, mid, end) of every step, shape (n, 3)."""
    t, dt = time_grid(period, n_steps)
    return np.stack([t[:-1], t[:-1] + 0.5 * dt, t[1:]], axis=1)


def _solver_period(params: SystemParams) -> float:
    # an unmodulated system is time independent: any reference period works
    if params.g1 == 0 and params.omega_mod <= 0:
        return 2.0 * np.pi / params.omega0
    return params.period


def filter_coefficients(params: SystemParams):
    """Return ``(F_shift, Q, G)`` of the filter Riccati equation.

    With cross-correlation ``M`` the innovation term
    ``(S C^T + M) W^-1 (C S + M^T)`` is folded into a shifted drift
    ``A - M W^-1 C`` and reduced diffusion ``V - M W^-1 M^T``.
    """
    C, W, M = measurement_model(params)
    Winv = np.linalg.inv(W)
    G = C.T @ Winv @ C
    Q = process_noise(params) - M @ Winv @ M.T
    shift = M @ Winv @ C
    return shift, 0.5 * (Q + Q.T), 0.5 * (G + G.T)


def build_hamiltonian(A, C, W, V) -> np.ndarray:
    """Hamiltonian matrix ``[[A^T, -C^T W^-1 C], [-V, -A]]``.

    ``A`` may carry leading batch dimensions.
    """
    A = np.asarray(A, float)
    try:
        Winv = np.linalg.inv(W)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("measurement noise matrix W is singular") from exc
    G = C.T @ Winv @ C
    lead = A.shape[:-2]
    H = np.empty(lead + (8, 8))
    H[..., :4, :4] = np.swapaxes(A, -1, -2)
    H[..., :4, 4:] = -G
    H[..., 4:, :4] = -np.asarray(V, float)
    H[..., 4:, 4:] = -A
    return H


def _filter_hamiltonian(params: SystemParams, t) -> np.ndarray:
    # same block layout as build_hamiltonian, with M folded into A, V and G
    shift, Q, G = filter_coefficients(params)
    A = drift_matrix(params, t) - shift
    H = np.empty(A.shape[:-2] + (8, 8))
    H[..., :4, :4] = np.swapaxes(A, -1, -2)
    H[..., :4, 4:] = -G
    H[..., 4:, :4] = -Q
    H[..., 4:, 4:] = -A
    return H


def _lqr_hamiltonian(params: SystemParams, t, P, R) -> np.ndarray:
    A = drift_matrix(params, t)
    H = np.empty(A.shape[:-2] + (8, 8))
    H[..., :4, :4] = A
    H[..., :4, 4:] = -R
    H[..., 4:, :4] = -P
    H[..., 4:, 4:] = -np.swapaxes(A, -1, -2)
    return H


def magnus_steps(hfun, period: float, n_steps: int, order: int = 4) -> np.ndarray:
    """Exponentials of the Magnus expansion of ``dZ/dt = H(t) Z`` per step.

    ``order=2`` is the midpoint rule ``exp(H(t_mid) dt)``; ``order=4`` adds
    the two-point Gauss-Legendre commutator correction.
    """
    t, dt = time_grid(period, n_steps)
    t0 = t[:-1]
    if order == 2:
        Om = hfun(t0 + 0.5 * dt) * dt
    elif order == 4:
        H1 = hfun(t0 + _GL_NODES[0] * dt)
        H2 = hfun(t0 + _GL_NODES[1] * dt)
        Om = 0.5 * dt * (H1 + H2) + (np.sqrt(3.0) / 12.0) * dt**2 * (H2 @ H1 - H1 @ H2)
    else:
        raise ValueError("order must be 2 or 4")
    return sla.expm(Om)


def _ordered_product(E: np.ndarray, bound: float) -> np.ndarray:
    """``E[n-1] @ ... @ E[0]``, raising once the norm exceeds ``bound``."""
    Phi = np.eye(E.shape[-1])
    for Ei in E:
        Phi = Ei @ Phi
        if not np.isfinite(Phi).all() or np.abs(Phi).max() > bound:
            raise MonodromyOverflowError(
                f"propagator norm exceeded {bound:.1e}; use the iterative solver"
            )
    return Phi


def symplectic_inverse(S: np.ndarray) -> np.ndarray:
    """Inverse of a symplectic matrix, ``-J S^T J``."""
    return -J8 @ S.T @ J8


def symplectic_defect(S: np.ndarray) -> float:
    """``||S^T J S - J|| / ||J||`` in the Frobenius norm."""
    return float(np.linalg.norm(S.T @ J8 @ S - J8) / np.linalg.norm(J8))


def monodromy(params: SystemParams, n_steps: int = 1024, order: int = 4,
              bound: float = 1e12) -> np.ndarray:
    """One-period propagator of the filter Hamiltonian matrix.

    Returns ``S = exp(H(t_0) dt) exp(H(t_1) dt) ... exp(H(t_n-1) dt)``
    (Magnus steps, earliest factor on the left).  This is the inverse of
    the forward propagator of the linearised filter Riccati flow, so the
    stabilising covariance lives in its contracting subspace.
    """
    if n_steps < 256:
        raise ValueError("monodromy needs n_steps >= 256")
    E = magnus_steps(lambda t: -_filter_hamiltonian(params, t), _solver_period(params),
                     n_steps, order)
    return symplectic_inverse(_ordered_product(E, bound))


def _basis_to_riccati(Z: np.ndarray, cond_max: float = 1e12) -> np.ndarray:
    X = Z[..., :4, :]
    Y = Z[..., 4:, :]
    c = np.linalg.cond(X)
    if np.any(~np.isfinite(c)) or np.max(c) > cond_max:
        raise IllConditionedError(f"top block of the subspace basis has condition {np.max(c):.2e}")
    S = np.swapaxes(np.linalg.solve(np.swapaxes(X, -1, -2), np.swapaxes(Y, -1, -2)), -1, -2)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def _schur_subspace(S: np.ndarray, sort: str) -> np.ndarray:
    T, U, sdim = sla.schur(S, output="real", sort=sort)
    if sdim != 4:
        raise NoStableSubspaceError(f"selected invariant subspace has dimension {sdim}, expected 4")
    return U[:, :4]


def _oriented_start(Z: np.ndarray, psd_tol: float = 1e-8) -> np.ndarray:
    """Pick the block orientation that gives a symmetric PSD matrix.

    Schur implementations differ in how the subspace comes out; both the
    ``Y X^-1`` and ``X Y^-1`` readings are tried.
    """
    last = None
    for basis in (Z, np.vstack([Z[4:], Z[:4]])):
        try:
            S = _basis_to_riccati(basis)
        except IllConditionedError as exc:
            last = exc
            continue
        if np.linalg.eigvalsh(S).min() >= -psd_tol:
            return basis
    if last is not None:
        raise last
    raise NoStableSubspaceError("Schur subspace does not yield a PSD solution")


def _iterate_subspace(Z0, E, tol, max_periods):
    """Carry the basis around the period until the Riccati value repeats."""
    Zs = kernels.subspace_propagate(np.ascontiguousarray(Z0), E)
    X = _basis_to_riccati(Zs)
    defect = _rel(X[-1], X[0])
    periods = 1
    while defect > tol:
        if periods >= max_periods:
            raise ConvergenceError(f"no periodic solution after {periods} periods (defect {defect:.2e})")
        Zs = kernels.subspace_propagate(np.ascontiguousarray(Zs[-1]), E)
        X = _basis_to_riccati(Zs)
        defect = _rel(X[-1], X[0])
        periods += 1
    return X, defect, periods


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def periodic_riccati_schur(params: SystemParams, n_steps: int = 1024, *, order: int = 4,
                           tol: float = 1e-10, max_periods: int = 5000,
                           bound: float = 1e12) -> PeriodicSolution:
    """Periodic filter covariance from the ordered Schur form of the monodromy.

    The attracting subspace seeds a step-by-step propagation with QR
    re-orthonormalisation.  If one period already closes to ``tol`` we
    are done; otherwise further periods are iterated, which is what
    rescues cases where the monodromy is too badly scaled for Schur.
    """
    T = _solver_period(params)
    E = magnus_steps(lambda t: -_filter_hamiltonian(params, t), T, n_steps, order)
    info = {"method": "schur"}
    try:
        Phi = _ordered_product(E, bound)
        S = symplectic_inverse(Phi)
        info["symplectic_defect"] = symplectic_defect(S)
        Z0 = _oriented_start(_schur_subspace(S, "iuc"))
    except MonodromyOverflowError:
        info["method"] = "iterative"
        Z0 = np.vstack([np.eye(4), 0.5 * np.eye(4)])
        Z0, _ = np.linalg.qr(Z0)
    sigma, defect, periods = _iterate_subspace(Z0, E, tol, max_periods)
    info.update(filter_defect=defect, filter_periods=periods)
    times, _ = time_grid(T, n_steps)
    return PeriodicSolution(T, n_steps, times, sigma_c=sigma, info=info)


def _filter_stages(params: SystemParams, T: float, n_steps: int) -> np.ndarray:
    shift, _, _ = filter_coefficients(params)
    return np.ascontiguousarray(drift_matrix(params, stage_times(T, n_steps)) - shift)


def riccati_direct(params: SystemParams, sigma0=None, max_periods: int = 20000,
                   n_steps_per_period: int = 1024, tol: float = 1e-8,
                   min_periods: int = 1) -> PeriodicSolution:
    """Brute-force filter covariance: RK4 until one period repeats the last.

    Stops when ``||S(t+T) - S(t)|| / ||S(t)|| < tol``.  Raises
    :class:`ConvergenceError` if that does not happen within
    ``max_periods`` or the covariance blows up.
    """
    T = _solver_period(params)
    _, dt = time_grid(T, n_steps_per_period)
    F = _filter_stages(params, T, n_steps_per_period)
    _, Q, G = filter_coefficients(params)
    X = 0.5 * np.eye(4) if sigma0 is None else np.array(sigma0, float)
    scale = 1e8 * max(1.0, np.abs(X).max())
    for k in range(1, max_periods + 1):
        out = kernels.riccati_rk4_period(X, F, Q, G, dt)
        X = out[-1]
        if not np.isfinite(X).all() or np.abs(X).max() > scale:
            raise ConvergenceError("filter covariance diverged")
        defect = _rel(out[-1], out[0])
        if defect < tol and k >= min_periods:
            times, _ = time_grid(T, n_steps_per_period)
            return PeriodicSolution(T, n_steps_per_period, times, sigma_c=out,
                                    info={"method": "direct", "filter_defect": defect,
                                          "filter_periods": k})
    raise ConvergenceError(f"no periodic filter solution within {max_periods} periods")


# ---------------------------------------------------------------------- LQR


def lqr_gain(params: SystemParams, P=None, n_steps: int = 1024, *, method: str = "schur",
             order: int = 4, tol: float = 1e-10, max_periods: int = 20000,
             bound: float = 1e12) -> PeriodicSolution:
    """Periodic LQR costate Pi(t) and gain K(t) = B^T Pi(t) / q.

    ``method="schur"`` uses the Hamiltonian form of the backward equation:
    the attracting subspace under backward propagation seeds a backward
    sweep with re-orthonormalisation.  ``method="direct"`` integrates the
    backward Riccati equation from Pi = 0 with RK4, period after period.
    """
    if P is None:
        P = epr_cost_matrix(params.phi)
    P = np.asarray(P, float)
    B = control_matrix()
    R = B @ B.T / params.q
    T = _solver_period(params)
    times, dt = time_grid(T, n_steps)
    info = {"lqr_method": method}

    if method == "direct":
        A_st = drift_matrix(params, stage_times(T, n_steps))
        # reversed time s = T - t: steps and stage order both flip
        F = np.ascontiguousarray(np.swapaxes(A_st[::-1, ::-1], -1, -2))
        Pi = np.zeros((4, 4))
        for k in range(1, max_periods + 1):
            out = kernels.riccati_rk4_period(Pi, F, P, R, dt)
            Pi = out[-1]
            if not np.isfinite(Pi).all():
                raise ConvergenceError("LQR costate diverged")
            defect = _rel(out[-1], out[0]) if np.linalg.norm(out[0]) > 0 else np.inf
            if np.linalg.norm(Pi) == 0 or defect < tol:
                break
        else:
            raise ConvergenceError(f"no periodic LQR solution within {max_periods} periods")
        costate = out[::-1].copy()
        info.update(lqr_defect=0.0 if np.linalg.norm(Pi) == 0 else defect, lqr_periods=k)
    elif method == "schur":
        E_fwd = magnus_steps(lambda t: _lqr_hamiltonian(params, t, P, R), T, n_steps, order)
        E_bwd = np.ascontiguousarray(np.linalg.inv(E_fwd)[::-1])
        try:
            Phi_b = _ordered_product(E_bwd, bound)
            Z0 = _oriented_start(_schur_subspace(Phi_b, "ouc"))
        except (MonodromyOverflowError, NoStableSubspaceError, IllConditionedError):
            info["lqr_method"] = "iterative"
            Z0, _ = np.linalg.qr(np.vstack([np.eye(4), np.zeros((4, 4))]))
        Pis, defect, periods = _iterate_subspace(Z0, E_bwd, tol, max_periods)
        costate = Pis[::-1].copy()
        info.update(lqr_defect=defect, lqr_periods=periods)
    else:
        raise ValueError(f"unknown method {method!r}")

    if np.linalg.eigvalsh(costate).min() < -1e-8 * max(1.0, np.abs(costate).max()):
        raise RiccatiError("LQR costate lost positive semidefiniteness")
    gain = np.einsum("ji,tjk->tik", B, costate) / params.q
    return PeriodicSolution(T, n_steps, times, gain=gain, costate=costate, info=info)


def floquet_multipliers(params: SystemParams, n_steps: int = 1024, drift=None) -> np.ndarray:
    """Floquet multipliers of ``dx/dt = A(t) x`` over one modulation period.

    ``drift`` may supply a stage array (see :mod:`modent.kernels`) for a
    different generator, e.g. a closed loop.
    """
    T = _solver_period(params)
    if drift is None:
        drift = np.ascontiguousarray(drift_matrix(params, stage_times(T, n_steps)))
    Phi = kernels.linear_rk4_period(np.eye(4), drift, T / drift.shape[0])
    return np.linalg.eigvals(Phi)
