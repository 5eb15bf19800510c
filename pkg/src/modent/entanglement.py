"""Symplectic spectra and logarithmic negativity of two-mode Gaussian states.

Vacuum convention: the vacuum covariance is ``I/2``, so a physical state
has symplectic eigenvalues >= 1/2 and ``E_N = -ln(2 nu)`` vanishes on the
vacuum.  All functions accept a single 4x4 matrix or a stack of them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

J4 = np.array(
    [[0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0]]
)
PT = np.diag([1.0, 1.0, 1.0, -1.0])


class CovarianceError(ValueError):
    """Input is not a symmetric positive definite covariance."""


def _check_cov(sigma, rtol=1e-8):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape[-2:] != (4, 4):
        raise CovarianceError(f"expected 4x4 matrices, got shape {sigma.shape}")
    scale = np.abs(sigma).max(axis=(-2, -1), keepdims=True)
    if np.any(np.abs(sigma - np.swapaxes(sigma, -1, -2)) > rtol * scale):
        raise CovarianceError("covariance matrix is not symmetric")
    if np.any(np.linalg.eigvalsh(sigma)[..., 0] <= 0):
        raise CovarianceError("covariance matrix is not positive definite")
    return sigma


def symplectic_eigenvalues(sigma) -> np.ndarray:
    """Symplectic eigenvalues ``(nu1, nu2)``, ascending, along the last axis.

    Computed as the moduli of the eigenvalues of ``i J sigma``; each
    conjugate pair is reported once.
    """
    sigma = _check_cov(sigma)
    ev = np.sort(np.abs(np.linalg.eigvals(J4 @ sigma).imag), axis=-1)
    return ev[..., ::2]


def partial_transpose(sigma) -> np.ndarray:
    """Flip the sign of the second particle's momentum."""
    return PT @ np.asarray(sigma, float) @ PT


def log_negativity(sigma):
    """Signed entanglement measure ``-ln(2 nu_min)`` of the partial transpose.

    Positive values certify entanglement; ``max(0, E_N)`` is the
    logarithmic negativity proper (see :func:`clamp`).
    """
    nu = symplectic_eigenvalues(partial_transpose(sigma))[..., 0]
    return -np.log(2.0 * nu)


def clamp(e_n):
    return np.maximum(0.0, e_n)


def min_pt_eigenvalue_closed_form(sigma):
    """Smallest partially transposed symplectic eigenvalue via block invariants.

    Uses ``Delta = det A + det B - 2 det C`` of the blocks
    ``[[A, C], [C^T, B]]``; kept as an independent check of the spectral
    route.
    """
    sigma = np.asarray(sigma, float)
    a = np.linalg.det(sigma[..., :2, :2])
    b = np.linalg.det(sigma[..., 2:, 2:])
    c = np.linalg.det(sigma[..., :2, 2:])
    delta = a + b - 2.0 * c
    disc = np.maximum(delta**2 - 4.0 * np.linalg.det(sigma), 0.0)
    return np.sqrt((delta - np.sqrt(disc)) / 2.0)


def period_average(values, clamped: bool = False) -> float:
    """Trapezoidal average over one period of samples including both ends."""
    v = np.asarray(values, float)
    if clamped:
        v = clamp(v)
    if v.size == 1:
        return float(v[0])
    n = v.size - 1
    return float((v[1:-1].sum() + 0.5 * (v[0] + v[-1])) / n)


def resonance_frequency(g0: float, omega0: float = 1.0) -> float:
    """Main parametric resonance ``2 sqrt(omega0^2 + 4 omega0 g0)``.

    Raises ``ValueError`` when the relative mode is not confined.
    """
    rad = omega0**2 + 4.0 * omega0 * g0
    if rad <= 0:
        raise ValueError(f"relative mode unconfined for g0={g0} (omega0^2 + 4 omega0 g0 = {rad})")
    return 2.0 * np.sqrt(rad)


@dataclass(frozen=True)
class NegativityTrace:
    """Conditional and unconditional E_N sampled over one period."""

    times: np.ndarray
    e_n_c: np.ndarray
    e_n_u: np.ndarray
    clamped: bool = False

    @property
    def mean_c(self) -> float:
        return period_average(self.e_n_c, self.clamped)

    @property
    def mean_u(self) -> float:
        return period_average(self.e_n_u, self.clamped)

    @property
    def max_u(self) -> float:
        return float(np.max(self.e_n_u))

    @property
    def max_c(self) -> float:
        return float(np.max(self.e_n_c))

    @classmethod
    def from_covariances(cls, times, sigma_c, sigma_u, clamped=False):
        return cls(np.asarray(times), log_negativity(sigma_c), log_negativity(sigma_u), clamped)
