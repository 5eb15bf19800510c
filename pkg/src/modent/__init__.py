"""Entanglement of two continuously measured, feedback-controlled oscillators
with a parametrically modulated coupling."""

__version__ = "0.1.0"

from .entanglement import log_negativity, resonance_frequency, symplectic_eigenvalues  # noqa: E402
from .model import SystemParams, drift_matrix, epr_cost_matrix  # noqa: E402
from .noise import excess_noise, unconditional_covariance  # noqa: E402
from .pipeline import solve_point  # noqa: E402
from .riccati import lqr_gain, monodromy, periodic_riccati_schur, riccati_direct  # noqa: E402

__all__ = [
    "SystemParams",
    "drift_matrix",
    "epr_cost_matrix",
    "excess_noise",
    "log_negativity",
    "lqr_gain",
    "monodromy",
    "periodic_riccati_schur",
    "resonance_frequency",
    "riccati_direct",
    "solve_point",
    "symplectic_eigenvalues",
    "unconditional_covariance",
]
