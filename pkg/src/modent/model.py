"""System parameters and the matrices of the linear Gaussian dynamics.

All rates are in units of the trap frequency ``omega0``.  Phase-space
order is ``(X1, P1, X2, P2)`` throughout the package.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

HBAR = 1.054571817e-34

_SEL_X = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])


class ParameterError(ValueError):
    """Raised for physically invalid parameter values."""


@dataclass(frozen=True)
class SystemParams:
    """Physical and control parameters of the two-oscillator system.

    The defaults are the reference set used for the (g1, Omega)
    negativity map: g0 = 0.2, backaction 5 %, thermal/backaction 5 %,
    control effort q = 0.1, EPR phase pi and detection efficiency 0.5.

    ``C``, ``W``, ``M`` and ``V`` overrides replace the default
    continuous position-measurement model entirely.
    """

    omega0: float = 1.0
    g0: float = 0.2
    g1: float = 0.0
    omega_mod: float = 2.7
    gamma: float = 0.0
    gamma_ba: float = 0.05
    gamma_th: float = 0.0025
    eta: float = 0.5
    q: float = 0.1
    phi: float = np.pi
    C: np.ndarray | None = field(default=None, compare=False, repr=False)
    W: np.ndarray | None = field(default=None, compare=False, repr=False)
    M: np.ndarray | None = field(default=None, compare=False, repr=False)
    V: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ParameterError(f"omega0 must be positive, got {self.omega0}")
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.q > 0:
            raise ParameterError(f"q must be positive, got {self.q}")
        for name in ("gamma", "gamma_ba", "gamma_th"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if self.g1 != 0 and not self.omega_mod > 0:
            raise ParameterError("omega_mod must be positive when g1 != 0")

    @property
    def period(self) -> float:
        """Modulation period 2 pi / Omega."""
        if self.omega_mod <= 0:
            raise ParameterError("unmodulated system has no period; set omega_mod > 0")
        return 2.0 * np.pi / self.omega_mod

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist()
            out[f.name] = v
        return out


@dataclass(frozen=True)
class CouplingGeometry:
    """Central potential k / r**n between two masses at separation R."""

    k: float
    n: int
    R: float
    m: float

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ParameterError(f"n must be a positive integer, got {self.n}")
        if not self.R > 0:
            raise ParameterError(f"R must be positive, got {self.R}")
        if not self.m > 0:
            raise ParameterError(f"m must be positive, got {self.m}")

    def x_zpf(self, omega0: float) -> float:
        return np.sqrt(HBAR / (self.m * omega0))

    def distance(self, dx, omega0: float):
        """Interparticle distance for dimensionless displacement ``X1 - X2``."""
        return np.sqrt(self.x_zpf(omega0) ** 2 * np.asarray(dx) ** 2 + self.R**2)


def coupling_rate(geom: CouplingGeometry, omega0: float) -> float:
    """Quadratic coupling rate g = k / (2 n R^(2+n) m omega0) in rad/s."""
    if not omega0 > 0:
        raise ParameterError("omega0 must be positive")
    return geom.k / (2.0 * geom.n * geom.R ** (2 + geom.n) * geom.m * omega0)


def coupling_modulation(params: SystemParams, t):
    """g(t) = g0 + 2 g1 cos(Omega t); vectorized over ``t``."""
    t = np.asarray(t, dtype=float)
    if params.g1 == 0:
        return np.full(t.shape, float(params.g0))[()]
    return params.g0 + 2.0 * params.g1 * np.cos(params.omega_mod * t)


def drift_matrix(params: SystemParams, t=0.0) -> np.ndarray:
    """Drift matrix A(t); shape ``t.shape + (4, 4)``."""
    g = np.asarray(coupling_modulation(params, t))
    w0 = params.omega0
    A = np.zeros(g.shape + (4, 4))
    A[..., 0, 1] = w0
    A[..., 2, 3] = w0
    A[..., 1, 0] = -w0 - 2.0 * g
    A[..., 1, 1] = -params.gamma
    A[..., 1, 2] = 2.0 * g
    A[..., 3, 0] = 2.0 * g
    A[..., 3, 2] = -w0 - 2.0 * g
    A[..., 3, 3] = -params.gamma
    return A


def control_matrix() -> np.ndarray:
    """B: each feedback force drives its particle's momentum."""
    B = np.zeros((4, 2))
    B[1, 0] = 1.0
    B[3, 1] = 1.0
    return B


def measurement_model(params: SystemParams):
    """Return ``(C, W, M)`` for homodyne position readout of both particles.

    By default ``C = sqrt(4 eta gamma_ba) * [x1; x2]``, ``W = I`` and no
    cross-correlation ``M``.  This pairs with :func:`process_noise` so that
    a single perfectly detected mode without thermal noise stays pure.
    """
    C = params.C
    if C is None:
        C = np.sqrt(4.0 * params.eta * params.gamma_ba) * _SEL_X
    W = np.eye(2) if params.W is None else params.W
    M = np.zeros((4, 2)) if params.M is None else params.M
    return np.asarray(C, float), np.asarray(W, float), np.asarray(M, float)


def process_noise(params: SystemParams) -> np.ndarray:
    """Momentum diffusion from photon recoil plus gas collisions."""
    if params.V is not None:
        return np.asarray(params.V, float)
    d = params.gamma_ba + params.gamma_th
    return np.diag([0.0, d, 0.0, d])


def epr_cost_matrix(phi: float = np.pi) -> np.ndarray:
    """LQR state cost penalising the two EPR variances at phase ``phi``.

    The quadratures are ``X1 - (cos phi X2 + sin phi P2)`` and
    ``P1 + (-sin phi X2 + cos phi P2)``; the matrix has eigenvalues
    ``{2, 2, 0, 0}``.
    """
    c, s = np.cos(phi), np.sin(phi)
    r_minus = np.array([1.0, 0.0, -c, -s])
    r_plus = np.array([0.0, 1.0, -s, c])
    return np.outer(r_minus, r_minus) + np.outer(r_plus, r_plus)


def static_stiffness(params: SystemParams) -> np.ndarray:
    """Position-to-force block of the unmodulated drift, as a 2x2 stiffness."""
    A0 = drift_matrix(params.replace(g1=0.0), 0.0)
    return -A0[np.ix_([1, 3], [0, 2])]


def is_confined(params: SystemParams, rtol: float = 1e-12) -> bool:
    """True when the static trap (g1 = 0) confines both normal modes.

    The stiffness eigenvalues are ``omega0`` (centre of mass) and
    ``omega0 + 4 g0`` (relative motion); a zero eigenvalue already counts
    as unconfined because the relative mode then drifts freely.
    """
    ev = np.linalg.eigvalsh(static_stiffness(params))
    return bool(ev.min() > rtol * params.omega0)
