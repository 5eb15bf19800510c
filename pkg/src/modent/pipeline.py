"""Full solve of one parameter point: filter, controller, excess noise, E_N."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .entanglement import NegativityTrace
from .model import SystemParams, epr_cost_matrix, is_confined
from .noise import ClosedLoopUnstableError, ExcessNoise, excess_noise, unconditional_covariance
from .riccati import PeriodicSolution, RiccatiError, lqr_gain, periodic_riccati_schur

log = logging.getLogger(__name__)

CONVERGED = "converged"
UNSTABLE = "unstable"
FAILED = "failed"


@dataclass
class PointResult:
    params: SystemParams
    status: str
    solution: PeriodicSolution | None = None
    noise: ExcessNoise | None = None
    trace: NegativityTrace | None = None
    message: str = ""

    @property
    def sigma_u(self):
        return unconditional_covariance(self.solution.sigma_c, self.noise.xi)

    def summary(self) -> dict:
        out = {"status": self.status, "message": self.message}
        if self.trace is not None:
            out.update(mean_c=self.trace.mean_c, mean_u=self.trace.mean_u,
                       max_c=self.trace.max_c, max_u=self.trace.max_u)
        return out


def solve_point(params: SystemParams, n_steps: int = 512, *, clamped: bool = False,
                tol: float = 1e-10, cost=None) -> PointResult:
    """Solve the periodic LQG problem at one parameter point.

    Never raises for physics reasons: an unconfined trap or an unstable
    closed loop gives status ``"unstable"``, numerical breakdown gives
    ``"failed"``.
    """
    if not is_confined(params):
        return PointResult(params, UNSTABLE, message="static trap does not confine the relative mode")
    P = epr_cost_matrix(params.phi) if cost is None else cost
    try:
        filt = periodic_riccati_schur(params, n_steps, tol=tol)
        ctrl = lqr_gain(params, P, n_steps, tol=tol)
        sol = filt.merge(ctrl)
        xi = excess_noise(params, sol)
    except ClosedLoopUnstableError as exc:
        return PointResult(params, UNSTABLE, message=str(exc))
    except (RiccatiError, np.linalg.LinAlgError, ValueError) as exc:
        log.debug("solve failed at %s: %s", params, exc)
        return PointResult(params, FAILED, message=f"{type(exc).__name__}: {exc}")
    trace = NegativityTrace.from_covariances(
        sol.times, sol.sigma_c, unconditional_covariance(sol.sigma_c, xi.xi), clamped
    )
    return PointResult(params, CONVERGED, sol, xi, trace)
