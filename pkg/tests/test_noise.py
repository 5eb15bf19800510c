import numpy as np
import pytest
import scipy.linalg as sla

from modent.model import SystemParams, control_matrix, drift_matrix
from modent.noise import (
    ClosedLoopUnstableError,
    closed_loop_multipliers,
    excess_noise,
    periodic_midpoints,
    propagate_series,
    unconditional_covariance,
)
from modent.riccati import lqr_gain, periodic_riccati_schur


@pytest.fixture(scope="module")
def sol_i(working_point):
    return periodic_riccati_schur(working_point, 512).merge(lqr_gain(working_point, n_steps=512))


def test_periodic_midpoints_fourth_order():
    def err(n):
        t = np.linspace(0, 2 * np.pi, n + 1)
        return np.abs(periodic_midpoints(np.sin(t)) - np.sin(t[:-1] + np.pi / n)).max()

    # cubic interpolation error is (3/128) h^4 max|f''''|
    assert err(64) == pytest.approx(3 / 128 * (2 * np.pi / 64) ** 4, rel=0.01)
    assert err(64) / err(128) == pytest.approx(16, rel=0.02)


def test_no_measurement_no_excess_noise():
    # without readout only a damped, unpumped system has a stationary filter
    p = SystemParams(g0=0.2, g1=0.0, eta=0.0, gamma=0.05)
    sol = periodic_riccati_schur(p, 256).merge(lqr_gain(p, n_steps=256))
    assert np.abs(excess_noise(p, sol).xi).max() == 0.0


def test_excess_noise_psd_and_periodic(working_point, sol_i):
    xi = excess_noise(working_point, sol_i)
    assert np.linalg.eigvalsh(xi.xi).min() > -1e-12
    np.testing.assert_allclose(xi.xi[-1], xi.xi[0], atol=1e-8 * np.abs(xi.xi).max())
    assert np.abs(xi.floquet_multipliers).max() < 1


def test_unmodulated_excess_noise_matches_lyapunov():
    p = SystemParams(g0=0.2, g1=0.0)
    sol = periodic_riccati_schur(p, 256).merge(lqr_gain(p, n_steps=256))
    from modent.model import measurement_model

    C, W, _ = measurement_model(p)
    Acl = drift_matrix(p, 0.0) - control_matrix() @ sol.gain[0]
    L = sol.sigma_c[0] @ C.T
    ref = sla.solve_continuous_lyapunov(Acl, -L @ W @ L.T)
    np.testing.assert_allclose(excess_noise(p, sol).xi[0], ref, atol=1e-9)


def test_unconditional_trace_adds(working_point, sol_i):
    xi = excess_noise(working_point, sol_i).xi
    su = unconditional_covariance(sol_i.sigma_c, xi)
    np.testing.assert_allclose(np.trace(su, axis1=1, axis2=2),
                               np.trace(sol_i.sigma_c, axis1=1, axis2=2) + np.trace(xi, axis1=1, axis2=2))


def test_closed_loop_multipliers_agree(working_point, sol_i):
    a = np.sort(np.abs(closed_loop_multipliers(working_point, sol_i)))
    b = np.sort(np.abs(excess_noise(working_point, sol_i).floquet_multipliers))
    np.testing.assert_allclose(a, b)


def test_without_feedback_resonant_point_is_unstable(working_point):
    sol = periodic_riccati_schur(working_point, 256).merge(
        lqr_gain(working_point, P=np.zeros((4, 4)), n_steps=256, method="direct"))
    with pytest.raises(ClosedLoopUnstableError):
        excess_noise(working_point, sol)


def test_propagated_series_stays_on_orbit(working_point, sol_i):
    xi = excess_noise(working_point, sol_i).xi
    t, sig, x = propagate_series(working_point, sol_i, xi[0], 2)
    n = sol_i.n_steps
    assert len(t) == 2 * n + 1
    np.testing.assert_allclose(sig[n:], sol_i.sigma_c, atol=1e-8)
    np.testing.assert_allclose(x[n:], xi, atol=1e-6 * np.abs(xi).max())
