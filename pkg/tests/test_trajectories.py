import numpy as np
import pytest

from modent.model import SystemParams
from modent.riccati import PeriodicSolution, lqr_gain, periodic_riccati_schur
from modent.trajectories import (
    GridError,
    ensemble_stats,
    simulate_ensemble,
    simulate_trajectory,
    trajectory_rng,
)


@pytest.fixture(scope="module")
def setup(working_point):
    sol = periodic_riccati_schur(working_point, 256).merge(lqr_gain(working_point, n_steps=256))
    return working_point, sol


def test_zero_noise_from_origin_stays_put(setup):
    p, sol = setup
    tr = simulate_trajectory(p, sol, seed=1, n_periods=2, zero_noise=True)
    assert not tr.samples.any()


def test_zero_noise_decays_under_feedback(setup):
    p, sol = setup
    tr = simulate_trajectory(p, sol, seed=1, n_periods=20, zero_noise=True, x0=[1.0, 0.0, -0.5, 0.2])
    assert np.linalg.norm(tr.strobe[-1]) < 1e-3 * np.linalg.norm(tr.strobe[0])


def test_free_oscillator_rotates():
    # no coupling, no control, no information: x1 + i p1 rotates at omega0
    p = SystemParams(g0=0.0, g1=0.0, eta=0.0, omega_mod=1.0)
    times = np.linspace(0, p.period, 257)
    sol = PeriodicSolution(p.period, 256, times, sigma_c=np.broadcast_to(0.5 * np.eye(4), (257, 4, 4)),
                           gain=np.zeros((257, 2, 4)))
    tr = simulate_trajectory(p, sol, seed=0, n_periods=1, dt=sol.period / 256 / 8, zero_noise=True,
                             x0=[1.0, 0.0, 0.0, 0.0])
    n = len(tr.times) - 1
    # explicit Euler: each step rotates by arctan(dt) and stretches by sqrt(1 + dt^2)
    growth, angle = (1 + tr.dt**2) ** (n / 2), n * np.arctan(tr.dt)
    np.testing.assert_allclose(tr.samples[-1, :2], growth * np.array([np.cos(angle), -np.sin(angle)]),
                               atol=1e-12)


def test_dt_must_divide_grid(setup):
    p, sol = setup
    with pytest.raises(GridError):
        simulate_trajectory(p, sol, seed=0, n_periods=1, dt=sol.period / 256 / 2.5)


def test_streams_are_independent_of_batching(setup):
    p, sol = setup
    a = simulate_ensemble(p, sol, 20, seed=7, n_periods=2, phases=(0, 64), burn_in=1, batch=3)
    b = simulate_ensemble(p, sol, 20, seed=7, n_periods=2, phases=(64, 0), burn_in=1, batch=20)
    np.testing.assert_array_equal(a.states[:, :, 0], b.states[:, :, 1])
    tr = simulate_trajectory(p, sol, seed=7, n_periods=2, index=5)
    np.testing.assert_allclose(a.states[5, 1, 1], tr.samples[256 + 64], rtol=1e-12)


def test_rng_streams_differ():
    assert trajectory_rng(1, 0).random() != trajectory_rng(1, 1).random()
    assert trajectory_rng(1, 0).random() == trajectory_rng(1, 0).random()


def test_stderr_scales_with_sample_size(setup):
    p, sol = setup
    ens = simulate_ensemble(p, sol, 2000, seed=3, n_periods=3, burn_in=2)
    full = ensemble_stats(ens)
    from dataclasses import replace

    half = ensemble_stats(replace(ens, states=ens.states[:500]))
    ratio = half.stderr_cov / full.stderr_cov
    assert np.median(ratio) == pytest.approx(2.0, rel=0.15)


def test_stats_refuse_burn_in(setup):
    p, sol = setup
    ens = simulate_ensemble(p, sol, 4, seed=0, n_periods=3, burn_in=2)
    with pytest.raises(ValueError):
        ensemble_stats(ens, period=1)
