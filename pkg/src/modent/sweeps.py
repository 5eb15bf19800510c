"""Experiment drivers behind the CLI subcommands.

Each ``run_*`` function takes an :class:`ExperimentConfig`, does the
numerical work and returns plain result objects; writing files is left
to :mod:`modent.output`.  Grid points are independent, so sweeps fan out
over a process pool and are gathered back in grid order.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .entanglement import log_negativity, period_average, resonance_frequency
from .model import SystemParams, is_confined
from .noise import propagate_series, unconditional_covariance
from .pipeline import CONVERGED, FAILED, UNSTABLE, PointResult, solve_point
from .riccati import RiccatiError, floquet_multipliers, periodic_riccati_schur
from .trajectories import ensemble_stats, simulate_ensemble, simulate_trajectory

log = logging.getLogger(__name__)

VALUE_FIELDS = ("mean_c", "mean_u", "max_c", "max_u")


def parallel_map(fn, items, threads: int = 1):
    """Ordered map over a process pool; ``threads <= 1`` stays in-process."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (8 * threads))))


# ------------------------------------------------------------------- points


def _point_summary(args):
    params, n_steps, tol, clamped, conditional_only = args
    if conditional_only:
        return _conditional_summary(params, n_steps, tol, clamped)
    res = solve_point(params, n_steps, tol=tol, clamped=clamped)
    return res.summary()


def _conditional_summary(params, n_steps, tol, clamped):
    if not is_confined(params):
        return {"status": UNSTABLE, "message": "static trap does not confine the relative mode"}
    try:
        sol = periodic_riccati_schur(params, n_steps, tol=tol)
    except (RiccatiError, np.linalg.LinAlgError) as exc:
        return {"status": FAILED, "message": str(exc)}
    e = log_negativity(sol.sigma_c)
    return {"status": CONVERGED, "message": "", "mean_c": period_average(e, clamped),
            "max_c": float(e.max())}


# ---------------------------------------------------------------------- map


@dataclass
class SweepResult:
    axes: dict
    status: np.ndarray
    values: dict = field(default_factory=dict)
    messages: np.ndarray | None = None

    @property
    def shape(self):
        return tuple(len(v) for v in self.axes.values())

    def rows(self):
        """One dict per grid point, in C order over the axes."""
        names = list(self.axes)
        for idx in itertools.product(*(range(len(v)) for v in self.axes.values())):
            row = {n: float(self.axes[n][i]) for n, i in zip(names, idx)}
            row["status"] = str(self.status[idx])
            for k, arr in self.values.items():
                row[k] = float(arr[idx]) if self.status[idx] == CONVERGED else None
            yield row


def run_map(config: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Period-averaged E_N over a grid of parameter values (the g1-Omega map)."""
    axes = {a.name: a.grid() for a in config.sweep}
    shape = tuple(len(v) for v in axes.values())
    names = list(axes)
    s = config.solver
    jobs = []
    for idx in itertools.product(*(range(n) for n in shape)):
        p = config.params.replace(**{n: float(axes[n][i]) for n, i in zip(names, idx)})
        jobs.append((p, s["n_steps"], s["tol"], s["clamped"], False))
    out = parallel_map(_point_summary, jobs, threads)
    status = np.array([o["status"] for o in out], dtype=object).reshape(shape)
    values = {k: np.array([o.get(k, np.nan) for o in out], float).reshape(shape) for k in VALUE_FIELDS}
    messages = np.array([o["message"] for o in out], dtype=object).reshape(shape)
    return SweepResult(axes, status, values, messages)


# ----------------------------------------------------------------- boundary


def omega_scan(g0: float, omega0: float = 1.0, window=(0.8, 1.2), points: int = 61,
               resonances=(1, 2)) -> np.ndarray:
    """Log-spaced modulation frequencies around multiples of Omega*."""
    half = resonance_frequency(g0, omega0) / 2.0
    grids = [k * half * np.geomspace(window[0], window[1], points) for k in resonances]
    return np.concatenate(grids)


@dataclass
class BoundaryPoint:
    eta: float
    g1_spec: str
    g1_value: float
    kind: str
    status: str
    g0: float | None
    bracket: tuple
    evaluations: int


def best_over_omega(params: SystemParams, bcfg: dict, solver: dict, kind: str, threads: int = 1):
    """Largest period-averaged E_N over the Omega scan; NaN if nothing converged."""
    if not is_confined(params):
        return np.nan
    oms = omega_scan(params.g0, params.omega0, bcfg["window"], bcfg["omega_points"], bcfg["resonances"])
    conditional = kind == "conditional"
    jobs = [(params.replace(omega_mod=float(o)), solver["n_steps"], solver["tol"], solver["clamped"],
             conditional) for o in oms]
    out = parallel_map(_point_summary, jobs, threads)
    key = "mean_c" if conditional else "mean_u"
    vals = [o[key] for o in out if o["status"] == CONVERGED]
    return max(vals) if vals else np.nan


def separability_crossing(fn, lo: float, hi: float, tol: float = 1e-3):
    """Bisect ``fn`` (max period-averaged E_N) for its zero crossing.

    Returns ``(status, crossing, bracket, evaluations)``; status is
    ``"found"``, ``"entangled"`` (no sign change, entangled on the whole
    bracket), ``"separable"`` or ``"failed"``.
    """
    f_lo, f_hi = fn(lo), fn(hi)
    n = 2
    if np.isnan(f_lo) or np.isnan(f_hi):
        return FAILED, None, (lo, hi), n
    if (f_lo > 0) == (f_hi > 0):
        return ("entangled" if f_lo > 0 else "separable"), None, (lo, hi), n
    a, b, fa = lo, hi, f_lo
    while abs(b - a) > tol:
        m = 0.5 * (a + b)
        fm = fn(m)
        n += 1
        if np.isnan(fm):
            return FAILED, None, (a, b), n
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return "found", 0.5 * (a + b), (a, b), n


def run_boundary(config: ExperimentConfig, threads: int = 1) -> list:
    """Separability boundary along g0 for every (eta, g1 setting, kind)."""
    b = config.boundary
    specs = ([("ratio", r) for r in b["g1_ratio"]] if b["g1_ratio"] is not None
             else [("abs", g) for g in b["g1"]])
    results = []
    for eta in b["eta"]:
        for mode, val in specs:
            for kind in b["kinds"]:
                def fn(g0, eta=eta, mode=mode, val=val, kind=kind):
                    g1 = val * abs(g0) if mode == "ratio" else val
                    p = config.params.replace(g0=float(g0), g1=float(g1), eta=float(eta))
                    return best_over_omega(p, b, config.solver, kind, threads)

                status, g0, bracket, n = separability_crossing(fn, b["lo"], b["hi"], b["tol"])
                label = f"g1/|g0|={val}" if mode == "ratio" else f"g1={val}"
                g1v = (val * abs(g0) if g0 is not None else np.nan) if mode == "ratio" else val
                results.append(BoundaryPoint(eta, label, g1v, kind, status, g0, bracket, n))
                log.info("boundary eta=%s %s %s: %s %s", eta, label, kind, status, g0)
    return results


# -------------------------------------------------------------------- trace


@dataclass
class TraceResult:
    g1: float
    result: PointResult
    series_times: np.ndarray | None = None
    series_e_n_u: np.ndarray | None = None
    peak_lag: int | None = None


def autocorrelation_peak(x: np.ndarray, n_per_period: int) -> int:
    """Lag in (T/2, 3T/2) where the signal best matches its shifted copy.

    The match at each lag is the Pearson correlation of the overlapping
    segments, which reaches 1 only at an exact period.
    """
    x = np.asarray(x, float)
    lags = np.arange(n_per_period // 2 + 1, 3 * n_per_period // 2)
    lags = lags[lags < len(x) - 2]
    ac = np.array([np.corrcoef(x[:-k], x[k:])[0, 1] for k in lags])
    return int(lags[np.argmax(ac)])


def run_trace(config: ExperimentConfig, threads: int = 1) -> list:
    """E_N(t) over one period for each g1, plus the unmodulated reference.

    For modulated points the state is also re-integrated over
    ``trace.n_periods`` periods to check that E_N^u peaks recur with the
    modulation period.
    """
    s = config.solver
    g1s = list(config.trace["g1"])
    if 0.0 not in g1s:
        g1s = [0.0] + g1s
    out = []
    for g1 in g1s:
        p = config.params.replace(g1=float(g1))
        res = solve_point(p, s["n_steps"], tol=s["tol"], clamped=s["clamped"])
        tr = TraceResult(g1, res)
        if res.status == CONVERGED and g1 > 0 and config.trace["n_periods"] > 1:
            t, sig, xi = propagate_series(p, res.solution, res.noise.xi[0], config.trace["n_periods"])
            tr.series_times = t
            tr.series_e_n_u = log_negativity(unconditional_covariance(sig, xi))
            tr.peak_lag = autocorrelation_peak(tr.series_e_n_u, res.solution.n_steps)
        out.append(tr)
    return out


# --------------------------------------------------------------- montecarlo


@dataclass
class MonteCarloReport:
    params: SystemParams
    n_traj: int
    phases: np.ndarray
    xi: np.ndarray
    cov: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    mean_z: np.ndarray
    passed: bool
    threshold: float = 3.0
    trajectories: list = field(default_factory=list)

    def rows(self):
        iu = np.triu_indices(4)
        for k, ph in enumerate(self.phases):
            for i, j in zip(*iu):
                yield {"phase_index": int(ph), "i": int(i), "j": int(j),
                       "mc_cov": float(self.cov[k, i, j]), "xi": float(self.xi[k, i, j]),
                       "stderr": float(self.stderr[k, i, j]), "z": float(self.z[k, i, j])}


def run_montecarlo(config: ExperimentConfig, dump_trajectories: bool = False,
                   zero_noise: bool = False) -> MonteCarloReport:
    """Compare the ensemble covariance of conditional means with Xi(t)."""
    m = config.montecarlo
    res = solve_point(config.params, m["n_steps"], tol=config.solver["tol"])
    if res.status != CONVERGED:
        raise RiccatiError(f"cannot run Monte Carlo at an {res.status} point: {res.message}")
    sol = res.solution
    phases = (np.arange(m["phases"]) * sol.n_steps) // m["phases"]
    dt = sol.period / sol.n_steps / m["dt_divisor"]
    ens = simulate_ensemble(config.params, sol, m["n_traj"], config.seed, m["n_periods"], phases,
                            dt=dt, burn_in=m["burn_in"], zero_noise=zero_noise)
    cov, se, z, mz = [], [], [], []
    for k, ph in enumerate(phases):
        st = ensemble_stats(ens, k)
        xi = res.noise.xi[ph]
        cov.append(st.cov)
        se.append(st.stderr_cov)
        with np.errstate(divide="ignore", invalid="ignore"):
            zk = np.where(st.stderr_cov > 0, (st.cov - xi) / st.stderr_cov,
                          np.where(np.isclose(st.cov, xi, atol=1e-12), 0.0, np.inf))
            mk = np.where(st.stderr_mean > 0, st.mean / st.stderr_mean, 0.0)
        z.append(zk)
        mz.append(mk)
    z = np.array(z)
    report = MonteCarloReport(config.params, m["n_traj"], phases, res.noise.xi[phases], np.array(cov),
                              np.array(se), z, np.array(mz), bool(np.all(np.abs(z) <= 3.0)))
    if dump_trajectories:
        k = min(config.output["dump_count"], m["n_traj"])
        report.trajectories = [simulate_trajectory(config.params, sol, config.seed, m["n_periods"], dt=dt,
                                                   index=j, zero_noise=zero_noise) for j in range(k)]
    return report


# -------------------------------------------------------------------- solve


def run_solve(config: ExperimentConfig) -> PointResult:
    s = config.solver
    return solve_point(config.params, s["n_steps"], tol=s["tol"], clamped=s["clamped"])


def stability_report(params: SystemParams, n_steps: int = 1024) -> dict:
    """Open-loop confinement and Floquet diagnostics for one point."""
    out = {"confined": is_confined(params)}
    if params.g1 != 0 or params.omega_mod > 0:
        mult = floquet_multipliers(params, n_steps)
        out["open_loop_max_multiplier"] = float(np.abs(mult).max())
    return out
