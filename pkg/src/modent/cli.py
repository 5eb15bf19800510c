"""Command-line entry point: ``modent <subcommand> --config FILE``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .entanglement import resonance_frequency
from .output import clean_floats, write_csv, write_json
from .pipeline import CONVERGED
from .riccati import RiccatiError
from .sweeps import (
    VALUE_FIELDS,
    run_boundary,
    run_map,
    run_montecarlo,
    run_solve,
    run_trace,
    stability_report,
)

log = logging.getLogger("modent")

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVE = 4

_IU = np.triu_indices(4)


def _prefix(config, mode):
    return config.output["prefix"] or mode


def _cmd_solve(config, out: Path, args):
    res = run_solve(config)
    cfg = config.resolved()
    summary = {"status": res.status, "message": res.message,
               "stability": stability_report(config.params, config.solver["n_steps"])}
    name = _prefix(config, "solve")
    if res.status == CONVERGED:
        sol = res.solution
        summary.update(res.summary())
        summary["solver"] = {k: v for k, v in sol.info.items()}
        summary["closed_loop_multipliers_abs"] = sorted(np.abs(res.noise.floquet_multipliers).tolist())
        cols = ["t", "e_n_c", "e_n_u"]
        cols += [f"sigma_c_{i}{j}" for i, j in zip(*_IU)] + [f"xi_{i}{j}" for i, j in zip(*_IU)]
        cols += [f"k_{i}{j}" for i in range(2) for j in range(4)]
        rows = []
        for n, t in enumerate(sol.times):
            row = {"t": t, "e_n_c": res.trace.e_n_c[n], "e_n_u": res.trace.e_n_u[n]}
            for i, j in zip(*_IU):
                row[f"sigma_c_{i}{j}"] = sol.sigma_c[n, i, j]
                row[f"xi_{i}{j}"] = res.noise.xi[n, i, j]
            for i in range(2):
                for j in range(4):
                    row[f"k_{i}{j}"] = sol.gain[n, i, j]
            rows.append(row)
        write_csv(out / f"{name}.csv", rows, cols, cfg)
    write_json(out / f"{name}.json", clean_floats(summary), cfg)
    print(f"{res.status}: " + ", ".join(f"{k}={v:.6g}" for k, v in res.summary().items()
                                        if isinstance(v, float)))
    return 0


def _cmd_map(config, out: Path, args):
    res = run_map(config, args.threads)
    cfg = config.resolved()
    name = _prefix(config, "map")
    cols = list(res.axes) + ["status"] + list(VALUE_FIELDS)
    write_csv(out / f"{name}.csv", res.rows(), cols, cfg)
    statuses, counts = np.unique(res.status.astype(str), return_counts=True)
    payload = {"shape": list(res.shape), "axes": {k: v.tolist() for k, v in res.axes.items()},
               "status_counts": dict(zip(statuses.tolist(), counts.tolist())),
               "points": [{"index": i, "status": s, "message": m}
                          for i, (s, m) in enumerate(zip(res.status.ravel(), res.messages.ravel()))]}
    write_json(out / f"{name}.json", clean_floats(payload), cfg)
    print(f"map {res.shape}: " + ", ".join(f"{s}={c}" for s, c in zip(statuses, counts)))
    return 0


def _cmd_boundary(config, out: Path, args):
    pts = run_boundary(config, args.threads)
    cfg = config.resolved()
    name = _prefix(config, "boundary")
    cols = ["eta", "g1_spec", "g1", "kind", "status", "g0_crossing", "bracket_lo", "bracket_hi", "evaluations"]
    rows = [{"eta": p.eta, "g1_spec": p.g1_spec, "g1": p.g1_value, "kind": p.kind, "status": p.status,
             "g0_crossing": p.g0, "bracket_lo": p.bracket[0], "bracket_hi": p.bracket[1],
             "evaluations": p.evaluations} for p in pts]
    write_csv(out / f"{name}.csv", rows, cols, cfg)
    write_json(out / f"{name}.json", clean_floats({"points": rows}), cfg)
    for r in rows:
        print(f"eta={r['eta']} {r['g1_spec']} {r['kind']}: {r['status']} g0={r['g0_crossing']}")
    return 0


def _cmd_trace(config, out: Path, args):
    traces = run_trace(config, args.threads)
    cfg = config.resolved()
    name = _prefix(config, "trace")
    rows, summary = [], []
    for tr in traces:
        res = tr.result
        item = {"g1": tr.g1, "status": res.status, "message": res.message, "peak_lag_samples": tr.peak_lag}
        if res.status == CONVERGED:
            item.update(res.summary())
            item["n_steps"] = res.solution.n_steps
            for t, c, u in zip(res.solution.times, res.trace.e_n_c, res.trace.e_n_u):
                rows.append({"g1": tr.g1, "t": t, "e_n_c": c, "e_n_u": u})
        summary.append(item)
    write_csv(out / f"{name}.csv", rows, ["g1", "t", "e_n_c", "e_n_u"], cfg)
    ref = next((s for s in summary if s["g1"] == 0.0), None)
    try:
        res_freq = resonance_frequency(config.params.g0, config.params.omega0)
    except ValueError:
        res_freq = None
    write_json(out / f"{name}.json", clean_floats({"traces": summary, "reference_g1_0": ref,
                                                   "resonance_2omega_star": res_freq}), cfg)
    for s in summary:
        print(f"g1={s['g1']}: {s['status']} max_u={s.get('max_u')} mean_c={s.get('mean_c')}")
    return 0


def _cmd_montecarlo(config, out: Path, args):
    rep = run_montecarlo(config, dump_trajectories=args.dump_trajectories or config.output["dump_trajectories"])
    cfg = config.resolved()
    name = _prefix(config, "montecarlo")
    cols = ["phase_index", "i", "j", "mc_cov", "xi", "stderr", "z"]
    write_csv(out / f"{name}.csv", rep.rows(), cols, cfg)
    payload = {"n_traj": rep.n_traj, "passed": rep.passed, "threshold_sigma": rep.threshold,
               "max_abs_z": float(np.max(np.abs(rep.z))), "phases": rep.phases.tolist(),
               "max_abs_mean_z": float(np.max(np.abs(rep.mean_z)))}
    write_json(out / f"{name}.json", clean_floats(payload), cfg)
    if rep.trajectories:
        rows = []
        for tr in rep.trajectories:
            for t, x in zip(tr.times, tr.samples):
                rows.append({"index": tr.index, "t": t, "x1": x[0], "p1": x[1], "x2": x[2], "p2": x[3]})
        write_csv(out / f"{name}_trajectories.csv", rows, ["index", "t", "x1", "p1", "x2", "p2"], cfg)
    print(f"montecarlo N={rep.n_traj}: {'PASS' if rep.passed else 'FAIL'} "
          f"(max |z| = {payload['max_abs_z']:.2f})")
    return 0


COMMANDS = {
    "solve": _cmd_solve,
    "map": _cmd_map,
    "boundary": _cmd_boundary,
    "trace": _cmd_trace,
    "montecarlo": _cmd_montecarlo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modent", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--dump-trajectories", action="store_true",
                       help="montecarlo: also write a few raw trajectories")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if config.mode != args.command:
        log.info("config mode %r overridden by subcommand %r", config.mode, args.command)
        config.mode = args.command
        config.raw["mode"] = args.command
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_CONFIG
        config.seed = args.seed
        config.raw["seed"] = args.seed
    out = Path(args.out or config.output["dir"])
    try:
        return COMMANDS[args.command](config, out, args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RiccatiError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVE


if __name__ == "__main__":
    sys.exit(main())
