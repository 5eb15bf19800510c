"""Experiment configuration files (YAML).

A config is a nested mapping.  ``mode`` and ``params`` are required; the
remaining sections have defaults and only the section matching ``mode``
is consulted.  Unknown keys anywhere are an error, reported with the
line they appear on.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .model import ParameterError, SystemParams

MODES = ("solve", "map", "boundary", "trace", "montecarlo")
PARAM_KEYS = ("omega0", "g0", "g1", "omega_mod", "gamma", "gamma_ba", "gamma_th", "eta", "q", "phi",
              "C", "W", "M", "V")
MATRIX_KEYS = ("C", "W", "M", "V")

DEFAULTS = {
    "seed": 0,
    "solver": {"n_steps": 256, "tol": 1e-10, "clamped": False},
    "sweep": {},
    "boundary": {
        "axis": "g0",
        "lo": 0.02,
        "hi": 0.24,
        "g1_ratio": [0.2],
        "g1": None,
        "eta": [0.25, 0.5, 0.75, 1.0],
        "window": [0.8, 1.2],
        "omega_points": 61,
        "resonances": [1, 2],
        "tol": 1e-3,
        "kinds": ["conditional", "unconditional"],
    },
    "trace": {"g1": [0.0, 0.02, 0.05, 0.1, 0.15, 0.2], "n_periods": 3},
    "montecarlo": {"n_traj": 10000, "n_periods": 11, "burn_in": 10, "phases": 4,
                   "dt_divisor": 1, "n_steps": 1024},
    "output": {"dir": "out", "prefix": None, "dump_trajectories": False, "dump_count": 10},
}

_SWEEP_KEYS = ("start", "stop", "count", "scale", "values")


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and line."""


@dataclass
class AxisSpec:
    name: str
    start: float = 0.0
    stop: float = 0.0
    count: int = 1
    scale: str = "linear"
    values: list | None = None

    def grid(self):
        import numpy as np

        if self.values is not None:
            return np.asarray(self.values, float)
        if self.count == 1:
            return np.array([float(self.start)])
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.count)
        return np.linspace(self.start, self.stop, self.count)


@dataclass
class ExperimentConfig:
    mode: str
    params: SystemParams
    seed: int = 0
    solver: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)
    boundary: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    montecarlo: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def resolved(self) -> dict:
        """Fully resolved configuration as plain data, for provenance headers."""
        out = copy.deepcopy(self.raw)
        out["params"] = {k: v for k, v in self.params.as_dict().items() if v is not None}
        return out


# -------------------------------------------------------------------- loading


def _line_map(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    lines = {}
    root = yaml.compose(text)

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    if root is not None:
        walk(root, "")
    return lines


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, msg):
        line = self.lines.get(path)
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{where}{path}: {msg}")


def _merge(defaults: dict, given: dict, path: str, ctx: _Ctx) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        p = f"{path}.{k}"
        if k not in defaults:
            ctx.fail(p, f"unknown key (allowed: {', '.join(sorted(defaults))})")
        out[k] = v
    return out


def _number(v, path, ctx, lo=None, hi=None, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(path, f"expected a number, got {type(v).__name__}")
    if integer and int(v) != v:
        ctx.fail(path, "expected an integer")
    if not math.isfinite(v):
        ctx.fail(path, "must be finite")
    if lo is not None and v < lo:
        ctx.fail(path, f"value {v} below minimum {lo}")
    if hi is not None and v > hi:
        ctx.fail(path, f"value {v} above maximum {hi}")
    return int(v) if integer else float(v)


def _params(raw, ctx) -> SystemParams:
    if not isinstance(raw, dict):
        ctx.fail("params", "expected a mapping")
    kw = {}
    for k, v in raw.items():
        p = f"params.{k}"
        if k not in PARAM_KEYS:
            ctx.fail(p, f"unknown parameter (allowed: {', '.join(PARAM_KEYS)})")
        if k in MATRIX_KEYS:
            import numpy as np

            try:
                kw[k] = np.asarray(v, dtype=float)
            except (TypeError, ValueError):
                ctx.fail(p, "expected a nested list of numbers")
        elif k == "eta":
            kw[k] = _number(v, p, ctx, 0.0, 1.0)
        else:
            kw[k] = _number(v, p, ctx)
    try:
        return SystemParams(**kw)
    except ParameterError as exc:
        ctx.fail("params", str(exc))


def _sweep(raw, ctx) -> list:
    if not isinstance(raw, dict):
        ctx.fail("sweep", "expected a mapping of axis name to range")
    axes = []
    for name, spec in raw.items():
        p = f"sweep.{name}"
        if name not in PARAM_KEYS or name in MATRIX_KEYS:
            ctx.fail(p, "sweep axes must be scalar parameters")
        if not isinstance(spec, dict):
            ctx.fail(p, "expected {start, stop, count[, scale]} or {values}")
        for k in spec:
            if k not in _SWEEP_KEYS:
                ctx.fail(f"{p}.{k}", f"unknown key (allowed: {', '.join(_SWEEP_KEYS)})")
        if "values" in spec:
            vals = spec["values"]
            if not isinstance(vals, list) or not vals:
                ctx.fail(f"{p}.values", "expected a non-empty list")
            axes.append(AxisSpec(name, values=[_number(v, f"{p}.values", ctx) for v in vals]))
            continue
        for k in ("start", "stop", "count"):
            if k not in spec:
                ctx.fail(p, f"missing required key '{k}'")
        ax = AxisSpec(
            name,
            _number(spec["start"], f"{p}.start", ctx),
            _number(spec["stop"], f"{p}.stop", ctx),
            _number(spec["count"], f"{p}.count", ctx, lo=1, integer=True),
            spec.get("scale", "linear"),
        )
        if ax.scale not in ("linear", "log"):
            ctx.fail(f"{p}.scale", "must be 'linear' or 'log'")
        if ax.scale == "log" and (ax.start <= 0 or ax.stop <= 0):
            ctx.fail(p, "log axes need positive bounds")
        axes.append(ax)
    return axes


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: malformed YAML: {exc}") from exc
    ctx = _Ctx(lines)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    missing = [k for k in ("mode", "params") if k not in raw]
    if missing:
        raise ConfigError(f"{source}: missing required field(s): {', '.join(missing)}")
    allowed = {"mode", "params", *DEFAULTS}
    for k in raw:
        if k not in allowed:
            ctx.fail(k, f"unknown key (allowed: {', '.join(sorted(allowed))})")
    mode = raw["mode"]
    if mode not in MODES:
        ctx.fail("mode", f"must be one of {', '.join(MODES)}")
    params = _params(raw["params"] or {}, ctx)

    sections = {}
    for name in ("solver", "boundary", "trace", "montecarlo", "output"):
        given = raw.get(name) or {}
        if not isinstance(given, dict):
            ctx.fail(name, "expected a mapping")
        sections[name] = _merge(DEFAULTS[name], given, name, ctx)

    s = sections["solver"]
    s["n_steps"] = _number(s["n_steps"], "solver.n_steps", ctx, lo=4, integer=True)
    s["tol"] = _number(s["tol"], "solver.tol", ctx, lo=0.0)
    if not isinstance(s["clamped"], bool):
        ctx.fail("solver.clamped", "expected true or false")

    b = sections["boundary"]
    if b["axis"] not in ("g0",):
        ctx.fail("boundary.axis", "only 'g0' is supported as the bisection axis")
    for k in ("lo", "hi", "tol"):
        b[k] = _number(b[k], f"boundary.{k}", ctx)
    b["omega_points"] = _number(b["omega_points"], "boundary.omega_points", ctx, lo=1, integer=True)
    for k in ("eta", "window", "resonances", "kinds"):
        if not isinstance(b[k], list) or not b[k]:
            ctx.fail(f"boundary.{k}", "expected a non-empty list")
    b["eta"] = [_number(v, "boundary.eta", ctx, 0.0, 1.0) for v in b["eta"]]
    for kind in b["kinds"]:
        if kind not in ("conditional", "unconditional"):
            ctx.fail("boundary.kinds", f"unknown kind {kind!r}")
    if (b["g1"] is None) == (b["g1_ratio"] is None):
        ctx.fail("boundary", "give exactly one of g1 (absolute) or g1_ratio (g1 / g0)")

    t = sections["trace"]
    if not isinstance(t["g1"], list) or not t["g1"]:
        ctx.fail("trace.g1", "expected a non-empty list")
    t["g1"] = [_number(v, "trace.g1", ctx, lo=0.0) for v in t["g1"]]
    t["n_periods"] = _number(t["n_periods"], "trace.n_periods", ctx, lo=1, integer=True)

    m = sections["montecarlo"]
    for k in ("n_traj", "n_periods", "burn_in", "phases", "dt_divisor", "n_steps"):
        m[k] = _number(m[k], f"montecarlo.{k}", ctx, lo=0 if k == "burn_in" else 1, integer=True)
    if m["n_traj"] < 2:
        ctx.fail("montecarlo.n_traj", "need at least two trajectories")
    if m["burn_in"] >= m["n_periods"]:
        ctx.fail("montecarlo.burn_in", "burn-in must be shorter than n_periods")

    o = sections["output"]
    if not isinstance(o["dump_trajectories"], bool):
        ctx.fail("output.dump_trajectories", "expected true or false")

    seed = _number(raw.get("seed", 0), "seed", ctx, lo=0, integer=True)
    if seed >= 2**64:
        ctx.fail("seed", "must fit in 64 bits")
    sweep = _sweep(raw.get("sweep") or {}, ctx)
    if mode == "map" and not sweep:
        ctx.fail("sweep", "map mode needs at least one sweep axis")

    resolved = {"mode": mode, "seed": seed, **sections,
                "sweep": {a.name: ({"values": a.values} if a.values is not None else
                                   {"start": a.start, "stop": a.stop, "count": a.count, "scale": a.scale})
                          for a in sweep}}
    return ExperimentConfig(mode, params, seed, sections["solver"], sweep, sections["boundary"],
                            sections["trace"], sections["montecarlo"], sections["output"], resolved)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))
