"""CSV and JSON writers with an embedded provenance header."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from ._accel import backend


def provenance(config_dict: dict) -> list:
    """Comment lines carrying the resolved config and solver settings."""
    head = {"modent_version": __version__, "kernel_backend": backend(), "config": config_dict}
    text = yaml.safe_dump(_plain(head), sort_keys=True, default_flow_style=False)
    return ["# " + line for line in text.rstrip("\n").split("\n")]


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def write_csv(path, rows, columns, config_dict: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in provenance(config_dict):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())
    return path


def write_json(path, payload: dict, config_dict: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {"config": _plain(config_dict), **_plain(payload)}
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, float) and not np.isfinite(o):
        return None
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def clean_floats(x):
    """Replace NaN/inf by None recursively so the JSON stays strict."""
    if isinstance(x, dict):
        return {k: clean_floats(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [clean_floats(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if np.isfinite(x) else None
    return x
