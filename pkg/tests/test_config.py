from pathlib import Path

import numpy as np
import pytest

from modent.config import ConfigError, parse_config, parse_config_text

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_empty_file_is_an_error():
    with pytest.raises(ConfigError, match="missing required"):
        parse_config_text("")


def test_bad_eta_names_field_and_line():
    text = "mode: solve\nparams:\n  g0: 0.2\n  eta: 1.5\n"
    with pytest.raises(ConfigError, match=r"line 4: params\.eta"):
        parse_config_text(text)


@pytest.mark.parametrize("text,where", [
    ("mode: solve\nparams: {}\nsolvr: {}\n", "solvr"),
    ("mode: solve\nparams:\n  g2: 0.1\n", "params.g2"),
    ("mode: map\nparams: {}\nsweep:\n  g1: {start: 0, stop: 1, cnt: 3}\n", "sweep.g1.cnt"),
    ("mode: solve\nparams: {}\nmontecarlo:\n  n_traj: 1\n", "montecarlo.n_traj"),
])
def test_unknown_or_invalid_keys(text, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        parse_config_text(text)


def test_malformed_yaml():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config_text("mode: [solve\n")


def test_map_needs_axes():
    with pytest.raises(ConfigError, match="sweep"):
        parse_config_text("mode: map\nparams: {}\n")


def test_seed_must_fit_64_bits():
    with pytest.raises(ConfigError, match="seed"):
        parse_config_text(f"mode: solve\nseed: {2**64}\nparams: {{}}\n")


def test_reference_map_config():
    cfg = parse_config(CONFIGS / "resonance_map.yaml")
    p = cfg.params
    assert (p.g0, p.gamma_ba, p.gamma_th / p.gamma_ba, p.q, p.phi) == pytest.approx(
        (0.2, 0.05, 0.05, 0.1, np.pi))
    grids = {a.name: a.grid() for a in cfg.sweep}
    assert grids["g1"].shape == grids["omega_mod"].shape == (60,)
    assert (grids["g1"][0], grids["g1"][-1], grids["omega_mod"][0], grids["omega_mod"][-1]) == (0, 0.2, 1.5, 3.5)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    parse_config(path)


def test_log_axis_and_values():
    cfg = parse_config_text("mode: map\nparams: {}\nsweep:\n  eta: {values: [0.25, 1]}\n"
                            "  omega_mod: {start: 1, stop: 100, count: 3, scale: log}\n")
    np.testing.assert_allclose(cfg.sweep[1].grid(), [1, 10, 100])
    assert cfg.sweep[0].grid().tolist() == [0.25, 1.0]


def test_resolved_contains_defaults():
    cfg = parse_config_text("mode: solve\nparams: {g1: 0.1}\n")
    res = cfg.resolved()
    assert res["solver"]["n_steps"] == 256 and res["params"]["g1"] == 0.1
