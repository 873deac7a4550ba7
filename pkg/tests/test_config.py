import json

import pytest

from balayage.config import ConfigError, RunConfig, Tolerances, load_config
from balayage.geometry import DomainSpec


def test_defaults_are_valid():
    cfg = RunConfig()
    assert cfg.resolution == 96 and cfg.degree == 8 and cfg.seed == 0
    assert cfg.tolerances.complementarity == 1e-8


def test_round_trip_through_json(tmp_path):
    data = {
        "domain": DomainSpec.annulus(1.0, 2.0, 3).to_dict(),
        "resolution": 48,
        "degree": 5,
        "tolerances": {"verification": 2e-3},
        "seed": 12,
        "balayage": {"atoms": [{"location": [0.0, 0.0, 0.0], "mass": 1.5}], "nu": 3.0},
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    cfg = load_config(path)
    again = RunConfig.from_dict({k: v for k, v in cfg.as_dict().items() if v is not None})
    assert again.as_dict() == cfg.as_dict()
    assert cfg.tolerances.verification == 2e-3
    assert cfg.balayage.atoms[0].mass == 1.5


@pytest.mark.parametrize(
    "data",
    [
        {"resolutoin": 64},
        {"tolerances": {"verificaton": 1e-3}},
        {"tolerances": {"verification": -1.0}},
        {"resolution": 8},
        {"degree": 25},
        {"degree": 1},
        {"seed": -1},
        {"seed": 2**64},
        {"resolution": 64.5},
        {"n_transport": 6000},
        {"balayage": {"atoms": [{"location": [0, 0], "mass": 0.0}]}},
        {"domain": {"kind": "ball", "dim": 2, "center": [0, 0], "r": -1}},
    ],
)
def test_invalid_configs_are_rejected(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_unreadable_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_overrides_keep_other_fields():
    cfg = RunConfig(degree=5).with_overrides(seed=3, output_dir="x")
    assert (cfg.degree, cfg.seed, cfg.output_dir) == (5, 3, "x")


def test_tolerances_reject_unknown_names():
    with pytest.raises(ConfigError):
        Tolerances.from_dict({"optimiser": 1e-9})
