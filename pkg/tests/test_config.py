import pytest

from vibdamage.config import DEFAULTS, beam_config, dump_config, load_config
from vibdamage.errors import ConfigError


def test_empty_config_gives_defaults():
    assert load_config() == DEFAULTS
    assert load_config(text="") == DEFAULTS


def test_partial_override_merges():
    cfg = load_config(text="seed: 3\nbeam:\n  elements: 20\nsacom:\n  samples: 1e3\n")
    assert cfg["seed"] == 3
    assert cfg["beam"]["elements"] == 20 and cfg["beam"]["ei"] == 131.25
    assert cfg["sacom"]["samples"] == 1000 and isinstance(cfg["sacom"]["samples"], int)
    assert beam_config(cfg).elements == 20
    assert beam_config(cfg, "regularize").elements == 50


def test_dump_round_trips():
    cfg = load_config(text="noise:\n  jitter: 0.01\n")
    assert load_config(text=dump_config(cfg)) == cfg


@pytest.mark.parametrize("text, where", [
    ("beam:\n  elementz: 3\n", ":2"),
    ("seed: [1, 2]\n", ":1"),
    ("simulation:\n  duration: 1\n  substeps: 2.5\n", ":3"),
    ("beam: 4\n", ":1"),
    ("beam:\n  ei: -1\n", "beam"),
    ("beam: [\n", ":"),
    ("enkf:\n  stride: true\n", ":2"),
])
def test_invalid_configs_name_the_line(text, where):
    with pytest.raises(ConfigError, match=where):
        load_config(text=text)


def test_file_errors_carry_path(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("bogus: 1\n")
    with pytest.raises(ConfigError, match="c.yaml:1"):
        load_config(path)
