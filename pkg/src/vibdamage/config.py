"""YAML pipeline configuration.

All sections and keys are optional; missing values take the defaults in
:data:`DEFAULTS`. Unknown keys and ill-typed values are rejected with the
file name and line number of the offending entry.
"""
import copy
from pathlib import Path

import yaml

from .errors import ConfigError
from .fem import BeamConfig

DEFAULTS = {
    "beam": {
        "length": 1.4, "ei": 131.25, "mu": 2.3, "elements": 100,
        "alpha": 0.15, "beta": 2e-5, "sensors": None,
    },
    "simulation": {
        "duration": 30.0, "sample_rate": 512.0, "sets_per_case": 5,
        "damage_levels": [0.0, 0.125, 0.25, 0.375, 0.5], "damaged_element": 19,
        "tip_displacement": [0.010, 0.001], "tip_torque": [0.0, 0.5],
        "temperature": [0.0, 5.0], "thermal_expansion": 1.2e-5,
        "noise_fraction": 0.002, "substeps": 32,
    },
    "preprocess": {"modes": 3, "guard": 2},
    "noise": {"jitter": 1e-3, "undamaged_group": 0},
    "enkf": {
        "elements": 25, "ei": 133.0, "ensemble_size": 100, "window_seconds": 8.0,
        "stride": 8, "substeps": 32,
    },
    "regularize": {"elements": 50, "ei": 133.0, "lambda": 0.1},
    "sacom": {
        "elements": 50, "ei": 133.0, "samples": 100000, "bins": 1000,
        "amplitude": [0.0, 0.015], "width": [1e-4, 0.2], "resolution": 50,
    },
    "seed": 0,
}

_INT_KEYS = {"elements", "sets_per_case", "damaged_element", "modes", "guard",
             "undamaged_group", "ensemble_size", "stride", "substeps", "samples",
             "bins", "resolution", "seed"}


def _line(node):
    return node.start_mark.line + 1


def _number(value):
    # YAML 1.1 reads exponent forms without a dot (1e5) as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _check(value, default, where):
    value = [_number(v) for v in value] if isinstance(value, list) else _number(value)
    if default is None:
        if value is not None and not (isinstance(value, list)
                                      and all(isinstance(v, (int, float)) for v in value)):
            raise ConfigError(f"{where}: expected a list of numbers")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{where}: expected a list of numbers")
        return [float(v) for v in value]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return value


def _merge(node, defaults, source, section=None):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{source}:{_line(node)}: expected a mapping")
    out = copy.deepcopy(defaults)
    for key_node, val_node in node.value:
        key = key_node.value
        where = f"{source}:{_line(key_node)}"
        if key not in defaults:
            scope = f" in section {section!r}" if section else ""
            raise ConfigError(f"{where}: unknown key {key!r}{scope}")
        if isinstance(defaults[key], dict):
            out[key] = _merge(val_node, defaults[key], source, key)
            continue
        value = yaml.safe_load(yaml.serialize(val_node))
        value = _check(value, defaults[key], f"{where}: {key}")
        if key in _INT_KEYS:
            if float(value) != int(value):
                raise ConfigError(f"{where}: {key} must be an integer")
            value = int(value)
        elif isinstance(value, (int, float)):
            value = float(value)
        out[key] = value
    return out


def load_config(path=None, text=None):
    """Parse a YAML file (or string) into a plain dict merged with defaults."""
    source = "<config>" if path is None else str(path)
    if text is None:
        if path is None:
            return copy.deepcopy(DEFAULTS)
        text = Path(path).read_text()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{loc}: {getattr(exc, 'problem', None) or exc}") from None
    if node is None:
        return copy.deepcopy(DEFAULTS)
    cfg = _merge(node, DEFAULTS, source)
    try:
        beam_config(cfg)
    except ValueError as exc:
        raise ConfigError(f"{source}: beam: {exc}") from None
    return cfg


def beam_config(cfg, section=None):
    """BeamConfig of the simulation beam, or of an inversion section's mesh."""
    b = cfg["beam"]
    conf = BeamConfig(
        length=b["length"], ei=b["ei"], mu=b["mu"], elements=b["elements"],
        alpha=b["alpha"], beta=b["beta"],
        sensors=None if b["sensors"] is None else tuple(b["sensors"]),
    )
    if section is not None:
        conf = conf.replace(elements=cfg[section]["elements"], ei=cfg[section]["ei"])
    return conf


def dump_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True)
