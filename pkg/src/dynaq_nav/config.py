"""INI-style run configuration.

Example::

    [train]
    episodes = 1000
    seed = 7
    scenario = cyl3

    [scenario]
    n_cylinders = 4
    static_separation = 0.6

Every :class:`~dynaq_nav.trainer.TrainConfig` field may appear under
``[train]``; every :class:`~dynaq_nav.world.Scenario` field except ``name``
under ``[scenario]``, overriding the named scenario's defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Any

from .trainer import TrainConfig
from .world import Scenario, get_scenario

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(value: str, typ: Any, key: str):
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    if typ == "bool":
        v = value.strip().lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    if typ == "int":
        return int(value.replace("_", ""))
    if typ == "float":
        return float(value)
    return value.strip()


def _section(parser, name: str, cls, skip=()) -> dict:
    if not parser.has_section(name):
        return {}
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in parser.items(name):
        if key in skip or key not in fields:
            raise ValueError(f"unknown key [{name}] {key}")
        out[key] = _coerce(raw, fields[key], key)
    return out


def load_config(path) -> tuple[dict, dict]:
    """Return raw ``(train_overrides, scenario_overrides)`` from a config file."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep field-name case (e.g. ``P``)
    text = Path(path).read_text()
    parser.read_string(text)
    extra = set(parser.sections()) - {"train", "scenario"}
    if extra:
        raise ValueError(f"unknown config sections: {sorted(extra)}")
    return _section(parser, "train", TrainConfig), _section(parser, "scenario", Scenario, skip=("name",))


def build(train_overrides: dict, scenario_overrides: dict) -> tuple[TrainConfig, Scenario]:
    cfg = TrainConfig(**train_overrides)
    scenario = dataclasses.replace(get_scenario(cfg.scenario), **scenario_overrides)
    return cfg, scenario
