"""Run configuration: a TOML document layered over the shipped defaults."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import tomli

SECTIONS = ("grid", "ground_state", "linearized", "modulation", "dynamics", "campaign")


class ConfigError(ValueError):
    """Malformed or unknown configuration entries."""


def _defaults() -> dict:
    text = resources.files("newton_soliton").joinpath("default_config.toml").read_text()
    return tomli.loads(text)


def _merge(base: dict, override: dict, path: str = ""):
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            # potential parameters depend on the kind and are checked when built
            if path != "dynamics.potential.":
                raise ConfigError(f"unknown key {where!r}")
            base[key] = value
            continue
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a table")
            if where == "dynamics.potential":
                # a new kind replaces the whole table
                if value.get("kind", base[key]["kind"]) != base[key]["kind"]:
                    base[key] = {}
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then ``path`` (if given), then ``overrides``."""
    cfg = _defaults()
    if path is not None:
        try:
            user = tomli.loads(Path(path).read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if "campaign" not in user or "seed" not in user["campaign"]:
            raise ConfigError(f"{path}: [campaign] seed is mandatory")
        _merge(cfg, user)
    if overrides:
        _merge(cfg, overrides)
    _validate(cfg)
    return cfg


def _validate(cfg):
    g = cfg["grid"]
    if g["n"] % 2 or g["n"] < 8:
        raise ConfigError("grid.n must be even and >= 8")
    if g["box_length"] <= 0:
        raise ConfigError("grid.box_length must be positive")
    if not isinstance(cfg["campaign"]["seed"], int):
        raise ConfigError("campaign.seed must be an integer")
    eps = cfg["dynamics"]["eps"]
    if not eps or any(e <= 0 for e in eps):
        raise ConfigError("dynamics.eps must be a non-empty list of positive numbers")
    m = cfg["modulation"]
    if not 0 < m["d_min"] < m["d_max"]:
        raise ConfigError("modulation.d_min/d_max out of order")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def with_overrides(cfg: dict, **sections) -> dict:
    out = copy.deepcopy(cfg)
    _merge(out, sections)
    _validate(out)
    return out
