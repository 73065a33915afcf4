"""Run configuration: INI files layered over built-in defaults.

Every key is optional; the defaults reproduce the reference setup. Unknown
sections or keys and malformed values are rejected so typos cannot silently
fall back to defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from . import evolution, sim, vision


class ConfigError(Exception):
    """Bad configuration file, section, key or value."""


@dataclass
class RunConfig:
    ea: evolution.EAParams
    room: sim.RoomConfig
    sim: sim.SimParams
    vision: vision.VisionParams
    output_dir: Path


def default_config() -> RunConfig:
    return RunConfig(ea=evolution.EAParams(), room=sim.RoomConfig(),
                     sim=sim.SimParams(), vision=vision.VisionParams(),
                     output_dir=Path("out"))


def load_config(path=None) -> RunConfig:
    cfg = default_config()
    if path is None:
        _validate(cfg)
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from err
    targets = {"ea": cfg.ea, "room": cfg.room, "sim": cfg.sim,
               "vision": cfg.vision}
    for section in parser.sections():
        if section == "output":
            for key, value in parser.items(section):
                if key != "dir":
                    raise ConfigError(f"unknown key '{key}' in [output]")
                cfg.output_dir = Path(value)
            continue
        if section not in targets:
            raise ConfigError(f"unknown section '[{section}]'")
        target = targets[section]
        known = {f.name for f in fields(target)}
        for key, value in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            try:
                setattr(target, key, _convert(value, getattr(target, key)))
            except ValueError as err:
                raise ConfigError(
                    f"bad value for '{key}' in [{section}]: {err}") from err
    _validate(cfg)
    return cfg


def _convert(text: str, default):
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(int(part) for part in text.split(","))
    return text


def _validate(cfg: RunConfig) -> None:
    try:
        cfg.ea.validate()
        cfg.room.validate()
        cfg.sim.validate()
        cfg.vision.validate()
    except ValueError as err:
        raise ConfigError(str(err)) from err
