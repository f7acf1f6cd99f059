"""Run configuration: flat key=value files with [section] headers.

Every key has a typed default; unknown sections or keys are rejected.  The
environment variable ``MESHNET_SEED`` overrides ``[run] seed``.  The config
hash embedded in reports and checkpoints is taken over the fully resolved
key set, so two configs that differ only in formatting hash identically.
"""

from __future__ import annotations

import configparser
import hashlib
import os

from .errors import ConfigError
from .model import ModelSpec

__all__ = ["RunConfig", "load_config", "parse_config", "default_config",
           "config_hash", "model_spec_from_config"]


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text):
    items = text.strip().strip("[]").split(",")
    return tuple(float(x) for x in items if x.strip())


def _str_list(text):
    items = text.strip().strip("[]").split(",")
    return tuple(x.strip() for x in items if x.strip())


def _enum(*allowed):
    def parse(text):
        t = text.strip()
        if t not in allowed:
            raise ValueError(f"expected one of {allowed}, got {t!r}")
        return t
    return parse


_SCHEMA = {
    "run": {
        "seed": (int, 0),
        "task": (_enum("segmentation", "classification"), "segmentation"),
        "checkpoint": (str, ""),
    },
    "model": {
        "kind": (_enum("gem", "eman"), "eman"),
        "bias": (_enum("angular", "additive", "none"), "angular"),
        "features": (_enum("xyz", "get", "reltan"), "reltan"),
        "reltan_powers": (_float_list, (0.7,)),
        "hidden_type": (str, "16x(rho0+rho1+rho2)"),
        "final_type": (str, "16xrho0"),
        "attention_type": (str, ""),
        "dense_hidden": (int, 256),
        "dropout": (float, 0.5),
        "heads": (int, 1),
        "self_contribution": (_bool, False),
        "target_dim": (int, 10),
    },
    "mesh": {
        "generator": (_enum("icosphere", "grid_patch"), "icosphere"),
        "subdivisions": (int, 1),
        "rows": (int, 8),
        "cols": (int, 8),
        "noise": (float, 0.0),
        "dump_frames": (_bool, False),
    },
    "data": {
        "source": (_enum("synthetic", "files"), "synthetic"),
        "train_meshes": (int, 10),
        "test_meshes": (int, 5),
        "subdivisions": (int, 1),
        "bump_amplitude": (float, 0.3),
        "noise": (float, 0.05),
        "n_meshes": (int, 20),
        "mesh_dir": (str, ""),
    },
    "training": {
        "learning_rate": (float, 0.01),
        "epochs": (int, 100),
        "batch_size": (int, 1),
    },
    "transforms": {
        "families": (_str_list, ("gauge", "rot_tr_scale", "perm")),
        "samples_per_mesh": (int, 1),
        "translation_range": (float, 10.0),
        "scale_min": (float, 0.1),
        "scale_max": (float, 10.0),
    },
    "timing": {
        "repetitions": (int, 20),
        "warmups": (int, 3),
        "rows": (int, 20),
        "cols": (int, 20),
    },
}

_KNOWN_FAMILIES = ("gauge", "rot_tr_scale", "rot", "translate", "scale", "perm")


class RunConfig:
    """Resolved configuration; section dicts are attributes."""

    def __init__(self, sections):
        self.sections = sections
        for name, values in sections.items():
            setattr(self, name, values)

    def canonical_text(self) -> str:
        lines = []
        for section in sorted(self.sections):
            for key in sorted(self.sections[section]):
                value = self.sections[section][key]
                if isinstance(value, tuple):
                    value = ", ".join(str(v) for v in value)
                lines.append(f"{section}.{key} = {value}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    resolved = {s: {k: d for k, (_p, d) in keys.items()} for s, keys in _SCHEMA.items()}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key [{section}] {key}")
            parse_fn, _default = _SCHEMA[section][key]
            try:
                resolved[section][key] = parse_fn(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc
    for family in resolved["transforms"]["families"]:
        if family not in _KNOWN_FAMILIES:
            raise ConfigError(f"unknown transform family {family!r}")
    env_seed = os.environ.get("MESHNET_SEED")
    if env_seed is not None:
        try:
            resolved["run"]["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"MESHNET_SEED must be an integer: {env_seed!r}") from exc
    return RunConfig(resolved)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def default_config() -> RunConfig:
    return parse_config("")


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(cfg.canonical_text().encode()).hexdigest()[:16]


def model_spec_from_config(cfg: RunConfig, target_dim=None, task=None) -> ModelSpec:
    m = cfg.model
    return ModelSpec(
        target_dim=target_dim if target_dim is not None else m["target_dim"],
        kind=m["kind"],
        task=task if task is not None else cfg.run["task"],
        features=m["features"],
        reltan_powers=tuple(m["reltan_powers"]),
        hidden_type=m["hidden_type"],
        final_type=m["final_type"],
        attention_type=m["attention_type"] or None,
        dense_hidden=m["dense_hidden"],
        dropout=m["dropout"],
        bias=m["bias"],
        heads=m["heads"],
        self_contribution=m["self_contribution"],
    )
