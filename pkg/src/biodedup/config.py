"""TOML configuration loading and canonical config hashing.

Config files are optional overlays on the built-in defaults: any field
left out keeps its default, so a file only states what it changes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import fusion
from .service import ServiceConfig
from .synth import SynthConfig, default_config
from .template import SEGMENT_NAMES


def load_toml(path) -> dict:
    with open(path, "rb") as f:
        return tomllib.load(f)


def _merge_dataclass(instance, overrides: dict):
    """Replace matching fields of a (frozen) dataclass from a dict, recursing
    into nested dataclasses."""
    updates = {}
    names = {f.name: f for f in dataclasses.fields(instance)}
    for key, value in overrides.items():
        if key not in names:
            raise ValueError(
                f"unknown config key {key!r} for {type(instance).__name__}"
            )
        current = getattr(instance, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            updates[key] = _merge_dataclass(current, value)
        else:
            updates[key] = value
    return dataclasses.replace(instance, **updates)


def synth_config_from_dict(overrides: dict) -> SynthConfig:
    return _merge_dataclass(default_config(), overrides)


def load_synth_config(path=None) -> SynthConfig:
    if path is None:
        return default_config()
    data = load_toml(path)
    return synth_config_from_dict(data.get("synth", {}))


def service_config_from_dict(overrides: dict) -> ServiceConfig:
    cfg = ServiceConfig()
    names = {f.name for f in dataclasses.fields(cfg)}
    unknown = set(overrides) - names
    if unknown:
        raise ValueError(f"unknown service config keys: {sorted(unknown)}")
    return dataclasses.replace(cfg, **overrides)


def load_service_config(path=None) -> ServiceConfig:
    if path is None:
        return ServiceConfig()
    data = load_toml(path)
    return service_config_from_dict(data.get("service", {}))


def load_pipeline_stages(path=None, seed: int = 0):
    """Pipeline stages with stub operating points from a [pipeline] section.

    TOML shape: [pipeline] low_quality_flag = 0.3
                [pipeline.pad.finger] tdr = 0.995, fdr = 0.005
    """
    from . import pipeline

    if path is None:
        return pipeline.default_stages(seed)
    data = load_toml(path).get("pipeline", {})
    points = {}
    for modality, rates in data.get("pad", {}).items():
        if modality not in ("finger", "face", "iris"):
            raise ValueError(f"unknown PAD modality {modality!r}")
        points[modality] = pipeline.StubOperatingPoint(
            tdr=float(rates["tdr"]), fdr=float(rates["fdr"])
        )
    return pipeline.default_stages(
        seed,
        pad_points=points or None,
        low_quality_flag=float(
            data.get("low_quality_flag", pipeline.DEFAULT_LOW_QUALITY_FLAG)
        ),
    )


def load_weight_profiles(path=None) -> dict:
    """Named weight profiles; the built-in adult profile is always present."""
    profiles = {"adult": fusion.default_weights()}
    if path is None:
        return profiles
    data = load_toml(path)
    for name, entries in data.get("weights", {}).items():
        if not isinstance(entries, dict):
            raise ValueError(f"weight profile {name!r} must be a table of 13 floats")
        missing = set(SEGMENT_NAMES) - set(entries)
        if missing:
            raise ValueError(f"profile {name!r} missing segments: {sorted(missing)}")
        profiles[name] = fusion.weights_from_profile(entries)
    return profiles


def _canonical(obj: Any):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _canonical(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj


def config_hash(obj: Any) -> str:
    """Stable hash of any config-ish object (dataclasses, dicts, arrays)."""
    blob = json.dumps(_canonical(obj), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
