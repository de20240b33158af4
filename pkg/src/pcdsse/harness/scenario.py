"""
Scenario files for the experiment runner.

A scenario is a flat JSON object; every field has a default so a file only
lists what it changes.  Relative paths are resolved against the directory of
the file, and ``bundled:<name>`` refers to the feeders and scenarios shipped
with the package.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..netmodel import bundled_feeder

_SYNTHETIC_KEYS = {"kind", "scale", "slow_amp", "fast_amp", "period", "noise_tc", "pf", "seed"}


def _default_profile() -> dict:
    return {"kind": "synthetic"}


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    feeder: str = "bundled:feeder12"
    profile: dict = field(default_factory=_default_profile)
    pmu_nodes: tuple = (3, 6, 8)
    metered_wye: tuple | None = None
    metered_delta: tuple | None = None
    # estimator
    P: int = 5
    C: int = 5
    alpha: float | str = "auto"
    beta: float | str = "auto"
    gamma: float = 0.9
    h: float = 6.0
    # objective
    wv: float = 1e3
    delta: float = 8e-4
    reg_a: float = 1e-3
    # sensing
    sigma_v: float = 1e-5
    window: float = 600.0
    sigma_u: float = 0.0
    outlier_frac: float = 0.0
    outlier_scale: float = 10.0
    # run
    steps: int = 1200
    seed: int = 0
    oracle: bool = False
    out: str | None = None

    def __post_init__(self):
        for name in ("pmu_nodes", "metered_wye", "metered_delta"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(int(n) for n in val))
        object.__setattr__(self, "profile", dict(self.profile))
        validate(self)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for name in ("pmu_nodes", "metered_wye", "metered_delta"):
            if d[name] is not None:
                d[name] = list(d[name])
        return d

    def replace(self, **changes) -> "Scenario":
        return apply_overrides(self, changes)


FIELDS = {f.name for f in dataclasses.fields(Scenario)}


def validate(s: Scenario):
    if int(s.steps) != s.steps or s.steps < 1:
        raise ValueError("steps must be a positive integer")
    if not s.h > 0:
        raise ValueError("h must be positive")
    for name in ("alpha", "beta"):
        val = getattr(s, name)
        if isinstance(val, str):
            if val != "auto":
                raise ValueError(f"{name} must be a positive number or 'auto'")
        elif not val > 0:
            raise ValueError(f"{name} must be positive")
    if not (s.wv > 0 and s.delta > 0 and s.reg_a >= 0):
        raise ValueError("wv and delta must be positive, reg_a non-negative")
    if s.sigma_v < 0 or s.sigma_u < 0:
        raise ValueError("noise levels must be non-negative")
    if not 0 <= s.outlier_frac <= 1:
        raise ValueError("outlier_frac must lie in [0, 1]")
    feeder_path(s)
    kind = s.profile.get("kind", "synthetic")
    if kind == "synthetic":
        unknown = set(s.profile) - _SYNTHETIC_KEYS
        if unknown:
            raise ValueError(f"unknown synthetic profile keys: {sorted(unknown)}")
    elif kind == "csv":
        path = Path(s.profile.get("path", ""))
        if not path.is_file():
            raise ValueError(f"profile CSV {path} does not exist")
    else:
        raise ValueError(f"unknown profile kind {kind!r}")


def feeder_path(s: Scenario) -> Path:
    if s.feeder.startswith("bundled:"):
        return bundled_feeder(s.feeder.split(":", 1)[1])
    path = Path(s.feeder)
    if not path.is_file():
        raise ValueError(f"feeder file {path} does not exist")
    return path


def _coerce(name: str, value):
    if name in ("P", "C", "steps", "seed"):
        if int(value) != value:
            raise ValueError(f"{name} must be an integer")
        return int(value)
    if name in ("alpha", "beta") and value == "auto":
        return value
    if name in ("alpha", "beta", "gamma", "h", "wv", "delta", "reg_a", "sigma_v",
                "window", "sigma_u", "outlier_frac", "outlier_scale"):
        return float(value)
    if name == "oracle":
        return bool(value)
    return value


def apply_overrides(s: Scenario, overrides: dict) -> Scenario:
    unknown = set(overrides) - FIELDS
    if unknown:
        raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
    return dataclasses.replace(s, **{k: _coerce(k, v) for k, v in overrides.items()})


def from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    data = dict(data)
    unknown = set(data) - FIELDS
    if unknown:
        raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
    if base_dir is not None:
        if "feeder" in data and not str(data["feeder"]).startswith("bundled:"):
            data["feeder"] = str((base_dir / data["feeder"]).resolve())
        prof = dict(data.get("profile", {}))
        if prof.get("kind") == "csv" and "path" in prof:
            prof["path"] = str((base_dir / prof["path"]).resolve())
            data["profile"] = prof
        if data.get("out") is not None:
            data["out"] = str((base_dir / data["out"]).resolve())
    return apply_overrides(Scenario(), data)


def bundled_scenario(name: str) -> Path:
    path = Path(str(resources.files("pcdsse") / "scenarios" / f"{name}.json"))
    if not path.is_file():
        raise ValueError(f"no bundled scenario named {name!r}")
    return path


def resolve_ref(ref: str | Path) -> Path:
    ref = str(ref)
    if ref.startswith("bundled:"):
        return bundled_scenario(ref.split(":", 1)[1])
    return Path(ref)


def load_scenario(ref: str | Path) -> Scenario:
    path = resolve_ref(ref)
    with open(path) as fh:
        data = json.load(fh)
    return from_dict(data, path.parent)


def load_sweep(ref: str | Path) -> list[dict]:
    """Variant overrides: a JSON list, or an object with a ``variants`` list."""
    path = resolve_ref(ref)
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("variants")
    if not isinstance(data, list) or not all(isinstance(v, dict) for v in data):
        raise ValueError("a sweep file holds a list of override objects")
    return data


def scenario_hash(s: Scenario) -> str:
    """SHA-256 of the canonical JSON of everything that affects the results."""
    d = s.to_dict()
    d.pop("out")
    d.pop("name")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
