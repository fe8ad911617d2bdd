"""Run configuration as flat ``key = value`` text.

Keys are dotted paths into the nested configuration dataclasses, e.g.
``frontier.beta = 3.0`` or ``gp.free.kernel.length_scale = 0.25``.  Unknown
keys are rejected and every value is validated by the dataclass it lands
in, so a config either parses completely or not at all.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from .sim import SimConfig

TOP_LEVEL = ("environment", "policy", "seed", "resolution", "spawn")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    environment: str = "structured"
    seed: int = 0
    resolution: Optional[float] = None  # None: the environment's own resolution
    spawn: Optional[Tuple[float, float, float]] = None
    sim: SimConfig = field(default_factory=SimConfig)

    @property
    def policy(self) -> str:
        return self.sim.utility.policy

    def with_policy(self, policy: str) -> "RunConfig":
        return replace(self, sim=replace(self.sim, utility=replace(self.sim.utility, policy=policy)))


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)  # shortest exact round-trip
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    return str(v)


def _parse(text: str, like, key: str):
    """Convert ``text`` to the type of the default value ``like``."""
    text = text.strip()
    try:
        if isinstance(like, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            parts = [p for p in text.split(",")]
            if len(parts) != len(like):
                raise ValueError(f"expected {len(like)} comma-separated values")
            return tuple(_parse(p, l, key) for p, l in zip(parts, like))
        return text
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {text!r} ({e})") from None


def _flatten(obj, prefix: str = "") -> Dict[str, object]:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        key = prefix + f.name
        if is_dataclass(v):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def to_dict(cfg: RunConfig) -> Dict[str, object]:
    """Flat key -> value view; the policy appears once, at the top level."""
    flat = {"environment": cfg.environment, "policy": cfg.policy, "seed": cfg.seed,
            "resolution": cfg.resolution, "spawn": cfg.spawn}
    for k, v in _flatten(cfg.sim).items():
        if k != "utility.policy":
            flat[k] = v
    return flat


def dumps(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format(v)}\n" for k, v in to_dict(cfg).items())


def _rebuild(obj, updates: Dict[str, str], prefix: str):
    kwargs = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        key = prefix + f.name
        if is_dataclass(v):
            sub = {k: t for k, t in updates.items() if k.startswith(key + ".")}
            if sub:
                kwargs[f.name] = _rebuild(v, sub, key + ".")
        elif key in updates:
            kwargs[f.name] = _parse(updates[key], v, key)
    if not kwargs:
        return obj
    try:
        return replace(obj, **kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {prefix.rstrip('.') or 'config'}: {e}") from None


def from_dict(values: Dict[str, str], base: Optional[RunConfig] = None) -> RunConfig:
    """Apply string values to ``base`` (defaults if omitted)."""
    base = base or RunConfig()
    known = set(to_dict(base))
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    top = {}
    for k in ("environment",):
        if k in values:
            top[k] = values[k].strip()
    if "seed" in values:
        top["seed"] = _parse(values["seed"], 0, "seed")
    if "resolution" in values:
        text = values["resolution"].strip()
        top["resolution"] = None if text.lower() == "none" else _parse(text, 1.0, "resolution")
    if "spawn" in values:
        text = values["spawn"].strip()
        top["spawn"] = None if text.lower() == "none" else _parse(text, (0.0, 0.0, 0.0), "spawn")
    nested = {k: v for k, v in values.items() if k not in TOP_LEVEL}
    if "policy" in values:
        nested["utility.policy"] = values["policy"]
    sim = base.sim
    if nested:
        sim = _rebuild(sim, nested, "")
    return replace(base, sim=sim, **top)


def loads(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if k in values:
            raise ConfigError(f"line {n}: duplicate key {k!r}")
        values[k] = v
    return from_dict(values, base)


def load(path, base: Optional[RunConfig] = None) -> RunConfig:
    return loads(Path(path).read_text(), base)


def save(path, cfg: RunConfig) -> None:
    Path(path).write_text(dumps(cfg))

