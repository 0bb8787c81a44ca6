"""Hierarchical run configuration with defaults, file values, and flag
overrides (flags > file > defaults). Unknown keys are fatal.

The file format is a TOML subset: `[section]` headers and `key = value`
lines where values are integers, floats, booleans, quoted strings, or
flat arrays of those.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .detector.config import DetectorConfig
from .kitti.synthetic import SceneSpec
from .pipeline import TrainSettings


@dataclass(frozen=True)
class SynthSettings:
    width: int = 128
    height: int = 128
    images: int = 8
    min_objects: int = 1
    max_objects: int = 3
    min_size: int = 16
    max_size: int = 64
    noise: int = 12

    def scene_spec(self, seed: int) -> SceneSpec:
        return SceneSpec(
            width=self.width,
            height=self.height,
            min_objects=self.min_objects,
            max_objects=self.max_objects,
            min_size=self.min_size,
            max_size=self.max_size,
            noise=self.noise,
            seed=seed,
        )


@dataclass(frozen=True)
class EvalSettings:
    iou_default: float = 0.5
    iou_car: float = 0.7


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    synth: SynthSettings = field(default_factory=SynthSettings)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    train: TrainSettings = field(default_factory=lambda: TrainSettings())
    eval: EvalSettings = field(default_factory=EvalSettings)


_SECTIONS = ("synth", "detector", "train", "eval")


def _parse_scalar(text: str, where: str) -> Any:
    t = text.strip()
    if t.startswith('"') and t.endswith('"') and len(t) >= 2:
        return t[1:-1]
    if t == "true":
        return True
    if t == "false":
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        raise ValueError(f"{where}: cannot parse value {text!r}") from None


def parse_config_text(text: str) -> dict[str, dict[str, Any] | Any]:
    """Parse the TOML-subset text into {section: {key: value}} plus top-level
    keys under the '' section."""
    out: dict[str, Any] = {"": {}}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"config line {lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ValueError(f"{where}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if value.startswith("[") and value.endswith("]"):
            inner = value[1:-1].strip()
            parsed = (
                [_parse_scalar(v, where) for v in inner.split(",")] if inner else []
            )
        else:
            parsed = _parse_scalar(value, where)
        out.setdefault(section, {})[key] = parsed
    return out


def _coerce(value: Any, target_type: Any, where: str) -> Any:
    origin = getattr(target_type, "__origin__", None)
    if origin is tuple or target_type is tuple:
        if not isinstance(value, list):
            raise ValueError(f"{where}: expected an array")
        return tuple(value)
    if target_type is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if target_type is bool and not isinstance(value, bool):
        raise ValueError(f"{where}: expected true/false")
    if target_type is int and isinstance(value, bool):
        raise ValueError(f"{where}: expected an integer")
    if target_type in (int, float, str, bool) and not isinstance(value, target_type):
        raise ValueError(f"{where}: expected {target_type.__name__}, got {value!r}")
    return value


def _apply_section(obj, values: dict[str, Any], section: str):
    known = {f.name: f for f in fields(obj)}
    updates = {}
    for key, value in values.items():
        if key not in known:
            raise ValueError(
                f"unknown config key {section + '.' if section else ''}{key}"
            )
        target_type = type(getattr(obj, key))
        updates[key] = _coerce(value, target_type, f"{section}.{key}" if section else key)
    return replace(obj, **updates) if updates else obj


def build_run_config(
    file_text: str | None = None,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """Defaults, then file values, then explicit `section.key` overrides."""
    cfg = RunConfig()
    layers = []
    if file_text is not None:
        layers.append(parse_config_text(file_text))
    if overrides:
        layered: dict[str, dict[str, Any]] = {"": {}}
        for dotted, value in overrides.items():
            if "." in dotted:
                section, key = dotted.split(".", 1)
            else:
                section, key = "", dotted
            layered.setdefault(section, {})[key] = value
        layers.append(layered)

    for layer in layers:
        for section, values in layer.items():
            if not values:
                continue
            if section == "":
                top = dict(values)
                if "seed" in top:
                    cfg = replace(cfg, seed=_coerce(top.pop("seed"), int, "seed"))
                if top:
                    raise ValueError(f"unknown config key {sorted(top)[0]}")
            elif section == "synth":
                cfg = replace(cfg, synth=_apply_section(cfg.synth, values, section))
            elif section == "detector":
                cfg = replace(cfg, detector=_apply_section(cfg.detector, values, section))
            elif section == "train":
                cfg = replace(cfg, train=_apply_section(cfg.train, values, section))
            elif section == "eval":
                cfg = replace(cfg, eval=_apply_section(cfg.eval, values, section))
            else:
                raise ValueError(
                    f"unknown config section [{section}], expected one of {_SECTIONS}"
                )
    return cfg


def load_run_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    text = Path(path).read_text() if path else None
    return build_run_config(text, overrides)


def config_keys() -> list[str]:
    """Every addressable `section.key` (plus bare `seed`), for --help."""
    keys = ["seed"]
    template = RunConfig()
    for section in _SECTIONS:
        obj = getattr(template, section)
        keys.extend(f"{section}.{f.name}" for f in fields(obj))
    return keys
