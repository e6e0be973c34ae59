"""Experiment configuration: an INI file with [model], [train], [data] and [output] sections."""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .data import DEFAULT_CENTERS
from .model import InitScheme
from .train import ClipKind, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    layers: int = 13
    alpha: float = 0.1
    init: str = InitScheme.NORMAL.value
    sigma_init: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError("model.layers must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("model.alpha must lie in (0, 1)")
        if self.sigma_init < 0:
            raise ConfigError("model.sigma_init must be non-negative")
        try:
            InitScheme(self.init)
        except ValueError:
            raise ConfigError(f"model.init must be one of {[s.value for s in InitScheme]}") from None


_DATA_KEYS = {
    "mixture": {"centers", "sigma", "n_total", "train_fraction", "seed"},
    "blobs": {"n_train", "n_test", "seed", "noise_seed", "clamp_eps", "scale_denominator"},
    "idx": {"train_images", "train_labels", "test_images", "test_labels", "class_id",
            "limit_train", "limit_test", "noise_seed", "clamp_eps", "scale_denominator"},
}


@dataclass
class DataSection:
    kind: str = "mixture"
    centers: tuple = DEFAULT_CENTERS
    sigma: float = 0.2
    n_total: int = 10_000
    train_fraction: float = 0.9
    seed: int = 0
    n_train: int = 2000
    n_test: int = 500
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    class_id: int = -1
    limit_train: int = 0
    limit_test: int = 0
    noise_seed: int = 0
    clamp_eps: float = 1e-6
    scale_denominator: float = 256.0

    def __post_init__(self):
        if self.kind not in _DATA_KEYS:
            raise ConfigError(f"data.kind must be one of {sorted(_DATA_KEYS)}")
        if self.kind == "idx" and not (self.train_images and self.train_labels):
            raise ConfigError("data.kind = idx needs train_images and train_labels")
        if self.class_id > 9:
            raise ConfigError("data.class_id must lie in [0, 9] (or -1 for all classes)")
        if self.sigma <= 0 or not 0 < self.train_fraction < 1:
            raise ConfigError("data.sigma must be positive and train_fraction in (0, 1)")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("data.n_train and data.n_test must be positive")
        if not 0 < self.clamp_eps < 0.5:
            raise ConfigError("data.clamp_eps must lie in (0, 0.5)")

    @property
    def is_image(self) -> bool:
        return self.kind in ("blobs", "idx")


@dataclass
class OutputSection:
    run_dir: str = "runs/default"
    emit_samples: int = 0


@dataclass
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataSection = field(default_factory=DataSection)
    output: OutputSection = field(default_factory=OutputSection)


def _parse_centers(text: str) -> tuple:
    try:
        centers = tuple(tuple(float(v) for v in part.split(",")) for part in text.split(";") if part.strip())
    except ValueError:
        raise ConfigError(f"cannot parse centers {text!r}; expected 'x,y; x,y; ...'") from None
    if not centers or any(len(c) != len(centers[0]) for c in centers):
        raise ConfigError("centers must be a non-empty list of equal-length points")
    return centers


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return "; ".join(",".join(repr(float(v)) for v in c) for c in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _build(cls, items: dict, section: str, allowed: set | None = None):
    defaults = cls()
    kwargs = {}
    names = {f.name for f in dataclasses.fields(cls)}
    for key, raw in items.items():
        if key not in names or (allowed is not None and key not in allowed):
            raise ConfigError(f"unknown key {section}.{key}")
        default = getattr(defaults, key)
        try:
            if key == "centers":
                kwargs[key] = _parse_centers(raw)
            elif isinstance(default, bool):
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int) and not hasattr(default, "value"):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw.strip()
        except ValueError:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from None
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse and fully validate a config; ``overrides`` maps ``section.key`` to a string value."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as f:
            parser.read_file(f)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(value))
    unknown = set(parser.sections()) - {"model", "train", "data", "output"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")

    def items(name):
        return dict(parser.items(name)) if parser.has_section(name) else {}

    data_items = items("data")
    kind = data_items.get("kind", "mixture").strip()
    if kind not in _DATA_KEYS:
        raise ConfigError(f"data.kind must be one of {sorted(_DATA_KEYS)}")
    return ExperimentConfig(
        model=_build(ModelSection, items("model"), "model"),
        train=_build(TrainConfig, items("train"), "train"),
        data=_build(DataSection, data_items, "data", _DATA_KEYS[kind] | {"kind"}),
        output=_build(OutputSection, items("output"), "output"),
    )


def dump_config(cfg: ExperimentConfig) -> str:
    """Resolved config as INI text (data section restricted to the keys of its kind)."""
    parser = configparser.ConfigParser(interpolation=None)
    for name in ("model", "train", "data", "output"):
        section = getattr(cfg, name)
        parser.add_section(name)
        for f in dataclasses.fields(section):
            if name == "data" and f.name != "kind" and f.name not in _DATA_KEYS[cfg.data.kind]:
                continue
            parser.set(name, f.name, _format_value(getattr(section, f.name)))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


__all__ = ["ConfigError", "ExperimentConfig", "load_config", "dump_config", "save_config", "ClipKind"]
