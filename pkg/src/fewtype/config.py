"""Run configuration: hyperparameters, templates, data paths, provider.

Configs live in a JSON file whose keys mirror the structures below;
every CLI flag maps onto a dotted config key and overrides the file.
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .backend import HttpProvider, LexicalOracle, MaskedLMProvider, SyntheticOracle
from .errors import ConfigError
from .hierarchy import load_extra_names
from .prompts import TemplateSpec


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs; defaults follow the reference configuration."""

    alpha: float = 0.1  # initialization bias toward label-name tokens
    epsilon: float = 0.1  # label smoothing for generated instances
    reg_weight: float = 1.0  # weight of the two hierarchy regularizers
    aug_weight: float = 1.0  # weight of the augmentation loss
    instances: int = 5  # generated instances kept per source (M)
    epochs: int = 30
    shots: int = 5
    lr: float = 1e-2
    beam_width: int = 10
    batch_size: int = 8
    m_scope: str = "mention"  # "mention" or "type"
    regen_every: int = 1  # epochs between pool rebuilds once augmentation is on

    def __post_init__(self) -> None:
        if not 0 <= self.alpha < 1:
            raise ConfigError(f"alpha must be in [0, 1), got {self.alpha}")
        if not 0 <= self.epsilon < 1:
            raise ConfigError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.reg_weight < 0 or self.aug_weight < 0:
            raise ConfigError("regularizer and augmentation weights must be >= 0")
        for name in ("instances", "epochs", "shots", "beam_width", "batch_size", "regen_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.m_scope not in ("mention", "type"):
            raise ConfigError(f"m_scope must be 'mention' or 'type', got {self.m_scope!r}")


@dataclass(frozen=True)
class ProviderSpec:
    kind: str  # "table", "lexical", or "http"
    path: str | None = None
    endpoint: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("table", "lexical", "http"):
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ConfigError("http provider needs an 'endpoint'")
        if self.kind in ("table", "lexical") and not self.path:
            raise ConfigError(f"{self.kind} provider needs a 'path'")


@dataclass(frozen=True)
class DataSpec:
    corpus: str | None = None
    train: str | None = None
    dev: str | None = None
    extra_names: str | None = None

    def __post_init__(self) -> None:
        if self.corpus is None and self.train is None:
            raise ConfigError("data needs either 'corpus' (to be split) or explicit 'train'")


@dataclass(frozen=True)
class RunConfig:
    provider: ProviderSpec
    data: DataSpec
    hyper: Hyperparams = field(default_factory=Hyperparams)
    templates: TemplateSpec = field(default_factory=TemplateSpec)
    seed: int = 0
    out: str | None = None

    def echo(self) -> dict:
        """The effective config as echoed into run logs.

        The output location is omitted so identically configured runs
        writing to different directories stay byte-identical.
        """
        return {
            "seed": self.seed,
            "provider": {k: v for k, v in vars(self.provider).items() if v is not None},
            "data": {k: v for k, v in vars(self.data).items() if v is not None},
            "templates": {
                "typing": self.templates.typing_pattern,
                "generation": self.templates.generation_pattern,
            },
            "hyper": {f.name: getattr(self.hyper, f.name) for f in fields(Hyperparams)},
        }


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    return str(path)


def _apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {dotted!r}: {key!r} is not a section")
        node[keys[-1]] = value
    return raw


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    """Read a JSON config file and apply dotted CLI overrides on top."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    raw = _apply_overrides(raw, overrides or [])
    base = path.parent

    try:
        prov_raw = dict(raw.get("provider", {}))
        prov = ProviderSpec(
            kind=prov_raw.get("kind", "table"),
            path=_resolve(base, prov_raw.get("path")),
            endpoint=prov_raw.get("endpoint"),
        )
        data_raw = dict(raw.get("data", {}))
        data = DataSpec(
            corpus=_resolve(base, data_raw.get("corpus")),
            train=_resolve(base, data_raw.get("train")),
            dev=_resolve(base, data_raw.get("dev")),
            extra_names=_resolve(base, data_raw.get("extra_names")),
        )
        tmpl_raw = dict(raw.get("templates", {}))
        templates = TemplateSpec(
            typing_pattern=tmpl_raw.get("typing", TemplateSpec.typing_pattern),
            generation_pattern=tmpl_raw.get("generation", TemplateSpec.generation_pattern),
        )
        hyper = Hyperparams(**raw.get("hyper", {}))
    except TypeError as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc

    cfg = RunConfig(
        provider=prov,
        data=data,
        hyper=hyper,
        templates=templates,
        seed=int(raw.get("seed", 0)),
        out=raw.get("out"),
    )
    _check_paths(cfg)
    return cfg


def _check_paths(cfg: RunConfig) -> None:
    for name, value in (
        ("provider.path", cfg.provider.path),
        ("data.corpus", cfg.data.corpus),
        ("data.train", cfg.data.train),
        ("data.dev", cfg.data.dev),
        ("data.extra_names", cfg.data.extra_names),
    ):
        if value is not None and not Path(value).exists():
            raise ConfigError(f"{name} points at a missing file: {value}")


def build_provider(spec: ProviderSpec) -> MaskedLMProvider:
    if spec.kind == "table":
        return SyntheticOracle.from_file(spec.path)
    if spec.kind == "lexical":
        return LexicalOracle.from_file(spec.path)
    return HttpProvider(spec.endpoint)


def load_config_extra_names(cfg: RunConfig) -> dict[str, list[str]] | None:
    if cfg.data.extra_names is None:
        return None
    return load_extra_names(cfg.data.extra_names)
