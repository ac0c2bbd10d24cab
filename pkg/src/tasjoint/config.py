"""TOML experiment configuration: one section per component, unknown keys rejected."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli
import tomli_w

from .backend.model import AsrConfig
from .dataio.corpus import CorpusConfig, SpeakerProfile
from .frontend import SeparatorConfig
from .trainer.plan import AsrTraining, FinetunePlan, SeparatorTraining


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    work_dir: str = ""
    data_dir: str = ""
    separator_checkpoint: str = ""
    asr_checkpoint: str = ""


SECTIONS = {
    "corpus": CorpusConfig,
    "separator": SeparatorConfig,
    "asr": AsrConfig,
    "train_separator": SeparatorTraining,
    "train_asr": AsrTraining,
    "plan": FinetunePlan,
    "paths": PathsConfig,
}
SEEDED = ("corpus", "train_separator", "train_asr", "plan")


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def _plain(obj):
    """Dataclass -> TOML-safe dict (tuples as lists, ``None`` dropped)."""
    if dataclasses.is_dataclass(obj):
        return {k: _plain(v) for k, v in dataclasses.asdict(obj).items() if v is not None}
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass
class ExperimentConfig:
    seed: int = 0
    precision: str = "float64"
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    separator: SeparatorConfig = field(default_factory=SeparatorConfig)
    asr: AsrConfig = field(default_factory=AsrConfig)
    train_separator: SeparatorTraining = field(default_factory=SeparatorTraining)
    train_asr: AsrTraining = field(default_factory=AsrTraining)
    plan: FinetunePlan = field(default_factory=FinetunePlan)
    paths: PathsConfig = field(default_factory=PathsConfig)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = sorted(set(data) - set(SECTIONS) - {"seed", "precision"})
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        seed = int(data.pop("seed", 0))
        precision = data.pop("precision", "float64")
        if precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be 'float32' or 'float64', got {precision!r}")
        parts = {}
        for name, kind in SECTIONS.items():
            section = dict(data.get(name, {}))
            if name in SEEDED:
                section.setdefault("seed", seed)
            if name == "corpus" and "speakers" in section:
                section["speakers"] = [SpeakerProfile(**s) for s in section["speakers"]]
            parts[name] = _build(kind, section, name)
        if "vocab" not in data.get("asr", {}):
            parts["asr"].vocab = [f"w{i}" for i in range(parts["corpus"].vocab_size)]
        cfg = cls(seed=seed, precision=precision, **parts)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self):
        try:
            self.corpus.validate()
            self.separator.validate()
            self.asr.validate()
            self.train_separator.validate()
            self.train_asr.validate()
            self.plan.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self):
        return _plain(self)

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    def write(self, path):
        Path(path).write_text(self.dumps())
        return path
