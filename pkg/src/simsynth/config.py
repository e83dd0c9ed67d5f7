"""Project configuration: one YAML document driving the whole pipeline.

The ``train`` and ``finetune`` sections mirror the config dataclass field
names exactly, so any flag documented there can be set in the file verbatim.
Relative paths resolve against the config file's own directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .audio_io import DEFAULT_DURATION, DEFAULT_RATE
from .embedder import BuiltinEmbedder
from .errors import ConfigError
from .nn import DecoderArch
from .training import FinetuneConfig, TrainConfig

ENV_VAR = "SIMI_SFX_CONFIG"

_TOP_LEVEL_KEYS = {
    "manifest", "work_dir", "sample_rate", "duration",
    "embedder", "eval_embedder", "arch", "train", "finetune",
}


@dataclass
class ProjectConfig:
    manifest: Path
    work_dir: Path
    sample_rate: int = DEFAULT_RATE
    duration: float = DEFAULT_DURATION
    embedder: dict = field(default_factory=dict)
    eval_embedder: dict = field(default_factory=dict)
    arch: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)

    @property
    def n_samples(self) -> int:
        return round(self.sample_rate * self.duration)

    def make_embedder(self) -> BuiltinEmbedder:
        return self._embedder(self.embedder, "embedder")

    def make_eval_embedder(self) -> BuiltinEmbedder:
        """Separate scoring embedder: defaults to a different seed and width."""
        return self._embedder({"dim": 32, "seed": 0xE7A1, **self.eval_embedder},
                              "eval_embedder")

    def _embedder(self, kwargs: dict, name: str) -> BuiltinEmbedder:
        try:
            return BuiltinEmbedder(**{**kwargs, "sample_rate": self.sample_rate})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid {name} section: {e}") from e

    def make_arch(self, n_channels: int) -> DecoderArch:
        if "n_channels" in self.arch and self.arch["n_channels"] != n_channels:
            raise ConfigError(
                f"arch.n_channels={self.arch['n_channels']} but the manifest "
                f"defines {n_channels} classes")
        try:
            return DecoderArch(**{**self.arch, "n_channels": n_channels})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid arch section: {e}") from e


def _sub_config(cls, section: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown {name} field(s): {', '.join(sorted(unknown))}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {name} section: {e}") from e


def load_config(path: str | Path | None = None) -> ProjectConfig:
    """Parse the project YAML; fall back to $SIMI_SFX_CONFIG when no path given."""
    if path is None:
        path = os.environ.get(ENV_VAR)
        if not path:
            raise ConfigError(f"no config path given and {ENV_VAR} is not set")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML ({e})") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown key(s): {', '.join(sorted(unknown))}")
    if "manifest" not in doc:
        raise ConfigError(f"{path}: 'manifest' is required")

    base = path.resolve().parent
    manifest = base / str(doc["manifest"])
    work_dir = base / str(doc.get("work_dir", "artifacts"))
    for section in ("embedder", "eval_embedder", "arch", "train", "finetune"):
        if section in doc and not isinstance(doc[section], dict):
            raise ConfigError(f"{path}: '{section}' must be a mapping")
    return ProjectConfig(
        manifest=manifest,
        work_dir=work_dir,
        sample_rate=int(doc.get("sample_rate", DEFAULT_RATE)),
        duration=float(doc.get("duration", DEFAULT_DURATION)),
        embedder=dict(doc.get("embedder", {})),
        eval_embedder=dict(doc.get("eval_embedder", {})),
        arch=dict(doc.get("arch", {})),
        train=_sub_config(TrainConfig, dict(doc.get("train", {})), "train"),
        finetune=_sub_config(FinetuneConfig, dict(doc.get("finetune", {})), "finetune"),
    )
