"""In-memory dataset handed to the training loops.

A prepared clip bundles everything the decoder needs: the raw samples, the
conditioning feature tracks, and the per-class similarity vector.  The sparse
peak target is computed on first access only — runs that never weigh the
transient term never pay for (or even touch) peak extraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pathlib import Path

from .audio_io import DEFAULT_DURATION, DEFAULT_RATE, AudioClip, DatasetManifest, load_clip
from .embedder import Embedding
from .errors import ManifestError, StatsError
from .features import FeatureTrack, SparsePeakWaveform, extract_features, extract_peak_sparse
from .similarity import (
    ClassStats,
    compute_similarity_matrix,
    fit_class_stats,
    mahalanobis,
    normalize_scores,
    normalize_with_stats,
)


@dataclass
class PreparedClip:
    clip_id: str
    label: str
    samples: np.ndarray
    features: FeatureTrack
    similarity: np.ndarray
    sample_rate: int = DEFAULT_RATE
    _xs: SparsePeakWaveform | None = field(default=None, repr=False)

    @property
    def xs(self) -> SparsePeakWaveform:
        if self._xs is None:
            clip = AudioClip(samples=self.samples, sample_rate=self.sample_rate, id=self.clip_id)
            self._xs = extract_peak_sparse(clip)
        return self._xs


@dataclass
class PreparedDataset:
    train: list[PreparedClip]
    test: list[PreparedClip]
    n_channels: int

    def __post_init__(self) -> None:
        for clip in (*self.train, *self.test):
            if clip.similarity.shape != (self.n_channels,):
                raise ManifestError(
                    f"clip {clip.clip_id!r}: similarity has shape {clip.similarity.shape}, "
                    f"expected ({self.n_channels},)")

    def require_train(self) -> list[PreparedClip]:
        if not self.train:
            raise ManifestError("empty train split")
        return self.train


def fit_dataset_stats(manifest: DatasetManifest, embeddings: dict[str, Embedding],
                      epsilon_scale: float = 1e-6) -> list[ClassStats]:
    """Per-class Gaussians fitted on the train split, channel min/max included.

    Channel order follows the manifest's first-appearance label order.
    """
    train = manifest.split_entries("train")
    if not train:
        raise ManifestError("empty train split")
    stats = []
    for label in manifest.class_labels:
        ids = [Path(e.path).stem for e in train if e.label == label]
        missing = [i for i in ids if i not in embeddings]
        if missing:
            raise StatsError(f"no embedding for clip {missing[0]!r}")
        if len(ids) < 2:
            raise StatsError(f"class {label!r} has {len(ids)} train clips; need at least 2")
        stats.append(fit_class_stats(label, [embeddings[i].vector for i in ids],
                                     epsilon_scale=epsilon_scale))
    raw = compute_similarity_matrix([Path(e.path).stem for e in train], embeddings, stats)
    normalize_scores(raw, stats)  # fixes each channel's min/max on the train split
    return stats


def prepare_dataset(manifest: DatasetManifest, base_dir: str | Path,
                    embeddings: dict[str, Embedding], stats: list[ClassStats],
                    sample_rate: int = DEFAULT_RATE,
                    duration: float = DEFAULT_DURATION) -> PreparedDataset:
    """Load clips, extract conditioning features, and attach similarity vectors."""
    base_dir = Path(base_dir)
    train: list[PreparedClip] = []
    test: list[PreparedClip] = []
    for entry in manifest.entries:
        clip = load_clip(base_dir / entry.path, sample_rate, duration)
        if clip.id not in embeddings:
            raise ManifestError(f"no embedding for clip {clip.id!r}")
        raw = np.array([mahalanobis(embeddings[clip.id], st) for st in stats])
        prepared = PreparedClip(
            clip_id=clip.id, label=entry.label, samples=clip.samples,
            features=extract_features(clip), similarity=normalize_with_stats(raw, stats)[0],
            sample_rate=clip.sample_rate)
        (train if entry.split == "train" else test).append(prepared)
    return PreparedDataset(train=train, test=test, n_channels=len(stats))
