"""Per-class embedding statistics and similarity scoring.

The score pipeline: fit mean + diagonally loaded covariance per class,
measure Mahalanobis distance of a clip's embedding against every class, then
min-max normalize each channel over the training set. Lower = more similar,
project-wide.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .embedder import Embedding
from .errors import EmbeddingFormatError, ShapeError, StatsError


@dataclass
class ClassStats:
    label: str
    mu: np.ndarray
    sigma: np.ndarray  # covariance after diagonal loading, SPD
    epsilon: float
    md_min: float = float("nan")
    md_max: float = float("nan")
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.mu)

    def cholesky(self) -> np.ndarray:
        if self._chol is None:
            try:
                self._chol = np.linalg.cholesky(self.sigma)
            except np.linalg.LinAlgError as e:
                raise StatsError(f"class {self.label!r}: covariance not positive definite ({e})") from e
        return self._chol


@dataclass
class SimilarityVector:
    channels: np.ndarray  # (n,) in [0,1], ordered by class_labels

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 1:
            raise ShapeError("similarity vector must be 1-D")
        if np.any((self.channels < 0) | (self.channels > 1)) or not np.all(np.isfinite(self.channels)):
            raise ShapeError("similarity channels must lie in [0, 1]")


@dataclass
class DensityEstimate:
    sample_points: np.ndarray
    density: np.ndarray
    bandwidth: float
    n: int


def fit_class_stats(label: str, embeddings: list[np.ndarray], epsilon_scale: float = 1e-6) -> ClassStats:
    """Sample mean + (n−1)-divisor covariance with relative diagonal loading.

    ε = epsilon_scale · mean(diag Σ); an all-zero covariance (identical
    embeddings) falls back to ε = epsilon_scale so loading still happens.
    """
    vecs = [np.asarray(getattr(e, "vector", e), dtype=np.float64) for e in embeddings]
    if len(vecs) < 2:
        raise StatsError(f"class {label!r}: need at least 2 embeddings, got {len(vecs)}")
    X = np.stack(vecs)
    mu = X.mean(axis=0)
    centered = X - mu
    sigma = centered.T @ centered / (len(vecs) - 1)
    diag_mean = float(np.mean(np.diag(sigma)))
    epsilon = epsilon_scale * diag_mean if diag_mean > 0.0 else epsilon_scale
    sigma = sigma + epsilon * np.eye(X.shape[1])
    return ClassStats(label=label, mu=mu, sigma=sigma, epsilon=epsilon)


def mahalanobis(x: Embedding | np.ndarray, stats: ClassStats) -> float:
    """MD(x) = √((x−μ)ᵀ Σ⁻¹ (x−μ)) via a Cholesky solve, never an inverse."""
    vec = np.asarray(getattr(x, "vector", x), dtype=np.float64)
    if vec.shape != stats.mu.shape:
        raise ShapeError(f"embedding dim {vec.shape} does not match stats dim {stats.mu.shape}")
    d = vec - stats.mu
    z = linalg.solve_triangular(stats.cholesky(), d, lower=True)
    return float(np.sqrt(z @ z))


def compute_similarity_matrix(clip_ids: list[str], embeddings: dict[str, Embedding],
                              stats: list[ClassStats]) -> np.ndarray:
    """Raw MD of every clip against every class, channels in stats order."""
    out = np.empty((len(clip_ids), len(stats)))
    for i, clip_id in enumerate(clip_ids):
        if clip_id not in embeddings:
            raise StatsError(f"no embedding for clip {clip_id!r}")
        for j, st in enumerate(stats):
            out[i, j] = mahalanobis(embeddings[clip_id], st)
    return out


def normalize_scores(raw: np.ndarray, stats: list[ClassStats]) -> np.ndarray:
    """Train-time min-max normalization; stores each channel's min/max.

    A degenerate channel (all MDs equal) normalizes to 0.0 everywhere.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise StatsError("cannot normalize an empty score matrix")
    if raw.shape[1] != len(stats):
        raise ShapeError(f"score matrix has {raw.shape[1]} channels, expected {len(stats)}")
    out = np.zeros_like(raw)
    for j, st in enumerate(stats):
        lo, hi = float(raw[:, j].min()), float(raw[:, j].max())
        st.md_min, st.md_max = lo, hi
        if hi > lo:
            out[:, j] = (raw[:, j] - lo) / (hi - lo)
    return out


def normalize_with_stats(raw: np.ndarray, stats: list[ClassStats]) -> np.ndarray:
    """Inference-side normalization with the stored min/max, clamped to [0,1]."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    out = np.zeros_like(raw)
    for j, st in enumerate(stats):
        if np.isnan(st.md_min) or np.isnan(st.md_max):
            raise StatsError(f"class {st.label!r}: min/max not fitted; run normalize_scores first")
        span = st.md_max - st.md_min
        if span > 0:
            out[:, j] = np.clip((raw[:, j] - st.md_min) / span, 0.0, 1.0)
    return out


def kde(scores, bandwidth: float | None = None, grid: np.ndarray | None = None,
        n_points: int = 256) -> DensityEstimate:
    """Gaussian kernel density estimate on a uniform [0,1] grid.

    Auto bandwidth is Silverman's rule 1.06·σ̂·n^(−1/5), floored at 1e-3.
    """
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise StatsError("kde needs at least one sample")
    if bandwidth is None:
        sigma_hat = float(x.std(ddof=1)) if x.size > 1 else 0.0
        bandwidth = max(1.06 * sigma_hat * x.size ** (-1 / 5), 1e-3)
    if bandwidth <= 0:
        raise StatsError(f"bandwidth must be positive, got {bandwidth}")
    if grid is None:
        grid = np.linspace(0.0, 1.0, n_points)
    u = (grid[:, None] - x[None, :]) / bandwidth
    density = np.exp(-0.5 * u * u).sum(axis=1) / (np.sqrt(2.0 * np.pi) * x.size * bandwidth)
    return DensityEstimate(sample_points=grid, density=density, bandwidth=float(bandwidth), n=x.size)


# ---------------------------------------------------------------------------
# wire formats


def write_embeddings(embeddings: dict[str, Embedding], path: str | Path) -> None:
    """`dim=<d>` header, then one `clip_id v1 … vd` line per clip.

    Floats are serialized with repr, so the round trip is bit-exact.
    """
    items = list(embeddings.values())
    if not items:
        raise EmbeddingFormatError("refusing to write an empty embeddings file")
    d = items[0].dim
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={d}\n")
        for emb in items:
            if emb.dim != d:
                raise EmbeddingFormatError(f"clip {emb.clip_id!r}: dim {emb.dim} != {d}")
            fh.write(emb.clip_id + " " + " ".join(repr(float(v)) for v in emb.vector) + "\n")


def load_external_embeddings(path: str | Path) -> dict[str, Embedding]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("dim="):
        raise EmbeddingFormatError(f"{path}: missing dim= header")
    try:
        d = int(lines[0][4:])
    except ValueError:
        raise EmbeddingFormatError(f"{path}: bad dim header {lines[0]!r}")
    out: dict[str, Embedding] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tokens = line.split()
        clip_id, values = tokens[0], tokens[1:]
        if len(values) != d:
            raise EmbeddingFormatError(f"{path}:{lineno}: {len(values)} values, expected {d}")
        if clip_id in out:
            raise EmbeddingFormatError(f"{path}:{lineno}: duplicate clip id {clip_id!r}")
        out[clip_id] = Embedding(vector=np.array([float(v) for v in values]),
                                 clip_id=clip_id, source="external")
    return out


STATS_FORMAT = 1


def save_class_stats(stats: list[ClassStats], path: str | Path) -> None:
    """`format=1` header, then one JSON record per class (Σ row-major)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"format={STATS_FORMAT}\n")
        for st in stats:
            record = {
                "label": st.label,
                "mu": st.mu.tolist(),
                "sigma": st.sigma.reshape(-1).tolist(),
                "epsilon": st.epsilon,
                "md_min": st.md_min,
                "md_max": st.md_max,
            }
            fh.write(json.dumps(record, allow_nan=True) + "\n")


def load_class_stats(path: str | Path) -> list[ClassStats]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != f"format={STATS_FORMAT}":
        raise StatsError(f"{path}: expected 'format={STATS_FORMAT}' header")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            mu = np.asarray(rec["mu"], dtype=np.float64)
            d = len(mu)
            out.append(ClassStats(
                label=rec["label"], mu=mu,
                sigma=np.asarray(rec["sigma"], dtype=np.float64).reshape(d, d),
                epsilon=float(rec["epsilon"]),
                md_min=float(rec["md_min"]), md_max=float(rec["md_max"]),
            ))
        except (KeyError, ValueError, json.JSONDecodeError) as e:
            raise StatsError(f"{path}:{lineno}: bad class record ({e})") from e
    return out


def stats_digest(stats: list[ClassStats]) -> str:
    """Stable fingerprint of fitted statistics, stored in checkpoints."""
    h = hashlib.blake2b(digest_size=16)
    for st in stats:
        h.update(st.label.encode("utf-8"))
        for arr in (st.mu, st.sigma, [st.epsilon, st.md_min, st.md_max]):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()
