"""Synthesis-quality metrics and the controllability harness.

LSD and the Fréchet distance grade reconstruction; the similarity sweep plus
exponential regression measure how strongly each conditioning channel steers
the output. The sweep is scored with a *separate* evaluation embedder (its own
projection seed and width) so the model is not graded by the same function it
was conditioned on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip
from .checkpoint import Checkpoint
from .dataset import PreparedDataset
from .embedder import BuiltinEmbedder
from .errors import ContractViolation, DegenerateRegressionError, ShapeError
from .features import extract_features, stft
from .nn import DecoderWeights
from .similarity import ClassStats, DensityEstimate, kde, mahalanobis
from .synth import export_samples, synthesize
from .training import unpack_weights

LOG_FLOOR = 1e-7
Y_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# reconstruction metrics


def lsd(ref: AudioClip | np.ndarray, gen: AudioClip | np.ndarray,
        fft_size: int = 2048, hop: int = 512) -> float:
    """Log-spectral distance: mean over frames of the RMS log10-magnitude gap."""
    ref = ref if isinstance(ref, AudioClip) else AudioClip(samples=ref)
    gen = gen if isinstance(gen, AudioClip) else AudioClip(samples=gen)
    if len(ref.samples) != len(gen.samples):
        raise ShapeError(f"length mismatch: {len(ref.samples)} vs {len(gen.samples)}")
    s_ref = stft(ref, fft_size, hop).magnitudes
    s_gen = stft(gen, fft_size, hop).magnitudes
    d = np.log10(s_ref + LOG_FLOOR) - np.log10(s_gen + LOG_FLOOR)
    return float(np.mean(np.sqrt(np.mean(d * d, axis=1))))


def gaussian_stats(embeddings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and sample covariance of a set of row vectors (zeros for n < 2)."""
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    mu = x.mean(axis=0)
    if x.shape[0] < 2:
        return mu, np.zeros((x.shape[1], x.shape[1]))
    centered = x - mu
    return mu, centered.T @ centered / (x.shape[0] - 1)


def frechet_distance(stats_a: tuple[np.ndarray, np.ndarray],
                     stats_b: tuple[np.ndarray, np.ndarray]) -> float:
    """‖μ_A−μ_B‖² + tr(Σ_A + Σ_B − 2(Σ_A Σ_B)^½), eigenvalues floored at 0."""
    mu_a, cov_a = (np.asarray(v, dtype=np.float64) for v in stats_a)
    mu_b, cov_b = (np.asarray(v, dtype=np.float64) for v in stats_b)
    if mu_a.shape != mu_b.shape or cov_a.shape != cov_b.shape:
        raise ShapeError(f"dimension mismatch: {mu_a.shape}/{cov_a.shape} vs "
                         f"{mu_b.shape}/{cov_b.shape}")
    delta = mu_a - mu_b
    eigs = np.linalg.eigvals(cov_a @ cov_b).real
    cross = 2.0 * np.sum(np.sqrt(np.clip(eigs, 0.0, None)))
    return max(float(delta @ delta + np.trace(cov_a) + np.trace(cov_b) - cross), 0.0)


# ---------------------------------------------------------------------------
# exponential regression (controllability curve fit)


@dataclass
class RegressionResult:
    a: float
    b: float
    r_squared: float
    channel: int
    points: list[tuple[float, float]]
    degenerate: bool = False  # constant response: flat fit, zero total variance


def ols_exponential(points, channel: int = -1) -> RegressionResult:
    """Closed-form fit of y = a·e^{b·x} by OLS on (x, ln y)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    ly = np.log(np.maximum([p[1] for p in pts], Y_FLOOR))
    var_x = float(np.var(x))
    if var_x == 0.0:
        raise DegenerateRegressionError("regressor is constant: var(x) == 0")
    b = float(np.mean((x - x.mean()) * (ly - ly.mean())) / var_x)
    ln_a = float(ly.mean() - b * x.mean())
    resid = ly - (ln_a + b * x)
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return RegressionResult(a=math.exp(ln_a), b=b, r_squared=1.0,
                                channel=channel, points=pts, degenerate=True)
    return RegressionResult(a=math.exp(ln_a), b=b, r_squared=1.0 - ss_res / ss_tot,
                            channel=channel, points=pts)


# ---------------------------------------------------------------------------
# controllability sweep


@dataclass
class SweepSpec:
    channel: int
    steps: int = 100
    fixed_value: float = 1.0
    reference_id: str = ""

    def __post_init__(self) -> None:
        if self.steps < 2:
            raise ValueError(f"sweep needs at least 2 steps, got {self.steps}")
        if not 0.0 <= self.fixed_value <= 1.0:
            raise ValueError(f"fixed_value must lie in [0, 1], got {self.fixed_value}")


def sweep_weights(weights: DecoderWeights, reference: AudioClip, spec: SweepSpec,
                  eval_embedder: BuiltinEmbedder, eval_stats: list[ClassStats],
                  seed: int = 0) -> list[tuple[float, float]]:
    """Sweep one similarity channel over an inclusive [0,1] grid.

    The noise seed is shared across all renders so the conditioning channel is
    the only thing that varies; raw distances are min-max normalized per class
    over the sweep itself.
    """
    n_channels = weights.arch.n_channels
    if not 0 <= spec.channel < n_channels:
        raise ShapeError(f"channel {spec.channel} out of range for {n_channels} channels")
    features = extract_features(reference)
    grid = np.linspace(0.0, 1.0, spec.steps)
    raw = np.zeros((spec.steps, len(eval_stats)))
    for i, c in enumerate(grid):
        sim = np.full(n_channels, spec.fixed_value)
        sim[spec.channel] = c
        rendered = synthesize(features, sim, weights, seed=seed)
        audio = export_samples(rendered, target_len=len(reference.samples))
        emb = eval_embedder.embed_clip(AudioClip(samples=audio, sample_rate=reference.sample_rate))
        raw[i] = [mahalanobis(emb, st) for st in eval_stats]
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = hi - lo
    normalized = np.where(span > 0.0, (raw - lo) / np.where(span > 0.0, span, 1.0), 0.0)
    return [(float(c), float(normalized[i, spec.channel])) for i, c in enumerate(grid)]


def controllability_sweep(ckpt: Checkpoint, reference: AudioClip, spec: SweepSpec,
                          eval_embedder: BuiltinEmbedder, eval_stats: list[ClassStats],
                          seed: int = 0) -> list[tuple[float, float]]:
    if int(ckpt.config.get("epochs_completed", 0)) < 1:
        raise ContractViolation("checkpoint has no completed training epochs")
    return sweep_weights(unpack_weights(ckpt), reference, spec,
                         eval_embedder, eval_stats, seed=seed)


# ---------------------------------------------------------------------------
# density reports


def kde_report(scores: np.ndarray, labels: list[str]) -> dict[str, DensityEstimate]:
    """One KDE per class channel over the dataset's similarity scores."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if scores.shape[1] != len(labels):
        raise ShapeError(f"{scores.shape[1]} score channels for {len(labels)} labels")
    return {label: kde(scores[:, j]) for j, label in enumerate(labels)}


def write_density_table(est: DensityEstimate, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# bandwidth={est.bandwidth!r} n={est.n}\n")
        for x, y in zip(est.sample_points, est.density):
            fh.write(f"{float(x)!r}\t{float(y)!r}\n")


# ---------------------------------------------------------------------------
# reconstruction report


@dataclass
class ReportRow:
    label: str
    n: int
    lsd_mean: float
    lsd_std: float
    frechet: float


@dataclass
class EvaluationReport:
    rows: list[ReportRow] = field(default_factory=list)

    def overall(self) -> ReportRow:
        return self.rows[-1]


def evaluate_reconstruction(ckpt: Checkpoint, dataset: PreparedDataset,
                            eval_embedder: BuiltinEmbedder, seed: int = 0) -> EvaluationReport:
    """Per-class and overall reconstruction quality on the test split."""
    if not dataset.test:
        raise ShapeError("empty test split")
    weights = unpack_weights(ckpt)
    rate = dataset.test[0].sample_rate
    by_label: dict[str, list[int]] = {}
    lsds = np.zeros(len(dataset.test))
    ref_emb = np.zeros((len(dataset.test), eval_embedder.dim))
    gen_emb = np.zeros_like(ref_emb)
    for i, clip in enumerate(dataset.test):
        rendered = synthesize(clip.features, clip.similarity, weights, seed=seed)
        audio = export_samples(rendered, target_len=len(clip.samples))
        lsds[i] = lsd(clip.samples, audio)
        ref_emb[i] = eval_embedder.embed_clip(
            AudioClip(samples=clip.samples, sample_rate=rate, id=clip.clip_id)).vector
        gen_emb[i] = eval_embedder.embed_clip(
            AudioClip(samples=audio, sample_rate=rate, id=clip.clip_id)).vector
        by_label.setdefault(clip.label, []).append(i)

    report = EvaluationReport()
    groups = [*sorted(by_label.items()), ("overall", list(range(len(dataset.test))))]
    for label, idx in groups:
        sub = lsds[idx]
        fd = frechet_distance(gaussian_stats(ref_emb[idx]), gaussian_stats(gen_emb[idx]))
        report.rows.append(ReportRow(
            label=label, n=len(idx), lsd_mean=float(sub.mean()),
            lsd_std=float(sub.std(ddof=1)) if len(idx) > 1 else 0.0, frechet=fd))
    return report


def write_report(report: EvaluationReport, path: str | Path) -> None:
    """Line-delimited report rows, one JSON object per class plus overall."""
    with open(path, "w") as fh:
        for row in report.rows:
            fh.write(json.dumps({
                "class": row.label, "n": row.n, "lsd_mean": row.lsd_mean,
                "lsd_std": row.lsd_std, "frechet": row.frechet}) + "\n")
