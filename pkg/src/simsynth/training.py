"""The two training stages: reconstruction training and similarity fine-tuning.

Both loops are single-threaded and fully deterministic given their config
seed: shuffling, per-render noise seeds, and pseudo-score draws all derive
from it, so two runs with the same inputs produce byte-identical checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .checkpoint import Checkpoint
from .dataset import PreparedClip, PreparedDataset
from .embedder import BuiltinEmbedder
from .errors import GradError, ShapeError, StatsError
from .losses import DEFAULT_SCALES, multiscale_stft_loss, transient_loss
from .nn import AdamState, DecoderArch, DecoderWeights, adam_step, init_decoder_weights
from .similarity import ClassStats, stats_digest
from .synth import synthesize


@dataclass
class TrainConfig:
    epochs: int = 5000
    batch_size: int = 16
    lr: float = 1e-4
    lr_decay_point: float = 0.8
    lr_final: float = 1e-5
    stft_scales: tuple[int, ...] = DEFAULT_SCALES
    transient_loss_weight: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        self.stft_scales = tuple(int(s) for s in self.stft_scales)
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if not 0.0 < self.lr_decay_point < 1.0:
            raise ValueError(f"lr_decay_point must lie in (0, 1), got {self.lr_decay_point}")
        for prev, cur in zip(self.stft_scales, self.stft_scales[1:]):
            if cur >= prev:
                raise ValueError("stft_scales must be strictly decreasing")
        for s in self.stft_scales:
            if s <= 0 or s & (s - 1):
                raise ValueError(f"stft scale {s} is not a power of two")


@dataclass
class FinetuneConfig:
    epochs: int = 10000
    batch_size: int = 16
    lr: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")


def _derive_seed(*parts: int) -> int:
    """Stable per-render seed from integer coordinates (stage, epoch, element)."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------
# checkpoint packing


def pack_checkpoint(weights: DecoderWeights, adam: AdamState, *, kind: str,
                    stage_config: dict, epochs_completed: int, stats_hash: str,
                    sample_rate: int, histories: dict[str, np.ndarray],
                    extra: dict | None = None) -> Checkpoint:
    config = {
        "kind": kind,
        "arch": weights.arch.to_dict(),
        "epochs_completed": int(epochs_completed),
        "stage_config": stage_config,
        "stats_digest": stats_hash,
        "sample_rate": int(sample_rate),
        "adam_step": int(adam.step),
    }
    if extra:
        config.update(extra)
    tensors: dict[str, np.ndarray] = {}
    for name, value in weights.values_snapshot().items():
        tensors[f"param.{name}"] = value
    for name in weights.params:
        tensors[f"adam.m.{name}"] = adam.m[name].copy()
        tensors[f"adam.v.{name}"] = adam.v[name].copy()
    for name, hist in histories.items():
        tensors[f"history.{name}"] = np.asarray(hist, dtype=np.float64)
    return Checkpoint(config=config, tensors=tensors)


def unpack_weights(ckpt: Checkpoint) -> DecoderWeights:
    arch = DecoderArch.from_dict(ckpt.config["arch"])
    weights = init_decoder_weights(arch, seed=0)
    values = {name[len("param."):]: v for name, v in ckpt.tensors.items()
              if name.startswith("param.")}
    weights.load_values(values)
    return weights


def unpack_adam(ckpt: Checkpoint, weights: DecoderWeights) -> AdamState:
    state = AdamState.init_like(weights.params)
    for name in weights.params:
        m, v = ckpt.tensors.get(f"adam.m.{name}"), ckpt.tensors.get(f"adam.v.{name}")
        if m is None or v is None:
            raise ShapeError(f"checkpoint is missing optimizer moments for {name!r}")
        state.m[name] = m.copy()
        state.v[name] = v.copy()
    state.step = int(ckpt.config.get("adam_step", 0))
    return state


def write_history(history: np.ndarray, path: str | Path, keys: tuple[str, ...]) -> None:
    """Line-delimited loss records, one JSON object per epoch."""
    history = np.asarray(history, dtype=np.float64)
    with open(path, "w") as fh:
        for row in history:
            record = {k: (int(row[i]) if k == "epoch" else float(row[i]))
                      for i, k in enumerate(keys)}
            fh.write(json.dumps(record) + "\n")


TRAIN_HISTORY_KEYS = ("epoch", "recon_loss", "transient_loss", "lr")
FINETUNE_HISTORY_KEYS = ("epoch", "score_loss", "lr")


# --------------------------------------------------------------------------
# stage 1: reconstruction training


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def _recon_losses(clip: PreparedClip, weights: DecoderWeights, config: TrainConfig,
                  noise_seed: int) -> tuple[Tensor, Tensor, Tensor | None]:
    rendered = synthesize(clip.features, clip.similarity, weights, seed=noise_seed)
    n = len(clip.samples)
    recon = multiscale_stft_loss(clip.samples, rendered.wet_mix[:n], config.stft_scales)
    if config.transient_loss_weight == 0.0:
        return recon, recon, None
    trans = transient_loss(rendered.dry_transient[:n], clip.xs)
    total = ad.add(recon, ad.mul(trans, config.transient_loss_weight))
    return total, recon, trans


def train(dataset: PreparedDataset, class_stats: list[ClassStats], config: TrainConfig,
          arch: DecoderArch | None = None, history_path: str | Path | None = None) -> Checkpoint:
    """Reconstruction training over the train split; returns the final checkpoint."""
    clips = dataset.require_train()
    arch = arch or DecoderArch(n_channels=dataset.n_channels)
    if arch.n_channels != dataset.n_channels:
        raise ShapeError(f"decoder expects {arch.n_channels} similarity channels, "
                         f"dataset provides {dataset.n_channels}")
    weights = init_decoder_weights(arch, seed=config.seed)
    adam = AdamState.init_like(weights.params)
    names = list(weights.params)
    tensors = [weights.params[n] for n in names]
    rng = np.random.default_rng(config.seed)
    decay_epoch = config.lr_decay_point * config.epochs
    sample_rate = clips[0].sample_rate
    history = np.zeros((config.epochs, 4))

    for epoch in range(config.epochs):
        lr = config.lr_final if epoch >= decay_epoch else config.lr
        order = rng.permutation(len(clips))
        recon_sum = trans_sum = 0.0
        for batch in _batches(order, config.batch_size):
            grads = [np.zeros_like(t.values) for t in tensors]
            for idx in batch:
                clip = clips[int(idx)]
                noise_seed = _derive_seed(config.seed, 0, epoch, int(idx))
                with Tape() as tape:
                    total, recon, trans = _recon_losses(clip, weights, config, noise_seed)
                for g, gi in zip(grads, tape.gradient(total, tensors)):
                    g += gi
                recon_sum += recon.item()
                trans_sum += trans.item() if trans is not None else 0.0
            scale = 1.0 / len(batch)
            adam_step(weights.params, {n: g * scale for n, g in zip(names, grads)}, adam, lr)
        history[epoch] = (epoch, recon_sum / len(clips), trans_sum / len(clips), lr)

    if history_path is not None:
        write_history(history, history_path, TRAIN_HISTORY_KEYS)
    return pack_checkpoint(
        weights, adam, kind="train", stage_config=asdict(config) | {"stft_scales": list(config.stft_scales)},
        epochs_completed=config.epochs, stats_hash=stats_digest(class_stats),
        sample_rate=sample_rate, histories={"train": history})


# --------------------------------------------------------------------------
# stage 2: similarity fine-tuning


class DifferentiableScorer:
    """Tape-friendly mirror of the normalized-distance scorer.

    The Cholesky factor of each class covariance is inverted once up front so
    the whitening inside the loop is a plain matmul, and the inference-time
    hard clamp is replaced by a sigmoid matched to the linear region
    (value 1/2 and slope 1 at the midpoint) so gradients survive near 0 and 1.
    """

    def __init__(self, stats: list[ClassStats]):
        if not stats:
            raise StatsError("missing class stats")
        self.labels = [st.label for st in stats]
        self.mus, self.linv_ts, self.mins, self.spans = [], [], [], []
        for st in stats:
            if not (np.isfinite(st.md_min) and np.isfinite(st.md_max)):
                raise StatsError(f"class {st.label!r}: normalization bounds not fitted")
            linv = solve_triangular(st.cholesky(), np.eye(st.dim), lower=True)
            self.mus.append(st.mu.copy())
            self.linv_ts.append(linv.T.copy())
            self.mins.append(st.md_min)
            self.spans.append(max(st.md_max - st.md_min, 1e-12))
        self.dim = stats[0].dim

    def score(self, embedding: Tensor) -> Tensor:
        """Smoothly clamped normalized distances, one per class channel."""
        e = ad.reshape(embedding, (1, self.dim))
        channels = []
        for mu, linv_t, lo, span in zip(self.mus, self.linv_ts, self.mins, self.spans):
            z = ad.matmul(ad.sub(e, mu), linv_t)
            md = ad.sqrt(ad.add(ad.tsum(ad.mul(z, z)), 1e-24))
            u = ad.mul(ad.sub(md, lo), 1.0 / span)
            channels.append(ad.reshape(ad.sigmoid(ad.sub(ad.mul(u, 4.0), 2.0)), (1,)))
        return ad.concat(channels, axis=0)


def score_residual_loss(target: np.ndarray, predicted: Tensor) -> Tensor:
    """Per-element loss: Σ over channels of (s−ŝ)² + |s−ŝ|."""
    r = ad.sub(ad.constant(target), predicted)
    return ad.tsum(ad.add(ad.mul(r, r), ad.tabs(r)))


def finetune(ckpt: Checkpoint, dataset: PreparedDataset, class_stats: list[ClassStats],
             config: FinetuneConfig, embedder: BuiltinEmbedder | None = None,
             history_path: str | Path | None = None) -> Checkpoint:
    """Similarity fine-tuning: only the conditioning stack moves.

    Every non-conditioning tensor is detached from the tape for the duration,
    so its gradient is exactly zero by construction — and checked anyway.
    """
    clips = dataset.require_train()
    weights = unpack_weights(ckpt)
    scorer = DifferentiableScorer(class_stats)
    n_channels = len(class_stats)
    if n_channels != weights.arch.n_channels:
        raise ShapeError(f"decoder expects {weights.arch.n_channels} similarity channels, "
                         f"stats provide {n_channels}")
    if embedder is None:
        embedder = BuiltinEmbedder(dim=scorer.dim, sample_rate=clips[0].sample_rate)
    if embedder.dim != scorer.dim:
        raise StatsError(f"embedder dim {embedder.dim} != class stats dim {scorer.dim}")

    trainable = {n: t for n, t in weights.params.items() if n.startswith("cond.")}
    frozen = {n: t for n, t in weights.params.items() if not n.startswith("cond.")}
    t_names, t_tensors = list(trainable), list(trainable.values())
    f_tensors = list(frozen.values())
    adam = AdamState.init_like(weights.params)
    rng = np.random.default_rng(config.seed)
    history = np.zeros((config.epochs, 3))

    for t in f_tensors:
        t.requires_grad = False
    try:
        for epoch in range(config.epochs):
            grads = [np.zeros_like(t.values) for t in t_tensors]
            loss_sum = 0.0
            for b in range(config.batch_size):
                target = rng.uniform(size=n_channels)
                clip = clips[int(rng.integers(len(clips)))]
                noise_seed = _derive_seed(config.seed, 1, epoch, b)
                with Tape() as tape:
                    rendered = synthesize(clip.features, target, weights, seed=noise_seed)
                    emb = embedder.embed_tensor(rendered.wet_mix[:len(clip.samples)])
                    loss = score_residual_loss(target, scorer.score(emb))
                for g, gi in zip(grads, tape.gradient(loss, t_tensors)):
                    g += gi
                for name, gf in zip(frozen, tape.gradient(loss, f_tensors)):
                    if gf.any():
                        raise GradError(f"frozen tensor {name!r} received a nonzero gradient")
                loss_sum += loss.item()
            scale = 1.0 / config.batch_size
            adam_step(weights.params, {n: g * scale for n, g in zip(t_names, grads)},
                      adam, config.lr)
            history[epoch] = (epoch, loss_sum * scale, config.lr)
    finally:
        for t in f_tensors:
            t.requires_grad = True

    if history_path is not None:
        write_history(history, history_path, FINETUNE_HISTORY_KEYS)
    histories = {"finetune": history}
    if "history.train" in ckpt.tensors:
        histories["train"] = ckpt.tensors["history.train"]
    return pack_checkpoint(
        weights, adam, kind="finetune", stage_config=asdict(config),
        epochs_completed=config.epochs, stats_hash=stats_digest(class_stats),
        sample_rate=ckpt.config.get("sample_rate", clips[0].sample_rate),
        histories=histories, extra={"embedder": embedder.config()})
