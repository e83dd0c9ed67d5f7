"""Tiny shared builders so integration-ish tests stay fast."""

import json

import numpy as np

from simsynth.audio_io import AudioClip, write_clip
from simsynth.dataset import PreparedClip, PreparedDataset
from simsynth.features import extract_features
from simsynth.nn import DecoderArch
from simsynth.similarity import fit_class_stats, mahalanobis, normalize_scores

MICRO_ARCH = DecoderArch(n_features=2, n_channels=2, hidden=8, mlp_layers=1,
                         smooth_width=4, n_bands=10, n_sines=4, ir_length=16)


def micro_dataset(n_train=2, n_test=1, length=1024, seed=0) -> PreparedDataset:
    rng = np.random.default_rng(seed)
    clips = []
    for i in range(n_train + n_test):
        x = 0.1 * rng.standard_normal(length)
        x[300:340] += rng.standard_normal(40)  # a click, so peak extraction bites
        clip = AudioClip(samples=x, id=f"c{i}")
        clips.append(PreparedClip(
            clip_id=clip.id, label="ab"[i % 2], samples=clip.samples,
            features=extract_features(clip), similarity=rng.uniform(size=2)))
    return PreparedDataset(train=clips[:n_train], test=clips[n_train:], n_channels=2)


def fitted_stats(dim=8, seed=5, n_classes=2):
    rng = np.random.default_rng(seed)
    stats = [fit_class_stats(f"class{ci}",
                             [rng.standard_normal(dim) for _ in range(6)],
                             epsilon_scale=1e-3)
             for ci in range(n_classes)]
    raw = np.array([[mahalanobis(rng.standard_normal(dim), st) for st in stats]
                    for _ in range(8)])
    normalize_scores(raw, stats)  # fits the per-channel min/max in place
    return stats


WORKSPACE_CONFIG = """\
manifest: manifest.jsonl
work_dir: work
sample_rate: 44100
duration: 0.025
embedder: {dim: 8, n_bands: 8}
eval_embedder: {dim: 8, n_bands: 8}
arch: {hidden: 8, mlp_layers: 1, smooth_width: 4, n_bands: 10, n_sines: 4, ir_length: 16}
train: {epochs: 2, batch_size: 2, lr: 0.001, stft_scales: [256, 64, 16], seed: 3}
finetune: {epochs: 2, batch_size: 2, lr: 0.001, seed: 4}
"""


def build_workspace(root, n_per_class=3, seed=7):
    """On-disk project: WAV clips, JSONL manifest, micro config.  Returns the
    config path.  Two classes (noise bursts / click trains), the last clip of
    each class held out as test."""
    rng = np.random.default_rng(seed)
    n = round(44100 * 0.025)
    (root / "clips").mkdir(parents=True)
    entries = []
    for i in range(2 * n_per_class):
        label = "burst" if i % 2 == 0 else "click"
        x = np.zeros(n)
        if label == "burst":
            start = 200 + 80 * i
            x[start:start + 300] = 0.4 * rng.normal(size=300)
        else:
            x[60 + 30 * i::250] = 0.8
        name = f"{label}_{i}"
        write_clip(AudioClip(x, 44100, id=name), root / "clips" / f"{name}.wav")
        split = "test" if i >= 2 * n_per_class - 2 else "train"
        entries.append({"path": f"clips/{name}.wav", "class": label, "split": split})
    (root / "manifest.jsonl").write_text(
        "\n".join(json.dumps(e) for e in entries) + "\n", encoding="utf-8")
    config = root / "config.yaml"
    config.write_text(WORKSPACE_CONFIG, encoding="utf-8")
    return config
