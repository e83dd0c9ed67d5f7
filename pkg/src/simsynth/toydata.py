"""Synthetic two-class sanity corpus: band-limited noise bursts vs click trains.

The corpus is deliberately tiny — short clips, few of them — so a full
train/finetune/sweep cycle runs on one CPU in minutes while still giving the
reconstruction and controllability checks something real to measure: the two
classes differ in exactly the ways the synthesizer can express (noise band
shape versus transient placement).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, write_clip

TOY_SAMPLE_RATE = 44100
TOY_DURATION = 0.025  # 1102 samples, five 256-sample decoder frames
TOY_CONFIG = """\
manifest: manifest.jsonl
work_dir: work
sample_rate: 44100
duration: 0.025
embedder: {dim: 16, n_bands: 16}
eval_embedder: {dim: 16, n_bands: 16}
arch: {hidden: 48, mlp_layers: 1, smooth_width: 8, n_bands: 32, n_sines: 24, ir_length: 64}
train: {epochs: 500, batch_size: 4, lr: 0.003, lr_final: 0.0003, lr_decay_point: 0.9, stft_scales: [512, 256, 128, 64, 32], seed: 11}
finetune: {epochs: 400, batch_size: 8, lr: 0.005, seed: 12}
"""


def band_limited_burst(n: int, center: float, width: float,
                       rng: np.random.Generator) -> np.ndarray:
    """White noise masked to [center-width/2, center+width/2] (fractions of
    Nyquist), gated by a raised-cosine burst envelope."""
    spectrum = np.fft.rfft(rng.normal(size=n))
    freqs = np.linspace(0.0, 1.0, len(spectrum))
    spectrum[(freqs < center - width / 2) | (freqs > center + width / 2)] = 0.0
    x = np.fft.irfft(spectrum, n=n)
    burst_len = int(0.6 * n)
    start = int(0.15 * n)
    envelope = np.zeros(n)
    envelope[start:start + burst_len] = np.hanning(burst_len)
    x = x * envelope
    peak = np.abs(x).max()
    return 0.5 * x / peak if peak > 0 else x


def click_train(n: int, period: int, offset: int) -> np.ndarray:
    x = np.zeros(n)
    x[offset::period] = 0.8
    return x


def toy_clip(index: int, n: int = round(TOY_SAMPLE_RATE * TOY_DURATION),
             seed: int = 0x70D) -> tuple[str, np.ndarray]:
    """Clip ``index`` of the corpus: even indices are bursts, odd are clicks."""
    k = index // 2
    if index % 2 == 0:
        rng = np.random.default_rng([seed, index])
        return "burst", band_limited_burst(n, center=0.12 + 0.035 * k,
                                           width=0.08, rng=rng)
    return "click", click_train(n, period=130 + 21 * k, offset=(37 * k) % 97 + 10)


def make_toy_corpus(root: str | Path, n_clips: int = 16,
                    seed: int = 0x70D) -> Path:
    """Write clips, manifest, and config under ``root``; returns the config
    path.  The last four clips (two per class) are the test split."""
    root = Path(root)
    (root / "clips").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_clips):
        label, samples = toy_clip(i, seed=seed)
        name = f"{label}_{i:02d}"
        write_clip(AudioClip(samples, TOY_SAMPLE_RATE, id=name),
                   root / "clips" / f"{name}.wav")
        split = "test" if i >= n_clips - 4 else "train"
        entries.append({"path": f"clips/{name}.wav", "class": label,
                        "split": split})
    (root / "manifest.jsonl").write_text(
        "\n".join(json.dumps(e) for e in entries) + "\n", encoding="utf-8")
    config = root / "config.yaml"
    config.write_text(TOY_CONFIG, encoding="utf-8")
    return config
