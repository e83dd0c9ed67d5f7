"""Built-in deterministic spectral embedder.

Substitutes a pretrained audio embedding model at desk scale. Every stage is
an operation from the tape engine, so similarity scores measured on
synthesized audio stay differentiable end to end for fine-tuning.

Coordinate layout: the first ``dim − 2`` coordinates are a fixed seeded
random projection of scale-invariant descriptors (band log-ratios of a
mel-style filterbank + temporal moments of the energy envelope); the last 2
are unprojected log-energies, the only coordinates that move when a clip is
rescaled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from . import autodiff as ad
from .autodiff import Tensor
from .audio_io import AudioClip

_TINY = 1e-12


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_filterbank(n_bands: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular filters on a mel-warped axis, shape (bins, n_bands)."""
    freqs = np.fft.rfftfreq(fft_size, 1.0 / sample_rate)
    pts = _mel_inv(np.linspace(_mel(0.0), _mel(sample_rate / 2.0), n_bands + 2))
    bank = np.zeros((len(freqs), n_bands))
    for b in range(n_bands):
        lo, mid, hi = pts[b], pts[b + 1], pts[b + 2]
        rising = (freqs - lo) / max(mid - lo, _TINY)
        falling = (hi - freqs) / max(hi - mid, _TINY)
        bank[:, b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


@dataclass
class Embedding:
    vector: np.ndarray
    clip_id: str = ""
    source: str = "builtin"

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)

    @property
    def dim(self) -> int:
        return len(self.vector)


class BuiltinEmbedder:
    """Frozen (seeded) differentiable embedder; call on tensors or clips."""

    def __init__(self, dim: int = 64, sample_rate: int = 44100, frame_len: int = 256,
                 n_bands: int = 24, seed: int = 0x5EED):
        if dim < 8:
            raise ValueError("embedding dim must be at least 8")
        self.dim = dim
        self.sample_rate = sample_rate
        self.frame_len = frame_len
        self.n_bands = n_bands
        self.seed = seed
        self._window = signal.get_window("hann", frame_len, fftbins=True)
        self._bank = _mel_filterbank(n_bands, frame_len, sample_rate)
        rng = np.random.default_rng(seed)
        k = n_bands + 3  # band ratios + three envelope moments
        self._projection = rng.standard_normal((k, dim - 2)) / np.sqrt(k)

    def embed_tensor(self, samples: Tensor) -> Tensor:
        """Differentiable embedding of a 1-D sample tensor, shape (dim,)."""
        f = self.frame_len
        length = samples.shape[-1]
        n_frames = max(1, -(-length // f))
        pad = n_frames * f - length
        if pad:
            samples = ad.concat([samples, ad.constant(np.zeros(pad))], axis=0)
        idx = (np.arange(n_frames)[:, None] * f + np.arange(f)[None, :])
        frames = ad.take_last(samples, idx)
        mags = ad.rfft_mag(ad.mul(frames, self._window))

        # scale-invariant part: band log-ratios of the mean magnitude spectrum
        mean_spec = ad.tmean(mags, axis=0, keepdims=True)  # (1, bins)
        band = ad.matmul(mean_spec, self._bank)  # (1, n_bands)
        total = ad.tsum(band, keepdims=False)
        denom = ad.add(total, _TINY)
        ratios = ad.log(ad.add(ad.div(band, denom), 1e-9))

        # scale-invariant part: temporal moments of the normalized envelope
        env = ad.tsum(ad.mul(mags, mags), axis=1)  # (n_frames,)
        env_total = ad.tsum(env)
        p = ad.div(env, ad.add(env_total, _TINY))
        t = np.linspace(0.0, 1.0, n_frames) if n_frames > 1 else np.zeros(1)
        m1 = ad.tsum(ad.mul(p, t))
        d = ad.sub(ad.constant(t), m1)
        m2 = ad.tsum(ad.mul(p, ad.mul(d, d)))
        m3 = ad.tsum(ad.mul(p, ad.mul(d, ad.mul(d, d))))
        moments = ad.concat([ad.reshape(m, (1, 1)) for m in (m1, m2, m3)], axis=1)

        invariant = ad.concat([ratios, moments], axis=1)  # (1, n_bands+3)
        projected = ad.matmul(invariant, self._projection)  # (1, dim-2)

        # energy-derived coordinates, deliberately left unprojected
        log_spec_energy = ad.reshape(ad.log(ad.add(total, _TINY)), (1, 1))
        log_env_energy = ad.reshape(ad.log(ad.add(env_total, _TINY)), (1, 1))

        out = ad.concat([projected, log_spec_energy, log_env_energy], axis=1)
        return ad.reshape(out, (self.dim,))

    def embed_clip(self, clip: AudioClip) -> Embedding:
        if clip.sample_rate != self.sample_rate:
            raise ValueError(
                f"embedder built for {self.sample_rate} Hz, clip is {clip.sample_rate} Hz"
            )
        vec = self.embed_tensor(ad.constant(clip.samples)).values
        return Embedding(vector=vec, clip_id=clip.id, source="builtin")

    def config(self) -> dict:
        return {
            "dim": self.dim,
            "sample_rate": self.sample_rate,
            "frame_len": self.frame_len,
            "n_bands": self.n_bands,
            "seed": self.seed,
        }
