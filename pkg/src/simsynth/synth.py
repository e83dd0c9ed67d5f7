"""Differentiable signal chain: decoder, noise and transient synthesizers,
learned reverb, and the mixing wrapper.

Everything here runs on tape tensors so gradients flow from waveform-domain
losses back into decoder weights. The per-frame noise filter is a single
constant matrix (band magnitudes → windowed zero-phase FIR), so its whole
design step is one differentiable matmul.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import signal

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ContractViolation, ShapeError
from .features import FRAME_LEN, FeatureTrack
from .nn import DecoderWeights

__all__ = [
    "SynthControls",
    "RenderedAudio",
    "decode",
    "noise_synth",
    "transient_synth",
    "idct",
    "apply_reverb",
    "synthesize",
    "export_samples",
]


@dataclass
class SynthControls:
    """Per-frame decoder outputs: H (N×bands), A and F (N×sines)."""

    h: Tensor
    a: Tensor
    f: Tensor

    @property
    def n_frames(self) -> int:
        return self.h.shape[0]


@dataclass
class RenderedAudio:
    dry_noise: Tensor
    dry_transient: Tensor
    wet_mix: Tensor
    seed: int

    @property
    def n_samples(self) -> int:
        return self.wet_mix.shape[-1]


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))


def decode(features: FeatureTrack, similarity, weights: DecoderWeights) -> SynthControls:
    """Conditioning features + similarity vector → synthesizer controls.

    H and A pass through exp_sigmoid (positive, bounded); F is 128·sigmoid,
    strictly inside (0, 128).
    """
    arch = weights.arch
    sim_t = _as_tensor(similarity)
    if sim_t.shape[-1] != arch.n_channels:
        raise ShapeError(
            f"similarity vector has {sim_t.shape[-1]} channels, decoder expects {arch.n_channels}"
        )
    n = features.n_frames
    tracks = [features.centroid, features.loudness][: arch.n_features]
    encoded = [
        weights.feature_mlp(i)(ad.constant(np.asarray(tr, dtype=np.float64).reshape(n, 1)))
        for i, tr in enumerate(tracks)
    ]
    x = ad.concat(encoded, axis=1)
    hidden = weights.gru()(x)
    hidden = nn.film(hidden, sim_t, weights.conditioner())
    post = weights.post_mlp()(hidden)
    h = nn.exp_sigmoid(weights.head("h")(post))
    a = nn.exp_sigmoid(weights.head("a")(post))
    # frequency encodes impulse position inside the frame, so its range is
    # tied to the frame length (0, f/2) = (0, 128), not to the sinusoid count
    f = ad.mul(ad.sigmoid(weights.head("f")(post)), FRAME_LEN / 2.0)
    return SynthControls(h=h, a=a, f=f)


# ---------------------------------------------------------------------------
# noise synthesizer

_FIR_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _fir_design_matrix(n_bands: int, frame_len: int) -> np.ndarray:
    """(n_bands, frame_len+1) matrix mapping band magnitudes to a windowed
    zero-phase FIR: linear band→bin interpolation, inverse real FFT,
    circular shift to center, symmetric Hann window."""
    key = (n_bands, frame_len)
    if key in _FIR_CACHE:
        return _FIR_CACHE[key]
    n_bins = frame_len // 2 + 1
    # band centers equally spaced across the half-spectrum bins
    interp = np.zeros((n_bands, n_bins))
    pos = np.arange(n_bins) * (n_bands - 1) / (n_bins - 1)
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    hi = np.minimum(lo + 1, n_bands - 1)
    interp[lo, np.arange(n_bins)] += 1.0 - frac
    interp[hi, np.arange(n_bins)] += frac
    # inverse real FFT of each bin's unit response, shifted to zero phase
    basis = np.fft.irfft(np.eye(n_bins), n=frame_len, axis=1)
    basis = np.roll(basis, frame_len // 2, axis=1)
    basis = np.concatenate([basis, basis[:, :1]], axis=1)  # symmetric odd length
    window = signal.get_window("hann", frame_len + 1, fftbins=False)
    matrix = interp @ (basis * window)
    _FIR_CACHE[key] = matrix
    return matrix


def noise_synth(h: Tensor | np.ndarray, seed: int, frame_len: int = FRAME_LEN) -> Tensor:
    """LTV-FIR noise: per-frame filters applied to seeded white noise.

    Each frame's 100 band magnitudes become a zero-phase FIR of length
    frame_len+1; the filtered frames overlap-add at hop = frame_len, and the
    filter's group delay is compensated so output length is N·frame_len.
    """
    h = _as_tensor(h)
    if h.ndim != 2:
        raise ShapeError(f"band magnitudes must be (frames, bands), got {h.shape}")
    n_frames, n_bands = h.shape
    fir = ad.matmul(h, _fir_design_matrix(n_bands, frame_len))
    noise = np.random.default_rng(seed).standard_normal((n_frames, frame_len))
    frames = ad.conv_full(ad.constant(noise), fir)
    out = ad.overlap_add(frames, hop=frame_len)
    half = frame_len // 2
    return out[half : half + n_frames * frame_len]


# ---------------------------------------------------------------------------
# transient synthesizer

_IDCT_CACHE: dict[int, np.ndarray] = {}


def _idct_matrix(n: int) -> np.ndarray:
    if n not in _IDCT_CACHE:
        _IDCT_CACHE[n] = sfft.idct(np.eye(n), axis=0, type=2, norm="ortho")
    return _IDCT_CACHE[n]


def idct(x: Tensor | np.ndarray) -> Tensor:
    """Orthonormal type-III DCT (exact inverse of the orthonormal type-II)."""
    x = _as_tensor(x)
    mat = _idct_matrix(x.shape[-1]).T
    if x.ndim == 1:
        return ad.reshape(ad.matmul(ad.reshape(x, (1, x.shape[0])), mat), (x.shape[0],))
    return ad.matmul(x, mat)


def transient_synth(a: Tensor | np.ndarray, f: Tensor | np.ndarray,
                    frame_len: int = FRAME_LEN) -> Tensor:
    """Impulse trains as amplitude-scaled iDCTs of per-frame sinusoids.

    Frame n, sinusoid k contributes A[n,k]·IDCT(sin(2π·F[n,k]·t/frame_len));
    the sinusoid frequency encodes the impulse position inside the frame.
    Frames are written back to back (hop = frame length).
    """
    a, f = _as_tensor(a), _as_tensor(f)
    if a.shape != f.shape or a.ndim != 2:
        raise ShapeError(f"amplitudes {a.shape} and frequencies {f.shape} must match as (frames, K)")
    half = frame_len / 2.0
    if np.any(f.values <= 0.0) or np.any(f.values >= half):
        raise ContractViolation(
            f"transient frequencies must lie strictly inside (0, {half:g})"
        )
    n_frames, n_sines = a.shape
    t = np.arange(frame_len) / frame_len  # t/f in Eq. terms
    phase = ad.mul(ad.reshape(f, (n_frames, n_sines, 1)), 2.0 * np.pi * t)
    sines = ad.sin(phase)
    pulses = ad.matmul(sines, _idct_matrix(frame_len).T)  # iDCT along time
    weighted = ad.mul(pulses, ad.reshape(a, (n_frames, n_sines, 1)))
    frames = ad.tsum(weighted, axis=1)
    return ad.reshape(frames, (n_frames * frame_len,))


# ---------------------------------------------------------------------------
# reverb and mixing


def apply_reverb(dry: Tensor | np.ndarray, ir: Tensor | np.ndarray) -> Tensor:
    """FFT convolution with a learned impulse response, output length = dry."""
    dry, ir = _as_tensor(dry), _as_tensor(ir)
    if ir.shape[-1] > dry.shape[-1]:
        raise ShapeError(f"impulse response ({ir.shape[-1]}) longer than signal ({dry.shape[-1]})")
    wet = ad.conv_full(dry, ir)
    return wet[..., : dry.shape[-1]]


def synthesize(features: FeatureTrack, similarity, weights: DecoderWeights,
               seed: int, frame_len: int = FRAME_LEN) -> RenderedAudio:
    """Full render: decode → noise + transient → reverb. Deterministic per seed."""
    controls = decode(features, similarity, weights)
    dry_noise = noise_synth(controls.h, seed=seed, frame_len=frame_len)
    dry_transient = transient_synth(controls.a, controls.f, frame_len=frame_len)
    mix = ad.add(dry_noise, dry_transient)
    wet = apply_reverb(mix, weights.reverb_ir())
    return RenderedAudio(dry_noise=dry_noise, dry_transient=dry_transient,
                         wet_mix=wet, seed=seed)


def export_samples(rendered: RenderedAudio, target_len: int | None = None) -> np.ndarray:
    """Export-time view of the wet mix: tanh soft clip + tail trim.

    The soft clip exists only here — the training path sees the raw mix.
    """
    x = np.tanh(rendered.wet_mix.values)
    if target_len is not None:
        x = x[:target_len]
    return x
