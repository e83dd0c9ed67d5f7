"""Waveform-domain training losses, all differentiable through the tape."""

from __future__ import annotations

import numpy as np
from scipy import signal

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

DEFAULT_SCALES = (2048, 1024, 512, 256, 128, 64, 32, 16)

_WINDOWS: dict[int, np.ndarray] = {}
_FRAME_IDX: dict[tuple[int, int, int], np.ndarray] = {}


def _window(fft_size: int) -> np.ndarray:
    if fft_size not in _WINDOWS:
        _WINDOWS[fft_size] = signal.get_window("hann", fft_size, fftbins=True)
    return _WINDOWS[fft_size]


def _magnitudes(x: Tensor, fft_size: int) -> Tensor:
    """Differentiable non-centered magnitude STFT, hop = fft/4."""
    length = x.shape[-1]
    hop = max(fft_size // 4, 1)
    if length < fft_size:
        x = ad.concat([x, ad.constant(np.zeros(fft_size - length))], axis=0)
        length = fft_size
    n_frames = 1 + (length - fft_size) // hop
    key = (length, fft_size, hop)
    if key not in _FRAME_IDX:
        _FRAME_IDX[key] = np.arange(n_frames)[:, None] * hop + np.arange(fft_size)[None, :]
    frames = ad.take_last(x, _FRAME_IDX[key])
    return ad.rfft_mag(ad.mul(frames, _window(fft_size)))


def multiscale_stft_loss(x: Tensor | np.ndarray, x_hat: Tensor | np.ndarray,
                         scales=DEFAULT_SCALES) -> Tensor:
    """Σ over FFT scales of mean |S(x)−S(x̂)| + mean |log S(x) − log S(x̂)|."""
    x = x if isinstance(x, Tensor) else ad.constant(x)
    x_hat = x_hat if isinstance(x_hat, Tensor) else ad.constant(x_hat)
    if x.shape[-1] != x_hat.shape[-1]:
        raise ShapeError(f"length mismatch: {x.shape[-1]} vs {x_hat.shape[-1]}")
    total = None
    for fft_size in scales:
        sx = _magnitudes(x, fft_size)
        sy = _magnitudes(x_hat, fft_size)
        lin = ad.tmean(ad.tabs(ad.sub(sx, sy)))
        log_term = ad.tmean(ad.tabs(ad.sub(ad.log(ad.add(sx, 1e-7)), ad.log(ad.add(sy, 1e-7)))))
        term = ad.add(lin, log_term)
        total = term if total is None else ad.add(total, term)
    return total


def transient_loss(transient: Tensor | np.ndarray, x_s) -> Tensor:
    """Mean squared error between the transient buffer and the sparse peak waveform."""
    transient = transient if isinstance(transient, Tensor) else ad.constant(transient)
    target = np.asarray(getattr(x_s, "samples", x_s), dtype=np.float64)
    if transient.shape[-1] != len(target):
        raise ShapeError(f"length mismatch: transient {transient.shape[-1]} vs target {len(target)}")
    d = ad.sub(transient, ad.constant(target))
    return ad.tmean(ad.mul(d, d))
