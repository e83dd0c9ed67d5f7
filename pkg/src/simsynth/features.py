"""Spectral analysis and the conditioning/target features derived from audio.

Two framings coexist here on purpose. The public ``stft`` is reflect-padded
and centered (frame t is centered on sample t·hop), which is what the
decoder's conditioning features use. Peak extraction instead works on a
left-aligned framing where frame n covers samples [n·hop, (n+1)·hop), so a
peak frame index maps directly onto the sample range it gates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .audio_io import AudioClip
from .errors import ShapeError

FRAME_LEN = 256  # analysis FFT size and synthesis frame length f


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # (N, B) non-negative
    fft_size: int
    hop: int
    sample_rate: int

    def __post_init__(self):
        n_bins = self.fft_size // 2 + 1
        if self.magnitudes.ndim != 2 or self.magnitudes.shape[1] != n_bins:
            raise ShapeError(
                f"spectrogram needs shape (N, {n_bins}) for fft_size {self.fft_size}, "
                f"got {self.magnitudes.shape}"
            )

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]


@dataclass
class FeatureTrack:
    centroid: np.ndarray  # (N,) in [0,1], fraction of Nyquist
    loudness: np.ndarray  # (N,) in [0,1], normalized dB

    def __post_init__(self):
        if self.centroid.shape != self.loudness.shape:
            raise ShapeError("centroid and loudness tracks must have equal length")

    @property
    def n_frames(self) -> int:
        return len(self.centroid)


@dataclass
class SparsePeakWaveform:
    samples: np.ndarray  # same length as the source clip; zero outside peak frames
    peak_frames: set[int] = field(default_factory=set)
    frame_len: int = FRAME_LEN


def _frame(x: np.ndarray, fft_size: int, hop: int, n_frames: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(x, fft_size)
    return view[:: hop][:n_frames]


def stft(clip: AudioClip, fft_size: int = FRAME_LEN, hop: int = FRAME_LEN,
         window: str = "hann") -> Spectrogram:
    """Centered magnitude STFT with reflection padding; N = ceil(len/hop)."""
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size == 0:
        raise ShapeError("cannot analyze an empty clip")
    if fft_size & (fft_size - 1) or fft_size <= 0:
        raise ShapeError(f"fft_size must be a power of two, got {fft_size}")
    if hop > fft_size:
        raise ShapeError(f"hop {hop} exceeds fft_size {fft_size}")
    n_frames = math.ceil(len(x) / hop)
    half = fft_size // 2
    needed = (n_frames - 1) * hop + fft_size
    pad_end = max(half, needed - (len(x) + half))
    x_pad = np.pad(x, (half, pad_end), mode="reflect")
    frames = _frame(x_pad, fft_size, hop, n_frames)
    win = signal.get_window(window, fft_size, fftbins=True)
    mags = np.abs(np.fft.rfft(frames * win, axis=-1))
    return Spectrogram(magnitudes=mags, fft_size=fft_size, hop=hop, sample_rate=clip.sample_rate)


def _stft_left(x: np.ndarray, fft_size: int, hop: int, sample_rate: int) -> Spectrogram:
    """Left-aligned framing: frame n starts at sample n·hop, zero-padded tail."""
    n_frames = math.ceil(len(x) / hop)
    needed = (n_frames - 1) * hop + fft_size
    x_pad = np.pad(x, (0, needed - len(x)))
    frames = _frame(x_pad, fft_size, hop, n_frames)
    win = signal.get_window("hann", fft_size, fftbins=True)
    mags = np.abs(np.fft.rfft(frames * win, axis=-1))
    return Spectrogram(magnitudes=mags, fft_size=fft_size, hop=hop, sample_rate=sample_rate)


def spectral_centroid(spec: Spectrogram) -> np.ndarray:
    """Per-frame magnitude-weighted mean frequency as a fraction of Nyquist.

    All-zero frames map to 0 by convention.
    """
    freqs = np.fft.rfftfreq(spec.fft_size, d=1.0 / spec.sample_rate)
    m = spec.magnitudes
    total = m.sum(axis=1)
    weighted = m @ freqs
    nyquist = spec.sample_rate / 2.0
    out = np.zeros(spec.n_frames)
    nz = total > 0
    out[nz] = weighted[nz] / total[nz] / nyquist
    return out


def a_weight_db(freqs: np.ndarray) -> np.ndarray:
    """Standard A-weighting curve in dB (0 dB at 1 kHz); -inf-safe at DC."""
    f2 = np.asarray(freqs, dtype=np.float64) ** 2
    num = (12194.0**2) * f2**2
    den = (f2 + 20.6**2) * np.sqrt((f2 + 107.7**2) * (f2 + 737.9**2)) * (f2 + 12194.0**2)
    with np.errstate(divide="ignore"):
        ra = np.where(den > 0, num / np.maximum(den, 1e-30), 0.0)
        return 20.0 * np.log10(np.maximum(ra, 1e-30)) + 2.0


def loudness(spec: Spectrogram, floor_db: float = -80.0) -> np.ndarray:
    """Per-frame A-weighted power in dB, floored and mapped to [0,1].

    0 dB is referenced to a full-scale on-bin sine's main-lobe power, so a
    loud frame sits near 1.0 and silence at exactly 0.0.
    """
    weights = 10.0 ** (a_weight_db(np.fft.rfftfreq(spec.fft_size, 1.0 / spec.sample_rate)) / 20.0)
    power = ((spec.magnitudes * weights) ** 2).sum(axis=1)
    win = signal.get_window("hann", spec.fft_size, fftbins=True)
    p_ref = (0.5 * win.sum()) ** 2
    db = 10.0 * np.log10(power / p_ref + 1e-20)
    db = np.maximum(db, floor_db)
    return np.clip((db - floor_db) / -floor_db, 0.0, 1.0)


def extract_features(clip: AudioClip, fft_size: int = FRAME_LEN, hop: int = FRAME_LEN) -> FeatureTrack:
    spec = stft(clip, fft_size=fft_size, hop=hop)
    return FeatureTrack(centroid=spectral_centroid(spec), loudness=loudness(spec))


def write_feature_track(track: FeatureTrack, path) -> None:
    """Debug export: one `frame centroid loudness` line per frame."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, (c, l) in enumerate(zip(track.centroid, track.loudness)):
            fh.write(f"{i}\t{c!r}\t{l!r}\n")


def hpss(spec: Spectrogram, kernel: int = 31,
         margin: tuple[float, float] = (1.0, 3.0)) -> tuple[Spectrogram, Spectrogram]:
    """Median-filtering harmonic/percussive separation with hard masks.

    Median length ``kernel`` along time enhances harmonic content, along
    frequency percussive content; binary masks H̃ ≥ m_h·P̃ and P̃ ≥ m_p·H̃
    gate the input magnitudes. With margins above 1 the masks are not
    complementary — some energy belongs to neither side.
    """
    if kernel % 2 == 0 or kernel < 1:
        raise ShapeError(f"median kernel must be odd and positive, got {kernel}")
    S = spec.magnitudes
    if kernel > S.shape[0] and kernel > S.shape[1]:
        raise ShapeError(f"kernel {kernel} exceeds both spectrogram axes {S.shape}")
    harm_enh = ndimage.median_filter(S, size=(kernel, 1), mode="reflect")
    perc_enh = ndimage.median_filter(S, size=(1, kernel), mode="reflect")
    mask_h = (harm_enh >= margin[0] * perc_enh).astype(np.float64)
    mask_p = (perc_enh >= margin[1] * harm_enh).astype(np.float64)
    mk = lambda m: Spectrogram(magnitudes=m, fft_size=spec.fft_size, hop=spec.hop,
                               sample_rate=spec.sample_rate)
    return mk(S * mask_h), mk(S * mask_p)


def extract_peak_sparse(clip: AudioClip, fft_size: int = FRAME_LEN, hop: int | None = None,
                        kernel: int = 31, margin: tuple[float, float] = (1.0, 3.0),
                        mad_k: float = 3.0, min_distance: int = 4) -> SparsePeakWaveform:
    """Sparse peak waveform: the clip gated to its percussive-onset frames.

    The percussive energy envelope (left-aligned framing) is thresholded at
    median + mad_k·MAD; local maxima at least ``min_distance`` frames apart
    become peak frames, and every sample outside those frames is zeroed.
    """
    if hop is None:
        hop = fft_size
    spec = _stft_left(np.asarray(clip.samples, dtype=np.float64), fft_size, hop, clip.sample_rate)
    _, perc = hpss(spec, kernel=kernel, margin=margin)
    env = (perc.magnitudes**2).sum(axis=1)
    med = np.median(env)
    mad = np.median(np.abs(env - med))
    thr = med + mad_k * mad
    # pad so an onset in the first or last frame still counts as a local maximum
    padded = np.concatenate([[env.min() - 1.0], env, [env.min() - 1.0]])
    peaks, _ = signal.find_peaks(padded, distance=min_distance)
    peaks -= 1
    peaks = peaks[env[peaks] > thr]  # strictly above threshold: silence has no peaks
    samples = np.zeros_like(clip.samples)
    for n in peaks:
        lo, hi = n * hop, min((n + 1) * hop, len(samples))
        samples[lo:hi] = clip.samples[lo:hi]
    return SparsePeakWaveform(samples=samples, peak_frames={int(p) for p in peaks}, frame_len=hop)
