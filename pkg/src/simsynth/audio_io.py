"""Audio ingestion, dataset manifests, and waveform export.

WAV handling is delegated to scipy.io.wavfile; this layer adds the
fixed-duration normalization, PCM scaling, and manifest conventions the
rest of the pipeline assumes.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import AudioFormatError, ManifestError, SampleRateError

DEFAULT_RATE = 44100
DEFAULT_DURATION = 4.0

_PCM_SCALES = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 amplitudes in [-1, 1]
    sample_rate: int = DEFAULT_RATE
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def load_clip(path: str | Path, target_rate: int = DEFAULT_RATE,
              target_duration: float = DEFAULT_DURATION) -> AudioClip:
    """Read a mono-normalized, fixed-length clip.

    Shorter files are zero-padded at the end, longer ones truncated, so the
    result always has exactly round(target_rate · target_duration) samples.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as e:  # scipy raises bare ValueError on malformed RIFF
        raise AudioFormatError(f"{path}: not a readable waveform file ({e})") from e
    if rate != target_rate:
        raise SampleRateError(
            f"{path}: sample rate {rate} Hz, expected {target_rate} Hz (no resampler configured)"
        )
    if data.ndim == 2:  # average channels to mono
        data = data.mean(axis=1, dtype=np.float64)
    if data.dtype in _PCM_SCALES:
        samples = data.astype(np.float64) / _PCM_SCALES[data.dtype]
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    if not np.all(np.isfinite(samples)):
        raise AudioFormatError(f"{path}: non-finite samples")
    n_target = round(target_rate * target_duration)
    if len(samples) >= n_target:
        samples = samples[:n_target]
    else:
        samples = np.concatenate([samples, np.zeros(n_target - len(samples))])
    return AudioClip(samples=samples, sample_rate=target_rate, id=path.stem)


def wav_bytes(clip: AudioClip, fmt: str = "float") -> bytes:
    """RIFF/WAVE blob for a clip; ``fmt`` is ``"float"`` (32-bit) or ``"pcm16"``."""
    if not np.all(np.isfinite(clip.samples)):
        raise AudioFormatError("refusing to write non-finite samples")
    buf = io.BytesIO()
    if fmt == "float":
        wavfile.write(buf, clip.sample_rate, clip.samples.astype(np.float32))
    elif fmt == "pcm16":
        q = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
        wavfile.write(buf, clip.sample_rate, q)
    else:
        raise AudioFormatError(f"unknown output format {fmt!r}")
    return buf.getvalue()


def write_clip(clip: AudioClip, path: str | Path, fmt: str = "float") -> None:
    """Export as RIFF/WAVE; ``fmt`` is ``"float"`` (32-bit) or ``"pcm16"``."""
    Path(path).write_bytes(wav_bytes(clip, fmt))


@dataclass
class ManifestEntry:
    path: str
    label: str
    split: str  # "train" | "test"


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    class_labels: list[str] = field(default_factory=list)

    @property
    def n_channels(self) -> int:
        return len(self.class_labels)

    def channel_index(self, label: str) -> int:
        return self.class_labels.index(label)

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


def _hash_split(path: str, test_fraction: float) -> str:
    digest = hashlib.blake2b(path.encode("utf-8"), digest_size=8).digest()
    frac = int.from_bytes(digest, "little") / 2.0**64
    return "test" if frac < test_fraction else "train"


def load_manifest(path: str | Path, test_fraction: float = 0.1) -> DatasetManifest:
    """Parse a line-delimited manifest of {path, class, split?} records.

    Class labels keep first-appearance order (that order defines the
    similarity-channel layout); entries without an explicit split are
    assigned train/test by a deterministic hash of the clip path.
    """
    manifest = DatasetManifest()
    seen_paths: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}:{lineno}: invalid record ({e})") from e
        try:
            clip_path = record["path"]
            label = record["class"]
        except (KeyError, TypeError):
            raise ManifestError(f"{path}:{lineno}: record needs 'path' and 'class' fields")
        if not label:
            raise ManifestError(f"{path}:{lineno}: empty class field")
        if clip_path in seen_paths:
            raise ManifestError(f"{path}:{lineno}: duplicate clip path {clip_path!r}")
        seen_paths.add(clip_path)
        split = record.get("split")
        if split is None:
            split = _hash_split(clip_path, test_fraction)
        elif split not in ("train", "test"):
            raise ManifestError(f"{path}:{lineno}: split must be 'train' or 'test', got {split!r}")
        if label not in manifest.class_labels:
            manifest.class_labels.append(label)
        manifest.entries.append(ManifestEntry(path=clip_path, label=label, split=split))
    return manifest
