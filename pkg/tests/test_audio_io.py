"""Clip ingestion, export, and manifest parsing."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from simsynth import audio_io
from simsynth.errors import AudioFormatError, ManifestError, SampleRateError


def write_wav(path, rate, data):
    wavfile.write(path, rate, data)
    return path


def test_four_second_clip_sample_count(tmp_path):
    path = write_wav(tmp_path / "a.wav", 44100, np.zeros(44100 * 4, dtype=np.float32))
    clip = audio_io.load_clip(path)
    assert len(clip.samples) == 176400
    assert clip.sample_rate == 44100
    assert clip.id == "a"


def test_short_clip_zero_padded(tmp_path):
    path = write_wav(tmp_path / "b.wav", 44100, np.ones(88200, dtype=np.float32) * 0.25)
    clip = audio_io.load_clip(path)
    assert len(clip.samples) == 176400
    assert np.all(clip.samples[88200:] == 0.0)
    assert np.all(clip.samples[:88200] == 0.25)


def test_long_clip_truncated(tmp_path):
    path = write_wav(tmp_path / "c.wav", 16000, np.arange(16000 * 3, dtype=np.float32))
    clip = audio_io.load_clip(path, target_rate=16000, target_duration=2.0)
    assert len(clip.samples) == 32000


def test_pcm16_full_scale_value(tmp_path):
    data = np.array([32767, -32768, 0, 16384], dtype=np.int16)
    path = write_wav(tmp_path / "d.wav", 44100, data)
    clip = audio_io.load_clip(path, target_duration=4 / 44100)
    np.testing.assert_allclose(clip.samples, [32767 / 32768, -1.0, 0.0, 0.5])


def test_stereo_averaged_to_mono(tmp_path):
    data = np.stack([np.full(100, 0.5, np.float32), np.full(100, -0.1, np.float32)], axis=1)
    path = write_wav(tmp_path / "e.wav", 44100, data)
    clip = audio_io.load_clip(path, target_duration=100 / 44100)
    np.testing.assert_allclose(clip.samples, np.full(100, 0.2), atol=1e-7)


def test_sample_rate_mismatch_raises(tmp_path):
    path = write_wav(tmp_path / "f.wav", 22050, np.zeros(100, dtype=np.float32))
    with pytest.raises(SampleRateError):
        audio_io.load_clip(path)


def test_corrupt_file_raises_format_error(tmp_path):
    path = tmp_path / "g.wav"
    path.write_bytes(b"definitely not RIFF data")
    with pytest.raises(AudioFormatError):
        audio_io.load_clip(path)


def test_float_write_round_trip(tmp_path):
    samples = np.random.default_rng(0).uniform(-1, 1, 500).astype(np.float32).astype(np.float64)
    clip = audio_io.AudioClip(samples=samples, sample_rate=44100, id="rt")
    path = tmp_path / "rt.wav"
    audio_io.write_clip(clip, path, fmt="float")
    back = audio_io.load_clip(path, target_duration=500 / 44100)
    np.testing.assert_array_equal(back.samples, samples)


def test_pcm_write_quantization_bound(tmp_path):
    samples = np.random.default_rng(1).uniform(-1, 1, 500)
    samples[0] = 0.5
    clip = audio_io.AudioClip(samples=samples, sample_rate=44100)
    path = tmp_path / "q.wav"
    audio_io.write_clip(clip, path, fmt="pcm16")
    back = audio_io.load_clip(path, target_duration=500 / 44100)
    assert np.max(np.abs(back.samples - samples)) <= 1 / 32768
    assert abs(back.samples[0] - 0.5) <= 1 / 32768


def test_nan_samples_rejected_before_write(tmp_path):
    clip = audio_io.AudioClip(samples=np.array([0.0, np.nan]), sample_rate=44100)
    path = tmp_path / "nan.wav"
    with pytest.raises(AudioFormatError):
        audio_io.write_clip(clip, path)
    assert not path.exists()


def make_manifest(tmp_path, records):
    path = tmp_path / "manifest.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in records), encoding="utf-8")
    return path


def test_labels_in_first_appearance_order(tmp_path):
    path = make_manifest(tmp_path, [
        {"path": "x1.wav", "class": "A"},
        {"path": "x2.wav", "class": "B"},
        {"path": "x3.wav", "class": "A"},
    ])
    m = audio_io.load_manifest(path)
    assert m.class_labels == ["A", "B"]
    assert m.n_channels == 2


def test_explicit_split_honored(tmp_path):
    path = make_manifest(tmp_path, [
        {"path": "x1.wav", "class": "A", "split": "test"},
        {"path": "x2.wav", "class": "A", "split": "train"},
    ])
    m = audio_io.load_manifest(path)
    assert [e.split for e in m.entries] == ["test", "train"]


def test_duplicate_path_rejected(tmp_path):
    path = make_manifest(tmp_path, [
        {"path": "x1.wav", "class": "A"},
        {"path": "x1.wav", "class": "B"},
    ])
    with pytest.raises(ManifestError):
        audio_io.load_manifest(path)


def test_empty_class_rejected(tmp_path):
    path = make_manifest(tmp_path, [{"path": "x1.wav", "class": ""}])
    with pytest.raises(ManifestError):
        audio_io.load_manifest(path)


def test_bad_split_value_rejected(tmp_path):
    path = make_manifest(tmp_path, [{"path": "x1.wav", "class": "A", "split": "validation"}])
    with pytest.raises(ManifestError):
        audio_io.load_manifest(path)


def test_hash_split_deterministic_and_near_ratio(tmp_path):
    records = [{"path": f"clip_{i:04d}.wav", "class": "A"} for i in range(2000)]
    path = make_manifest(tmp_path, records)
    m1 = audio_io.load_manifest(path)
    m2 = audio_io.load_manifest(path)
    assert [e.split for e in m1.entries] == [e.split for e in m2.entries]
    test_count = sum(e.split == "test" for e in m1.entries)
    assert 0.07 < test_count / 2000 < 0.13


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["stone", "wood", "grass", "metal", "mud"]), min_size=1, max_size=20))
def test_channel_index_matches_label_position(tmp_path_factory, labels):
    tmp_path = tmp_path_factory.mktemp("m")
    records = [{"path": f"c{i}.wav", "class": lab} for i, lab in enumerate(labels)]
    path = make_manifest(tmp_path, records)
    m = audio_io.load_manifest(path)
    for entry in m.entries:
        assert m.class_labels[m.channel_index(entry.label)] == entry.label
    assert len(set(m.class_labels)) == len(m.class_labels)
