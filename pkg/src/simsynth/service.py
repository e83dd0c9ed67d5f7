"""HTTP synthesis service.

The app is a read-only view over a finished pipeline run: checkpoints and
class statistics come from the project work directory, references from the
manifest.  Handlers never mutate that state, so concurrent requests are safe;
the only shared mutable structure is a bounded render cache behind a lock.

Endpoints
---------
GET  /v1/health                liveness and counts
GET  /v1/models                available checkpoints
GET  /v1/references            manifest clips usable as references
POST /v1/synthesize            render audio for (model, reference, similarity)
GET  /v1/audio/{render_id}     WAV bytes of a previous render
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .audio_io import AudioClip, load_clip, load_manifest, wav_bytes
from .checkpoint import load_checkpoint
from .config import ProjectConfig
from .errors import ConfigError
from .features import FeatureTrack, extract_features, stft
from .similarity import load_class_stats, mahalanobis, normalize_with_stats
from .synth import export_samples, synthesize
from .training import unpack_weights

RENDER_CACHE_SIZE = 64
SPEC_FLOOR = 1e-7


class SynthesizeRequest(BaseModel):
    reference: str
    similarity: list[float]
    model: str | None = None
    seed: int = 0
    spectrogram: bool = False


@dataclass
class _Model:
    name: str
    path: Path
    checkpoint_hash: str
    config: dict
    _weights: object = None

    def weights(self, lock: threading.Lock):
        with lock:
            if self._weights is None:
                self._weights = unpack_weights(load_checkpoint(self.path))
            return self._weights


@dataclass
class _State:
    cfg: ProjectConfig
    manifest: object
    models: dict[str, _Model]
    stats: list
    embedder: object
    lock: threading.Lock = field(default_factory=threading.Lock)
    features: dict[str, tuple[AudioClip, FeatureTrack]] = field(default_factory=dict)
    renders: OrderedDict = field(default_factory=OrderedDict)

    def default_model(self) -> str:
        for name in ("model_finetuned", "model"):
            if name in self.models:
                return name
        return sorted(self.models)[0]

    def reference(self, clip_id: str) -> tuple[AudioClip, FeatureTrack]:
        with self.lock:
            cached = self.features.get(clip_id)
        if cached is not None:
            return cached
        entry = next((e for e in self.manifest.entries
                      if _stem(e.path) == clip_id), None)
        if entry is None:
            raise HTTPException(404, f"unknown reference: {clip_id}")
        clip = load_clip(self.cfg.manifest.parent / entry.path,
                         self.cfg.sample_rate, self.cfg.duration)
        track = extract_features(clip)
        with self.lock:
            self.features[clip_id] = (clip, track)
        return clip, track

    def remember(self, render_id: str, wav: bytes) -> None:
        with self.lock:
            self.renders[render_id] = wav
            self.renders.move_to_end(render_id)
            while len(self.renders) > RENDER_CACHE_SIZE:
                self.renders.popitem(last=False)


def _stem(path) -> str:
    return Path(path).stem


def _file_hash(path: Path) -> str:
    return hashlib.blake2b(path.read_bytes(), digest_size=16).hexdigest()


def _log_spectrogram(samples: np.ndarray, sample_rate: int) -> list[list[float]]:
    """frames x 128 rows of log10 magnitude (Nyquist bin dropped)."""
    spec = stft(AudioClip(samples, sample_rate, id="render"),
                fft_size=256, hop=256)
    mags = np.log10(spec.magnitudes[:, :128] + SPEC_FLOOR)
    return [[float(v) for v in row] for row in mags]


def create_app(cfg: ProjectConfig) -> FastAPI:
    manifest = load_manifest(cfg.manifest)
    stats_path = cfg.work_dir / "class_stats.tsv"
    if not stats_path.is_file():
        raise ConfigError(f"missing artifact: {stats_path} (run 'stats' first)")
    models = {}
    for path in sorted(cfg.work_dir.glob("*.ckpt")):
        ckpt = load_checkpoint(path)
        models[path.stem] = _Model(name=path.stem, path=path,
                                   checkpoint_hash=_file_hash(path),
                                   config=ckpt.config)
    if not models:
        raise ConfigError(f"no checkpoint in {cfg.work_dir}; run 'train' first")
    state = _State(cfg=cfg, manifest=manifest, models=models,
                   stats=load_class_stats(stats_path),
                   embedder=cfg.make_embedder())

    app = FastAPI(title="simsynth", version="1.0")
    # the fader panel is served statically from anywhere, so renders must be
    # fetchable cross-origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "models": len(state.models),
                "references": len(state.manifest.entries),
                "sample_rate": cfg.sample_rate}

    @app.get("/v1/models")
    def list_models():
        rows = []
        for name in sorted(state.models):
            m = state.models[name]
            rows.append({
                "id": name,
                "kind": m.config.get("kind"),
                "n_channels": m.config["arch"]["n_channels"],
                "epochs_completed": m.config.get("epochs_completed"),
                "checkpoint_hash": m.checkpoint_hash,
            })
        return {"models": rows}

    @app.get("/v1/references")
    def list_references():
        rows = [{"id": _stem(e.path), "label": e.label, "split": e.split}
                for e in state.manifest.entries]
        return {"references": rows, "class_labels": list(manifest.class_labels)}

    @app.post("/v1/synthesize")
    def do_synthesize(req: SynthesizeRequest):
        started = time.perf_counter()
        name = req.model or state.default_model()
        model = state.models.get(name)
        if model is None:
            raise HTTPException(404, f"unknown model: {name}")
        n_channels = int(model.config["arch"]["n_channels"])
        if len(req.similarity) != n_channels:
            raise HTTPException(400, f"similarity must have {n_channels} values")
        for i, value in enumerate(req.similarity):
            if not 0.0 <= value <= 1.0:
                raise HTTPException(400, f"channel {i} out of range")
        clip, track = state.reference(req.reference)

        similarity = np.asarray(req.similarity, dtype=np.float64)
        rendered = synthesize(track, similarity, model.weights(state.lock),
                              seed=req.seed)
        samples = export_samples(rendered, target_len=len(clip.samples))
        out_clip = AudioClip(samples, cfg.sample_rate, id="render")
        wav = wav_bytes(out_clip, fmt="pcm16")

        emb = state.embedder.embed_clip(out_clip)
        raw = np.array([mahalanobis(emb.vector, st) for st in state.stats])
        measured = normalize_with_stats(raw, state.stats)[0]

        render_id = hashlib.blake2b(
            json.dumps({"model": name, "reference": req.reference,
                        "similarity": req.similarity, "seed": req.seed},
                       sort_keys=True).encode(),
            digest_size=8).hexdigest()
        state.remember(render_id, wav)
        return {
            "render_id": render_id,
            "model": name,
            "reference": req.reference,
            "similarity": req.similarity,
            "measured_similarity": [float(v) for v in measured],
            "checkpoint_hash": model.checkpoint_hash,
            "sample_rate": cfg.sample_rate,
            "n_samples": int(len(samples)),
            "latency_ms": (time.perf_counter() - started) * 1000.0,
            "audio_wav_base64": base64.b64encode(wav).decode("ascii"),
            "spectrogram": (_log_spectrogram(samples, cfg.sample_rate)
                            if req.spectrogram else None),
        }

    @app.get("/v1/audio/{render_id}")
    def get_audio(render_id: str):
        with state.lock:
            wav = state.renders.get(render_id)
        if wav is None:
            raise HTTPException(404, f"unknown render: {render_id}")
        return Response(content=wav, media_type="audio/wav")

    return app
