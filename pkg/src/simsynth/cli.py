"""Command-line front end for the similarity-conditioned effects pipeline.

Every subcommand takes ``--config`` (or the ``SIMI_SFX_CONFIG`` environment
variable), an optional ``--seed`` override, and ``--dry-run`` which validates
inputs and exits without writing anything.  Exit codes: 0 on success, 1 on an
operational failure (a single JSON line on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, load_clip, load_manifest, write_clip
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ProjectConfig, load_config
from .dataset import PreparedDataset, fit_dataset_stats, prepare_dataset
from .errors import ConfigError, ManifestError, ShapeError, SimSynthError
from .evaluation import (
    SweepSpec,
    controllability_sweep,
    evaluate_reconstruction,
    kde_report,
    ols_exponential,
    write_density_table,
    write_report,
)
from .features import extract_features, write_feature_track
from .similarity import (
    load_class_stats,
    load_external_embeddings,
    save_class_stats,
    write_embeddings,
)
from .synth import export_samples, synthesize
from .training import finetune, train, unpack_weights


def _require(path: Path, hint: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"missing artifact: {path} (run '{hint}' first)")
    return path


def _model_path(cfg: ProjectConfig, explicit: str | None) -> Path:
    """Explicit path, else the finetuned checkpoint, else the base one."""
    if explicit is not None:
        path = Path(explicit)
        if not path.is_file():
            raise ConfigError(f"model not found: {path}")
        return path
    for name in ("model_finetuned.ckpt", "model.ckpt"):
        path = cfg.work_dir / name
        if path.is_file():
            return path
    raise ConfigError(f"no checkpoint in {cfg.work_dir}; run 'train' first")


def _reference_clip(cfg: ProjectConfig, manifest, clip_id: str) -> AudioClip:
    for entry in manifest.entries:
        if Path(entry.path).stem == clip_id:
            return load_clip(cfg.manifest.parent / entry.path,
                             cfg.sample_rate, cfg.duration)
    raise ManifestError(f"unknown reference clip: {clip_id}")


def _prepared(cfg: ProjectConfig, manifest) -> tuple[PreparedDataset, list]:
    embeddings = load_external_embeddings(
        _require(cfg.work_dir / "embeddings.tsv", "embed"))
    stats = load_class_stats(_require(cfg.work_dir / "class_stats.tsv", "stats"))
    data = prepare_dataset(manifest, cfg.manifest.parent, embeddings, stats,
                           cfg.sample_rate, cfg.duration)
    return data, stats


def _parse_similarity(text: str, n_channels: int) -> np.ndarray:
    try:
        values = [float(tok) for tok in text.split(",")]
    except ValueError as e:
        raise ConfigError(f"similarity must be a comma-separated float list: {e}")
    if len(values) != n_channels:
        raise ShapeError(f"similarity must have {n_channels} values")
    return np.asarray(values, dtype=np.float64)


def _checkpoint_channels(ckpt: Checkpoint) -> int:
    return int(ckpt.config["arch"]["n_channels"])


# --- subcommands ------------------------------------------------------------

def _cmd_features(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    if args.dry_run:
        return 0
    out_dir = cfg.work_dir / "features"
    out_dir.mkdir(parents=True, exist_ok=True)
    for entry in manifest.entries:
        clip = load_clip(cfg.manifest.parent / entry.path,
                         cfg.sample_rate, cfg.duration)
        write_feature_track(extract_features(clip), out_dir / f"{clip.id}.tsv")
    print(f"wrote {len(manifest.entries)} feature tracks to {out_dir}")
    return 0


def _cmd_embed(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    cond, ev = cfg.make_embedder(), cfg.make_eval_embedder()
    if args.dry_run:
        return 0
    cfg.work_dir.mkdir(parents=True, exist_ok=True)
    cond_embs, eval_embs = {}, {}
    for entry in manifest.entries:
        clip = load_clip(cfg.manifest.parent / entry.path,
                         cfg.sample_rate, cfg.duration)
        cond_embs[clip.id] = cond.embed_clip(clip)
        eval_embs[clip.id] = ev.embed_clip(clip)
    write_embeddings(cond_embs, cfg.work_dir / "embeddings.tsv")
    write_embeddings(eval_embs, cfg.work_dir / "eval_embeddings.tsv")
    print(f"embedded {len(cond_embs)} clips "
          f"(conditioning dim {cond.dim}, evaluation dim {ev.dim})")
    return 0


def _cmd_stats(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    emb_path = _require(cfg.work_dir / "embeddings.tsv", "embed")
    eval_path = _require(cfg.work_dir / "eval_embeddings.tsv", "embed")
    if args.dry_run:
        return 0
    for src, dst in ((emb_path, "class_stats.tsv"),
                     (eval_path, "eval_class_stats.tsv")):
        stats = fit_dataset_stats(manifest, load_external_embeddings(src))
        save_class_stats(stats, cfg.work_dir / dst)
    print(f"fitted stats for {manifest.n_channels} classes")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    arch = cfg.make_arch(manifest.n_channels)
    _require(cfg.work_dir / "embeddings.tsv", "embed")
    _require(cfg.work_dir / "class_stats.tsv", "stats")
    if args.dry_run:
        return 0
    data, stats = _prepared(cfg, manifest)
    train_cfg = cfg.train if args.seed is None else \
        dataclasses.replace(cfg.train, seed=args.seed)
    ckpt = train(data, stats, train_cfg, arch=arch,
                 history_path=cfg.work_dir / "train_history.jsonl")
    out = cfg.work_dir / "model.ckpt"
    save_checkpoint(ckpt, out)
    print(f"wrote {out} after {train_cfg.epochs} epochs")
    return 0


def _cmd_finetune(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    model = Path(args.model) if args.model else cfg.work_dir / "model.ckpt"
    _require(model, "train")
    _require(cfg.work_dir / "embeddings.tsv", "embed")
    _require(cfg.work_dir / "class_stats.tsv", "stats")
    if args.dry_run:
        return 0
    data, stats = _prepared(cfg, manifest)
    ft_cfg = cfg.finetune if args.seed is None else \
        dataclasses.replace(cfg.finetune, seed=args.seed)
    ckpt = finetune(load_checkpoint(model), data, stats, ft_cfg,
                    embedder=cfg.make_embedder(),
                    history_path=cfg.work_dir / "finetune_history.jsonl")
    out = cfg.work_dir / "model_finetuned.ckpt"
    save_checkpoint(ckpt, out)
    print(f"wrote {out} after {ft_cfg.epochs} epochs")
    return 0


def _cmd_synth(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    ckpt = load_checkpoint(_model_path(cfg, args.model))
    similarity = _parse_similarity(args.similarity, _checkpoint_channels(ckpt))
    reference = _reference_clip(cfg, manifest, args.reference)
    out = Path(args.out) if args.out else cfg.work_dir / "render.wav"
    if args.dry_run:
        return 0
    rendered = synthesize(extract_features(reference), similarity,
                          unpack_weights(ckpt), seed=args.seed or 0)
    samples = export_samples(rendered, target_len=len(reference.samples))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_clip(AudioClip(samples, cfg.sample_rate, id=out.stem), out,
               fmt=args.format)
    print(f"wrote {out} ({len(samples)} samples at {cfg.sample_rate} Hz)")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    ckpt = load_checkpoint(_model_path(cfg, args.model))
    reference = _reference_clip(cfg, manifest, args.reference)
    eval_stats = load_class_stats(
        _require(cfg.work_dir / "eval_class_stats.tsv", "stats"))
    spec = SweepSpec(channel=args.channel, steps=args.steps,
                     fixed_value=args.fixed, reference_id=args.reference)
    n_channels = _checkpoint_channels(ckpt)
    if not 0 <= spec.channel < n_channels:
        raise ShapeError(
            f"channel {spec.channel} out of range for {n_channels} channels")
    if args.dry_run:
        return 0
    points = controllability_sweep(ckpt, reference, spec,
                                   cfg.make_eval_embedder(), eval_stats,
                                   seed=args.seed or 0)
    out = Path(args.out) if args.out else cfg.work_dir / "sweep.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["c\tmd_n"]
    lines += [f"{float(c)!r}\t{float(m)!r}" for c, m in points]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    fit = ols_exponential(points)
    summary = {"a": fit.a, "b": fit.b, "r_squared": fit.r_squared,
               "degenerate": fit.degenerate, "channel": spec.channel,
               "steps": spec.steps}
    (out.parent / "sweep_fit.json").write_text(
        json.dumps(summary, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    ckpt = load_checkpoint(_model_path(cfg, args.model))
    if args.dry_run:
        return 0
    data, _ = _prepared(cfg, manifest)
    report = evaluate_reconstruction(ckpt, data, cfg.make_eval_embedder(),
                                     seed=args.seed or 0)
    out = Path(args.out) if args.out else cfg.work_dir / "report.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    overall = report.overall()
    print(json.dumps({"class": overall.label, "n": overall.n,
                      "lsd_mean": overall.lsd_mean,
                      "frechet": overall.frechet}, sort_keys=True))
    return 0


def _cmd_kde(args) -> int:
    cfg = load_config(args.config)
    manifest = load_manifest(cfg.manifest)
    if args.dry_run:
        return 0
    data, _ = _prepared(cfg, manifest)
    clips = list(data.train) + list(data.test)
    scores = np.stack([c.similarity for c in clips])
    out_dir = Path(args.out) if args.out else cfg.work_dir / "kde"
    out_dir.mkdir(parents=True, exist_ok=True)
    for label, est in kde_report(scores, list(manifest.class_labels)).items():
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label)
        write_density_table(est, out_dir / f"{safe}.tsv")
    print(f"wrote {manifest.n_channels} density tables to {out_dir}")
    return 0


def _cmd_serve(args) -> int:
    cfg = load_config(args.config)
    from .service import create_app
    app = create_app(cfg)
    if args.dry_run:
        return 0
    import uvicorn
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simsynth",
        description="similarity-conditioned sound-effect synthesis pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, metavar="YAML",
                        help="project config (default: $SIMI_SFX_CONFIG)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the stage seed")
    common.add_argument("--dry-run", action="store_true",
                        help="validate inputs, write nothing")
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, func, help_, **extra):
        p = sub.add_parser(name, parents=[common], help=help_, **extra)
        p.set_defaults(func=func)
        return p

    cmd("features", _cmd_features, "extract control features for every clip")
    cmd("embed", _cmd_embed, "embed every clip with both embedders")
    cmd("stats", _cmd_stats, "fit per-class similarity statistics")
    cmd("train", _cmd_train, "reconstruction training on the train split")
    p = cmd("finetune", _cmd_finetune, "conditioning finetune of a checkpoint")
    p.add_argument("--model", default=None, help="input checkpoint")

    p = cmd("synth", _cmd_synth, "render one clip from a reference")
    p.add_argument("--reference", required=True, help="manifest clip id")
    p.add_argument("--similarity", required=True,
                   help="comma-separated scores, e.g. 0.0,1.0")
    p.add_argument("--model", default=None, help="checkpoint to render with")
    p.add_argument("--out", default=None, help="output WAV path")
    p.add_argument("--format", default="float", choices=("float", "pcm16"))

    p = cmd("sweep", _cmd_sweep, "controllability sweep over one channel")
    p.add_argument("--reference", required=True, help="manifest clip id")
    p.add_argument("--channel", required=True, type=int)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--fixed", type=float, default=1.0,
                   help="value held on the other channels")
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None)

    p = cmd("evaluate", _cmd_evaluate, "reconstruction metrics on the test split")
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None)

    p = cmd("kde", _cmd_kde, "per-class score density tables")
    p.add_argument("--out", default=None, help="output directory")

    p = cmd("serve", _cmd_serve, "run the HTTP synthesis service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except (SimSynthError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
