from types import SimpleNamespace

import pytest
from helpers import MICRO_ARCH, build_workspace, fitted_stats, micro_dataset

from simsynth.audio_io import load_clip, load_manifest
from simsynth.cli import main as cli_main
from simsynth.config import load_config
from simsynth.dataset import fit_dataset_stats, prepare_dataset
from simsynth.toydata import make_toy_corpus
from simsynth.training import TrainConfig, finetune, train


@pytest.fixture(scope="session")
def micro_checkpoint():
    """A 2-epoch micro training run shared by evaluation/CLI/service tests."""
    dataset = micro_dataset()
    stats = fitted_stats()
    config = TrainConfig(epochs=2, batch_size=2, lr=1e-3,
                         stft_scales=(256, 64, 16), seed=3)
    return dataset, stats, config, train(dataset, stats, config, arch=MICRO_ARCH)


@pytest.fixture(scope="session")
def cli_workspace(tmp_path_factory):
    """Full pipeline run (features through finetune) in a throwaway project."""
    root = tmp_path_factory.mktemp("project")
    config = build_workspace(root)
    for cmd in ("features", "embed", "stats", "train", "finetune"):
        assert cli_main([cmd, "--config", str(config)]) == 0, cmd
    return root


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """The scaled-down end-to-end run the acceptance checks measure: 16-clip
    synthetic corpus, 500-epoch training, 400-epoch finetune.  Everything is
    seeded, so downstream assertions see reproducible numbers.  Takes a bit
    over a minute; shared session-wide."""
    root = tmp_path_factory.mktemp("toy")
    config = load_config(make_toy_corpus(root))
    manifest = load_manifest(config.manifest)
    cond, ev = config.make_embedder(), config.make_eval_embedder()
    embeddings, eval_embeddings = {}, {}
    for entry in manifest.entries:
        clip = load_clip(config.manifest.parent / entry.path,
                         config.sample_rate, config.duration)
        embeddings[clip.id] = cond.embed_clip(clip)
        eval_embeddings[clip.id] = ev.embed_clip(clip)
    stats = fit_dataset_stats(manifest, embeddings)
    eval_stats = fit_dataset_stats(manifest, eval_embeddings)
    data = prepare_dataset(manifest, config.manifest.parent, embeddings, stats,
                           config.sample_rate, config.duration)
    arch = config.make_arch(manifest.n_channels)
    trained = train(data, stats, config.train, arch=arch)
    tuned = finetune(trained, data, stats, config.finetune, embedder=cond)
    return SimpleNamespace(root=root, config=config, data=data, stats=stats,
                           eval_stats=eval_stats, cond=cond, ev=ev, arch=arch,
                           trained=trained, tuned=tuned)
