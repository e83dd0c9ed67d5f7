import pytest
from helpers import build_workspace

from simsynth.config import ENV_VAR, load_config
from simsynth.errors import ConfigError
from simsynth.training import FinetuneConfig, TrainConfig


def _write(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(text, encoding="utf-8")
    return path


def test_workspace_config_round_trip(tmp_path):
    cfg = load_config(build_workspace(tmp_path))
    assert cfg.manifest.name == "manifest.jsonl"
    assert cfg.manifest.is_file()
    assert cfg.work_dir == cfg.manifest.parent / "work"
    assert cfg.sample_rate == 44100
    assert cfg.duration == 0.025
    assert cfg.n_samples == 1102
    assert cfg.train == TrainConfig(epochs=2, batch_size=2, lr=1e-3,
                                    stft_scales=(256, 64, 16), seed=3)
    assert cfg.finetune == FinetuneConfig(epochs=2, batch_size=2, lr=1e-3, seed=4)


def test_minimal_config_uses_defaults(tmp_path):
    (tmp_path / "manifest.jsonl").write_text("", encoding="utf-8")
    cfg = load_config(_write(tmp_path, "manifest: manifest.jsonl\n"))
    assert cfg.sample_rate == 44100
    assert cfg.duration == 4.0
    assert cfg.work_dir.name == "artifacts"
    assert cfg.train == TrainConfig()
    assert cfg.finetune == FinetuneConfig()


def test_paths_resolve_against_config_dir(tmp_path):
    nested = tmp_path / "deep" / "er"
    nested.mkdir(parents=True)
    cfg = load_config(_write(nested, "manifest: ../m.jsonl\nwork_dir: out\n"))
    assert cfg.manifest == nested.resolve() / ".." / "m.jsonl"
    assert cfg.work_dir == nested.resolve() / "out"


def test_env_var_fallback(tmp_path, monkeypatch):
    config = build_workspace(tmp_path)
    monkeypatch.setenv(ENV_VAR, str(config))
    assert load_config().manifest.is_file()
    monkeypatch.delenv(ENV_VAR)
    with pytest.raises(ConfigError, match=ENV_VAR):
        load_config()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.yaml")


@pytest.mark.parametrize("text, match", [
    ("manifest: [unclosed\n", "invalid YAML"),
    ("- just\n- a\n- list\n", "mapping"),
    ("manifest: m\nbogus_key: 1\n", "bogus_key"),
    ("work_dir: w\n", "manifest"),
    ("manifest: m\ntrain: 3\n", "must be a mapping"),
    ("manifest: m\ntrain: {epochz: 5}\n", "epochz"),
    ("manifest: m\ntrain: {epochs: 0}\n", "invalid train"),
    ("manifest: m\nfinetune: {batch_size: 0}\n", "invalid finetune"),
])
def test_rejects_malformed_documents(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(_write(tmp_path, text))


def test_embedder_sections_validated(tmp_path):
    (tmp_path / "m").write_text("", encoding="utf-8")
    cfg = load_config(_write(tmp_path, "manifest: m\nembedder: {dim: 2}\n"))
    with pytest.raises(ConfigError, match="embedder"):
        cfg.make_embedder()
    cfg = load_config(_write(tmp_path, "manifest: m\neval_embedder: {dimz: 8}\n"))
    with pytest.raises(ConfigError, match="eval_embedder"):
        cfg.make_eval_embedder()


def test_eval_embedder_differs_from_conditioning(tmp_path):
    (tmp_path / "m").write_text("", encoding="utf-8")
    cfg = load_config(_write(tmp_path, "manifest: m\n"))
    cond, ev = cfg.make_embedder(), cfg.make_eval_embedder()
    assert cond.dim != ev.dim or cond.seed != ev.seed


def test_arch_section(tmp_path):
    (tmp_path / "m").write_text("", encoding="utf-8")
    cfg = load_config(_write(tmp_path, "manifest: m\narch: {hidden: 16}\n"))
    arch = cfg.make_arch(n_channels=3)
    assert arch.hidden == 16 and arch.n_channels == 3

    cfg = load_config(_write(tmp_path, "manifest: m\narch: {n_channels: 5}\n"))
    with pytest.raises(ConfigError, match="n_channels"):
        cfg.make_arch(n_channels=3)

    cfg = load_config(_write(tmp_path, "manifest: m\narch: {hiden: 16}\n"))
    with pytest.raises(ConfigError, match="arch"):
        cfg.make_arch(n_channels=3)
