import json

import numpy as np
import pytest
from helpers import MICRO_ARCH, fitted_stats, micro_dataset
from hypothesis import given, settings
from hypothesis import strategies as st

from simsynth.audio_io import AudioClip
from simsynth.checkpoint import Checkpoint
from simsynth.embedder import BuiltinEmbedder
from simsynth.errors import ContractViolation, DegenerateRegressionError, ShapeError
from simsynth.evaluation import (
    EvaluationReport,
    RegressionResult,
    SweepSpec,
    controllability_sweep,
    evaluate_reconstruction,
    frechet_distance,
    gaussian_stats,
    kde_report,
    lsd,
    ols_exponential,
    sweep_weights,
    write_density_table,
    write_report,
)
from simsynth.features import stft
from simsynth.nn import init_decoder_weights
from simsynth.training import pack_checkpoint, unpack_weights

RNG = np.random.default_rng(0xE7A1)


# ---------------------------------------------------------------------------
# log-spectral distance


class TestLsd:
    def test_identical_zero(self):
        x = RNG.standard_normal(8192)
        assert lsd(x, x.copy()) == 0.0

    def test_uniform_decade_gain(self):
        x = 0.05 * RNG.standard_normal(16384)
        # one decade of gain shifts every log10 bin by exactly 1; the 1e-7
        # floor only matters for bins forty dB below this noise floor
        assert lsd(x, 10.0 * x) == pytest.approx(1.0, abs=1e-4)

    def test_symmetric(self):
        a, b = RNG.standard_normal(4096), RNG.standard_normal(4096)
        assert lsd(a, b) == pytest.approx(lsd(b, a), rel=1e-12)

    def test_matches_double_loop_oracle(self):
        a, b = RNG.standard_normal(4096), RNG.standard_normal(4096)
        sa = stft(AudioClip(samples=a), 2048, 512).magnitudes
        sb = stft(AudioClip(samples=b), 2048, 512).magnitudes
        acc = 0.0
        for fr in range(sa.shape[0]):
            inner = 0.0
            for k in range(sa.shape[1]):
                d = np.log10(sa[fr, k] + 1e-7) - np.log10(sb[fr, k] + 1e-7)
                inner += d * d
            acc += np.sqrt(inner / sa.shape[1])
        assert lsd(a, b) == pytest.approx(acc / sa.shape[0], abs=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            lsd(np.zeros(4096), np.zeros(4097))


# ---------------------------------------------------------------------------
# Fréchet distance


def _random_psd(dim, rng):
    a = rng.standard_normal((dim, dim + 2))
    return a @ a.T / (dim + 2)


class TestFrechet:
    def test_identical_gaussians(self):
        mu, cov = RNG.standard_normal(5), _random_psd(5, RNG)
        assert frechet_distance((mu, cov), (mu.copy(), cov.copy())) == 0.0

    def test_one_dimensional_analytic(self):
        m1, s1, m2, s2 = 0.3, 0.7, -1.1, 1.9
        got = frechet_distance((np.array([m1]), np.array([[s1**2]])),
                               (np.array([m2]), np.array([[s2**2]])))
        assert got == pytest.approx((m1 - m2) ** 2 + (s1 - s2) ** 2, rel=1e-12)

    def test_matches_symmetric_formulation_oracle(self):
        rng = np.random.default_rng(44)
        mu_a, mu_b = rng.standard_normal(3), rng.standard_normal(3)
        cov_a, cov_b = _random_psd(3, rng), _random_psd(3, rng)
        # oracle: diagonalize A^{1/2} B A^{1/2}, which is symmetric PSD
        w, v = np.linalg.eigh(cov_a)
        root_a = v @ np.diag(np.sqrt(np.clip(w, 0, None))) @ v.T
        inner = root_a @ cov_b @ root_a
        wi = np.clip(np.linalg.eigh(inner)[0], 0.0, None)
        oracle = (np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b)
                  - 2.0 * np.sum(np.sqrt(wi)))
        got = frechet_distance((mu_a, cov_a), (mu_b, cov_b))
        assert got == pytest.approx(oracle, abs=1e-8)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_and_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        a = (rng.standard_normal(4), _random_psd(4, rng))
        b = (rng.standard_normal(4), _random_psd(4, rng))
        ab, ba = frechet_distance(a, b), frechet_distance(b, a)
        assert ab >= 0.0
        assert ab == pytest.approx(ba, rel=1e-8, abs=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            frechet_distance((np.zeros(3), np.eye(3)), (np.zeros(4), np.eye(4)))

    def test_gaussian_stats_oracle(self):
        x = RNG.standard_normal((7, 4))
        mu, cov = gaussian_stats(x)
        assert np.allclose(mu, x.mean(axis=0))
        oracle = np.zeros((4, 4))
        for row in x:
            oracle += np.outer(row - mu, row - mu)
        assert np.allclose(cov, oracle / 6, atol=1e-12)

    def test_gaussian_stats_single_row(self):
        mu, cov = gaussian_stats(np.ones((1, 3)))
        assert np.array_equal(cov, np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# exponential regression


class TestOls:
    def test_exact_exponential_data(self):
        x = np.linspace(0.0, 1.0, 11)
        pts = list(zip(x, 2.0 * np.exp(0.5 * x)))
        res = ols_exponential(pts)
        assert res.a == pytest.approx(2.0, abs=1e-10)
        assert res.b == pytest.approx(0.5, abs=1e-10)
        assert res.r_squared == pytest.approx(1.0, abs=1e-10)
        assert not res.degenerate

    def test_constant_y_flat_fit(self):
        res = ols_exponential([(0.0, 3.0), (0.5, 3.0), (1.0, 3.0)])
        assert res.b == 0.0
        assert res.a == pytest.approx(3.0, rel=1e-12)
        assert res.r_squared == 1.0
        assert res.degenerate

    def test_constant_x_rejected(self):
        with pytest.raises(DegenerateRegressionError):
            ols_exponential([(0.5, 1.0), (0.5, 2.0), (0.5, 3.0)])

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            ols_exponential([(0.0, 1.0), (1.0, 2.0)])

    def test_matches_grid_search_oracle(self):
        rng = np.random.default_rng(9)
        x = np.linspace(0.0, 1.0, 40)
        y = 1.7 * np.exp(0.9 * x) * np.exp(0.05 * rng.standard_normal(40))
        res = ols_exponential(list(zip(x, y)))

        ly = np.log(y)
        ln_a, b = 0.0, 0.0
        width = 2.0
        for _ in range(6):  # refine the grid around the running best
            las = np.linspace(ln_a - width, ln_a + width, 41)
            bs = np.linspace(b - width, b + width, 41)
            errs = ((ly[None, None, :] - (las[:, None, None] + bs[None, :, None] * x)) ** 2).sum(-1)
            i, j = np.unravel_index(np.argmin(errs), errs.shape)
            ln_a, b = las[i], bs[j]
            width /= 10.0
        assert res.a == pytest.approx(np.exp(ln_a), abs=1e-3)
        assert res.b == pytest.approx(b, abs=1e-3)

    @given(st.floats(0.01, 100.0))
    @settings(max_examples=30, deadline=None)
    def test_scale_equivariance(self, k):
        x = np.linspace(0.0, 1.0, 9)
        y = 0.8 * np.exp(1.3 * x) + 0.01 * np.sin(7 * x)
        base = ols_exponential(list(zip(x, y)))
        scaled = ols_exponential(list(zip(x, k * y)))
        assert scaled.a == pytest.approx(k * base.a, rel=1e-9)
        assert scaled.b == pytest.approx(base.b, abs=1e-9)
        assert scaled.r_squared == pytest.approx(base.r_squared, abs=1e-9)


# ---------------------------------------------------------------------------
# controllability sweep


def _eval_setup():
    return BuiltinEmbedder(dim=8, sample_rate=44100, seed=0xBEEF), fitted_stats(seed=21)


class TestSweep:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SweepSpec(channel=0, steps=1)
        with pytest.raises(ValueError):
            SweepSpec(channel=0, fixed_value=1.5)

    def test_untrained_weights_are_inert(self):
        """Zero-init FiLM ⇒ conditioning cannot move the audio at init."""
        weights = init_decoder_weights(MICRO_ARCH, seed=31)
        ref = AudioClip(samples=0.1 * RNG.standard_normal(1024), id="ref")
        embedder, stats = _eval_setup()
        pts = sweep_weights(weights, ref, SweepSpec(channel=0, steps=5),
                            embedder, stats, seed=2)
        cs = [c for c, _ in pts]
        assert cs[0] == 0.0 and cs[-1] == 1.0 and len(pts) == 5
        assert all(v == 0.0 for _, v in pts)  # degenerate span normalizes to 0
        res = ols_exponential(pts)
        assert res.degenerate and res.b == 0.0

    def test_perturbed_film_produces_full_range(self):
        weights = init_decoder_weights(MICRO_ARCH, seed=32)
        rng = np.random.default_rng(5)
        weights.params["cond.film.w"].values += 0.5 * rng.standard_normal(
            weights.params["cond.film.w"].shape)
        ref = AudioClip(samples=0.1 * RNG.standard_normal(1024), id="ref")
        embedder, stats = _eval_setup()
        pts = sweep_weights(weights, ref, SweepSpec(channel=0, steps=6),
                            embedder, stats, seed=3)
        values = np.array([v for _, v in pts])
        assert values.min() == 0.0 and values.max() == 1.0

    def test_checkpoint_gate(self, micro_checkpoint):
        _, _, _, ckpt = micro_checkpoint
        ref = AudioClip(samples=0.1 * RNG.standard_normal(1024), id="ref")
        embedder, stats = _eval_setup()
        pts = controllability_sweep(ckpt, ref, SweepSpec(channel=1, steps=4),
                                    embedder, stats)
        assert len(pts) == 4

        blank = Checkpoint(config=dict(ckpt.config, epochs_completed=0),
                           tensors=ckpt.tensors)
        with pytest.raises(ContractViolation):
            controllability_sweep(blank, ref, SweepSpec(channel=0, steps=4),
                                  embedder, stats)

    def test_channel_out_of_range(self, micro_checkpoint):
        _, _, _, ckpt = micro_checkpoint
        embedder, stats = _eval_setup()
        ref = AudioClip(samples=0.1 * RNG.standard_normal(1024), id="ref")
        with pytest.raises(ShapeError):
            controllability_sweep(ckpt, ref, SweepSpec(channel=7, steps=4),
                                  embedder, stats)


# ---------------------------------------------------------------------------
# density reports


class TestKdeReport:
    def test_uniform_scores_flat_density(self):
        rng = np.random.default_rng(6)
        scores = rng.uniform(size=(10_000, 1))
        est = kde_report(scores, ["only"])["only"]
        mask = (est.sample_points >= 0.1) & (est.sample_points <= 0.9)
        assert np.all(np.abs(est.density[mask] - 1.0) <= 0.2)

    def test_point_mass_peaks_at_half(self):
        est = kde_report(np.full((50, 1), 0.5), ["c"])["c"]
        peak = est.sample_points[np.argmax(est.density)]
        nearest = est.sample_points[np.argmin(np.abs(est.sample_points - 0.5))]
        assert peak == nearest

    def test_nine_classes_nine_curves(self):
        scores = RNG.uniform(size=(30, 9))
        labels = [f"class{i}" for i in range(9)]
        report = kde_report(scores, labels)
        assert sorted(report) == sorted(labels)
        assert all(est.sample_points.shape == (256,) for est in report.values())

    def test_label_count_mismatch(self):
        with pytest.raises(ShapeError):
            kde_report(np.zeros((4, 2)), ["a"])

    def test_density_table_export(self, tmp_path):
        est = kde_report(RNG.uniform(size=(20, 1)), ["x"])["x"]
        path = tmp_path / "density.tsv"
        write_density_table(est, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 257 and lines[0].startswith("#")
        x, y = lines[1].split("\t")
        assert float(x) == est.sample_points[0] and float(y) == est.density[0]


# ---------------------------------------------------------------------------
# reconstruction report


class TestEvaluateReconstruction:
    def test_report_shape_and_export(self, micro_checkpoint, tmp_path):
        dataset, _, _, ckpt = micro_checkpoint
        embedder, _ = _eval_setup()
        report = evaluate_reconstruction(ckpt, dataset, embedder)
        labels = [row.label for row in report.rows]
        assert labels == sorted({c.label for c in dataset.test}) + ["overall"]
        assert report.overall().n == len(dataset.test)
        assert all(np.isfinite([r.lsd_mean, r.lsd_std, r.frechet]).all()
                   for r in report.rows)
        assert all(r.frechet >= 0 and r.lsd_mean > 0 for r in report.rows)

        path = tmp_path / "report.jsonl"
        write_report(report, path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows[-1]["class"] == "overall"
        assert set(rows[0]) == {"class", "n", "lsd_mean", "lsd_std", "frechet"}

    def test_identical_sets_zero_metrics(self):
        x = RNG.standard_normal((6, 5))
        assert frechet_distance(gaussian_stats(x), gaussian_stats(x.copy())) == pytest.approx(0.0, abs=1e-10)
        clip = RNG.standard_normal(4096)
        assert lsd(clip, clip.copy()) == 0.0

    def test_empty_test_split_rejected(self, micro_checkpoint):
        dataset, _, _, ckpt = micro_checkpoint
        from simsynth.dataset import PreparedDataset
        embedder, _ = _eval_setup()
        no_test = PreparedDataset(train=dataset.train, test=[], n_channels=2)
        with pytest.raises(ShapeError):
            evaluate_reconstruction(ckpt, no_test, embedder)
