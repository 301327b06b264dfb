"""Monte Carlo harness: generation, determinism, metrics."""

import numpy as np
import pytest

from labelshift.simulation import (
    MetricsRow,
    SimConfig,
    generate_replicate,
    run_study,
    working_rho_star,
)


class TestGenerateReplicate:
    def test_deterministic_given_seed_and_index(self):
        cfg = SimConfig()
        a = generate_replicate(cfg, 3)
        b = generate_replicate(cfg, 3)
        np.testing.assert_array_equal(a.dataset.y, b.dataset.y)
        np.testing.assert_array_equal(a.dataset.x, b.dataset.x)
        np.testing.assert_array_equal(a.dataset.labeled, b.dataset.labeled)

    def test_different_indices_differ(self):
        cfg = SimConfig()
        a = generate_replicate(cfg, 0)
        b = generate_replicate(cfg, 1)
        assert not np.array_equal(a.dataset.y, b.dataset.y)

    def test_source_variance_law_of_large_numbers(self):
        cfg = SimConfig(n_total=1_000_000, seed=11)
        rep = generate_replicate(cfg, 0)
        assert float(np.var(rep.dataset.y_labeled)) == pytest.approx(2.0, abs=0.01)

    def test_target_mean_law_of_large_numbers(self):
        cfg = SimConfig(n_total=1_000_000, seed=11)
        rep = generate_replicate(cfg, 0)
        assert float(np.mean(rep.y_unlabeled_true)) == pytest.approx(1.0, abs=0.01)

    def test_covariates_track_outcome(self):
        cfg = SimConfig(n_total=200_000, seed=7)
        rep = generate_replicate(cfg, 0)
        y = rep.dataset.y_labeled
        x = rep.dataset.x_labeled
        for j, a in enumerate(cfg.alpha):
            slope = np.cov(y, x[:, j])[0, 1] / np.var(y)
            assert slope == pytest.approx(a, abs=0.02)


class TestWorkingRatioModel:
    def test_self_normalization_identity(self, study_replicate):
        data = study_replicate["data"]
        rho_star = study_replicate["rho_star"]
        # the unclipped closure normalizes exactly; the positive-floor model
        # can only deviate by the clipped mass
        raw = rho_star.fn(data.y_labeled)
        assert float(np.mean(raw)) == pytest.approx(1.0, abs=1e-12)
        assert float(np.mean(rho_star(data.y_labeled))) == pytest.approx(1.0, abs=1e-4)

    def test_zero_distortion_recovers_scaled_truth(self):
        cfg = SimConfig(distortion=(0.0, 0.0), n_total=20_000, seed=3)
        rep = generate_replicate(cfg, 0)
        rho_star = working_rho_star(cfg, rep.dataset, rep.true_ratio)
        grid = np.linspace(-1, 2, 7)
        ratio = rho_star(grid) / rep.true_ratio(grid)
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
        assert ratio[0] == pytest.approx(1.0, abs=0.05)

    def test_distortion_factor_exact(self, study_replicate):
        cfg = study_replicate["config"]
        rho_star = study_replicate["rho_star"]
        truth = study_replicate["true_ratio_fn"]
        scale = rho_star.fn.scale
        assert rho_star(2.0) / truth(2.0) == pytest.approx(
            scale * np.exp(0.2 * 2.0 + 0.1 * 4.0), rel=1e-12
        )


@pytest.fixture(scope="module")
def small_study():
    cfg = SimConfig(
        replicates=8, seed=99, workers=1,
        estimators=("shift_dependent", "oracle", "efficient_consistent"),
    )
    return cfg, run_study(cfg)


class TestRunStudy:

    def test_summary_rows_complete(self, small_study):
        cfg, result = small_study
        assert [r.estimator for r in result.summary] == list(cfg.estimators)
        assert all(r.failures == 0 for r in result.summary)

    def test_raw_estimates_shape(self, small_study):
        cfg, result = small_study
        assert len(result.raw) == cfg.replicates * len(cfg.estimators)

    def test_are_of_oracle_is_one(self, small_study):
        _, result = small_study
        assert result.row("oracle").are == pytest.approx(1.0)

    def test_worker_split_reproduces_serial_run(self, small_study):
        cfg, serial = small_study
        import dataclasses

        parallel = run_study(dataclasses.replace(cfg, workers=2))
        for a, b in zip(serial.raw, parallel.raw):
            assert a[:2] == b[:2]
            np.testing.assert_allclose(a[2:], b[2:], rtol=0, atol=0)
        for ra, rb in zip(serial.summary, parallel.summary):
            assert ra == rb

    def test_curves_schema(self, small_study):
        cfg, result = small_study
        assert len(result.curves) == cfg.replicates * cfg.curve_points
        rep, y, star, tilde, hat, true = result.curves[0]
        assert rep == 0 and y == pytest.approx(cfg.curve_lo)

    def test_single_replicate_oracle_only(self):
        cfg = SimConfig(replicates=1, seed=5, workers=1, estimators=("oracle",))
        result = run_study(cfg)
        assert result.row("oracle").are == pytest.approx(1.0)
        assert result.row("oracle").coverage in (0.0, 1.0)

    def test_worker_cap_from_environment(self, monkeypatch):
        from labelshift.simulation import resolve_workers

        monkeypatch.setenv("LABELSHIFT_THREADS", "1")
        assert resolve_workers(8, 100) == 1
        monkeypatch.delenv("LABELSHIFT_THREADS")
        assert resolve_workers(2, 1) == 1


class TestMetricsRow:
    def test_invariants(self):
        with pytest.raises(ValueError):
            MetricsRow("x", -1.0, 0.0, 0.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            MetricsRow("x", 1.0, 0.0, 0.0, 1.0, 1.5)
