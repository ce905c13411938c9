"""Generator identities, closed-form oracles, and the Monte Carlo harness."""

from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest
from scipy import integrate

from rcdens.panel import partition_stayers, stayer_threshold_rule
from rcdens.simulation import (
    BETA_INNOVATIONS,
    DGP_PRESETS,
    DgpSpec,
    EstimatorConfig,
    MonteCarloSummary,
    beta_innovation_mean,
    beta_innovation_pdf,
    dgp_preset,
    monte_carlo_report,
    monte_carlo_run,
    preset_estimator_config,
    simulate,
    true_f_beta,
    true_phi_D,
    write_summary_csv,
)
from rcdens.stage1_irregular import DEFAULT_TRIM_THRESHOLD
from rcdens.numerics import ecf
from rcdens.tuning_cv import KNN_DIMENSIONS, CvConfig, NearestNeighborRule

# Frozen closed-form values for the default error parameters. The
# disturbance variance is 2.0 + (0.7 - 1)^2 * 1.0; the characteristic
# function values are its Gaussian transform at frequency 3 and the
# two-factor Laplace product 0.1 / 1.405 at the same point.
DISTURBANCE_VARIANCE = 2.09
GAUSS_CF_AT_3 = 8.23115e-5
LAPLACE_CF_AT_3 = 7.117438e-2
CF_RATIO_AT_3 = 864.70
SKEW_MEAN = 1.5481234452893038


def _fast_cv(**overrides):
    base = dict(
        n_repeats=1,
        candidate_bandwidths=(0.3, 0.5),
        candidate_dimensions=(3, 5),
        max_instability=1e6,
    )
    base.update(overrides)
    return CvConfig(**base)


class TestDgpSpec:
    def test_default_disturbance_variance(self):
        assert DgpSpec().disturbance_variance == pytest.approx(DISTURBANCE_VARIANCE)

    def test_laplace_scales_reproduce_variances(self):
        b1, b2 = DgpSpec(error_family="laplace").laplace_scales
        assert 2.0 * b1**2 == pytest.approx(1.0)
        assert 2.0 * b2**2 == pytest.approx(2.0)

    def test_unknown_innovation_rejected(self):
        with pytest.raises(ValueError, match="innovation"):
            DgpSpec(beta_innovation="cauchy")

    def test_unknown_error_family_rejected(self):
        with pytest.raises(ValueError, match="error family"):
            DgpSpec(error_family="student")

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            DgpSpec(var_eps2=0.0)

    def test_presets(self):
        assert dgp_preset("normal") == DgpSpec()
        assert dgp_preset("skew").beta_innovation == "skew-normal"
        assert dgp_preset("mixture").error_family == "gaussian"
        laplace = dgp_preset("mixture-laplace")
        assert laplace.beta_innovation == "gaussian-mixture"
        assert laplace.error_family == "laplace"
        assert set(DGP_PRESETS) == {"normal", "skew", "mixture", "mixture-laplace"}

    def test_unknown_preset_rejected(self):
        with pytest.raises(ValueError, match="mixture-laplace"):
            dgp_preset("heavy")


class TestSimulate:
    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_reduced_form_identity(self, family):
        # Differencing the levels must leave outcome = x * beta + error.
        spec = DgpSpec(error_family=family)
        sample, latent = simulate(spec, 500, seed=5)
        assert np.allclose(
            sample.y, sample.x * latent.beta + latent.disturbance, atol=1e-9
        )

    def test_latent_alignment(self):
        spec = DgpSpec()
        sample, latent = simulate(spec, 333, seed=1)
        assert np.allclose(latent.scale, 1.0 + 0.1 * sample.x, atol=1e-12)
        assert np.allclose(latent.beta, latent.scale * latent.innovation)

    def test_bitwise_deterministic(self):
        first = simulate(DgpSpec(), 200, seed=9)
        second = simulate(DgpSpec(), 200, seed=9)
        assert np.array_equal(first[0].x, second[0].x)
        assert np.array_equal(first[0].y, second[0].y)
        assert np.array_equal(first[1].beta, second[1].beta)
        other = simulate(DgpSpec(), 200, seed=10)
        assert not np.array_equal(first[0].y, other[0].y)

    def test_seed_sequence_accepted(self):
        key = np.random.SeedSequence([4, 2])
        a, _ = simulate(DgpSpec(), 50, seed=key)
        b, _ = simulate(DgpSpec(), 50, seed=np.random.SeedSequence([4, 2]))
        assert np.array_equal(a.y, b.y)

    def test_regressor_change_variance(self):
        sample, _ = simulate(DgpSpec(), 100_000, seed=21)
        # three sigma for a Gaussian sample variance: 3 * 4 * sqrt(2/n)
        assert abs(sample.x.var() - 4.0) < 0.06

    def test_disturbance_variance_gaussian(self):
        _, latent = simulate(DgpSpec(), 100_000, seed=22)
        tol = 3.0 * DISTURBANCE_VARIANCE * math.sqrt(2.0 / 100_000)
        assert abs(latent.disturbance.var() - DISTURBANCE_VARIANCE) < tol

    def test_disturbance_variance_laplace(self):
        _, latent = simulate(DgpSpec(error_family="laplace"), 100_000, seed=23)
        # fourth moment 24*b2^4 + 6*(2*b2^2)(2*c^2*b1^2) + 24*c^4*b1^4
        # with b2 = 1, b1^2 = 0.5, c = -0.3 gives 25.13
        tol = 3.0 * math.sqrt((25.13 - DISTURBANCE_VARIANCE**2) / 100_000)
        assert abs(latent.disturbance.var() - DISTURBANCE_VARIANCE) < tol

    def test_zero_slope_decouples_regressor_and_coefficient(self):
        sample, latent = simulate(DgpSpec(scale_slope=0.0), 100_000, seed=24)
        corr = np.corrcoef(sample.x, latent.beta)[0, 1]
        assert abs(corr) < 0.01

    def test_skew_innovation_mean(self):
        spec = DgpSpec(beta_innovation="skew-normal")
        assert beta_innovation_mean(spec) == pytest.approx(SKEW_MEAN, abs=1e-12)
        _, latent = simulate(spec, 1_000_000, seed=25)
        inn = latent.innovation
        tol = 3.0 * inn.std() / math.sqrt(inn.size)
        assert abs(inn.mean() - SKEW_MEAN) < tol

    def test_needs_a_unit(self):
        with pytest.raises(ValueError, match="at least one"):
            simulate(DgpSpec(), 0)

    @pytest.mark.parametrize(
        "scale,target", [(4.0, 0.247), (5.0, 0.306)], ids=["narrow", "wide"]
    )
    def test_stayer_share_matches_threshold_rule(self, scale, target):
        shares = []
        for seed in range(20):
            sample, _ = simulate(DgpSpec(), 2000, seed=seed)
            threshold = stayer_threshold_rule(sample.x, scale)
            part = partition_stayers(sample, threshold)
            shares.append(part.stayer_indices.size / sample.x.size)
        assert abs(float(np.mean(shares)) - target) < 0.03


class TestTruePhiD:
    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_unity_at_origin(self, family):
        assert true_phi_D(DgpSpec(error_family=family), 0.0) == 1.0

    def test_gaussian_frozen_value(self):
        value = true_phi_D(DgpSpec(), 3.0)
        assert value == pytest.approx(math.exp(-0.5 * DISTURBANCE_VARIANCE * 9.0))
        assert value == pytest.approx(GAUSS_CF_AT_3, rel=1e-5)
        assert value == pytest.approx(8e-5, rel=0.05)

    def test_laplace_frozen_value(self):
        value = true_phi_D(DgpSpec(error_family="laplace"), 3.0)
        assert value == pytest.approx(LAPLACE_CF_AT_3, rel=1e-5)
        assert value == pytest.approx(0.07, rel=0.05)

    def test_family_ratio_far_out(self):
        gauss = true_phi_D(DgpSpec(), 3.0)
        laplace = true_phi_D(DgpSpec(error_family="laplace"), 3.0)
        assert laplace / gauss == pytest.approx(CF_RATIO_AT_3, rel=1e-4)
        assert laplace / gauss == pytest.approx(865.0, rel=0.05)

    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_shapes_and_monotone_decay(self, family):
        spec = DgpSpec(error_family=family)
        grid = np.linspace(0.0, 4.0, 33)
        values = true_phi_D(spec, grid)
        assert values.shape == grid.shape
        assert np.all(np.diff(values) < 0.0)
        assert isinstance(true_phi_D(spec, 1.5), float)

    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_empirical_cf_envelope(self, family):
        # one million draws keep the ECF within 3/sqrt(n) of the oracle
        spec = DgpSpec(error_family=family)
        _, latent = simulate(spec, 1_000_000, seed=31)
        points = np.array([0.5, 1.0, 2.0, 3.0])
        gap = np.abs(ecf(latent.disturbance, points) - true_phi_D(spec, points))
        assert gap.max() < 3e-3


class TestBetaInnovation:
    @pytest.mark.parametrize("name", BETA_INNOVATIONS)
    def test_pdf_is_a_density(self, name):
        spec = DgpSpec(beta_innovation=name)
        grid = np.linspace(-16.0, 16.0, 1601)
        values = beta_innovation_pdf(spec, grid)
        assert np.all(values >= 0.0)
        assert integrate.simpson(values, x=grid) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("name", BETA_INNOVATIONS)
    def test_mean_matches_pdf(self, name):
        spec = DgpSpec(beta_innovation=name)
        grid = np.linspace(-16.0, 16.0, 1601)
        numeric = integrate.simpson(grid * beta_innovation_pdf(spec, grid), x=grid)
        assert numeric == pytest.approx(beta_innovation_mean(spec), abs=1e-8)

    def test_known_means(self):
        assert beta_innovation_mean(DgpSpec()) == 0.0
        assert beta_innovation_mean(DgpSpec(beta_innovation="gaussian-mixture")) == 0.0

    def test_scalar_returns_float(self):
        assert isinstance(beta_innovation_pdf(DgpSpec(), 0.3), float)


class TestTrueFBeta:
    def test_zero_slope_collapses_to_innovation_density(self):
        spec = DgpSpec(scale_slope=0.0)
        grid = np.linspace(-3.0, 3.0, 25)
        assert np.array_equal(true_f_beta(spec, grid), beta_innovation_pdf(spec, grid))

    @pytest.mark.parametrize("name", BETA_INNOVATIONS)
    def test_tiny_slope_stays_near_innovation_density(self, name):
        spec = DgpSpec(beta_innovation=name, scale_slope=1e-6)
        grid = np.linspace(-3.0, 5.0, 17)
        gap = np.abs(true_f_beta(spec, grid) - beta_innovation_pdf(spec, grid))
        assert gap.max() < 1e-4

    def test_symmetric_for_symmetric_innovation(self):
        grid = np.linspace(-4.0, 4.0, 41)
        values = true_f_beta(DgpSpec(), grid)
        assert np.allclose(values, values[::-1], atol=1e-8)

    @pytest.mark.parametrize("name", ["normal", "mixture"])
    def test_integrates_to_one(self, name):
        spec = dgp_preset(name)
        grid = np.linspace(-16.0, 16.0, 1601)
        values = true_f_beta(spec, grid)
        assert np.all(values >= 0.0)
        assert integrate.simpson(values, x=grid) == pytest.approx(1.0, abs=1e-6)

    def test_mixture_is_bimodal(self):
        grid = np.linspace(-2.0, 2.0, 161)
        values = true_f_beta(dgp_preset("mixture"), grid)
        left = values[grid < 0.0]
        right = values[grid > 0.0]
        left_peak = grid[grid < 0.0][left.argmax()]
        right_peak = grid[grid > 0.0][right.argmax()]
        assert abs(left_peak + 0.89) < 0.1
        assert abs(right_peak - 0.90) < 0.1
        origin = values[np.abs(grid).argmin()]
        assert origin < 0.5 * min(left.max(), right.max())

    def test_rejects_non_finite_grid(self):
        with pytest.raises(ValueError, match="finite"):
            true_f_beta(DgpSpec(), [0.0, np.inf])

    def test_scalar_input_gives_length_one(self):
        assert true_f_beta(DgpSpec(), 0.5).shape == (1,)


class TestEstimatorConfig:
    def test_defaults_are_valid(self):
        cfg = EstimatorConfig()
        assert cfg.n_units == 2000
        assert cfg.eval_grid.ndim == 1
        assert cfg.cv.n_repeats == 5

    def test_rejects_tiny_sample(self):
        with pytest.raises(ValueError, match="at least 2"):
            EstimatorConfig(n_units=1)

    def test_rejects_bad_weight(self):
        with pytest.raises(ValueError, match="weight"):
            EstimatorConfig(weight_kind="flat")

    def test_rejects_bad_threshold_scale(self):
        with pytest.raises(ValueError, match="positive"):
            EstimatorConfig(threshold_scale=0.0)

    def test_preset_unimodal(self):
        cfg = preset_estimator_config("normal")
        assert cfg.threshold_scale == 4.0
        assert cfg.weight_kind == "standard-normal"
        assert cfg.cv.candidate_bandwidths is None
        assert cfg.cv.candidate_dimensions == tuple(range(3, 16, 2))
        assert cfg.cv.max_instability == pytest.approx(1.0 / DEFAULT_TRIM_THRESHOLD)
        skew = preset_estimator_config("skew")
        assert skew.cv.candidate_dimensions == tuple(range(3, 20, 2))

    @pytest.mark.parametrize("name", ["mixture", "mixture-laplace"])
    def test_preset_bimodal(self, name):
        cfg = preset_estimator_config(name)
        assert cfg.threshold_scale == 5.0
        assert cfg.weight_kind == "student-t-3"
        counts = tuple(rule.count for rule in cfg.cv.candidate_bandwidths)
        assert counts == (5, 10, 15, 20, 30)
        assert all(
            isinstance(rule, NearestNeighborRule)
            for rule in cfg.cv.candidate_bandwidths
        )
        assert cfg.cv.candidate_dimensions == KNN_DIMENSIONS
        assert cfg.cv.max_instability == pytest.approx(1.0 / DEFAULT_TRIM_THRESHOLD)

    def test_preset_overrides(self):
        cfg = preset_estimator_config("normal", n_units=500)
        assert cfg.n_units == 500
        assert cfg.threshold_scale == 4.0

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown preset"):
            preset_estimator_config("cauchy")


class TestMonteCarloRun:
    def _small_config(self, **overrides):
        base = dict(n_units=300, cv=_fast_cv())
        base.update(overrides)
        return EstimatorConfig(**base)

    def test_small_run_shapes_and_summaries(self):
        cfg = self._small_config()
        summary = monte_carlo_run(DgpSpec(), 3, cfg, seed=2)
        assert summary.n_failed == 0
        assert summary.n_replications == 3
        n_grid = cfg.eval_grid.size
        for arr in (summary.truth, summary.average, summary.median, summary.q25, summary.q75):
            assert arr.shape == (n_grid,)
        assert np.array_equal(summary.truth, true_f_beta(DgpSpec(), cfg.eval_grid))
        assert summary.ise.shape == (3,)
        assert np.all(summary.ise >= 0.0) and np.all(np.isfinite(summary.ise))
        assert np.all((summary.stayer_shares > 0.0) & (summary.stayer_shares < 1.0))
        assert len(summary.selections) == 3
        for bandwidth, dim in summary.selections:
            assert bandwidth in (0.3, 0.5)
            assert dim in (3, 5)
        assert np.all(summary.q25 <= summary.median) and np.all(summary.median <= summary.q75)
        assert summary.metadata["generator"]["error_family"] == "gaussian"
        assert summary.metadata["n_units"] == 300
        assert "laplace_scales" not in summary.metadata

    def test_repeat_run_is_identical(self):
        cfg = self._small_config()
        a = monte_carlo_run(DgpSpec(), 2, cfg, seed=6)
        b = monte_carlo_run(DgpSpec(), 2, cfg, seed=6)
        assert np.array_equal(a.average, b.average)
        assert np.array_equal(a.ise, b.ise)
        assert a.selections == b.selections

    def test_single_replication_collapses_quantiles(self):
        summary = monte_carlo_run(DgpSpec(), 1, self._small_config(), seed=8)
        assert np.array_equal(summary.average, summary.median)
        assert np.array_equal(summary.q25, summary.q75)

    def test_all_failures_raise(self):
        # a huge threshold scale turns every unit into a stayer
        cfg = self._small_config(threshold_scale=1e6)
        with pytest.raises(RuntimeError, match="every replication failed"):
            monte_carlo_run(DgpSpec(), 2, cfg, seed=3)

    def test_partial_failures_recorded_and_excluded(self):
        # frozen case: one fold-level denominator trips a 300x cap
        cfg = self._small_config(cv=_fast_cv(max_instability=300.0))
        summary = monte_carlo_run(DgpSpec(), 5, cfg, seed=11)
        assert summary.n_failed == 1
        failure = summary.failures[0]
        assert failure.stage == "cross-validation"
        assert summary.ise.shape == (4,)
        assert summary.stayer_shares.shape == (4,)
        assert len(summary.selections) == 4
        assert summary.n_replications == 5

    def test_rejects_no_replications(self):
        with pytest.raises(ValueError, match="at least one"):
            monte_carlo_run(DgpSpec(), 0, self._small_config())

    def test_laplace_metadata(self):
        spec = DgpSpec(error_family="laplace")
        cfg = self._small_config(
            n_units=400, cv=_fast_cv(candidate_bandwidths=(0.5,), candidate_dimensions=(5,))
        )
        summary = monte_carlo_run(spec, 1, cfg, seed=3)
        b1, b2 = spec.laplace_scales
        assert summary.metadata["laplace_scales"] == pytest.approx([b1, b2])
        assert summary.metadata["mixture_second_parameters"] == "variances"

    def test_neighbor_rule_histogram_labels(self):
        cfg = self._small_config(
            weight_kind="student-t-3",
            cv=_fast_cv(
                candidate_bandwidths=(NearestNeighborRule(5), NearestNeighborRule(10)),
                candidate_dimensions=(5, 7),
            ),
        )
        summary = monte_carlo_run(
            DgpSpec(beta_innovation="gaussian-mixture"), 2, cfg, seed=7
        )
        histogram = summary.tuning_histogram()
        assert sum(entry["count"] for entry in histogram) == 2
        assert all(entry["bandwidth"].startswith("knn:") for entry in histogram)

    def test_report_is_json_ready(self):
        summary = monte_carlo_run(DgpSpec(), 2, self._small_config(), seed=12)
        report = monte_carlo_report(summary)
        text = json.dumps(report)
        parsed = json.loads(text)
        assert parsed["n_replications"] == 2
        assert parsed["n_failed"] == 0
        assert parsed["ise"]["median"] == pytest.approx(float(np.median(summary.ise)))
        assert parsed["stayer_share"]["mean"] == pytest.approx(
            float(summary.stayer_shares.mean())
        )

    def test_summary_csv_round_trip(self, tmp_path):
        summary = monte_carlo_run(DgpSpec(), 1, self._small_config(), seed=13)
        path = tmp_path / "summary.csv"
        write_summary_csv(summary, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["grid", "truth", "average", "median", "q25", "q75"]
        assert len(rows) == 1 + summary.eval_grid.size
        body = np.array([[float(cell) for cell in row] for row in rows[1:]])
        assert np.allclose(body[:, 0], summary.eval_grid, atol=1e-9)
        assert np.allclose(body[:, 2], summary.average, rtol=1e-9, atol=1e-12)
