import dataclasses

import numpy as np
import pytest

from artifact.estimator import empirical_moment, fit
from artifact.experiments import (
    CSV_COLUMNS,
    TrialParams,
    binomial_interval,
    calibrate_params,
    oracle_event_frequency,
    records_to_csv,
    run_trial,
    slope_fit,
    sweep,
)
from artifact.linalg import spectral_norm
from artifact.model import NoiseModel, ValidationError, generate_dataset, random_ground_truth

SMALL = TrialParams(m1=10, m2=10, rank=2, a=1.0, sigma=1.0, n=1000, rule="optimal", calibration_trials=60)


class TestSlopeFit:
    def test_exact_power(self):
        slope, intercept, se = slope_fit([1, 4, 16], [1, 0.5, 0.25])
        assert slope == pytest.approx(-0.5) and se == 0.0 and intercept == pytest.approx(0.0, abs=1e-15)

    def test_constant(self):
        assert slope_fit([1, 2, 3], [5, 5, 5])[0] == pytest.approx(0.0, abs=1e-15)

    def test_hand_dataset(self):
        slope, intercept, _ = slope_fit([1, 2, 4], [1, 2, 4])
        assert slope == pytest.approx(1.0) and intercept == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("xs,ys", [([1, 2], [1, 2]), ([1, 2, 0], [1, 2, 3]), ([1, 2, 3], [1, -2, 3]),
                                       ([1, 1, 2], [1, 2, 3])])
    def test_rejects(self, xs, ys):
        with pytest.raises(ValidationError):
            slope_fit(xs, ys)


class TestTrial:
    def test_deterministic(self):
        p = calibrate_params(SMALL, 0)
        assert run_trial(p, 11) == run_trial(p, 11)
        assert run_trial(p, 11) != run_trial(p, 12)

    def test_error_norm_ordering(self):
        p = calibrate_params(SMALL, 0)
        for s in range(10):
            r = run_trial(p, s)
            assert r.spectral_error <= r.frobenius_error <= r.nuclear_error + 1e-12

    def test_zero_truth_zero_estimate(self):
        p = TrialParams(m1=10, m2=10, rank=0, a=1.0, sigma=1.0, n=500, lambda_mode="optimal_rule", C=3.0)
        pi, truth, noise = p.instance()
        hits = 0
        for s in range(20):
            ds = generate_dataset(pi, truth, noise, p.n, s)
            lam = p.regularization().lam
            r = run_trial(p, s)
            if lam >= 2 * spectral_norm(empirical_moment(ds)):
                hits += 1
                assert r.spectral_error == 0.0
        assert hits >= 10

    def test_noiseless_limit(self):
        # sigma = 0 and lambda -> 0: the estimate tends to S / pi, whose error shrinks with n
        errs = []
        for n in (1000, 100_000):
            p = TrialParams(m1=10, m2=10, rank=2, sigma=0.0, n=n, lambda_mode="explicit", lam=1e-9)
            pi, truth, noise = p.instance()
            ds = generate_dataset(pi, truth, noise, n, 0)
            est = fit(pi, ds, 1e-9).estimate
            np.testing.assert_allclose(est, empirical_moment(ds) / pi.pmf, atol=1e-5)
            errs.append(run_trial(p, 0).spectral_error)
        assert errs[1] < errs[0] / 5

    def test_bound_flag_only_on_oracle_event(self):
        p = TrialParams(m1=8, m2=8, n=300, lambda_mode="explicit", lam=1e-4)
        r = run_trial(p, 0)
        assert not r.oracle_event and r.theorem1_satisfied is None

    def test_calibration_needed(self):
        with pytest.raises(ValidationError, match="calibrate"):
            run_trial(SMALL, 0)

    def test_params_from_dict(self):
        assert TrialParams.from_dict(SMALL.to_dict()) == SMALL
        with pytest.raises(ValidationError, match="unknown"):
            TrialParams.from_dict({"m3": 1})


class TestOracleFrequency:
    def test_extremes(self):
        tiny = dataclasses.replace(SMALL, lambda_mode="explicit", lam=1e-12)
        huge = dataclasses.replace(SMALL, lambda_mode="explicit", lam=1e6)
        assert oracle_event_frequency(tiny, 50) == 0.0
        assert oracle_event_frequency(huge, 50) == 1.0

    def test_calibrated_self_consistency(self):
        p = dataclasses.replace(SMALL, calibration_trials=500)
        f = oracle_event_frequency(p, 500, seed=5)
        assert 0.90 <= f <= 1.0

    def test_binomial_interval(self):
        lo, hi = binomial_interval(95, 100)
        assert lo < 0.95 < hi
        assert binomial_interval(0, 10)[0] == 0.0


class TestSweep:
    def test_validation(self):
        with pytest.raises(ValidationError, match="increasing"):
            sweep("n", [2000, 1000], SMALL)
        with pytest.raises(ValidationError, match="30"):
            sweep("n", [1000, 2000], SMALL, trials_per_point=5)
        with pytest.raises(ValidationError, match="axis"):
            sweep("q", [1, 2], SMALL)

    def test_flags_invalid_points(self):
        # 10 * log(20)^2 = 89.7
        res = sweep("n", [60, 200, 400, 800], SMALL, trials_per_point=30, seed=1)
        assert res.excluded == [60]
        assert [p["valid"] for p in res.points] == [False, True, True, True]
        assert len(res.fit_abscissa) == 3
        assert all(p["trials"] == 30 for p in res.points)

    def test_thread_count_does_not_change_output(self):
        a = sweep("n", [500, 1000, 2000], SMALL, trials_per_point=30, seed=2, threads=1)
        b = sweep("n", [500, 1000, 2000], SMALL, trials_per_point=30, seed=2, threads=3)
        assert records_to_csv(a.records) == records_to_csv(b.records)
        assert a.to_json() == b.to_json()

    def test_csv_layout(self):
        res = sweep("n", [500, 1000, 2000], SMALL, trials_per_point=30, seed=0)
        lines = records_to_csv(res.records, {"seed": 0}).splitlines()
        assert lines[0] == "# columns: " + ",".join(CSV_COLUMNS)
        assert lines[1].startswith("# config ")
        assert lines[2].split(",") == list(CSV_COLUMNS)
        assert len(lines) == 3 + 90
        assert "runtime_ms" not in lines[2]

    def test_sigma_axis_linear(self):
        base = TrialParams(m1=10, m2=10, rank=2, a=1e-3, sigma=1.0, n=2000, lambda_mode="optimal_rule", C=1.0)
        res = sweep("sigma", [0.5, 1.0, 2.0, 4.0], base, trials_per_point=30, seed=3)
        slope, _, _ = slope_fit([p["value"] for p in res.points], [p["median_spectral_error"] for p in res.points])
        assert slope == pytest.approx(1.0, abs=0.1)

    def test_rank_axis_runs(self):
        base = calibrate_params(SMALL, 0)
        res = sweep("r", [1, 2, 3], base, trials_per_point=30)
        assert np.isfinite(res.fitted_slope) and res.C == base.C
