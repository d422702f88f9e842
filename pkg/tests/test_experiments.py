import json
import math
import os

import numpy as np
import pytest

from schemelab.experiments import (
    ExperimentConfig,
    ExperimentFailure,
    RunRecord,
    converge_experiment,
    correction_experiment,
    fluctuation_experiment,
    lambda_decay_table,
    lift_experiment,
    mean_and_se,
    rate_fit,
    read_samples_csv,
    sample_rng,
    upsilon_diagnostic,
    xi_diagnostic,
)
from schemelab.models import make_model
from schemelab.schemes import make_scheme
from schemelab.solver import SolverConfig, simulate
from schemelab.spectral import NormConfig


def small_cfg(kind, **overrides):
    base = dict(
        kind=kind,
        scheme=make_scheme("forward_difference"),
        scheme2=make_scheme("central_difference"),
        model=make_model(1, G="state", theta="one"),
        eps_ladder=(0.25, 0.125, 0.0625),
        samples=4,
        master_seed=99,
        N=16,
        M=64,
        dt=1e-3,
        T=0.05,
        record_times=(0.025, 0.05),
        eps_ref=0.01,
        norms=NormConfig(stride=8),
        alpha=0.45,
        times=(0.3,),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRateFit:
    def test_exact_power_law(self):
        eps = [0.5, 0.25, 0.125, 0.0625]
        fit = rate_fit([(e, e ** 0.5) for e in eps])
        assert fit.slope == pytest.approx(0.5, abs=1e-12)
        assert fit.half_width == pytest.approx(0.0, abs=1e-10)

    def test_constant_values(self):
        fit = rate_fit([(e, 3.0) for e in (0.5, 0.25, 0.125)])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            rate_fit([(0.5, 1.0), (0.25, -1.0), (0.125, 0.5)])

    def test_rejects_few_points(self):
        with pytest.raises(ValueError):
            rate_fit([(0.5, 1.0), (0.25, 0.5)])

    def test_rejects_degenerate_eps(self):
        with pytest.raises(ValueError):
            rate_fit([(0.5, 1.0), (0.5, 0.9), (0.5, 1.1)])

    def test_noisy_sixth_root_calibration(self):
        rng = np.random.default_rng(123)
        eps = np.array([0.5, 0.25, 0.125, 0.0625, 0.03125])
        slopes = []
        for _ in range(40):
            vals = eps ** (1.0 / 6.0) * np.exp(0.1 * rng.standard_normal(5))
            slopes.append(rate_fit(list(zip(eps, vals))).slope)
        # individual fits stay in the calibration band most of the time
        inside = sum(0.05 <= s <= 0.30 for s in slopes)
        assert inside >= 35


class TestConvergeExperiment:
    def test_linear_additive_slope_positive(self):
        # with G = 0 the eps-dependence comes from the multipliers alone, so
        # the Laplacian cut-off must actually vary: f = 1 + x^2
        from schemelab.schemes import make_function

        scheme = make_scheme("forward_difference",
                             f=make_function("one_plus_sq"), c_f=0.5)
        cfg = small_cfg("converge", scheme=scheme,
                        model=make_model(1, G="zero", theta="one"),
                        samples=6)
        record = converge_experiment(cfg)
        assert record.fit["slope"] > 0
        means = [a["mean"] for a in record.aggregates]
        assert means[0] > means[-1]

    def test_single_eps_degenerate_fit(self):
        cfg = small_cfg("converge", eps_ladder=(0.25,), samples=2)
        record = converge_experiment(cfg)
        assert record.fit["degenerate"]

    def test_reproducibility_bitwise(self):
        cfg = small_cfg("converge", samples=3)
        r1 = converge_experiment(cfg)
        r2 = converge_experiment(cfg)
        for a, b in zip(r1.per_sample, r2.per_sample):
            assert a == b

    def test_aggregates_recomputable_from_csv(self, tmp_path):
        cfg = small_cfg("converge", samples=3)
        record = converge_experiment(cfg)
        record.save(tmp_path)
        rows = read_samples_csv(tmp_path / "samples.csv")
        for agg in record.aggregates:
            vals = [float(r["sup_error"]) for r in rows
                    if float(r["eps"]) == agg["eps"]]
            mean, se, n = mean_and_se(vals)
            assert mean == pytest.approx(agg["mean"], abs=1e-12)
            assert se == pytest.approx(agg["se"], abs=1e-12)

    def test_record_json_round_trip(self, tmp_path):
        cfg = small_cfg("converge", samples=2)
        record = converge_experiment(cfg)
        record.save(tmp_path)
        payload = json.loads((tmp_path / "record.json").read_text())
        assert payload["kind"] == "converge"
        assert payload["samples"] == len(record.per_sample)

    def test_split_half_independence(self):
        cfg = small_cfg("converge", samples=8, eps_ladder=(0.25,))
        record = converge_experiment(cfg)
        errs = [r["sup_error"] for r in record.per_sample]
        first, second = errs[:4], errs[4:]
        assert len(set(errs)) == len(errs)          # samples genuinely differ
        m1, se1, _ = mean_and_se(first)
        m2, se2, _ = mean_and_se(second)
        assert abs(m1 - m2) <= 6 * math.hypot(se1, se2)


class TestCorrectionExperiment:
    def test_identical_schemes_ratio_one(self):
        cfg = small_cfg("correction",
                        scheme=make_scheme("central_difference"),
                        scheme2=make_scheme("central_difference"),
                        samples=2, eps_ladder=(0.0625,))
        record = correction_experiment(cfg)
        assert record.extras["ratio"] == pytest.approx(1.0)

    def test_sign_flip_between_forward_and_backward(self):
        common = dict(samples=3, eps_ladder=(0.0625,), N=32, M=128,
                      dt=5e-4, T=0.1, record_times=(0.05, 0.1))
        fw = small_cfg("correction", **common)
        bw = small_cfg("correction",
                       scheme=make_scheme("backward_difference"), **common)
        r_fw = correction_experiment(fw)
        r_bw = correction_experiment(bw)
        assert r_fw.extras["signed_mean_gap"] < 0 < r_bw.extras["signed_mean_gap"]

    def test_requires_second_scheme(self):
        cfg = small_cfg("correction", scheme2=None)
        with pytest.raises(ValueError):
            correction_experiment(cfg)


class TestFluctuationExperiment:
    def test_central_branch_runs_and_fits(self):
        cfg = small_cfg("fluctuation",
                        scheme=make_scheme("central_difference"),
                        samples=5, eps_ladder=(0.25, 0.125, 0.0625),
                        N=24, M=96, times=(0.3,))
        record = fluctuation_experiment(cfg)
        assert record.fit["slope"] is not None
        assert all(a["mean"] > 0 for a in record.aggregates)

    def test_lambda_decay_table_contents(self):
        cfg = small_cfg("lambda-table", N=2048,
                        eps_ladder=(0.25, 0.125, 0.0625, 0.03125),
                        times=(0.5,))
        table = lambda_decay_table(cfg)
        assert table["lambda"] == pytest.approx(0.25, abs=1e-6)
        gaps = [r["gap"] for r in table["rows"]]
        assert gaps[0] > gaps[-1]
        assert table["slopes_by_t"]["0.5"]["slope"] > 0.3


class TestLiftExperiment:
    def test_rows_and_aggregates(self):
        cfg = small_cfg("lift", samples=6, eps_ladder=(0.125,), N=32, M=128,
                        times=(0.4,))
        record = lift_experiment(cfg)
        assert len(record.per_sample) == 6
        agg = record.aggregates[0]
        assert agg["n"] == 6
        assert agg["lambda_eps"] > 0


class TestDiagnostics:
    def _run(self, model, with_reference=True):
        scheme = make_scheme("forward_difference")
        cfg = SolverConfig(scheme=scheme, eps=0.125, N=16, M=64, dt=1e-3,
                           T=0.05, model=model,
                           record_times=(0.01, 0.02, 0.03, 0.04, 0.05))
        traj = simulate(cfg, seed=5, record_reference=with_reference)
        return traj, cfg

    def test_upsilon_zero_when_dg_zero(self):
        traj, cfg = self._run(make_model(1, G="zero", theta="one"))
        out = upsilon_diagnostic(traj, cfg)
        assert np.abs(out.values).max() == 0.0

    def test_upsilon_requires_reference(self):
        traj, cfg = self._run(make_model(1, G="state", theta="one"),
                              with_reference=False)
        with pytest.raises(ValueError):
            upsilon_diagnostic(traj, cfg)

    def test_xi_reduces_to_first_term_plus_upsilon(self):
        model = make_model(1, G="state", theta="one")
        traj, cfg = self._run(model)
        xi = xi_diagnostic(traj, cfg)
        ups = upsilon_diagnostic(traj, cfg)
        assert np.abs(xi.values).max() > 0
        assert np.abs(ups.values).max() > 0

    def test_experiment_failure_when_everything_truncates(self):
        cfg = small_cfg("converge", samples=2, blowup_cap=1e-12,
                        initial_kind="sine", initial_amplitude=1.0)
        with pytest.raises(ExperimentFailure):
            converge_experiment(cfg)


def test_sample_rng_streams_are_stable():
    a = sample_rng(7, 3).standard_normal(4)
    b = sample_rng(7, 3).standard_normal(4)
    c = sample_rng(7, 4).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_worker_pool_matches_serial(monkeypatch):
    cfg = small_cfg("converge", samples=4)
    serial = converge_experiment(cfg)
    monkeypatch.setenv("SCHEMELAB_WORKERS", "2")
    parallel = converge_experiment(cfg)
    assert serial.per_sample == parallel.per_sample
