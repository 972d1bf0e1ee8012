"""Monte Carlo engine, GARCH simulation/fitting, and i.i.d. fitting."""

import math

import numpy as np
import pytest
from scipy import stats

from esbacktest.dist import Normal, RngStream, SkewT, StudentT
from esbacktest.simulation import (
    FitError,
    GarchSpec,
    McConfig,
    NullDistribution,
    _conditional_variance,
    fit_and_simulate,
    fit_iid,
    garch_fit,
    garch_from_json,
    garch_simulate,
    garch_to_json,
    mc_null,
)

# ---------------------------------------------------------------------------
# GARCH simulation
# ---------------------------------------------------------------------------


def test_garch_without_feedback_reduces_to_iid():
    g = GarchSpec(mu=0.0, omega=1.0, a1=0.0, b1=0.0)
    x, sigma = garch_simulate(g, 10**6, RngStream(70))
    assert np.all(sigma == 1.0)
    # sample variance of n normals: sd ~ omega * sqrt(2/n)
    band = 3.0 * math.sqrt(2.0 / x.size)
    assert abs(x.var(ddof=1) - 1.0) < band


def test_garch_long_run_variance_matches_stationary_value():
    g = GarchSpec(mu=0.0, omega=1e-5, a1=0.08, b1=0.90)
    reps = 24
    per = 50_000
    vs = []
    for r in range(reps):
        x, _ = garch_simulate(g, per, RngStream(71, r))
        vs.append(x.var(ddof=1))
    vs = np.asarray(vs)
    # self-calibrated band: replicate spread of the replicate mean
    band = 3.0 * vs.std(ddof=1) / math.sqrt(reps)
    assert abs(vs.mean() - g.stationary_variance()) < band


def test_garch_simulation_is_deterministic_per_stream():
    g = GarchSpec(mu=1e-4, omega=1e-5, a1=0.05, b1=0.93)
    a = garch_simulate(g, 500, RngStream(72, 5))
    b = garch_simulate(g, 500, RngStream(72, 5))
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_garch_skew_t_innovations_are_standardized():
    g = GarchSpec(mu=0.0, omega=1e-4, a1=0.0, b1=0.0, innovation="skew_t", nu=6.0, xi=1.4)
    x, sigma = garch_simulate(g, 400_000, RngStream(73))
    assert np.all(sigma == pytest.approx(0.01))
    assert x.mean() == pytest.approx(0.0, abs=3 * 0.01 / math.sqrt(x.size) * 2)
    assert x.var(ddof=1) == pytest.approx(1e-4, rel=0.02)


def test_garch_spec_validation():
    with pytest.raises(ValueError):
        GarchSpec(mu=0.0, omega=0.0, a1=0.1, b1=0.5)
    with pytest.raises(ValueError):
        GarchSpec(mu=0.0, omega=1e-5, a1=0.5, b1=0.5)
    with pytest.raises(ValueError):
        GarchSpec(mu=0.0, omega=1e-5, a1=-0.1, b1=0.5)
    with pytest.raises(ValueError):
        GarchSpec(mu=0.0, omega=1e-5, a1=0.1, b1=0.5, innovation="skew_t")
    with pytest.raises(ValueError):
        GarchSpec(mu=0.0, omega=1e-5, a1=0.1, b1=0.5, nu=5.0)
    with pytest.raises(ValueError):
        GarchSpec(mu=0.0, omega=1e-5, a1=0.1, b1=0.5, innovation="levy")


def test_garch_json_round_trip():
    for g in (
        GarchSpec(mu=1e-4, omega=2e-5, a1=0.07, b1=0.9),
        GarchSpec(mu=0.0, omega=1e-5, a1=0.1, b1=0.8, innovation="skew_t", nu=5.0, xi=0.9),
    ):
        assert garch_from_json(garch_to_json(g)) == g
    with pytest.raises(ValueError):
        garch_from_json({"mu": 0.0, "omega": 1e-5, "a1": 0.1, "b1": 0.5, "gamma": 1.0})


def test_conditional_variance_filter_matches_loop_oracle():
    rng = np.random.default_rng(74)
    x = rng.standard_normal(300) * 0.01
    mu, omega, a1, b1 = 2e-4, 3e-6, 0.09, 0.88
    s2, e = _conditional_variance(x, mu, omega, a1, b1)
    expect = np.empty_like(s2)
    expect[0] = np.var(x, ddof=1)
    for t in range(1, x.size):
        expect[t] = omega + a1 * (x[t - 1] - mu) ** 2 + b1 * expect[t - 1]
    assert np.allclose(s2, expect, rtol=1e-12, atol=0)
    assert np.allclose(e, x - mu)


# ---------------------------------------------------------------------------
# GARCH fitting
# ---------------------------------------------------------------------------


def _nll_oracle(x, mu, omega, a1, b1):
    """Likelihood evaluated by a direct loop, independent of the fit path."""
    e = x - mu
    s2 = np.var(x, ddof=1)
    nll = 0.0
    for t in range(x.size):
        if t > 0:
            s2 = omega + a1 * e[t - 1] ** 2 + b1 * s2
        nll += 0.5 * (math.log(2 * math.pi * s2) + e[t] ** 2 / s2)
    return nll


def test_garch_fit_recovers_generating_parameters():
    truth = GarchSpec(mu=0.0, omega=1e-5, a1=0.08, b1=0.90)
    x, _ = garch_simulate(truth, 2000, RngStream(75))
    fit = garch_fit(x, "normal")
    assert abs(fit.a1 - truth.a1) < 0.05
    assert abs(fit.b1 - truth.b1) < 0.05
    assert truth.omega / 2 < fit.omega < truth.omega * 2


def test_garch_fit_likelihood_not_worse_than_truth():
    truth = GarchSpec(mu=0.0, omega=1e-5, a1=0.08, b1=0.90)
    x, _ = garch_simulate(truth, 1500, RngStream(76))
    fit = garch_fit(x, "normal")
    nll_fit = _nll_oracle(x, fit.mu, fit.omega, fit.a1, fit.b1)
    nll_truth = _nll_oracle(x, truth.mu, truth.omega, truth.a1, truth.b1)
    assert nll_fit <= nll_truth + 1e-6


def test_garch_fit_rejects_degenerate_and_short_input():
    with pytest.raises(ValueError, match="degenerate"):
        garch_fit(np.ones(500), "normal")
    with pytest.raises(ValueError, match="at least 100"):
        garch_fit(np.arange(50, dtype=float), "normal")
    with pytest.raises(ValueError, match="innovation"):
        garch_fit(np.random.default_rng(0).standard_normal(200), "poisson")


def test_garch_fit_with_skew_t_innovations_smoke():
    truth = GarchSpec(
        mu=0.0, omega=1e-5, a1=0.08, b1=0.88, innovation="skew_t", nu=7.0, xi=1.3
    )
    x, _ = garch_simulate(truth, 1500, RngStream(77))
    fit = garch_fit(x, "skew_t")
    assert fit.innovation == "skew_t"
    assert abs(fit.a1 + fit.b1 - 0.96) < 0.08
    assert 0.9 < fit.xi < 1.8
    assert fit.nu > 3.0


# ---------------------------------------------------------------------------
# i.i.d. fitting
# ---------------------------------------------------------------------------


def test_fit_iid_normal_moment_recovery():
    d = Normal(0.001, 0.02)
    x = d.sample(10**5, RngStream(78))
    fit = fit_iid(x, "normal")
    assert isinstance(fit, Normal)
    assert abs(fit.mu - 0.001) < 2e-4
    assert abs(fit.sigma - 0.02) / 0.02 < 0.01


def test_fit_iid_skew_t_on_symmetric_data_finds_unit_skew():
    x = StudentT(5.0).sample(5000, RngStream(79))
    fit = fit_iid(x, "skew_t")
    assert isinstance(fit, SkewT)
    assert abs(fit.xi - 1.0) < 0.05
    assert 3.0 < fit.nu < 9.0


def test_fit_iid_skew_t_recovers_skewness_direction():
    x = SkewT(6.0, 1.5).sample(5000, RngStream(80))
    fit = fit_iid(x, "skew_t")
    assert fit.xi > 1.2


def test_fit_iid_input_validation():
    with pytest.raises(ValueError, match="at least 30"):
        fit_iid(np.arange(10, dtype=float), "normal")
    with pytest.raises(ValueError, match="degenerate"):
        fit_iid(np.full(100, 2.0), "normal")
    with pytest.raises(ValueError, match="model kind"):
        fit_iid(np.random.default_rng(0).standard_normal(100), "gamma")


# ---------------------------------------------------------------------------
# Monte Carlo null distributions
# ---------------------------------------------------------------------------


def test_mc_null_reproducible_and_worker_independent():
    cfg = McConfig(dist=Normal(), seed=90, n=250, runs=3000)
    nd_var_1, nd_es_1 = mc_null(cfg, workers=1)
    nd_var_4, nd_es_4 = mc_null(cfg, workers=4)
    nd_var_16, nd_es_16 = mc_null(cfg, workers=16)
    assert np.array_equal(nd_var_1.counts, nd_var_4.counts)
    assert np.array_equal(nd_var_1.counts, nd_var_16.counts)
    assert np.array_equal(nd_es_1.counts, nd_es_4.counts)
    assert np.array_equal(nd_es_1.counts, nd_es_16.counts)


def test_mc_null_var_statistic_tracks_binomial():
    cfg = McConfig(dist=StudentT(5.0), seed=91, n=250, runs=5000)
    nd_var, _ = mc_null(cfg)
    # the exception count is Binomial(250, 0.01) for any continuous law
    expected = stats.binom.cdf(4, 250, 0.01)
    assert nd_var.prob_at_most(4) == pytest.approx(expected, abs=0.02)
    mean = float((nd_var.counts * np.arange(nd_var.counts.size)).sum()) / cfg.runs
    assert mean == pytest.approx(2.5, abs=0.12)


def test_mc_null_conditional_garch_breaches_are_binomial():
    g = GarchSpec(mu=1e-4, omega=1e-5, a1=0.08, b1=0.90)
    cfg = McConfig(dist=g, seed=92, n=250, runs=1500)
    nd_var, nd_es = mc_null(cfg)
    mean = float((nd_var.counts * np.arange(nd_var.counts.size)).sum()) / cfg.runs
    assert mean == pytest.approx(2.5, abs=0.13)
    # worst-case-sum count concentrates near its null location
    assert 0.8 < nd_es.prob_at_most(11) < 1.0


def test_mc_null_single_run_degenerates_to_point_mass():
    cfg = McConfig(dist=Normal(), seed=93, n=50, runs=1)
    nd_var, nd_es = mc_null(cfg)
    assert nd_var.counts.sum() == 1
    assert nd_es.counts.sum() == 1
    assert nd_var.pmf.max() == 1.0


def test_mc_config_validation():
    with pytest.raises(ValueError):
        McConfig(dist=Normal(), seed=1, n=0)
    with pytest.raises(ValueError):
        McConfig(dist=Normal(), seed=1, runs=0)
    with pytest.raises(ValueError):
        McConfig(dist=Normal(), seed=1, alpha_var=1.5)
    with pytest.raises(ValueError):
        mc_null(McConfig(dist=Normal(), seed=1, runs=10), workers=0)


def test_null_distribution_invariants_and_csv(tmp_path):
    cfg = McConfig(dist=Normal(), seed=94, n=100, runs=2000)
    nd_var, nd_es = mc_null(cfg)
    for nd in (nd_var, nd_es):
        assert abs(nd.pmf.sum() - 1.0) < 1e-12
        assert np.all(np.diff(nd.cdf) >= 0)
        assert nd.cdf[-1] == 1.0
        assert nd.prob_below(0) == 0.0
        assert nd.prob_at_most(nd.n) == 1.0
        assert nd.prob_below(5) == nd.prob_at_most(4)
    path = tmp_path / "null.csv"
    nd_es.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "nominal_value,pmf,cdf"
    assert len(lines) == nd_es.n + 2
    last = lines[-1].split(",")
    assert int(last[0]) == nd_es.n
    assert float(last[2]) == 1.0


def test_null_distribution_rejects_inconsistent_counts():
    with pytest.raises(ValueError):
        NullDistribution("VAR", np.array([1, 2, 3]), runs=10, seed=0)


# ---------------------------------------------------------------------------
# fit-and-simulate bundles
# ---------------------------------------------------------------------------


def test_fit_and_simulate_normal_is_deterministic():
    x = Normal(0.0, 0.01).sample(500, RngStream(95))
    params_a, sims_a = fit_and_simulate(x, "normal", picks=3, seed=7, base_stream_id=0)
    params_b, sims_b = fit_and_simulate(x, "normal", picks=3, seed=7, base_stream_id=0)
    assert params_a == params_b
    assert params_a["model"] == "normal"
    assert len(sims_a) == 3
    for a, b in zip(sims_a, sims_b):
        assert a.size == 500
        assert np.array_equal(a, b)
    assert not np.array_equal(sims_a[0], sims_a[1])


def test_fit_and_simulate_garch_emits_paths():
    truth = GarchSpec(mu=0.0, omega=1e-5, a1=0.08, b1=0.90)
    x, _ = garch_simulate(truth, 600, RngStream(96))
    params, sims = fit_and_simulate(x, "garch_normal", picks=2, seed=8, base_stream_id=10)
    assert params["model"] == "garch_normal"
    assert len(sims) == 2 and sims[0].size == 600
    with pytest.raises(ValueError, match="model"):
        fit_and_simulate(x, "arch", picks=1, seed=8, base_stream_id=0)
    with pytest.raises(ValueError, match="picks"):
        fit_and_simulate(x, "normal", picks=0, seed=8, base_stream_id=0)
