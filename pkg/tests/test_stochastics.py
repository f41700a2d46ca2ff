import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fraudnetsim.errors import ParameterError
from fraudnetsim.stochastics import (
    Bernoulli,
    Categorical,
    CopulaSpec,
    Exponential,
    Gamma,
    Normal,
    Poisson,
    RandomStream,
    Uniform,
    copula_conditional_inverse,
    couple_feature,
    kendall_tau,
    sample_copula_pair,
    sample_scalar,
)


# independent copula CDFs used as oracles
def frank_cdf(u, v, th):
    return -np.log1p(np.expm1(-th * u) * np.expm1(-th * v) / np.expm1(-th)) / th


def amh_cdf(u, v, th):
    return u * v / (1.0 - th * (1.0 - u) * (1.0 - v))


def numeric_tau(cdf, th, n=400):
    # tau = 1 - 4 * integral of dC/du * dC/dv over the unit square
    g = (np.arange(n) + 0.5) / n
    u, v = np.meshgrid(g, g, indexing="ij")
    h = 1e-6
    cu = (cdf(u + h, v, th) - cdf(u - h, v, th)) / (2 * h)
    cv = (cdf(u, v + h, th) - cdf(u, v - h, th)) / (2 * h)
    return 1.0 - 4.0 * np.mean(cu * cv)


class TestRandomStream:
    def test_same_path_same_draws(self):
        a = RandomStream(42).child("claims", 3).rng.random(5)
        b = RandomStream(42).child("claims", 3).rng.random(5)
        assert np.array_equal(a, b)

    def test_distinct_paths_differ(self):
        a = RandomStream(42).child("claims", 3).rng.random(5)
        b = RandomStream(42).child("claims", 4).rng.random(5)
        c = RandomStream(43).child("claims", 3).rng.random(5)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_draws_independent_of_generation_order(self):
        root = RandomStream(7)
        first = [root.child("ph", i).rng.random() for i in range(5)]
        second = [root.child("ph", i).rng.random() for i in reversed(range(5))][::-1]
        assert first == second

    def test_sibling_streams_uncorrelated(self):
        root = RandomStream(1)
        a = root.child("x").rng.random(50_000)
        b = root.child("y").rng.random(50_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 3 / np.sqrt(50_000) * 1.5

    def test_bad_seed(self):
        with pytest.raises(ParameterError):
            RandomStream(-1)


class TestDistributions:
    def test_bernoulli_zero(self):
        s = RandomStream(0)
        assert np.all(Bernoulli(0.0).sample(s, 1000) == 0)
        assert sample_scalar(Bernoulli(0.0), s) == 0

    def test_uniform_mean(self):
        x = Uniform(0, 1).sample(RandomStream(5), 100_000)
        assert abs(x.mean() - 0.5) < 0.01

    @pytest.mark.parametrize(
        "dist, ref",
        [
            (Normal(40, 15), stats.norm(40, 15)),
            (Uniform(2, 5), stats.uniform(2, 3)),
            (Poisson(1.3), stats.poisson(1.3)),
            (Gamma(0.25, 0.5), stats.gamma(0.25, scale=2.0)),
            (Exponential(0.25), stats.expon(scale=4.0)),
        ],
    )
    def test_ppf_matches_scipy(self, dist, ref):
        q = np.linspace(0.01, 0.99, 25)
        assert np.allclose(dist.ppf(q), ref.ppf(q))

    def test_gamma_rate_parameterisation_mean(self):
        x = Gamma(1.0, 1.0 / 3.0).sample(RandomStream(2), 200_000)
        assert abs(x.mean() - 3.0) < 3 * 3.0 / np.sqrt(200_000) * 1.5

    @pytest.mark.parametrize(
        "factory",
        [lambda: Normal(0, 0), lambda: Uniform(2, 1), lambda: Poisson(-1), lambda: Gamma(0, 1),
         lambda: Exponential(0), lambda: Bernoulli(1.5)],
    )
    def test_invalid_parameters(self, factory):
        with pytest.raises(ParameterError):
            factory()

    def test_categorical_ties_go_to_lower_index(self):
        c = Categorical(("a", "b", "c"), (0.5, 0.25, 0.25))
        assert c.ppf(0.5) == "a"
        assert c.ppf(np.nextafter(0.5, 1)) == "b"
        assert c.ppf(0.75) == "b"
        half = Categorical((0, 1), (1.0, 1.0), normalize=True)
        assert half.ppf(0.5) == 0

    def test_categorical_mode_frequency(self):
        c = Categorical((0, 1, 2, 3, 4, 5), (0.025, 0.6, 0.2, 0.1, 0.1, 0.025), normalize=True)
        x = c.sample(RandomStream(3), 100_000)
        p = 0.6 / 1.05
        assert abs((x == 1).mean() - p) < 3 * np.sqrt(p * (1 - p) / 100_000)

    def test_categorical_unnormalised_rejected(self):
        with pytest.raises(ParameterError):
            Categorical((0, 1), (0.5, 0.6))


class TestCopulas:
    @pytest.mark.parametrize("family, theta, cdf", [("FRANK", -25.0, frank_cdf), ("FRANK", 4.0, frank_cdf),
                                                    ("AMH", 0.95, amh_cdf), ("AMH", -0.15, amh_cdf)])
    def test_conditional_inverse_solves_numeric_conditional(self, family, theta, cdf):
        rng = np.random.default_rng(0)
        u = rng.uniform(0.02, 0.98, 200)
        w = rng.uniform(0.02, 0.98, 200)
        v = copula_conditional_inverse(CopulaSpec(family, theta), u, w)
        h = 1e-6
        cond = (cdf(u + h, v, theta) - cdf(u - h, v, theta)) / (2 * h)
        assert np.allclose(cond, w, atol=1e-5)

    @pytest.mark.parametrize("family, theta, cdf", [("FRANK", -25.0, frank_cdf), ("FRANK", 3.0, frank_cdf),
                                                    ("AMH", 0.95, amh_cdf), ("AMH", 0.15, amh_cdf),
                                                    ("AMH", -0.15, amh_cdf)])
    def test_closed_form_tau_matches_numeric_integral(self, family, theta, cdf):
        assert kendall_tau(CopulaSpec(family, theta)) == pytest.approx(numeric_tau(cdf, theta), abs=2e-3)

    @pytest.mark.parametrize("family, theta", [("FRANK", -25.0), ("AMH", 0.95), ("AMH", -0.15)])
    def test_sampled_tau_matches_closed_form(self, family, theta):
        spec = CopulaSpec(family, theta)
        u, v = sample_copula_pair(spec, RandomStream(11), 20_000)
        tau = stats.kendalltau(u, v).statistic
        assert abs(tau - kendall_tau(spec)) < 0.02

    @pytest.mark.parametrize("family, theta", [("FRANK", -25.0), ("AMH", 0.95), ("AMH", -0.15)])
    def test_marginals_uniform(self, family, theta):
        u, v = sample_copula_pair(CopulaSpec(family, theta), RandomStream(12), 100_000)
        assert stats.kstest(u, "uniform").pvalue > 0.001
        assert stats.kstest(v, "uniform").pvalue > 0.001

    def test_frank_small_theta_tau_vanishes(self):
        assert abs(kendall_tau(CopulaSpec("FRANK", 1e-3))) < 1e-3

    def test_frank_guard_path_is_independence(self):
        spec = CopulaSpec("FRANK", 1e-10)
        x = np.arange(10_000, dtype=float)
        y = couple_feature(x, Uniform(0, 1), spec, RandomStream(4))
        assert abs(stats.spearmanr(x, y).statistic) < 0.03

    def test_frank_strong_negative_coupling(self):
        x = Normal(7.5, np.sqrt(5)).sample(RandomStream(5), 10_000)
        y = couple_feature(x, Exponential(0.8), CopulaSpec("FRANK", -25), RandomStream(6))
        assert stats.spearmanr(x, y).statistic < -0.8

    def test_amh_weak_negative(self):
        x = Normal(40, 15).sample(RandomStream(7), 100_000)
        y = couple_feature(x, Uniform(0, 1), CopulaSpec("AMH", -0.15), RandomStream(8))
        tau = stats.kendalltau(x, y).statistic
        assert -0.05 < tau < 0

    def test_couple_feature_keeps_marginal(self):
        x = np.random.default_rng(1).normal(size=50_000)
        y = couple_feature(x, Exponential(0.25), CopulaSpec("AMH", 0.95), RandomStream(9))
        assert stats.kstest(y, stats.expon(scale=4.0).cdf).pvalue > 0.001

    @pytest.mark.parametrize("family, theta", [("AMH", 1.0), ("AMH", -1.5), ("FRANK", 0.0), ("GUMBEL", 2.0)])
    def test_invalid_copula(self, family, theta):
        with pytest.raises(ParameterError):
            CopulaSpec(family, theta)

    @settings(max_examples=40, deadline=None)
    @given(
        theta=st.floats(-1.0, 0.99),
        u=st.floats(0.001, 0.999),
        w1=st.floats(0.001, 0.999),
        w2=st.floats(0.001, 0.999),
    )
    def test_amh_inverse_monotone_in_w(self, theta, u, w1, w2):
        lo, hi = sorted((w1, w2))
        spec = CopulaSpec("AMH", theta)
        assert copula_conditional_inverse(spec, u, lo) <= copula_conditional_inverse(spec, u, hi) + 1e-9
