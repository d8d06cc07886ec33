import numpy as np
import pytest
from scipy.stats import nbinom

from mstcar.baseline import eb_hyperparams, eb_posterior, eb_predictive_replicates
from mstcar.rng import RngStream

from helpers import toy_panel

BASE = RngStream(88)


def test_hyperparams_match_national_rate():
    deaths = np.array([[[300]], [[200]]])
    pops = np.array([[[60_000]], [[40_000]]])
    panel = toy_panel(deaths, pops)
    params = eb_hyperparams(panel)
    assert params.shape[0, 0] == pytest.approx(5.0)  # 500/100000 * 1000
    assert params.rate[0, 0] == 1000.0
    assert not params.zero_death_layers.any()


def test_hyperparams_zero_death_layer_flagged():
    panel = toy_panel(np.zeros((2, 1, 1), dtype=int), np.full((2, 1, 1), 100))
    params = eb_hyperparams(panel)
    assert params.shape[0, 0] == 0.0
    assert params.zero_death_layers[0, 0]


def test_hyperparams_pseudo_population_override_scales_shape():
    deaths = np.array([[[300]], [[200]]])
    pops = np.array([[[60_000]], [[40_000]]])
    panel = toy_panel(deaths, pops)
    doubled = eb_hyperparams(panel, pseudo_population=2000.0)
    assert doubled.shape[0, 0] == pytest.approx(10.0)
    assert doubled.rate[0, 0] == 2000.0


def test_hyperparams_zero_population_layer_errors():
    panel = toy_panel(np.zeros((1, 1, 1), dtype=int), np.zeros((1, 1, 1), dtype=int))
    with pytest.raises(ValueError, match="zero total population"):
        eb_hyperparams(panel)


def test_posterior_conjugacy():
    deaths = np.array([[[2]], [[3]]])
    pops = np.array([[[500]], [[500]]])
    panel = toy_panel(deaths, pops)
    params = eb_hyperparams(panel)
    params = type(params)(shape=np.array([[5.0]]), rate=np.array([[1000.0]]),
                          zero_death_layers=np.array([[False]]))
    shape, rate = eb_posterior(panel, params)
    assert shape[0, 0, 0] == pytest.approx(7.0)
    assert rate[0, 0, 0] == pytest.approx(1500.0)
    assert (shape / rate)[0, 0, 0] == pytest.approx(7.0 / 1500.0)


def test_posterior_prior_unchanged_for_empty_cell():
    deaths = np.array([[[0]], [[4]]])
    pops = np.array([[[0]], [[400]]])
    panel = toy_panel(deaths, pops)
    params = eb_hyperparams(panel)
    shape, rate = eb_posterior(panel, params)
    assert shape[0, 0, 0] == params.shape[0, 0]
    assert rate[0, 0, 0] == params.rate[0, 0]


def test_posterior_data_dominance():
    r = 0.004
    n = 10_000_000
    deaths = np.array([[[int(r * n)]], [[1]]])
    pops = np.array([[[n]], [[1000]]])
    panel = toy_panel(deaths, pops)
    params = eb_hyperparams(panel)
    shape, rate = eb_posterior(panel, params)
    assert (shape / rate)[0, 0, 0] == pytest.approx(r, rel=1e-3)


def test_posterior_mean_between_prior_mean_and_crude_rate():
    rng = np.random.default_rng(0)
    pops = rng.integers(100, 5000, size=(6, 2, 2))
    deaths = rng.binomial(pops, 0.01)
    deaths[0][deaths.sum(axis=0) == 0] += 1
    panel = toy_panel(deaths, pops)
    params = eb_hyperparams(panel)
    shape, rate = eb_posterior(panel, params)
    post_mean = shape / rate
    prior_mean = (params.shape / params.rate)[None]
    crude = deaths / pops
    lo = np.minimum(prior_mean, crude)
    hi = np.maximum(prior_mean, crude)
    distinct = np.abs(prior_mean - crude) > 1e-12
    assert np.all(post_mean[distinct] > lo[distinct])
    assert np.all(post_mean[distinct] < hi[distinct])


def test_posterior_improper_cell_errors():
    panel = toy_panel(np.zeros((1, 1, 1), dtype=int), np.full((1, 1, 1), 100))
    params = eb_hyperparams(panel)
    with pytest.raises(ValueError, match="improper posterior"):
        eb_posterior(panel, params)


def test_replicates_zero_population():
    deaths = np.array([[[0]], [[5]]])
    pops = np.array([[[0]], [[500]]])
    panel = toy_panel(deaths, pops)
    shape, rate = eb_posterior(panel, eb_hyperparams(panel))
    reps, _ = eb_predictive_replicates(panel, (shape, rate), 60, BASE.substream(0))
    assert np.all(reps[:, 0] == 0)


def test_replicate_moments_match_negative_binomial():
    deaths = np.array([[[4]], [[6]]])
    pops = np.array([[[800]], [[1200]]])
    panel = toy_panel(deaths, pops)
    shape, rate = eb_posterior(panel, eb_hyperparams(panel))
    n_reps = 10_000
    reps, _ = eb_predictive_replicates(panel, (shape, rate), n_reps, BASE.substream(1))
    # marginal predictive: NB with size a, p = (b + n)/(b + 2n) per cell
    for i in range(2):
        a = shape[i, 0, 0]
        b = rate[i, 0, 0]
        n = pops[i, 0, 0]
        mean = a / b * n
        var = mean + n ** 2 * a / b ** 2
        se = np.sqrt(var / n_reps)
        assert abs(reps[:, i, 0, 0].mean() - mean) < 3 * se
        # overdispersion of the mixture
        assert reps[:, i, 0, 0].var() > reps[:, i, 0, 0].mean()
        # distribution check against the closed-form negative binomial
        p = b / (b + n)
        grid = np.arange(0, 30)
        emp = np.array([(reps[:, i, 0, 0] == k).mean() for k in grid])
        assert np.max(np.abs(emp - nbinom.pmf(grid, a, p))) < 0.02


def test_replicates_deterministic():
    deaths = np.array([[[4]]])
    pops = np.array([[[800]]])
    panel = toy_panel(deaths, pops)
    post = eb_posterior(panel, eb_hyperparams(panel))
    a, _ = eb_predictive_replicates(panel, post, 50, RngStream(5, (2,)))
    b, _ = eb_predictive_replicates(panel, post, 50, RngStream(5, (2,)))
    assert np.array_equal(a, b)


def test_replicates_minimum_count():
    panel = toy_panel(np.array([[[1]]]), np.array([[[100]]]))
    post = eb_posterior(panel, eb_hyperparams(panel))
    with pytest.raises(ValueError, match="at least 40"):
        eb_predictive_replicates(panel, post, 10, BASE.substream(3))
