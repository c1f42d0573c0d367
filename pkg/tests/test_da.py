import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from rjda import DaState, EncounterData, PriorOnN, RandomEffects, RjState
from rjda.da import DaConfig, JEFFREYS_EPS, run_da_chain, update_capture_probs_da, update_psi, update_w
from rjda.diagnostics import empirical_pmf, tv_distance
from rjda.marginal import exact_posterior
from rjda.rjmcmc import update_capture_probs


def _state(n, M, p, psi, theta=(1.0, 1.0), w=None):
    w = np.r_[np.ones(n, int), np.zeros(M - n, int)] if w is None else w
    return DaState(w, np.full(M, p) if np.isscalar(p) else p, psi, theta)


def test_w_all_included_when_psi_is_one():
    data = EncounterData.from_frequencies([2])
    s = update_w(_state(2, 50, 0.7, 1.0), data, RandomEffects.beta(1, 1), np.random.default_rng(0))
    assert s.N == 50


def test_w_excluded_when_p_near_one():
    data = EncounterData.from_frequencies([2])
    s = update_w(_state(2, 50, 1 - 1e-12, 0.9), data, RandomEffects.beta(1, 1), np.random.default_rng(0))
    assert s.N == 2


@pytest.mark.parametrize("random_scan", [False, True])
def test_w_inclusion_probability(random_scan):
    data = EncounterData.from_frequencies([1])
    rng = np.random.default_rng(1)
    # Start at the stationary law: a random scan does not visit every row.
    w = np.r_[1, (rng.random(60_000) < 1 / 3).astype(int)]
    s = update_w(_state(1, 60_001, 0.5, 0.5, w=w), data, RandomEffects.beta(1, 1), rng, random_scan)
    frac = s.w[1:].mean()
    assert abs(frac - 1 / 3) < 4 * math.sqrt(2 / 9 / 60_000)
    assert s.w[0] == 1


def test_w_never_touches_observed_rows():
    data = EncounterData.from_frequencies([3, 2])
    s = update_w(_state(5, 40, 0.99, 0.01), data, RandomEffects.beta(1, 1), np.random.default_rng(2))
    assert np.all(s.w[:5] == 1)


@pytest.mark.parametrize("prior, N, M", [((1, 1), 4, 4), ((1, 1), 0, 4), ((2, 3), 3, 10)])
def test_psi_conjugate(prior, N, M):
    cfg = DaConfig(M, 10, psi_prior=prior)
    w = np.r_[np.ones(N, int), np.zeros(M - N, int)]
    s = DaState(w, np.full(M, 0.5), 0.5, (1, 1))
    rng = np.random.default_rng(3)
    draws = np.array([update_psi(s, cfg, rng).psi for _ in range(20_000)])
    ref = stats.beta(prior[0] + N, prior[1] + M - N)
    assert stats.kstest(draws, ref.cdf).pvalue > 1e-3


def test_phantom_rows_refresh_from_prior():
    data = EncounterData.from_frequencies([0, 1])
    M = 20_001
    w = np.zeros(M, int)
    w[0] = 1
    s = update_capture_probs_da(_state(1, M, 0.5, 0.5, (2.0, 5.0), w), data, RandomEffects.beta(2, 5), np.random.default_rng(4))
    assert stats.kstest(s.p[1:], stats.beta(2, 5).cdf).pvalue > 1e-3


def test_included_rows_conjugate():
    data = EncounterData.from_frequencies([0, 20_000])
    M = 20_000
    s = update_capture_probs_da(_state(M, M, 0.5, 0.5, (2.0, 5.0)), data, RandomEffects.beta(2, 5), np.random.default_rng(5))
    assert stats.kstest(s.p, stats.beta(4, 5).cdf).pvalue > 1e-3


def test_da_and_rj_slice_updates_agree():
    """Two-sample test between the two samplers' logit-normal capture-probability updates."""
    rows = 15_000
    data = EncounterData.from_frequencies([rows, 0, 0])
    e = RandomEffects.logit_normal(-0.3, 0.8)
    rj = RjState(rows, np.full(rows, 0.5), e.theta)
    da = _state(rows, rows, 0.5, 0.5, e.theta)
    rng = np.random.default_rng(6)
    for _ in range(15):
        rj = update_capture_probs(rj, data, e, rng)
        da = update_capture_probs_da(da, data, e, rng)
    assert stats.ks_2samp(rj.p, da.p).pvalue > 1e-3


def test_m_equals_n_gives_constant_n_and_beta_psi():
    data = EncounterData.from_frequencies([2, 2])
    ch = run_da_chain(data, RandomEffects.beta(1, 1), DaConfig(4, 40_000, 0, psi_prior=(2, 3), seed=1))
    assert set(ch["N"]) == {4}
    assert stats.kstest(ch["psi"][::10], stats.beta(2 + 4, 3).cdf).pvalue > 1e-3


def test_da_oracle_short(toy):
    data, e, prior = toy
    ch = run_da_chain(data, e, DaConfig(6, 200_000, 1000, seed=2))
    assert tv_distance(empirical_pmf(ch["N"]), exact_posterior(data, e, prior).pmf()) < 0.02
    assert ch["N"].min() >= data.n


def test_da_empty_data_recovers_prior_predictive():
    """With no captures allowed, N follows the beta-binomial law times theta_0^N."""
    data = EncounterData.from_frequencies([0])
    e = RandomEffects.beta(1, 1)
    M = 6
    ch = run_da_chain(data, e, DaConfig(M, 300_000, 1000, seed=3, psi_prior=(2, 2)), allow_empty=True)
    exact = exact_posterior(data, e, PriorOnN.psi_mixture(M, 2, 2)).pmf()
    assert tv_distance(empirical_pmf(ch["N"]), exact) < 0.01


@given(st.integers(0, 30), st.integers(1, 30))
def test_induced_prior_is_beta_binomial(N, extra):
    M = N + extra
    cfg = DaConfig(M, 10, psi_prior=(1, 1))
    assert np.allclose(np.exp(cfg.induced_prior().log_masses), 1 / (M + 1))


def test_jeffreys_preset():
    cfg = DaConfig.preset(50, 10, "jeffreys")
    assert cfg.psi_prior == (JEFFREYS_EPS, 1.0)


def test_determinism_and_config_checks(toy):
    data, e, _ = toy
    cfg = DaConfig(6, 5000, 100, seed=8)
    assert run_da_chain(data, e, cfg).to_csv() == run_da_chain(data, e, cfg).to_csv()
    with pytest.raises(ValueError):
        DaConfig(6, 100, psi_prior=(0, 1))
    with pytest.raises(ValueError):
        run_da_chain(data, e, DaConfig(2, 100))


def test_estimated_hyperparameters_columns():
    data = EncounterData.from_frequencies([3, 2, 1])
    ch = run_da_chain(data, RandomEffects.standard(), DaConfig(30, 3000, 500, seed=4))
    assert set(ch.columns) == {"N", "psi", "mu", "tau"}
    assert np.all((ch["psi"] > 0) & (ch["psi"] < 1))


def test_psi_mean_tracks_conjugate_expectation():
    """E[psi | w] = (N + 1) / (M + 2) under Beta(1, 1), averaged over the chain."""
    data = EncounterData.from_frequencies([2, 1])
    M = 10
    ch = run_da_chain(data, RandomEffects.beta(1, 1), DaConfig(M, 200_000, 1000, seed=5))
    assert ch["psi"].mean() == pytest.approx(((ch["N"] + 1) / (M + 2)).mean(), abs=0.005)
