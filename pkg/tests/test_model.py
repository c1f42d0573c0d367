import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.special import betaln, comb

from rjda import (
    DaState,
    DomainError,
    EncounterData,
    PriorOnN,
    RandomEffects,
    RjState,
    log_cdl,
    log_combinatorial,
    log_prior_n,
    log_random_effect_density,
)
from rjda.model import Hyperprior


def _state(p, theta=(1.0, 1.0)):
    return RjState(len(p), np.array(p, dtype=float), theta)


# --- EncounterData -----------------------------------------------------------


def test_hare_frequencies():
    d = EncounterData.from_frequencies([25, 22, 13, 5, 1, 2])
    assert (d.k, d.n) == (6, 68)
    assert not d.has_histories


def test_histories_tally():
    d = EncounterData.from_histories([[1, 0], [1, 1], [0, 1], [1, 0]])
    assert d.history_counts == {(1, 0): 2, (1, 1): 1, (0, 1): 1}
    assert d.frequencies == (3, 1)
    assert list(d.captures) == [2, 1, 1, 1]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(k=0, frequencies=()),
        dict(k=2, frequencies=(1,)),
        dict(k=2, frequencies=(1, -1)),
        dict(k=2, frequencies=(1, 0), history_counts={(1, 1): 1}),
        dict(k=2, frequencies=(0, 0), history_counts={(0, 0): 1}),
    ],
)
def test_encounter_data_rejects_inconsistent(kwargs):
    with pytest.raises(ValueError):
        EncounterData(**kwargs)


# --- logCdl ------------------------------------------------------------------


def test_log_cdl_single_cell():
    d = EncounterData.from_frequencies([1])
    assert log_cdl(d, _state([0.5]), RandomEffects.beta(1, 1)) == pytest.approx(math.log(0.5))


def test_log_cdl_four_cells():
    d = EncounterData.from_frequencies([0, 1])
    assert log_cdl(d, _state([0.5, 0.5]), RandomEffects.beta(1, 1)) == pytest.approx(4 * math.log(0.5))


def test_log_cdl_hand_evaluation():
    d = EncounterData.from_frequencies([2, 0])
    p = [0.2, 0.4, 0.7]
    y = [1, 1, 0]
    naive = 0.0
    for pi, yi in zip(p, y):
        for occasion in range(2):
            naive += math.log(pi) if occasion < yi else math.log(1 - pi)
    expected = math.log(0.2 * 0.8) + math.log(0.4 * 0.6) + math.log(0.3**2)
    assert naive == pytest.approx(expected)
    assert log_cdl(d, _state(p), RandomEffects.beta(1, 1)) == pytest.approx(expected)


def test_log_cdl_rejects_endpoints():
    d = EncounterData.from_frequencies([1])
    with pytest.raises(DomainError):
        log_cdl(d, _state([1.0]), RandomEffects.beta(1, 1))


@given(
    st.lists(st.integers(0, 3), min_size=1, max_size=7),
    st.randoms(use_true_random=False),
    st.sampled_from([RandomEffects.beta(0.7, 2.0), RandomEffects.logit_normal(-0.5, 1.3)]),
)
def test_log_cdl_permutation_invariant(ys, rnd, effects):
    """Permuting (y_i, p_i) pairs together leaves the CDL unchanged."""
    k = 3
    y = np.array(ys)
    p = np.array([rnd.uniform(0.01, 0.99) for _ in ys])

    def direct(y, p):
        return float(np.sum(log_random_effect_density(p, effects) + y * np.log(p) + (k - y) * np.log1p(-p)))

    perm = list(range(len(ys)))
    rnd.shuffle(perm)
    assert direct(y[perm], p[perm]) == pytest.approx(direct(y, p), rel=1e-12, abs=1e-12)
    # The library's layout puts observed rows first; the sorted order must agree.
    observed = y > 0
    if observed.any():
        freqs = [int(np.sum(y == j)) for j in range(1, k + 1)]
        data = EncounterData.from_frequencies(freqs)
        order = np.lexsort((np.arange(len(y)), -y))
        got = log_cdl(data, RjState(len(y), p[order], effects.theta), effects)
        assert got == pytest.approx(direct(y, p), rel=1e-12, abs=1e-12)


# --- logCombinatorial --------------------------------------------------------


def test_log_combinatorial_examples():
    one = EncounterData.from_histories([[1]])
    assert log_combinatorial(1, one, "full") == 0.0
    five = EncounterData.from_frequencies([3])
    assert log_combinatorial(5, five, "observed_order_fixed") == pytest.approx(math.log(60))


def _distinct_labellings(matrix):
    return len({tuple(map(tuple, perm)) for perm in itertools.permutations(matrix)})


def test_log_combinatorial_counts_labellings():
    hist = [[1, 0, 0], [0, 1, 0], [1, 1, 0]]
    data = EncounterData.from_histories(hist)
    full = hist + [[0, 0, 0]]
    assert _distinct_labellings(full) == 24
    assert log_combinatorial(4, data, "full") == pytest.approx(math.log(24))


def test_log_combinatorial_matches_enumeration_with_repeats():
    hist = [[1, 0], [1, 0], [0, 1]]
    data = EncounterData.from_histories(hist)
    full = hist + [[0, 0]] * 2
    assert log_combinatorial(5, data, "full") == pytest.approx(math.log(_distinct_labellings(full)))


def test_log_combinatorial_errors():
    data = EncounterData.from_frequencies([2])
    with pytest.raises(DomainError):
        log_combinatorial(1, data, "observed_order_fixed")
    with pytest.raises(ValueError):
        log_combinatorial(3, data, "full")


@given(
    st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=8)
    .map(lambda rows: [r for r in rows if sum(r)])
    .filter(bool),
    st.integers(0, 20),
)
def test_combinatorial_mode_difference_constant(rows, extra):
    data = EncounterData.from_histories(rows)
    N = data.n + extra
    diff = log_combinatorial(N, data, "full") - log_combinatorial(N, data, "observed_order_fixed")
    assert diff == pytest.approx(-data.log_history_multiplicity(), abs=1e-9)


# --- logRandomEffectDensity --------------------------------------------------


def test_random_effect_density_examples():
    assert log_random_effect_density(0.3, RandomEffects.beta(1, 1)) == pytest.approx(0.0)
    assert log_random_effect_density(0.5, RandomEffects.logit_normal(0, 1)) == pytest.approx(
        stats.norm.logpdf(0.0) - math.log(0.25)
    )
    assert log_random_effect_density(0.5, RandomEffects.beta(2, 2)) == pytest.approx(math.log(1.5))


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_random_effect_density_domain(p):
    with pytest.raises(DomainError):
        log_random_effect_density(p, RandomEffects.beta(1, 1))


@given(
    st.one_of(
        st.tuples(st.just("beta"), st.floats(1.0, 30.0), st.floats(1.0, 30.0)),
        st.tuples(st.just("logitnormal"), st.floats(-3.0, 3.0), st.floats(0.2, 20.0)),
    )
)
def test_random_effect_density_integrates_to_one(spec):
    family, a, b = spec
    effects = RandomEffects(family, (a, b))
    val, _ = integrate.quad(
        lambda p: math.exp(log_random_effect_density(p, effects)), 0, 1, epsabs=1e-12, epsrel=1e-11, limit=400,
        points=[a / (a + b)] if family == "beta" else [1 / (1 + math.exp(-a))],
    )
    assert val == pytest.approx(1.0, abs=1e-8)


def test_random_effect_density_matches_scipy():
    p = np.linspace(0.01, 0.99, 25)
    got = log_random_effect_density(p, RandomEffects.beta(2.5, 0.7))
    np.testing.assert_allclose(got, stats.beta.logpdf(p, 2.5, 0.7), rtol=1e-12)
    mu, tau = 0.3, 2.0
    ln = log_random_effect_density(p, RandomEffects.logit_normal(mu, tau))
    ref = stats.norm.logpdf(np.log(p / (1 - p)), mu, 1 / math.sqrt(tau)) - np.log(p * (1 - p))
    np.testing.assert_allclose(ln, ref, rtol=1e-12)


# --- Hyperpriors ---------------------------------------------------------------


@pytest.mark.parametrize(
    "hp, ref",
    [
        (Hyperprior("logistic", 0.0, 1.0), stats.logistic(0, 1)),
        (Hyperprior("normal", 1.0, 4.0), stats.norm(1.0, 0.5)),
        (Hyperprior("gamma", 2.0, 0.5), stats.gamma(2.0, scale=2.0)),
        (Hyperprior("half_t", 5.0, 2.0), stats.halfcauchy(scale=1) if False else None),
    ],
)
def test_hyperprior_logpdf(hp, ref):
    xs = [0.1, 0.7, 2.5, 9.0]
    if ref is None:
        # |5 t| with t ~ t_2 has density 2/5 * t_2(x/5) on x > 0.
        expected = [math.log(2 / 5) + stats.t.logpdf(x / 5, 2) for x in xs]
    else:
        expected = [ref.logpdf(x) for x in xs]
    assert [hp.logpdf(x) for x in xs] == pytest.approx(expected, rel=1e-10)


def test_standard_effects_start_at_medians():
    e = RandomEffects.standard()
    assert e.family == "logitnormal" and e.estimate
    assert e.theta[0] == pytest.approx(0.0)
    assert e.theta[1] == pytest.approx(5 * stats.t(2).ppf(0.75))


# --- logPriorN -----------------------------------------------------------------


def test_prior_examples():
    assert log_prior_n(3, PriorOnN.uniform(10)) == pytest.approx(math.log(1 / 11))
    expected = math.log(comb(5, 2)) + betaln(4, 6) - betaln(2, 3)
    assert log_prior_n(2, PriorOnN.psi_mixture(5, 2, 3)) == pytest.approx(expected)
    # Cross-check by psi-grid quadrature.
    val, _ = integrate.quad(lambda s: stats.binom.pmf(2, 5, s) * stats.beta.pdf(s, 2, 3), 0, 1)
    assert math.exp(log_prior_n(2, PriorOnN.psi_mixture(5, 2, 3))) == pytest.approx(val, rel=1e-10)


def test_prior_off_support_is_minus_inf():
    assert log_prior_n(11, PriorOnN.uniform(10)) == -math.inf
    assert log_prior_n(-1, PriorOnN.uniform(10)) == -math.inf
    assert log_prior_n(0, PriorOnN.jeffreys(10)) == -math.inf


prior_strategy = st.integers(1, 300).flatmap(
    lambda M: st.one_of(
        st.just(PriorOnN.uniform(M)),
        st.just(PriorOnN.jeffreys(M)),
        st.builds(lambda a, b: PriorOnN.psi_mixture(M, a, b), st.floats(1e-3, 20), st.floats(1e-3, 20)),
        st.lists(st.floats(0.0, 5.0), min_size=M + 1, max_size=M + 1)
        .filter(lambda m: sum(m) > 0)
        .map(PriorOnN.custom),
    )
)


@given(prior_strategy)
def test_prior_masses_sum_to_one(prior):
    total = sum(math.exp(log_prior_n(N, prior)) for N in range(prior.M + 1))
    assert total == pytest.approx(1.0, abs=1e-10)


@given(st.integers(0, 1000))
def test_psi_mixture_uniform_equals_discrete_uniform(M):
    np.testing.assert_allclose(
        np.exp(PriorOnN.psi_mixture(M, 1, 1).log_masses), np.exp(PriorOnN.uniform(M).log_masses), rtol=1e-12
    )


def test_custom_prior_rejects_bad_tables():
    with pytest.raises(ValueError):
        PriorOnN.custom([1.0, -1.0])
    with pytest.raises(ValueError):
        PriorOnN.custom([0.0, 0.0])


# --- States --------------------------------------------------------------------


def test_rj_state_checks():
    d = EncounterData.from_frequencies([2])
    with pytest.raises(ValueError):
        RjState(3, np.full(2, 0.5), (1, 1))
    with pytest.raises(DomainError):
        RjState(1, np.full(1, 0.5), (1, 1)).validate(d)


def test_da_state_checks():
    d = EncounterData.from_frequencies([2])
    s = DaState(np.array([1, 1, 0, 1]), np.full(4, 0.5), 0.5, (1, 1))
    s.validate(d)
    assert (s.M, s.N) == (4, 3)
    with pytest.raises(DomainError):
        DaState(np.array([1, 0, 1, 1]), np.full(4, 0.5), 0.5, (1, 1)).validate(d)
