"""Acceptance criteria 1-9, each reported as one PASS/FAIL line.

Monte Carlo runs are cached per session so that criteria sharing a run
(for example the hare comparison and the hare shape checks) do not repeat it.
Run directly with ``python tests/test_acceptance.py`` or through pytest; the
lines are echoed in pytest's terminal summary.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from scipy.special import betaln, logit

from conftest import oracle_grid, record
from rjda import EncounterData, PriorOnN, RandomEffects, RjState
from rjda import _kernels as K
from rjda.cli import RunConfig, load_run, main, read_manifest, run_pipeline
from rjda.diagnostics import Chain, density_data, empirical_pmf, tv_distance
from rjda.marginal import compute_theta_jf, exact_posterior
from rjda.model import log_random_effect_density
from rjda.rjmcmc import JumpProposal, acceptance_ratio, log_base, log_rj_target
from rjda.runner import McmcControls, run_chains

ORACLE_ITERS = 1_000_000
ORACLE_BURN = 1_000
GRID = {name: (data, effects, M) for name, data, effects, M in oracle_grid()}
HARE_SEEDS = (1, 2, 3, 4, 5)


@lru_cache(maxsize=None)
def oracle_chain(name: str, sampler: str, term: str = "exact") -> dict:
    data, effects, M = GRID[name]
    ctl = McmcControls(ORACLE_ITERS, ORACLE_BURN, 1, seed=20240 + list(GRID).index(name), term=term)
    return empirical_pmf(run_chains(sampler, data, effects, PriorOnN.uniform(M), ctl)[0]["N"])


@lru_cache(maxsize=None)
def oracle_exact(name: str) -> dict:
    data, effects, M = GRID[name]
    return exact_posterior(data, effects, PriorOnN.uniform(M)).pmf()


@lru_cache(maxsize=None)
def hare_run(seed: int, root: str) -> dict:
    """The ``hare`` subcommand at its defaults (200k x 4 chains, M = 400)."""
    out = f"{root}/hare_seed{seed}"
    assert main(["hare", "--out", out, "--seed", str(seed)]) == 0
    return {s: load_run(f"{out}/{s}") for s in ("rj", "da")}


@pytest.fixture(scope="session")
def hare_root(tmp_path_factory):
    return str(tmp_path_factory.mktemp("hare"))


# --- 1, 2: oracle agreement --------------------------------------------------------


@pytest.mark.parametrize("criterion, sampler", [(1, "rj"), (2, "da")])
def test_oracle_agreement(criterion, sampler):
    tvs = {name: tv_distance(oracle_chain(name, sampler), oracle_exact(name)) for name in GRID}
    ok = len(tvs) >= 5 and max(tvs.values()) < 0.01
    record(criterion, ok, f"{sampler} vs exact, {len(tvs)} configs at 1e6 iterations, max TV "
           f"{max(tvs.values()):.4f} < 0.01 ({', '.join(f'{k}={v:.4f}' for k, v in tvs.items())})")
    assert ok


# --- 3: three-way cross-check -------------------------------------------------------


def test_three_way_cross_check(hare_root):
    worst_grid = 0.0
    for name in GRID:
        pmfs = [oracle_chain(name, s) for s in ("rj", "da", "marginal-mh")]
        worst_grid = max(worst_grid, *(tv_distance(a, b) for a, b in itertools.combinations(pmfs, 2)))

    data = EncounterData.from_frequencies([25, 22, 13, 5, 1, 2])
    hare = hare_run(1, hare_root)
    ctl = McmcControls(200_000, 5_000, 1, seed=1, chains=4, max_step=6)
    mh = Chain.concat(run_chains("marginal-mh", data, RandomEffects.standard(), PriorOnN.uniform(400), ctl))
    chains = {"rj": hare["rj"], "da": hare["da"], "mh": mh}
    pairs = {f"{a}-{b}": tv_distance(empirical_pmf(chains[a]["N"]), empirical_pmf(chains[b]["N"]))
             for a, b in itertools.combinations(chains, 2)}
    ok = worst_grid < 0.02 and max(pairs.values()) < 0.03
    record(3, ok, f"oracle grid max pairwise TV {worst_grid:.4f} < 0.02; hare 200k x 4 "
           + ", ".join(f"{k}={v:.4f}" for k, v in pairs.items()) + " < 0.03")
    assert ok


# --- 4: prior-inducement identities ----------------------------------------------------


def test_prior_inducement():
    worst = 0.0
    for M in range(0, 1001):
        masses = np.exp(PriorOnN.psi_mixture(M, 1.0, 1.0).log_masses)
        worst = max(worst, float(np.max(np.abs(masses * (M + 1) - 1.0))))
    uniform_ok = worst < 1e-12

    details = []
    cond_ok = True
    for M in (10, 50, 100, 400, 1000):
        induced = np.exp(PriorOnN.psi_mixture(M, 1e-3, 1.0).log_masses)
        jeff = np.exp(PriorOnN.jeffreys(M).log_masses)
        uncond = 0.5 * np.abs(induced - jeff).sum()
        cond = induced[1:] / induced[1:].sum()
        tv = 0.5 * np.abs(cond - jeff[1:]).sum()
        cond_ok &= tv < 0.02
        details.append(f"M={M}: TV|N>=1 {tv:.5f} (unconditional {uncond:.3f}, mass at 0 {induced[0]:.3f})")
    ok = uniform_ok and cond_ok
    record(4, ok, f"Beta(1,1) beta-binomial x (M+1) - 1 max {worst:.1e} over M <= 1000; "
           "Beta(1e-3,1) vs truncated Jeffreys " + "; ".join(details))
    assert ok


# --- 5: detailed balance -----------------------------------------------------------------


def test_detailed_balance():
    rng = np.random.default_rng(5)
    data = EncounterData.from_frequencies([3, 1, 1])
    worst = 0.0
    checked = 0
    identity_exact = True
    for effects, prior, max_step in itertools.product(
        [RandomEffects.beta(0.7, 1.9), RandomEffects.logit_normal(-0.8, 0.6)],
        [PriorOnN.uniform(14), PriorOnN.jeffreys(14), PriorOnN.psi_mixture(14, 3.0, 0.4)],
        [1, 3],
    ):
        jump = JumpProposal(max_step)
        fam = K.BETA if effects.family == "beta" else K.LOGITNORMAL
        base = log_base(data, prior)
        for N in range(data.n, prior.M + 1):
            p = rng.uniform(0.01, 0.99, size=prior.M)
            identity_exact &= acceptance_ratio(N, N, [], data, prior, jump) == 1.0
            identity_exact &= K.log_jump_ratio(p, logit(p), N, N, data.k, fam, base) == 0.0
            for Nstar in range(N + 1, min(prior.M, N + max_step) + 1):
                small = RjState(N, p[:N], effects.theta)
                big = RjState(Nstar, p[:Nstar], effects.theta)
                moved = p[N:Nstar]
                log_g = float(np.sum(log_random_effect_density(moved, effects)))
                q_b = acceptance_ratio(N, Nstar, moved, data, prior, jump)
                q_d = acceptance_ratio(Nstar, N, moved, data, prior, jump)
                fwd = log_rj_target(small, data, effects, prior) + math.log(jump.prob(N, Nstar)) + log_g + math.log(min(1, q_b))
                bwd = log_rj_target(big, data, effects, prior) + math.log(jump.prob(Nstar, N)) + math.log(min(1, q_d))
                kern = K.log_jump_ratio(p, logit(p), N, Nstar, data.k, fam, base)
                rel = max(abs(math.exp(fwd - bwd) - 1.0), abs(math.exp(kern) / q_b - 1.0), abs(q_b * q_d - 1.0))
                worst = max(worst, rel)
                checked += 1
    ok = worst < 1e-12 and identity_exact
    record(5, ok, f"{checked} birth/death pairs, max relative imbalance {worst:.2e} < 1e-12; "
           f"identity move exactly 1: {identity_exact}")
    assert ok


# --- 6: quadrature ---------------------------------------------------------------------------


def test_quadrature():
    shapes = [0.05, 0.3, 0.5, 1.0, 1.7, 2.5, 5.0, 20.0, 100.0]
    worst_beta = 0.0
    for a, b, k in itertools.product(shapes, shapes, (1, 2, 6, 12)):
        j = np.arange(k + 1)
        ref = np.exp(betaln(a + j, b + k - j) - betaln(a, b))
        got = compute_theta_jf(RandomEffects.beta(a, b), k=k).values
        worst_beta = max(worst_beta, float(np.max(np.abs(got - ref))))
    worst_sum = 0.0
    for mu, tau, k in itertools.product([-8, -3, -1, 0, 0.5, 2, 6], [0.02, 0.1, 1.0, 5.0, 50.0, 1000.0], (1, 3, 6, 12)):
        worst_sum = max(worst_sum, abs(compute_theta_jf(RandomEffects.logit_normal(mu, tau), k=k).total() - 1.0))
    ok = worst_beta < 1e-9 and worst_sum < 1e-8
    record(6, ok, f"Beta grid ({len(shapes)}^2 x 4 k) max |quad - closed form| {worst_beta:.1e} < 1e-9; "
           f"logit-normal grid max |sum C(k,j) theta_j - 1| {worst_sum:.1e} < 1e-8")
    assert ok


# --- 7: Durban approximation --------------------------------------------------------------


def test_durban_fidelity():
    tvs = {name: tv_distance(oracle_chain(name, "rj", "durban"), oracle_chain(name, "rj")) for name in GRID}
    to_exact = max(tv_distance(oracle_chain(name, "rj", "durban"), oracle_exact(name)) for name in GRID)
    ok = max(tvs.values()) < 0.01
    record(7, ok, f"RJ with n~Bin(N,1e-5) term vs exact term, max TV {max(tvs.values()):.4f} < 0.01 "
           f"(surrogate chain vs exact posterior max TV {to_exact:.4f})")
    assert ok


# --- 8: hare reproduction -----------------------------------------------------------------------


def test_hare_reproduction(hare_root):
    modes = {"rj": [], "da": []}
    extra = []  # (location, height relative to the mode) of every secondary KDE peak
    support_ok = unimodal_ok = echo_ok = True
    for seed in HARE_SEEDS:
        runs = hare_run(seed, hare_root)
        report = dict(line.split("\t") for line in
                      open(f"{hare_root}/hare_seed{seed}/hare_report.txt").read().splitlines())
        echo_ok &= report["n"] == "68" and report["k"] == "6"
        for s, ch in runs.items():
            support_ok &= int(ch["N"].min()) >= 68
            dens = density_data(ch, "N")
            unimodal_ok &= dens.n_local_maxima() == 1
            modes[s].append(dens.mode)
            k = dens.kde
            extra += [(dens.centers[i], k[i] / k.max()) for i in range(1, k.size - 1)
                      if k[i] > k[i - 1] and k[i] >= k[i + 1] and k[i] < k.max()]
    shift = max(max(m) - min(m) for m in modes.values())
    ok = support_ok and unimodal_ok and echo_ok and shift <= 2
    secondary = (f" ({len(extra)} secondary KDE peaks, all at N >= {min(c for c, _ in extra):g}, "
                 f"tallest {max(h for _, h in extra):.1e} of the mode)") if extra else ""
    record(8, ok, f"hare subcommand x {len(HARE_SEEDS)} seeds: n=68,k=6 echoed {echo_ok}; support >= 68 {support_ok}; "
           f"KDE unimodal {unimodal_ok}{secondary}; modes rj {modes['rj']} da {modes['da']}, max shift {shift:g} <= 2")
    assert ok


# --- 9: determinism -------------------------------------------------------------------------------


def test_determinism(tmp_path):
    data = tmp_path / "hare.csv"
    data.write_text("25,22,13,5,1,2\n")
    same = True
    for sampler in ("rj", "da", "marginal-mh"):
        files = []
        for rep in ("a", "b"):
            cfg = RunConfig(sampler, str(data), "frequencies", "default", "uniform", 400, 20_000, 1_000, 1, 2, 99,
                            str(tmp_path / f"{sampler}_{rep}"), max_step=6)
            out = run_pipeline(cfg)
            files.append([(out / f"chain_{i}.csv").read_bytes() for i in range(2)])
            assert read_manifest(out / "manifest.txt")["digest"] == cfg.digest()
        same &= files[0] == files[1]
    record(9, same, "rj, da, marginal-mh: identical config + seed give byte-identical chain files across two runs")
    assert same


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
