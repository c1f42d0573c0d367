"""Multi-chain dispatch shared by the CLI, scripts and acceptance tests."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .da import JEFFREYS_EPS, DaConfig, run_da_chain
from .diagnostics import Chain
from .marginal import MarginalConfig, marginal_metropolis
from .model import EncounterData, PriorOnN, RandomEffects
from .rjmcmc import JumpProposal, RjConfig, run_rj_chain
from .rng import chain_seed

SAMPLERS = ("rj", "da", "marginal-mh")


@dataclass(frozen=True)
class McmcControls:
    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    chains: int = 1
    max_step: int = 3
    term: str = "exact"
    random_scan: bool = False


def psi_prior_for(prior: PriorOnN) -> tuple[float, float]:
    """Beta prior on psi matching ``prior``; only binomial mixtures have one.

    The 1/N prior maps to ``Beta(JEFFREYS_EPS, 1)``, an approximation.
    """
    if prior.kind == "uniform":
        return (1.0, 1.0)
    if prior.kind == "psi_mixture":
        return (prior.alpha, prior.beta)
    if prior.kind == "jeffreys":
        return (JEFFREYS_EPS, 1.0)
    raise ValueError(f"the DA sampler cannot express a {prior.kind} prior on N")


def _one_chain(sampler, data, effects, prior, ctl: McmcControls, index: int) -> Chain:
    seed = chain_seed(ctl.seed, index)
    if sampler == "rj":
        cfg = RjConfig(ctl.iterations, ctl.burn_in, ctl.thin, seed, JumpProposal(ctl.max_step), term=ctl.term)
        chain = run_rj_chain(data, effects, prior, cfg)
    elif sampler == "da":
        cfg = DaConfig(prior.M, ctl.iterations, ctl.burn_in, ctl.thin, seed, psi_prior_for(prior), ctl.random_scan)
        chain = run_da_chain(data, effects, cfg)
    elif sampler == "marginal-mh":
        cfg = MarginalConfig(ctl.iterations, ctl.burn_in, ctl.thin, seed, ctl.max_step)
        chain = marginal_metropolis(data, effects, prior, cfg)
    else:
        raise ValueError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")
    chain.meta["chain_index"] = index
    return chain


def run_chains(
    sampler: str,
    data: EncounterData,
    effects: RandomEffects,
    prior: PriorOnN,
    ctl: McmcControls,
    workers: Optional[int] = 1,
) -> list[Chain]:
    """Run ``ctl.chains`` independent chains with seeds split from ``ctl.seed``.

    With ``workers > 1`` chains go to a process pool; results come back in
    chain order either way, so output does not depend on ``workers``.
    """
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")
    args = [(sampler, data, effects, prior, ctl, i) for i in range(ctl.chains)]
    if workers is None or workers <= 1 or ctl.chains == 1:
        return [_one_chain(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one_chain, *zip(*args)))
