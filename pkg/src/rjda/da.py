"""Superpopulation data-augmentation Gibbs sampler.

``M`` pseudo-individuals each carry an inclusion indicator ``w_i`` and a
capture probability ``p_i``; ``N = sum(w)``. The observed individuals occupy
rows ``0..n-1`` with ``w`` pinned at 1. ``psi ~ Beta(alpha, beta)`` induces a
beta-binomial prior on ``N``; with ``alpha = beta = 1`` that prior is flat
on ``0..M``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logit

from . import _kernels as K
from .diagnostics import Chain
from .model import DaState, DomainError, EncounterData, PriorOnN, RandomEffects
from .rjmcmc import initial_n, kernel_effects, theta_names
from .rng import config_digest, kernel_seed

# f(psi) ~ 1/psi is improper; Beta(JEFFREYS_EPS, 1) stands in for it.
JEFFREYS_EPS = 1e-3

PSI_PRESETS = {"uniform": (1.0, 1.0), "jeffreys": (JEFFREYS_EPS, 1.0)}


@dataclass(frozen=True)
class DaConfig:
    M: int
    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    psi_prior: tuple[float, float] = (1.0, 1.0)
    random_scan: bool = False
    init_N: int | None = None

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        a, b = self.psi_prior
        if a <= 0 or b <= 0:
            raise ValueError("psi prior parameters must be positive")

    @classmethod
    def preset(cls, M: int, iterations: int, psi: str = "uniform", **kw) -> "DaConfig":
        return cls(M=M, iterations=iterations, psi_prior=PSI_PRESETS[psi], **kw)

    def induced_prior(self) -> PriorOnN:
        """The beta-binomial prior on ``N`` this configuration implies."""
        return PriorOnN.psi_mixture(self.M, *self.psi_prior)


def _arrays(state: DaState, data: EncounterData):
    state.validate(data)
    return state.p.copy(), logit(state.p), state.w.copy(), data.padded_captures(state.M)


def update_w(state: DaState, data: EncounterData, effects: RandomEffects, rng,
             random_scan: bool = False) -> DaState:
    """Redraw ``w_i`` for every unobserved row.

    Given ``y_i = 0`` the full conditional is
    ``Bern(psi (1-p_i)^k / (psi (1-p_i)^k + 1 - psi))``.
    """
    p, l, w, _ = _arrays(state, data)
    fam = kernel_effects(effects)[0]
    K.seed(int(rng.integers(2**32)))
    K.update_w(p, l, w, data.n, data.k, fam, float(state.psi), random_scan)
    return DaState(w, p, state.psi, tuple(state.theta))


def update_psi(state: DaState, config: DaConfig, rng) -> DaState:
    """Conjugate draw ``psi ~ Beta(alpha + N, beta + M - N)``."""
    K.seed(int(rng.integers(2**32)))
    psi = K.update_psi(state.N, state.M, *config.psi_prior)
    return DaState(state.w.copy(), state.p.copy(), float(psi), tuple(state.theta))


def update_capture_probs_da(state: DaState, data: EncounterData, effects: RandomEffects, rng) -> DaState:
    """Included rows get the usual full-conditional update; excluded rows are redrawn from the prior."""
    p, l, w, y = _arrays(state, data)
    fam = kernel_effects(effects)[0]
    K.seed(int(rng.integers(2**32)))
    K.update_capture_probs_da(p, l, w, y, data.k, fam, np.array(state.theta, dtype=float))
    return DaState(w, p, state.psi, tuple(state.theta))


def run_da_chain(data: EncounterData, effects: RandomEffects, config: DaConfig,
                 allow_empty: bool = False) -> Chain:
    """Run one DA chain; deterministic in its inputs and ``config.seed``.

    Each sweep updates the included rows' capture probabilities, then the
    hyperparameters (when estimated) from the included rows only, then
    redraws every excluded row from the prior at the new hyperparameters.
    Excluded rows carry no data, so drawing the hyperparameters with them
    integrated out and refreshing them afterwards is a valid blocked Gibbs
    step; it mixes far better than conditioning on ``M - N`` prior draws.
    """
    n, M = data.n, config.M
    if n == 0 and not allow_empty:
        raise ValueError("no individuals observed; pass allow_empty=True to sample anyway")
    if M < n:
        raise DomainError(f"superpopulation M={M} is below n={n}")
    N0 = initial_n(data, M) if config.init_N is None else config.init_N
    if not n <= N0 <= M:
        raise ValueError(f"initial N={N0} outside [{n}, {M}]")
    fam, theta0, hp_kind, hp_par, steps = kernel_effects(effects)
    y = data.padded_captures(M)
    alpha, beta = config.psi_prior
    start = time.perf_counter()
    out_N, out_psi, out_theta, h_cnt = K.da_chain(
        y, n, M, data.k, N0, fam, theta0, effects.estimate, hp_kind, hp_par, steps,
        float(alpha), float(beta), config.random_scan,
        config.iterations, config.burn_in, config.thin, kernel_seed(config.seed),
    )
    duration = time.perf_counter() - start
    draws = {"N": out_N, "psi": out_psi}
    acceptance = {}
    if effects.estimate:
        for j, name in enumerate(theta_names(effects)):
            draws[name] = out_theta[:, j].copy()
            acceptance[name] = h_cnt[2 * j] / max(h_cnt[2 * j + 1], 1)
    meta = {
        "sampler": "da",
        "seed": config.seed,
        "digest": config_digest(config, effects, data),
        "acceptance": acceptance,
        "duration": duration,
    }
    return Chain(draws, meta)
