"""Trans-dimensional Gibbs sampler for M_h with an explicit reversible-jump N move.

Each sweep refreshes every capture probability from its full conditional,
then proposes ``N* = N + s`` with ``s`` drawn symmetrically from
``+-{1..max_step}``. Births append ``N* - N`` capture probabilities drawn
from the random-effects distribution; deaths drop the trailing rows, which
always belong to unobserved individuals. The acceptance ratio reduces to

    [N*!/(N*-n)!] / [N!/(N-n)!] * prod (1 - p_i)^(+-k) * f(N*) / f(N).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, logit

from . import _kernels as K
from .diagnostics import Chain
from .model import (
    DomainError,
    EncounterData,
    PriorOnN,
    RandomEffects,
    RjState,
    log_cdl,
    log_combinatorial,
    log_falling_factorial,
    log_prior_n,
)
from .rng import config_digest, kernel_seed

HP_CODES = {"logistic": K.HP_LOGISTIC, "normal": K.HP_NORMAL, "half_t": K.HP_HALF_T, "gamma": K.HP_GAMMA}
TERM_MODES = ("exact", "durban")
DURBAN_EPS = 1e-5


@dataclass(frozen=True)
class JumpProposal:
    """Symmetric integer random walk: ``+-s`` with ``s`` in ``1..max_step``.

    ``weights`` (length ``max_step``) sets the step-size distribution; uniform
    when omitted. Symmetry makes the jump ratio identically 1.
    """

    max_step: int = 3
    weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.max_step < 1:
            raise ValueError("max_step must be >= 1")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.size != self.max_step or np.any(w < 0) or w.sum() <= 0:
                raise ValueError("weights must be max_step non-negative numbers, not all zero")

    def step_probs(self) -> np.ndarray:
        w = np.ones(self.max_step) if self.weights is None else np.asarray(self.weights, dtype=float)
        return w / w.sum()

    def step_cdf(self) -> np.ndarray:
        cdf = np.cumsum(self.step_probs())
        cdf[-1] = 1.0
        return cdf

    def prob(self, N_from: int, N_to: int) -> float:
        """``J(N_to | N_from)``."""
        s = abs(N_to - N_from)
        if s == 0 or s > self.max_step:
            return 0.0
        return 0.5 * float(self.step_probs()[s - 1])


@dataclass(frozen=True)
class RjConfig:
    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    jump: JumpProposal = field(default_factory=JumpProposal)
    init_N: Optional[int] = None
    term: str = "exact"
    durban_eps: float = DURBAN_EPS

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.term not in TERM_MODES:
            raise ValueError(f"term must be one of {TERM_MODES}")
        if not 0.0 < self.durban_eps < 1.0:
            raise ValueError("durban_eps must lie in (0, 1)")


def kernel_effects(effects: RandomEffects):
    """Unpack a :class:`RandomEffects` into the flat arrays the kernels take."""
    fam = K.BETA if effects.family == "beta" else K.LOGITNORMAL
    hp_kind = np.array([HP_CODES[h.kind] for h in effects.priors], dtype=np.int64)
    hp_par = np.array([[h.a, h.b] for h in effects.priors], dtype=float)
    return fam, np.array(effects.theta, dtype=float), hp_kind, hp_par, np.asarray(effects.steps, dtype=float)


def log_n_term(data: EncounterData, M: int, term: str = "exact", eps: float = DURBAN_EPS) -> np.ndarray:
    """The N-dependent combinatorial factor on ``0..M`` (``-inf`` below ``n``).

    ``exact`` is ``log N!/(N-n)!``. ``durban`` replaces it by the log
    probability of ``n ~ Bin(N, eps)``, which is proportional to it up to a
    factor ``(1 - eps)^(N - n)``.
    """
    n = data.n
    N = np.arange(M + 1)
    if term == "exact":
        return log_falling_factorial(N, n)
    if term == "durban":
        with np.errstate(invalid="ignore"):
            out = (
                log_falling_factorial(N, n)
                - gammaln(n + 1.0)
                + n * np.log(eps)
                + np.maximum(N - n, 0) * np.log1p(-eps)
            )
        return np.where(N >= n, out, -np.inf)
    raise ValueError(f"unknown term {term!r}")


def log_base(data: EncounterData, prior: PriorOnN, term: str = "exact", eps: float = DURBAN_EPS) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        out = prior.log_masses + log_n_term(data, prior.M, term, eps)
    return np.where(np.isnan(out), -np.inf, out)


def initial_n(data: EncounterData, M: int) -> int:
    return min(M, data.n + int(np.ceil(0.2 * data.n)))


# ---------------------------------------------------------------------------
# Reference (pure Python) pieces used to check the kernels
# ---------------------------------------------------------------------------


def log_rj_target(state: RjState, data: EncounterData, effects: RandomEffects, prior: PriorOnN) -> float:
    """Log posterior density of ``(N, p_1..p_N)`` up to a constant, hyperparameters fixed."""
    return (
        log_cdl(data, state, effects)
        + log_combinatorial(state.N, data, "observed_order_fixed")
        + log_prior_n(state.N, prior)
    )


def acceptance_ratio(
    N: int, Nstar: int, moved_p: Sequence[float], data: EncounterData, prior: PriorOnN,
    jump: JumpProposal = JumpProposal(),
) -> float:
    """Birth/death acceptance ratio ``q`` evaluated directly.

    ``moved_p`` holds the auxiliary probabilities for a birth or the deleted
    ones for a death. Returns 0 when ``Nstar`` is off the support.
    """
    n, k = data.n, data.k
    if Nstar == N:
        return 1.0
    if Nstar < n or Nstar > prior.M:
        return 0.0
    moved = np.asarray(moved_p, dtype=float)
    if moved.size != abs(Nstar - N):
        raise ValueError("moved_p must hold |Nstar - N| values")
    log_q = (
        gammaln(Nstar + 1.0) + gammaln(N - n + 1.0) - gammaln(Nstar - n + 1.0) - gammaln(N + 1.0)
        + log_prior_n(Nstar, prior) - log_prior_n(N, prior)
        + np.log(jump.prob(Nstar, N)) - np.log(jump.prob(N, Nstar))
    )
    sign = 1.0 if Nstar > N else -1.0
    log_q += sign * k * np.sum(np.log1p(-moved))
    return float(np.exp(log_q))


# ---------------------------------------------------------------------------
# Single Gibbs steps
# ---------------------------------------------------------------------------


def _logits(p: np.ndarray) -> np.ndarray:
    return logit(p)


def update_capture_probs(state: RjState, data: EncounterData, effects: RandomEffects, rng) -> RjState:
    """Draw every ``p_i`` from ``p^y_i (1-p)^(k-y_i) f(p | theta)``.

    Exact Beta draws for Beta mixing; one slice-sampling update on the logit
    scale for logit-normal mixing.
    """
    state.validate(data)
    fam, _, _, _, _ = kernel_effects(effects)
    p = state.p.copy()
    l = _logits(p)
    y = data.padded_captures(state.N)
    K.seed(int(rng.integers(2**32)))
    K.update_capture_probs(p, l, y, state.N, data.k, fam, np.array(state.theta, dtype=float))
    return RjState(state.N, p, tuple(state.theta))


def update_n(
    state: RjState, data: EncounterData, effects: RandomEffects, prior: PriorOnN,
    jump: JumpProposal, rng, term: str = "exact", counters: Optional[np.ndarray] = None,
) -> RjState:
    """One reversible-jump update of ``N``; the state is returned unchanged on rejection."""
    state.validate(data)
    M = prior.M
    if state.N > M:
        raise DomainError(f"N={state.N} exceeds the prior cap M={M}")
    fam, _, _, _, _ = kernel_effects(effects)
    p = np.empty(M)
    p[: state.N] = state.p
    l = np.zeros(M)
    l[: state.N] = _logits(state.p)
    counters = np.zeros(3, dtype=np.int64) if counters is None else counters
    K.seed(int(rng.integers(2**32)))
    N = K.update_n(
        p, l, state.N, data.n, M, data.k, fam, np.array(state.theta, dtype=float),
        log_base(data, prior, term), jump.step_cdf(), counters,
    )
    return RjState(int(N), p[:N].copy(), tuple(state.theta))


def update_hyperparams(state: RjState, data: EncounterData, effects: RandomEffects, rng,
                       counters: Optional[np.ndarray] = None) -> RjState:
    """Refresh the hyperparameters from their full conditional given ``p_1..p_N``."""
    if not effects.estimate:
        return state
    fam, _, hp_kind, hp_par, steps = kernel_effects(effects)
    theta = np.array(state.theta, dtype=float)
    counters = np.zeros(4, dtype=np.int64) if counters is None else counters
    K.seed(int(rng.integers(2**32)))
    K.update_hyper(state.p, _logits(state.p), state.N, fam, theta, hp_kind, hp_par, steps, counters)
    return RjState(state.N, state.p.copy(), (float(theta[0]), float(theta[1])))


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


def theta_names(effects: RandomEffects) -> tuple[str, str]:
    return ("a", "b") if effects.family == "beta" else ("mu", "tau")


def run_rj_chain(
    data: EncounterData, effects: RandomEffects, prior: PriorOnN, config: RjConfig,
    allow_empty: bool = False,
) -> Chain:
    """Run one RJ chain; deterministic in its inputs and ``config.seed``."""
    n, M = data.n, prior.M
    if n == 0 and not allow_empty:
        raise ValueError("no individuals observed; pass allow_empty=True to sample anyway")
    if M < n:
        raise DomainError(f"prior cap M={M} is below n={n}")
    N0 = initial_n(data, M) if config.init_N is None else config.init_N
    if not n <= N0 <= M:
        raise ValueError(f"initial N={N0} outside [{n}, {M}]")
    fam, theta0, hp_kind, hp_par, steps = kernel_effects(effects)
    y = data.padded_captures(M)
    base = log_base(data, prior, config.term, config.durban_eps)
    start = time.perf_counter()
    out_N, out_theta, n_cnt, h_cnt = K.rj_chain(
        y, n, M, data.k, N0, fam, theta0, effects.estimate, hp_kind, hp_par, steps,
        base, config.jump.step_cdf(), config.iterations, config.burn_in, config.thin,
        kernel_seed(config.seed),
    )
    duration = time.perf_counter() - start
    draws = {"N": out_N}
    acceptance = {"N": n_cnt[0] / max(n_cnt[1], 1)}
    if effects.estimate:
        for j, name in enumerate(theta_names(effects)):
            draws[name] = out_theta[:, j].copy()
            acceptance[name] = h_cnt[2 * j] / max(h_cnt[2 * j + 1], 1)
    meta = {
        "sampler": "rj",
        "seed": config.seed,
        "digest": config_digest(config, effects, prior, data),
        "acceptance": acceptance,
        "out_of_range": int(n_cnt[2]),
        "duration": duration,
    }
    return Chain(draws, meta)
