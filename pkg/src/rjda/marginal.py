"""Integrated likelihood, exact posterior oracles and a fixed-dimension sampler.

Integrating the capture probabilities out of the complete-data likelihood
leaves a function of ``(N, theta)`` only. For an individual caught ``j`` of
``k`` times the integrated cell probability is

    theta_j = int_0^1 p^j (1 - p)^(k - j) dF(p | theta),

computed here by adaptive Gauss-Legendre quadrature, on (0, 1) for Beta
mixing and on the logit scale for logit-normal mixing.
"""
from __future__ import annotations

import itertools
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import betaln, gammaln, logsumexp, roots_hermite, roots_legendre

from .diagnostics import Chain
from .model import (
    DomainError,
    EncounterData,
    PriorOnN,
    RandomEffects,
    check_theta,
    log_falling_factorial,
)
from .rng import config_digest, generator


class QuadratureError(ArithmeticError):
    """Adaptive refinement failed to reach the requested tolerance."""


@dataclass(frozen=True)
class QuadRule:
    nodes: int = 64
    tol: float = 1e-10
    max_depth: int = 50

    def __post_init__(self):
        if self.nodes < 16:
            raise ValueError("quadrature needs at least 16 nodes per panel")


@dataclass(frozen=True)
class ThetaJF:
    """Integrated cell probabilities ``theta_0 .. theta_k``."""

    values: np.ndarray

    @property
    def k(self) -> int:
        return self.values.size - 1

    def total(self) -> float:
        """``sum_j C(k, j) theta_j``, which should be 1."""
        k = self.k
        j = np.arange(k + 1)
        logc = gammaln(k + 1.0) - gammaln(j + 1.0) - gammaln(k - j + 1.0)
        return float(np.sum(np.exp(logc) * self.values))

    def __getitem__(self, j):
        return self.values[j]


def _legendre(nodes: int):
    x, w = roots_legendre(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


LOGIT_SPAN = 40.0


def _breakpoints(effects: RandomEffects, theta) -> np.ndarray:
    """Initial panel edges around the bulk of the mixing density.

    Logit-normal integrals run on the logit scale over ``mu +- 40 sd``; the
    normal mass outside is below ``exp(-800)``.
    """
    if effects.family == "logitnormal":
        mu, tau = theta
        z = np.array([-LOGIT_SPAN, -20.0, -12.0, -8.0, -5.0, -3.0, -2.0, -1.0, 0.0,
                      1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, LOGIT_SPAN])
        return mu + z / np.sqrt(tau)
    else:
        a, b = theta
        inner = np.array([a / (a + b)])
    inner = inner[(inner > 0.0) & (inner < 1.0)]
    return np.unique(np.concatenate([[0.0], inner, [1.0]]))


def _integrand(effects: RandomEffects, theta, k: int):
    j = np.arange(k + 1, dtype=float)

    if effects.family == "beta":
        a, b = theta
        lognorm = betaln(a, b)

        def f(p):
            with np.errstate(divide="ignore"):
                lp, l1p = np.log(p), np.log1p(-p)
            return np.exp((j[:, None] + a - 1.0) * lp + (k - j[:, None] + b - 1.0) * l1p - lognorm)

    else:
        # Integrated over u = logit(p): the Jacobian cancels the 1/(p(1-p)).
        mu, tau = theta
        half_log = 0.5 * np.log(tau / (2.0 * np.pi))

        def f(u):
            lp, l1p = -np.logaddexp(0.0, -u), -np.logaddexp(0.0, u)
            dens = half_log - 0.5 * tau * (u - mu) ** 2
            return np.exp(j[:, None] * lp + (k - j[:, None]) * l1p + dens)

    return f


def _needs_end_map(shape: float) -> bool:
    """A Beta exponent below 4 that is not an integer leaves a non-smooth
    endpoint factor which dyadic refinement cannot resolve."""
    return shape < 4.0 and shape != round(shape)


def _beta_end_panel(theta, k: int, left: bool):
    """Integrand of an end panel after the substitution ``p = s^r`` (or
    ``1 - p = s^r`` on the right) with ``r = 4 / shape``, which turns the
    endpoint factor ``p^(a-1)`` into a smooth ``s^(4 + 4j/a - 1)``."""
    a, b = theta
    j = np.arange(k + 1, dtype=float)[:, None]
    lognorm = betaln(a, b)
    r = 4.0 / (a if left else b)
    near, far = (j + a - 1.0, k - j + b - 1.0) if left else (k - j + b - 1.0, j + a - 1.0)

    def g(s):
        with np.errstate(divide="ignore"):
            ls, l1s = np.log(s), np.log1p(-(s**r))
        return np.exp((near * r + r - 1.0) * ls + far * l1s + np.log(r) - lognorm)

    return g, r


MAX_PANELS = 200_000


def _adaptive(f, lo: float, hi: float, x, w, tol: float, max_depth: int, k: int, budget: list):
    """Dyadic refinement of ``[lo, hi]``; ``tol`` is an error density per unit
    length and ``budget`` a shared one-element panel allowance."""
    def panel(a, b):
        return (b - a) * (f(a + (b - a) * x) @ w)

    total = np.zeros(k + 1)
    stack = [(lo, hi, panel(lo, hi), 0)]
    worst = (0.0, lo, hi)
    while stack:
        a, b, whole, depth = stack.pop()
        m = 0.5 * (a + b)
        left, right = panel(a, m), panel(m, b)
        err = float(np.max(np.abs(left + right - whole)))
        if err <= tol * (b - a) or err <= 1e-300:
            total += left + right
            continue
        budget[0] -= 1
        if depth >= max_depth or budget[0] <= 0:
            if err > worst[0]:
                worst = (err, a, b)
            total += left + right
            continue
        stack.append((a, m, left, depth + 1))
        stack.append((m, b, right, depth + 1))
    return total, worst


def compute_theta_jf(
    effects: RandomEffects,
    theta=None,
    k: int = 1,
    rule: QuadRule = QuadRule(),
    method: str = "adaptive",
) -> ThetaJF:
    """Integrated cell probabilities for ``k`` occasions.

    ``method`` is ``"adaptive"`` (Gauss-Legendre with dyadic refinement on
    (0, 1), or on the logit scale for logit-normal mixing), ``"closed_form"`` (Beta only) or ``"hermite"`` (logit-normal
    only; a fixed Gauss-Hermite rule on the logit scale, used where the
    integral is recomputed many times).
    """
    theta = tuple(effects.theta if theta is None else theta)
    check_theta(effects.family, theta)
    if k < 1:
        raise ValueError("k must be >= 1")
    if method == "closed_form":
        if effects.family != "beta":
            raise ValueError("closed form only exists for Beta mixing")
        a, b = theta
        j = np.arange(k + 1)
        return ThetaJF(np.exp(betaln(a + j, b + k - j) - betaln(a, b)))
    if method == "hermite":
        if effects.family != "logitnormal":
            raise ValueError("Gauss-Hermite rule is for logit-normal mixing")
        return ThetaJF(_hermite_theta(theta, k, max(rule.nodes, 96)))
    if method != "adaptive":
        raise ValueError(f"unknown quadrature method {method!r}")

    x, w = _legendre(rule.nodes)
    f = _integrand(effects, theta, k)
    edges = _breakpoints(effects, theta)
    total = np.zeros(k + 1)
    failures = []
    budget = [MAX_PANELS]
    span = edges[-1] - edges[0]
    last = len(edges) - 2
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        fi = f
        if effects.family == "beta" and i == 0 and _needs_end_map(theta[0]):
            fi, r = _beta_end_panel(theta, k, left=True)
            lo, hi = 0.0, hi ** (1.0 / r)
        elif effects.family == "beta" and i == last and _needs_end_map(theta[1]):
            fi, r = _beta_end_panel(theta, k, left=False)
            lo, hi = 0.0, (1.0 - lo) ** (1.0 / r)
        part, (err, a, b) = _adaptive(fi, lo, hi, x, w, rule.tol / span, rule.max_depth, k, budget)
        total += part
        if err > 0:
            failures.append((err, a, b))
    if failures:
        err, a, b = max(failures)
        raise QuadratureError(
            f"adaptive quadrature did not converge for {effects.family}{theta}, k={k}: "
            f"panel [{a:.3g}, {b:.3g}] still differs by {err:.3g} after depth {rule.max_depth} "
            f"({MAX_PANELS - budget[0]} panels refined)"
        )
    return ThetaJF(total)


def _hermite_theta(theta, k: int, nodes: int) -> np.ndarray:
    mu, tau = theta
    z, wz = _hermite_cache(nodes)
    u = mu + np.sqrt(2.0 / tau) * z
    lp = -np.logaddexp(0.0, -u)
    l1p = -np.logaddexp(0.0, u)
    j = np.arange(k + 1, dtype=float)[:, None]
    return np.exp(j * lp + (k - j) * l1p) @ wz / np.sqrt(np.pi)


_HERMITE = {}


def _hermite_cache(nodes: int):
    if nodes not in _HERMITE:
        _HERMITE[nodes] = roots_hermite(nodes)
    return _HERMITE[nodes]


# ---------------------------------------------------------------------------
# Integrated likelihood
# ---------------------------------------------------------------------------


def log_marginal_likelihood(data: EncounterData, N, theta_jf: ThetaJF):
    """Log integrated likelihood of ``(N, theta)``.

    ``log N!/((N-n)! prod_h z_h!) + (N - n) log theta_0 + sum_j f_j log theta_j``.
    The ``prod_h z_h!`` term is dropped when only frequencies are known; it
    does not depend on ``N``. Accepts a scalar or an array of ``N``.
    """
    if theta_jf.k != data.k:
        raise ValueError(f"theta_jf computed for k={theta_jf.k}, data has k={data.k}")
    n = data.n
    N_arr = np.asarray(N)
    if np.any(N_arr < n):
        raise DomainError(f"N must be at least n={n}")
    logs = np.log(theta_jf.values)
    observed = float(np.dot(data.frequencies, logs[1:])) if n > 0 else 0.0
    out = (
        log_falling_factorial(N_arr, n)
        - data.log_history_multiplicity()
        + (N_arr - n) * logs[0]
        + observed
    )
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Exact posterior over N
# ---------------------------------------------------------------------------

GRID_GUARD = 10**7


@dataclass
class ExactPosterior:
    """Normalized posterior table over ``N = n..M``."""

    support: np.ndarray
    masses: np.ndarray
    log_evidence: float
    joint: Optional[np.ndarray] = None

    def pmf(self) -> dict[int, float]:
        return {int(v): float(m) for v, m in zip(self.support, self.masses)}

    def mean(self) -> float:
        return float(np.dot(self.support, self.masses))

    def to_csv(self) -> str:
        lines = ["N,mass"]
        lines += [f"{int(v)},{float(m)!r}" for v, m in zip(self.support, self.masses)]
        return "\r\n".join(lines) + "\r\n"


def exact_posterior(
    data: EncounterData,
    effects: RandomEffects,
    prior: PriorOnN,
    theta_grid: Optional[Sequence[tuple[Sequence[float], float]]] = None,
    rule: QuadRule = QuadRule(),
) -> ExactPosterior:
    """Posterior over ``N`` by sweeping ``N = n..M`` and a hyperparameter grid.

    ``theta_grid`` is a list of ``(theta, log_weight)`` pairs standing in for
    the hyperprior; by default the single point ``effects.theta``.
    """
    n, M = data.n, prior.M
    if M < n:
        raise DomainError(f"prior cap M={M} is below n={n}")
    grid = [(tuple(effects.theta), 0.0)] if theta_grid is None else list(theta_grid)
    size = (M - n + 1) * len(grid)
    if size > GRID_GUARD:
        raise ValueError(f"N-sweep x theta grid has {size} cells, above the {GRID_GUARD} guard")
    support = np.arange(n, M + 1)
    logp = prior.log_masses[n:]
    joint = np.empty((len(grid), support.size))
    for g, (theta, logw) in enumerate(grid):
        tj = compute_theta_jf(effects, theta, data.k, rule)
        joint[g] = log_marginal_likelihood(data, support, tj) + logp + logw
    log_ev = float(logsumexp(joint))
    joint = np.exp(joint - log_ev)
    masses = joint.sum(axis=0)
    return ExactPosterior(support, masses, log_ev, joint if len(grid) > 1 else None)


def closed_form_cells(effects: RandomEffects, theta, k: int) -> np.ndarray:
    if effects.family == "beta":
        return compute_theta_jf(effects, theta, k, method="closed_form").values
    return compute_theta_jf(effects, theta, k).values


ENUMERATION_CAP = 12


def enumerate_posterior(
    data: EncounterData, effects: RandomEffects, prior: PriorOnN, theta=None
) -> ExactPosterior:
    """Posterior over ``N`` by brute force over inclusion vectors.

    Walks all ``2^(M-n)`` inclusion patterns of the unobserved
    pseudo-individuals, each with its capture probabilities integrated out
    (Beta cells in closed form), under the exchangeable inclusion prior
    ``f(N) / C(M, N)``. This route never touches the falling-factorial term,
    so it checks the N-sweep independently.
    """
    n, M = data.n, prior.M
    if M > ENUMERATION_CAP:
        raise ValueError(f"enumeration limited to M <= {ENUMERATION_CAP}, got {M}")
    if M < n:
        raise DomainError(f"prior cap M={M} is below n={n}")
    theta = tuple(effects.theta if theta is None else theta)
    cells = closed_form_cells(effects, theta, data.k)
    observed = float(np.sum(np.log(cells[data.captures]))) if n else 0.0
    logf = prior.log_masses
    acc = {}
    for pattern in itertools.product((0, 1), repeat=M - n):
        N = n + sum(pattern)
        log_w_prior = logf[N] - (gammaln(M + 1.0) - gammaln(N + 1.0) - gammaln(M - N + 1.0))
        term = observed + log_w_prior
        for included in pattern:
            if included:
                term += np.log(cells[0])
        acc.setdefault(N, []).append(term)
    support = np.arange(n, M + 1)
    logm = np.array([logsumexp(acc[N]) for N in support])
    log_ev = float(logsumexp(logm))
    return ExactPosterior(support, np.exp(logm - log_ev), log_ev)


# ---------------------------------------------------------------------------
# Fixed-dimension Metropolis on (N, theta)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarginalConfig:
    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    max_step: int = 3
    init_N: Optional[int] = None
    tuning_window: int = 1000

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1 or self.max_step < 1:
            raise ValueError("thin and max_step must be >= 1")


def _hyper_to_free(effects: RandomEffects, theta):
    if effects.family == "beta":
        return np.log(theta)
    return np.array([theta[0], np.log(theta[1])])


def _free_to_hyper(effects: RandomEffects, u):
    if effects.family == "beta":
        return np.exp(u)
    return np.array([u[0], np.exp(u[1])])


def _log_jacobian(effects: RandomEffects, u) -> float:
    return float(u.sum()) if effects.family == "beta" else float(u[1])


def marginal_metropolis(
    data: EncounterData,
    effects: RandomEffects,
    prior: PriorOnN,
    config: MarginalConfig,
) -> Chain:
    """Random-walk Metropolis on ``(N, theta)`` against the integrated likelihood.

    ``N`` moves by a uniform step in ``+-{1..max_step}``; hyperparameters, when
    estimated, move jointly by a Gaussian step on the unconstrained scale (log
    for positive parameters). Hyperparameter step sizes are tuned during
    burn-in only.
    """
    n, M = data.n, prior.M
    if M < n:
        raise DomainError(f"prior cap M={M} is below n={n}")
    rng = generator(config.seed)
    start = time.perf_counter()
    support = np.arange(n, M + 1)
    # N-only part of the log target; the theta part is (N - n) log theta_0 + obs(theta)
    base = log_falling_factorial(support, n) - data.log_history_multiplicity() + prior.log_masses[n:]
    freqs = np.asarray(data.frequencies, dtype=float)
    fast = "closed_form" if effects.family == "beta" else "hermite"

    def cells(theta):
        logs = np.log(compute_theta_jf(effects, theta, data.k, method=fast).values)
        return logs[0], float(freqs @ logs[1:])

    theta = np.array(effects.theta, dtype=float)
    log0, obs = cells(theta)
    N = config.init_N if config.init_N is not None else min(M, n + int(np.ceil(0.2 * n)))
    if not n <= N <= M:
        raise ValueError(f"initial N={N} outside [{n}, {M}]")
    u = _hyper_to_free(effects, theta)
    log_hp = effects.log_hyperprior(theta) + _log_jacobian(effects, u) if effects.estimate else 0.0
    step = float(np.mean(effects.steps))

    keep = (config.iterations - config.burn_in + config.thin - 1) // config.thin
    out_N = np.empty(keep, dtype=np.int64)
    out_t = np.empty((keep, 2))
    acc_n = acc_t = 0
    window_acc = recent_acc = 0
    s = config.max_step
    jumps = rng.integers(1, s + 1, size=config.iterations) * rng.choice((-1, 1), size=config.iterations)
    log_u = np.log(rng.random(size=(config.iterations, 2)))
    row = 0
    for it in range(config.iterations):
        Nstar = N + int(jumps[it])
        if n <= Nstar <= M:
            log_r = base[Nstar - n] - base[N - n] + (Nstar - N) * log0
            if log_u[it, 0] < log_r:
                N = Nstar
                acc_n += 1
                if it < config.tuning_window:
                    window_acc += 1
        if effects.estimate:
            u_star = u + step * rng.standard_normal(2)
            th_star = _free_to_hyper(effects, u_star)
            lhp_star = effects.log_hyperprior(th_star) + _log_jacobian(effects, u_star)
            if np.isfinite(lhp_star):
                log0_star, obs_star = cells(th_star)
                log_r = (N - n) * (log0_star - log0) + obs_star - obs + lhp_star - log_hp
                if log_u[it, 1] < log_r:
                    u, theta, log0, obs, log_hp = u_star, th_star, log0_star, obs_star, lhp_star
                    acc_t += 1
                    recent_acc += 1
            if it < config.burn_in and (it + 1) % 100 == 0:
                step *= np.exp(recent_acc / 100 - 0.3)
                recent_acc = 0
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            out_N[row] = N
            out_t[row] = theta
            row += 1
    window = min(config.tuning_window, config.iterations)
    rate = window_acc / window
    if not 0.001 < rate < 0.999 and M > n:
        warnings.warn(f"N-move acceptance {rate:.4f} over the first {window} iterations", RuntimeWarning)
    draws = {"N": out_N}
    if effects.estimate:
        names = ("a", "b") if effects.family == "beta" else ("mu", "tau")
        draws[names[0]] = out_t[:, 0].copy()
        draws[names[1]] = out_t[:, 1].copy()
    acceptance = {"N": acc_n / config.iterations}
    if effects.estimate:
        acceptance["theta"] = acc_t / config.iterations
    meta = {
        "sampler": "marginal-mh",
        "seed": config.seed,
        "digest": config_digest(config, effects, prior, data),
        "acceptance": acceptance,
        "duration": time.perf_counter() - start,
    }
    return Chain(draws, meta)
