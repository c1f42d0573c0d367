"""Data containers and log-density kernels for model M_h with unknown N.

Everything here is a pure function of its inputs. Densities are evaluated in
log space throughout; factorials go through ``gammaln``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import betaln, gammaln, logsumexp


class DomainError(ValueError):
    """An argument lies outside the support of the density being evaluated."""


# ---------------------------------------------------------------------------
# Encounter data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EncounterData:
    """Observed encounter data for ``k`` sampling occasions.

    ``frequencies[j-1]`` is the number of individuals caught exactly ``j``
    times. ``history_counts`` optionally maps each non-null 0/1 capture
    history (a tuple of length ``k``) to its count ``z_h``.
    """

    k: int
    frequencies: tuple[int, ...]
    history_counts: Optional[Mapping[tuple[int, ...], int]] = None

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        freqs = tuple(int(f) for f in self.frequencies)
        if len(freqs) != self.k:
            raise ValueError(f"expected {self.k} frequencies, got {len(freqs)}")
        if any(f < 0 for f in freqs):
            raise ValueError("frequencies must be non-negative")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "frequencies", freqs)
        if self.history_counts is not None:
            hist = {}
            totals = [0] * self.k
            for h, z in self.history_counts.items():
                h = tuple(int(v) for v in h)
                if len(h) != self.k or any(v not in (0, 1) for v in h):
                    raise ValueError(f"history {h} is not a 0/1 vector of length {self.k}")
                if sum(h) == 0:
                    raise ValueError("the null history cannot be observed")
                if int(z) < 0:
                    raise ValueError(f"negative count for history {h}")
                if int(z) == 0:
                    continue
                hist[h] = hist.get(h, 0) + int(z)
                totals[sum(h) - 1] += int(z)
            if tuple(totals) != freqs:
                raise ValueError(
                    f"history counts aggregate to {tuple(totals)}, not frequencies {freqs}"
                )
            object.__setattr__(self, "history_counts", dict(sorted(hist.items(), reverse=True)))

    @classmethod
    def from_frequencies(cls, frequencies: Sequence[int]) -> "EncounterData":
        return cls(k=len(frequencies), frequencies=tuple(frequencies))

    @classmethod
    def from_histories(cls, histories) -> "EncounterData":
        """Build from an ``n x k`` 0/1 matrix, one row per observed individual."""
        x = np.asarray(histories, dtype=int)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValueError("histories must be a 2-d matrix with at least one column")
        k = x.shape[1]
        counts = Counter(tuple(row) for row in x.tolist())
        freqs = [0] * k
        for h, z in counts.items():
            if sum(h) == 0:
                raise ValueError("observed individuals need at least one capture")
            freqs[sum(h) - 1] += z
        return cls(k=k, frequencies=tuple(freqs), history_counts=dict(counts))

    @property
    def n(self) -> int:
        return sum(self.frequencies)

    @property
    def has_histories(self) -> bool:
        return self.history_counts is not None

    @cached_property
    def captures(self) -> np.ndarray:
        """Capture totals ``y_i`` of the observed individuals, highest first."""
        return np.repeat(np.arange(self.k, 0, -1), self.frequencies[::-1]).astype(np.int64)

    def padded_captures(self, length: int) -> np.ndarray:
        """Capture totals for ``length`` rows: observed first, then zeros."""
        if length < self.n:
            raise DomainError(f"cannot hold {self.n} observed rows in {length}")
        y = np.zeros(length, dtype=np.int64)
        y[: self.n] = self.captures
        return y

    def log_history_multiplicity(self) -> float:
        """``sum_h log z_h!`` over observed histories (0 when only frequencies are known)."""
        if self.history_counts is None:
            return 0.0
        z = np.fromiter(self.history_counts.values(), dtype=float)
        return float(gammaln(z + 1.0).sum())

    def __eq__(self, other):
        if not isinstance(other, EncounterData):
            return NotImplemented
        return (
            self.k == other.k
            and self.frequencies == other.frequencies
            and self.history_counts == other.history_counts
        )

    def __repr__(self):
        extra = f", histories={len(self.history_counts)}" if self.history_counts else ""
        return f"EncounterData(k={self.k}, n={self.n}, f={self.frequencies}{extra})"


# ---------------------------------------------------------------------------
# Random effects and their hyperpriors
# ---------------------------------------------------------------------------

HYPERPRIOR_KINDS = ("logistic", "normal", "half_t", "gamma")


@dataclass(frozen=True)
class Hyperprior:
    """A univariate prior on one hyperparameter.

    ``logistic(loc, scale)``, ``normal(mean, precision)``,
    ``half_t(scale, df)`` (the law of ``scale * |t_df|``) or
    ``gamma(shape, rate)``.
    """

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind not in HYPERPRIOR_KINDS:
            raise ValueError(f"unknown hyperprior {self.kind!r}")
        if self.b <= 0 or (self.positive and self.a <= 0):
            raise ValueError(f"invalid {self.kind} hyperprior parameters ({self.a}, {self.b})")

    @property
    def positive(self) -> bool:
        return self.kind in ("half_t", "gamma")

    def logpdf(self, x: float) -> float:
        if self.kind == "logistic":
            z = abs((x - self.a) / self.b)
            return -z - math.log(self.b) - 2.0 * math.log1p(math.exp(-z))
        if self.kind == "normal":
            return 0.5 * math.log(self.b / (2.0 * math.pi)) - 0.5 * self.b * (x - self.a) ** 2
        if x <= 0:
            return -math.inf
        if self.kind == "half_t":
            z, df = x / self.a, self.b
            return (
                math.log(2.0) + math.lgamma(0.5 * (df + 1.0)) - math.lgamma(0.5 * df)
                - 0.5 * math.log(df * math.pi) - 0.5 * (df + 1.0) * math.log1p(z * z / df)
                - math.log(self.a)
            )
        shape, rate = self.a, self.b
        return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x

    def median(self) -> float:
        if self.kind in ("logistic", "normal"):
            return float(self.a)
        if self.kind == "half_t":
            return float(self.a * stats.t.ppf(0.75, df=self.b))
        return float(stats.gamma.ppf(0.5, a=self.a, scale=1.0 / self.b))


FAMILIES = ("beta", "logitnormal")


@dataclass(frozen=True)
class RandomEffects:
    """Mixing distribution for individual capture probabilities.

    ``theta`` holds ``(a, b)`` for the Beta family and ``(mu, tau)`` for the
    logit-normal family, with ``tau`` a precision. When ``estimate`` is set,
    ``theta`` is only the starting point and ``priors`` govern the update.
    """

    family: str
    theta: tuple[float, float]
    estimate: bool = False
    priors: Optional[tuple[Hyperprior, Hyperprior]] = None
    steps: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown random-effects family {self.family!r}")
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != 2:
            raise ValueError("theta must have two entries")
        object.__setattr__(self, "theta", theta)
        check_theta(self.family, theta)
        if self.priors is None:
            object.__setattr__(self, "priors", default_hyperpriors(self.family))

    @classmethod
    def beta(cls, a: float, b: float, **kw) -> "RandomEffects":
        return cls("beta", (a, b), **kw)

    @classmethod
    def logit_normal(cls, mu: float, tau: float, **kw) -> "RandomEffects":
        return cls("logitnormal", (mu, tau), **kw)

    @classmethod
    def standard(cls) -> "RandomEffects":
        """Logit-normal effects, mu ~ logistic(0, 1), tau = |5 t| with t ~ t_2.

        Hyperparameters are estimated and start at the hyperprior medians.
        """
        priors = default_hyperpriors("logitnormal")
        return cls(
            "logitnormal",
            (priors[0].median(), priors[1].median()),
            estimate=True,
            priors=priors,
        )

    def with_theta(self, theta) -> "RandomEffects":
        return RandomEffects(self.family, tuple(theta), False, self.priors, self.steps)

    def log_hyperprior(self, theta) -> float:
        return self.priors[0].logpdf(theta[0]) + self.priors[1].logpdf(theta[1])


def default_hyperpriors(family: str) -> tuple[Hyperprior, Hyperprior]:
    if family == "logitnormal":
        return Hyperprior("logistic", 0.0, 1.0), Hyperprior("half_t", 5.0, 2.0)
    return Hyperprior("gamma", 1.0, 0.1), Hyperprior("gamma", 1.0, 0.1)


def check_theta(family: str, theta) -> None:
    if family == "beta" and (theta[0] <= 0 or theta[1] <= 0):
        raise DomainError(f"Beta parameters must be positive, got {theta}")
    if family == "logitnormal" and theta[1] <= 0:
        raise DomainError(f"logit-normal precision must be positive, got {theta[1]}")


def log_random_effect_density(p, effects: RandomEffects, theta=None):
    """Log density of the mixing distribution at ``p`` (scalar or array).

    The logit-normal density includes the ``1 / (p (1 - p))`` Jacobian.
    """
    theta = effects.theta if theta is None else theta
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)):
        raise DomainError("capture probabilities must lie strictly inside (0, 1)")
    if effects.family == "beta":
        a, b = theta
        out = (a - 1.0) * np.log(p_arr) + (b - 1.0) * np.log1p(-p_arr) - betaln(a, b)
    else:
        mu, tau = theta
        logit = np.log(p_arr) - np.log1p(-p_arr)
        out = (
            0.5 * np.log(tau / (2.0 * np.pi))
            - 0.5 * tau * (logit - mu) ** 2
            - np.log(p_arr)
            - np.log1p(-p_arr)
        )
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Priors on N
# ---------------------------------------------------------------------------

PRIOR_KINDS = ("uniform", "jeffreys", "psi_mixture", "custom")


@dataclass(frozen=True, eq=False)
class PriorOnN:
    """Prior on the population size with support bounded by ``M``.

    ``uniform`` is flat on ``0..M``. ``jeffreys`` is proportional to ``1/N`` on
    ``1..M``. ``psi_mixture`` is the beta-binomial law induced by
    ``N ~ Bin(M, psi)`` with ``psi ~ Beta(alpha, beta)``. ``custom`` takes
    ``M + 1`` unnormalized masses.
    """

    kind: str
    M: int
    alpha: float = 1.0
    beta: float = 1.0
    masses: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if int(self.M) < 0:
            raise ValueError("M must be non-negative")
        object.__setattr__(self, "M", int(self.M))
        if self.kind == "psi_mixture" and (self.alpha <= 0 or self.beta <= 0):
            raise ValueError("psi prior parameters must be positive")
        if self.kind == "jeffreys" and self.M < 1:
            raise ValueError("Jeffreys prior needs M >= 1")
        if self.kind == "custom":
            if self.masses is None or len(self.masses) != self.M + 1:
                raise ValueError(f"custom prior needs {self.M + 1} masses")
            m = np.asarray(self.masses, dtype=float)
            if np.any(m < 0) or not np.all(np.isfinite(m)) or m.sum() <= 0:
                raise ValueError("custom masses must be finite, non-negative, not all zero")
            object.__setattr__(self, "masses", tuple(float(v) for v in m))

    @classmethod
    def uniform(cls, M: int) -> "PriorOnN":
        return cls("uniform", M)

    @classmethod
    def jeffreys(cls, M: int) -> "PriorOnN":
        return cls("jeffreys", M)

    @classmethod
    def psi_mixture(cls, M: int, alpha: float = 1.0, beta: float = 1.0) -> "PriorOnN":
        return cls("psi_mixture", M, alpha, beta)

    @classmethod
    def custom(cls, masses: Sequence[float]) -> "PriorOnN":
        return cls("custom", len(masses) - 1, masses=tuple(masses))

    @cached_property
    def log_masses(self) -> np.ndarray:
        """Normalized log masses on ``0..M``."""
        M = self.M
        N = np.arange(M + 1, dtype=float)
        if self.kind == "uniform":
            return np.full(M + 1, -np.log(M + 1.0))
        if self.kind == "jeffreys":
            out = np.full(M + 1, -np.inf)
            out[1:] = -np.log(N[1:])
            out[1:] -= logsumexp(out[1:])
            return out
        if self.kind == "psi_mixture":
            # Successive mass ratios (M-N)(N+a) / ((N+1)(M-N-1+b)) avoid the
            # cancellation between large log-gamma terms.
            a, b = self.alpha, self.beta
            head = N[:-1]
            log_ratio = np.log((M - head) * (head + a)) - np.log((head + 1.0) * (M - head - 1.0 + b))
            out = np.concatenate([[0.0], np.cumsum(log_ratio)])
            return out - logsumexp(out)
        with np.errstate(divide="ignore"):
            out = np.log(np.asarray(self.masses, dtype=float))
        return out - logsumexp(out)

    def describe(self) -> str:
        if self.kind == "psi_mixture":
            return f"psi_mixture(M={self.M}, alpha={self.alpha}, beta={self.beta})"
        return f"{self.kind}(M={self.M})"


def log_prior_n(N: int, prior: PriorOnN) -> float:
    """Normalized log prior mass at ``N``; ``-inf`` off the support."""
    if N < 0 or N > prior.M:
        return -np.inf
    return float(prior.log_masses[N])


# ---------------------------------------------------------------------------
# Sampler states
# ---------------------------------------------------------------------------


@dataclass
class RjState:
    """Trans-dimensional state: ``N``, the first ``N`` capture probabilities
    (observed individuals first) and the hyperparameters."""

    N: int
    p: np.ndarray
    theta: tuple[float, float]

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (self.N,):
            raise ValueError(f"p has shape {self.p.shape}, expected ({self.N},)")

    def validate(self, data: EncounterData) -> None:
        if self.N < data.n:
            raise DomainError(f"N={self.N} is below the {data.n} observed individuals")
        if np.any((self.p <= 0) | (self.p >= 1)):
            raise DomainError("capture probabilities must lie strictly inside (0, 1)")

    def copy(self) -> "RjState":
        return RjState(self.N, self.p.copy(), tuple(self.theta))


@dataclass
class DaState:
    """Superpopulation state over ``M`` pseudo-individuals; ``w[:n]`` is pinned at 1."""

    w: np.ndarray
    p: np.ndarray
    psi: float
    theta: tuple[float, float]

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=float)
        if self.w.shape != self.p.shape or self.w.ndim != 1:
            raise ValueError("w and p must be vectors of equal length M")

    @property
    def M(self) -> int:
        return self.w.size

    @property
    def N(self) -> int:
        return int(self.w.sum())

    def validate(self, data: EncounterData) -> None:
        if self.M < data.n:
            raise DomainError(f"superpopulation M={self.M} below n={data.n}")
        if np.any(self.w[: data.n] != 1):
            raise DomainError("the first n inclusion indicators must be 1")
        if np.any((self.w != 0) & (self.w != 1)):
            raise DomainError("inclusion indicators must be 0/1")
        if not 0.0 <= self.psi <= 1.0:
            raise DomainError(f"psi={self.psi} outside [0, 1]")

    def copy(self) -> "DaState":
        return DaState(self.w.copy(), self.p.copy(), float(self.psi), tuple(self.theta))


# ---------------------------------------------------------------------------
# Likelihood pieces
# ---------------------------------------------------------------------------


def log_cdl(data: EncounterData, state: RjState, effects: RandomEffects) -> float:
    """Complete-data log likelihood for one labelling of the rows.

    Sums ``log f(p_i) + y_i log p_i + (k - y_i) log(1 - p_i)`` over all ``N``
    rows; the ``N - n`` unobserved rows have ``y_i = 0``. The row-permutation
    count is left to :func:`log_combinatorial`.
    """
    if state.N < data.n:
        raise DomainError(f"N={state.N} is below n={data.n}")
    p = state.p
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise DomainError("capture probabilities must lie strictly inside (0, 1)")
    y = data.padded_captures(state.N)
    k = data.k
    dens = log_random_effect_density(p, effects, state.theta)
    return float(np.sum(dens + y * np.log(p) + (k - y) * np.log1p(-p)))


COMBINATORIAL_MODES = ("full", "observed_order_fixed")


def log_combinatorial(N: int, data: EncounterData, mode: str = "full") -> float:
    """Log count of distinct row labellings consistent with the data.

    ``full`` gives ``log N! - sum_h log z_h!`` including ``z_0 = N - n``;
    ``observed_order_fixed`` gives ``log N! - log (N - n)!``. The full form
    needs capture histories.
    """
    n = data.n
    if N < n:
        raise DomainError(f"N={N} is below n={n}")
    base = gammaln(N + 1.0) - gammaln(N - n + 1.0)
    if mode == "observed_order_fixed":
        return float(base)
    if mode != "full":
        raise ValueError(f"unknown combinatorial mode {mode!r}")
    if not data.has_histories:
        raise ValueError("the full combinatorial term needs capture-history counts")
    return float(base - data.log_history_multiplicity())


def log_falling_factorial(N, n):
    """``log N!/(N-n)!`` elementwise; ``-inf`` where ``N < n``."""
    N = np.asarray(N, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(N >= n, gammaln(N + 1.0) - gammaln(np.maximum(N - n, 0) + 1.0), -np.inf)
    return out
