"""Compiled inner loops for the RJ and DA samplers.

Capture probabilities are carried twice: ``p`` on the probability scale and
``l`` on the logit scale (only kept in sync for the logit-normal family).
Randomness comes from numba's per-process Mersenne Twister, seeded through
``seed``; one chain therefore has to run start to finish in one process.
"""
import math

import numpy as np
from numba import njit

BETA = 0
LOGITNORMAL = 1

HP_LOGISTIC = 0
HP_NORMAL = 1
HP_HALF_T = 2
HP_GAMMA = 3

SLICE_MAX_STEPS = 1000


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True)
def log_sigmoid(x):
    if x >= 0.0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True)
def log1m(p, l, fam):
    """log(1 - p), through the logit when it is available."""
    if fam == LOGITNORMAL:
        return log_sigmoid(-l)
    return math.log1p(-p)


@njit(cache=True)
def hyper_logpdf(kind, a, b, x):
    if kind == HP_LOGISTIC:
        z = abs((x - a) / b)
        return -z - math.log(b) - 2.0 * math.log1p(math.exp(-z))
    if kind == HP_NORMAL:
        return 0.5 * math.log(b / (2.0 * math.pi)) - 0.5 * b * (x - a) ** 2
    if x <= 0.0:
        return -np.inf
    if kind == HP_HALF_T:
        z = x / a
        return (
            math.log(2.0)
            + math.lgamma(0.5 * (b + 1.0))
            - math.lgamma(0.5 * b)
            - 0.5 * math.log(b * math.pi)
            - 0.5 * (b + 1.0) * math.log1p(z * z / b)
            - math.log(a)
        )
    return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(x) - b * x


# ---------------------------------------------------------------------------
# Capture probabilities
# ---------------------------------------------------------------------------


@njit(cache=True)
def draw_prior(p, l, i, fam, theta):
    if fam == BETA:
        p[i] = np.random.beta(theta[0], theta[1])
    else:
        x = theta[0] + np.random.normal() / math.sqrt(theta[1])
        l[i] = x
        p[i] = 1.0 / (1.0 + math.exp(-x))


@njit(cache=True)
def logit_target(x, y, k, mu, tau):
    return y * log_sigmoid(x) + (k - y) * log_sigmoid(-x) - 0.5 * tau * (x - mu) ** 2


@njit(cache=True)
def slice_logit(x0, y, k, mu, tau):
    """One univariate slice-sampling update (stepping out, then shrinkage)."""
    width = 2.0 / math.sqrt(tau + 0.25 * k)
    level = logit_target(x0, y, k, mu, tau) + math.log(np.random.random())
    lo = x0 - width * np.random.random()
    hi = lo + width
    j = int(math.floor(SLICE_MAX_STEPS * np.random.random()))
    m = SLICE_MAX_STEPS - 1 - j
    while j > 0 and logit_target(lo, y, k, mu, tau) > level:
        lo -= width
        j -= 1
    while m > 0 and logit_target(hi, y, k, mu, tau) > level:
        hi += width
        m -= 1
    while True:
        x1 = lo + (hi - lo) * np.random.random()
        if logit_target(x1, y, k, mu, tau) > level:
            return x1
        if x1 < x0:
            lo = x1
        else:
            hi = x1


@njit(cache=True)
def update_one_p(p, l, i, y, k, fam, theta):
    if fam == BETA:
        p[i] = np.random.beta(theta[0] + y, theta[1] + k - y)
    else:
        x = slice_logit(l[i], y, k, theta[0], theta[1])
        l[i] = x
        p[i] = 1.0 / (1.0 + math.exp(-x))


@njit(cache=True)
def update_capture_probs(p, l, y, count, k, fam, theta):
    for i in range(count):
        update_one_p(p, l, i, y[i], k, fam, theta)


# ---------------------------------------------------------------------------
# Reversible-jump move on N
# ---------------------------------------------------------------------------


@njit(cache=True)
def draw_step(step_cdf):
    u = np.random.random()
    s = 1
    while s < step_cdf.size and u > step_cdf[s - 1]:
        s += 1
    if np.random.random() < 0.5:
        return -s
    return s


@njit(cache=True)
def log_jump_ratio(p, l, N, Nstar, k, fam, log_base):
    """Log acceptance ratio of a birth (Nstar > N) or death (Nstar < N).

    Rows ``N..Nstar-1`` (birth) or ``Nstar..N-1`` (death) of ``p`` hold the
    auxiliary or deleted capture probabilities. ``log_base[N]`` is the log
    prior on ``N`` plus the log combinatorial term. The jump ratio is 1 for
    the symmetric proposal and is not included.
    """
    if Nstar == N:
        return 0.0
    r = log_base[Nstar] - log_base[N]
    if Nstar > N:
        for i in range(N, Nstar):
            r += k * log1m(p[i], l[i], fam)
    else:
        for i in range(Nstar, N):
            r -= k * log1m(p[i], l[i], fam)
    return r


@njit(cache=True)
def update_n(p, l, N, n, M, k, fam, theta, log_base, step_cdf, counters):
    """One RJ update of ``N``; returns the new ``N``.

    ``counters``: [accepted, proposed, out_of_range].
    """
    Nstar = N + draw_step(step_cdf)
    counters[1] += 1
    if Nstar < n or Nstar > M:
        counters[2] += 1
        return N
    if Nstar > N:
        for i in range(N, Nstar):
            draw_prior(p, l, i, fam, theta)
    r = log_jump_ratio(p, l, N, Nstar, k, fam, log_base)
    if r >= 0.0 or math.log(np.random.random()) < r:
        counters[0] += 1
        return Nstar
    return N


# ---------------------------------------------------------------------------
# Hyperparameters
# ---------------------------------------------------------------------------


@njit(cache=True)
def update_hyper(p, l, count, fam, theta, hp_kind, hp_par, steps, counters):
    """Refresh ``theta`` in place from the first ``count`` capture probabilities.

    Conjugate draws where the hyperprior allows (normal mean, gamma
    precision), random-walk Metropolis on the unconstrained scale otherwise.
    ``counters``: [accepted_0, proposed_0, accepted_1, proposed_1].
    """
    if fam == LOGITNORMAL:
        s1 = 0.0
        s2 = 0.0
        for i in range(count):
            s1 += l[i]
            s2 += l[i] * l[i]
        mu = theta[0]
        tau = theta[1]
        counters[1] += 1
        if hp_kind[0] == HP_NORMAL:
            prec = hp_par[0, 1] + tau * count
            mean = (hp_par[0, 1] * hp_par[0, 0] + tau * s1) / prec
            mu = mean + np.random.normal() / math.sqrt(prec)
            counters[0] += 1
        else:
            mu_star = mu + steps[0] * np.random.normal()
            r = -0.5 * tau * (count * (mu_star**2 - mu**2) - 2.0 * s1 * (mu_star - mu))
            r += hyper_logpdf(hp_kind[0], hp_par[0, 0], hp_par[0, 1], mu_star)
            r -= hyper_logpdf(hp_kind[0], hp_par[0, 0], hp_par[0, 1], mu)
            if math.log(np.random.random()) < r:
                mu = mu_star
                counters[0] += 1
        ss = s2 - 2.0 * mu * s1 + count * mu * mu
        if ss < 0.0:
            ss = 0.0
        counters[3] += 1
        if hp_kind[1] == HP_GAMMA:
            tau = np.random.gamma(hp_par[1, 0] + 0.5 * count, 1.0 / (hp_par[1, 1] + 0.5 * ss))
            counters[2] += 1
        else:
            tau_star = tau * math.exp(steps[1] * np.random.normal())
            r = 0.5 * count * (math.log(tau_star) - math.log(tau)) - 0.5 * ss * (tau_star - tau)
            r += hyper_logpdf(hp_kind[1], hp_par[1, 0], hp_par[1, 1], tau_star) + math.log(tau_star)
            r -= hyper_logpdf(hp_kind[1], hp_par[1, 0], hp_par[1, 1], tau) + math.log(tau)
            if math.log(np.random.random()) < r:
                tau = tau_star
                counters[2] += 1
        theta[0] = mu
        theta[1] = tau
    else:
        slp = 0.0
        sl1p = 0.0
        for i in range(count):
            slp += math.log(p[i])
            sl1p += math.log1p(-p[i])
        for j in range(2):
            counters[2 * j + 1] += 1
            cur = theta[j]
            prop = cur * math.exp(steps[j] * np.random.normal())
            a0, b0 = theta[0], theta[1]
            a1, b1 = a0, b0
            if j == 0:
                a1 = prop
            else:
                b1 = prop
            r = (a1 - a0) * slp + (b1 - b0) * sl1p
            r -= count * (
                math.lgamma(a1) + math.lgamma(b1) - math.lgamma(a1 + b1)
                - math.lgamma(a0) - math.lgamma(b0) + math.lgamma(a0 + b0)
            )
            r += hyper_logpdf(hp_kind[j], hp_par[j, 0], hp_par[j, 1], prop) + math.log(prop)
            r -= hyper_logpdf(hp_kind[j], hp_par[j, 0], hp_par[j, 1], cur) + math.log(cur)
            if math.log(np.random.random()) < r:
                theta[j] = prop
                counters[2 * j] += 1



@njit(cache=True)
def reparam_moves(p, l, y, count, k, theta, hp_kind, hp_par, rsteps, counters):
    """Joint moves of the logit-normal hyperparameters and the logits.

    A shift ``(mu, l) -> (mu + d, l + d)`` and a scaling
    ``l -> mu + c (l - mu), tau -> tau / c^2`` both leave the normal
    random-effects terms unchanged, so only the binomial likelihood, the
    hyperprior and (for the scaling) a ``c^-2`` Jacobian enter the ratio.
    They move the hyperparameters along the ridge the plain Gibbs updates
    crawl along. ``counters``: [acc_shift, prop_shift, acc_scale, prop_scale].
    """
    mu = theta[0]
    tau = theta[1]
    d = rsteps[0] * np.random.normal()
    r = hyper_logpdf(hp_kind[0], hp_par[0, 0], hp_par[0, 1], mu + d)
    r -= hyper_logpdf(hp_kind[0], hp_par[0, 0], hp_par[0, 1], mu)
    for i in range(count):
        r += y[i] * (log_sigmoid(l[i] + d) - log_sigmoid(l[i]))
        r += (k - y[i]) * (log_sigmoid(-l[i] - d) - log_sigmoid(-l[i]))
    counters[1] += 1
    if math.log(np.random.random()) < r:
        counters[0] += 1
        mu += d
        for i in range(count):
            l[i] += d
            p[i] = 1.0 / (1.0 + math.exp(-l[i]))
    e = rsteps[1] * np.random.normal()
    c = math.exp(e)
    tau_star = tau / (c * c)
    r = hyper_logpdf(hp_kind[1], hp_par[1, 0], hp_par[1, 1], tau_star)
    r -= hyper_logpdf(hp_kind[1], hp_par[1, 0], hp_par[1, 1], tau)
    r -= 2.0 * e
    for i in range(count):
        x = mu + c * (l[i] - mu)
        r += y[i] * (log_sigmoid(x) - log_sigmoid(l[i]))
        r += (k - y[i]) * (log_sigmoid(-x) - log_sigmoid(-l[i]))
    counters[3] += 1
    if math.log(np.random.random()) < r:
        counters[2] += 1
        tau = tau_star
        for i in range(count):
            l[i] = mu + c * (l[i] - mu)
            p[i] = 1.0 / (1.0 + math.exp(-l[i]))
    theta[0] = mu
    theta[1] = tau


@njit(cache=True)
def adapt(steps, counters, last, target):
    """Nudge random-walk scales towards ``target`` acceptance (burn-in only)."""
    for j in range(steps.size):
        tried = counters[2 * j + 1] - last[2 * j + 1]
        if tried > 0:
            rate = (counters[2 * j] - last[2 * j]) / tried
            steps[j] *= math.exp(rate - target)
        last[2 * j] = counters[2 * j]
        last[2 * j + 1] = counters[2 * j + 1]


@njit(cache=True)
def hyper_sweep(p, l, y, count, k, fam, theta, hp_kind, hp_par, steps, rsteps, h_counters, r_counters):
    update_hyper(p, l, count, fam, theta, hp_kind, hp_par, steps, h_counters)
    if fam == LOGITNORMAL:
        reparam_moves(p, l, y, count, k, theta, hp_kind, hp_par, rsteps, r_counters)

# ---------------------------------------------------------------------------
# Superpopulation pieces
# ---------------------------------------------------------------------------


@njit(cache=True)
def update_capture_probs_da(p, l, w, y, k, fam, theta):
    for i in range(w.size):
        if w[i] == 1:
            update_one_p(p, l, i, y[i], k, fam, theta)
        else:
            draw_prior(p, l, i, fam, theta)


@njit(cache=True)
def inclusion_prob(psi, log1mp, k):
    if psi <= 0.0:
        return 0.0
    if psi >= 1.0:
        return 1.0
    a = math.log(psi) + k * log1mp
    b = math.log1p(-psi)
    return 1.0 / (1.0 + math.exp(b - a))


@njit(cache=True)
def update_w(p, l, w, n, k, fam, psi, random_scan):
    M = w.size
    if M == n:
        return
    for t in range(n, M):
        i = t
        if random_scan:
            i = n + int(np.random.random() * (M - n))
        prob = inclusion_prob(psi, log1m(p[i], l[i], fam), k)
        w[i] = 1 if np.random.random() < prob else 0


@njit(cache=True)
def update_psi(N, M, alpha, beta):
    return np.random.beta(alpha + N, beta + M - N)


# ---------------------------------------------------------------------------
# Whole chains
# ---------------------------------------------------------------------------

ADAPT_EVERY = 100
ADAPT_TARGET = 0.35


@njit(cache=True)
def rj_chain(
    y, n, M, k, N0, fam, theta0, estimate, hp_kind, hp_par, steps0,
    log_base, step_cdf, iterations, burn_in, thin, s,
):
    np.random.seed(s)
    p = np.empty(M)
    l = np.zeros(M)
    theta = theta0.copy()
    steps = steps0.copy()
    rsteps = np.array([0.2, 0.1])
    for i in range(N0):
        draw_prior(p, l, i, fam, theta)
    N = N0
    keep = (iterations - burn_in + thin - 1) // thin
    out_N = np.empty(keep, dtype=np.int64)
    out_theta = np.empty((keep, 2))
    n_counters = np.zeros(3, dtype=np.int64)
    h_counters = np.zeros(4, dtype=np.int64)
    r_counters = np.zeros(4, dtype=np.int64)
    h_last = np.zeros(4, dtype=np.int64)
    r_last = np.zeros(4, dtype=np.int64)
    row = 0
    for it in range(iterations):
        update_capture_probs(p, l, y, N, k, fam, theta)
        N = update_n(p, l, N, n, M, k, fam, theta, log_base, step_cdf, n_counters)
        if estimate:
            hyper_sweep(p, l, y, N, k, fam, theta, hp_kind, hp_par, steps, rsteps, h_counters, r_counters)
            if it < burn_in and (it + 1) % ADAPT_EVERY == 0:
                adapt(steps, h_counters, h_last, ADAPT_TARGET)
                adapt(rsteps, r_counters, r_last, ADAPT_TARGET)
        if it >= burn_in and (it - burn_in) % thin == 0:
            out_N[row] = N
            out_theta[row, 0] = theta[0]
            out_theta[row, 1] = theta[1]
            row += 1
    return out_N, out_theta, n_counters, h_counters


@njit(cache=True)
def da_chain(
    y, n, M, k, N0, fam, theta0, estimate, hp_kind, hp_par, steps0,
    alpha, beta, random_scan, iterations, burn_in, thin, s,
):
    """DA sweeps: included p's | theta; (theta, excluded p's) | included p's;
    w | p, psi; psi | w.

    Excluded rows are redrawn from the random-effects law every sweep.
    Drawing theta before that refresh uses the included rows only, which is
    the excluded rows integrated out of theta's conditional.
    """
    np.random.seed(s)
    p = np.empty(M)
    l = np.zeros(M)
    w = np.zeros(M, dtype=np.int64)
    pc = np.empty(M)
    lc = np.empty(M)
    yc = np.empty(M, dtype=np.int64)
    idx = np.empty(M, dtype=np.int64)
    theta = theta0.copy()
    steps = steps0.copy()
    rsteps = np.array([0.2, 0.1])
    for i in range(M):
        draw_prior(p, l, i, fam, theta)
        if i < N0:
            w[i] = 1
    psi = (alpha + N0) / (alpha + beta + M)
    keep = (iterations - burn_in + thin - 1) // thin
    out_N = np.empty(keep, dtype=np.int64)
    out_psi = np.empty(keep)
    out_theta = np.empty((keep, 2))
    h_counters = np.zeros(4, dtype=np.int64)
    r_counters = np.zeros(4, dtype=np.int64)
    h_last = np.zeros(4, dtype=np.int64)
    r_last = np.zeros(4, dtype=np.int64)
    row = 0
    for it in range(iterations):
        for i in range(M):
            if w[i] == 1:
                update_one_p(p, l, i, y[i], k, fam, theta)
        if estimate:
            cnt = 0
            for i in range(M):
                if w[i] == 1:
                    idx[cnt] = i
                    pc[cnt] = p[i]
                    lc[cnt] = l[i]
                    yc[cnt] = y[i]
                    cnt += 1
            hyper_sweep(pc, lc, yc, cnt, k, fam, theta, hp_kind, hp_par, steps, rsteps, h_counters, r_counters)
            for j in range(cnt):
                p[idx[j]] = pc[j]
                l[idx[j]] = lc[j]
            if it < burn_in and (it + 1) % ADAPT_EVERY == 0:
                adapt(steps, h_counters, h_last, ADAPT_TARGET)
                adapt(rsteps, r_counters, r_last, ADAPT_TARGET)
        for i in range(M):
            if w[i] == 0:
                draw_prior(p, l, i, fam, theta)
        update_w(p, l, w, n, k, fam, psi, random_scan)
        N = 0
        for i in range(M):
            N += w[i]
        psi = update_psi(N, M, alpha, beta)
        if it >= burn_in and (it - burn_in) % thin == 0:
            out_N[row] = N
            out_psi[row] = psi
            out_theta[row, 0] = theta[0]
            out_theta[row, 1] = theta[1]
            row += 1
    return out_N, out_psi, out_theta, h_counters
