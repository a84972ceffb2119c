"""Compiled inner loops for the collapsed Gibbs and Metropolis-Hastings chains.

Kernels never draw random numbers themselves: the caller passes blocks of
uniforms/normals drawn from its own numpy Generator, so a chain's stream is
owned by the chain object and results do not depend on numba's global RNG.
"""
import math

import numpy as np
from numba import njit

LOG_PI = math.log(math.pi)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

PRIOR_NIG = 0
PRIOR_JEFFREYS = 1

DEGENERATE_RTOL = 1e-12


@njit(cache=True)
def _log_fi_nig(n, s1, s2, alpha, beta, kappa, log_2beta, lgamma_alpha):
    if n == 0:
        return 0.0
    nk = n + kappa
    a_n = 0.5 * n + alpha
    mean = s1 / nk
    v = s2 / nk - mean * mean
    if v < 0.0:
        v = 0.0
    bracket = v + 2.0 * beta / nk
    return (
        alpha * log_2beta
        + 0.5 * math.log(kappa)
        + math.lgamma(a_n)
        - 0.5 * n * LOG_PI
        - (0.5 * (n + 1.0) + alpha) * math.log(nk)
        - lgamma_alpha
        - a_n * math.log(bracket)
    )


@njit(cache=True)
def _log_fi_jeffreys(n, s1, s2):
    mean = s1 / n
    msq = s2 / n
    v = msq - mean * mean
    if v <= DEGENERATE_RTOL * max(1.0, msq):
        raise ValueError("degenerate component: zero within-component variance")
    return (
        0.5 * (1.0 - n) * (LOG_PI + math.log(v))
        - 0.5 * n * math.log(n)
        + math.lgamma(0.5 * (n - 1.0))
    )


@njit(cache=True)
def _log_fi(prior, n, s1, s2, alpha, beta, kappa, log_2beta, lgamma_alpha):
    if prior == PRIOR_NIG:
        return _log_fi_nig(n, s1, s2, alpha, beta, kappa, log_2beta, lgamma_alpha)
    return _log_fi_jeffreys(n, s1, s2)


@njit(cache=True)
def _sample_log_categorical(lw, u):
    # inverse CDF on max-shifted weights
    k = lw.shape[0]
    mx = -np.inf
    for i in range(k):
        if lw[i] > mx:
            mx = lw[i]
    total = 0.0
    for i in range(k):
        total += math.exp(lw[i] - mx)
    target = u * total
    acc = 0.0
    last = 0
    for i in range(k):
        if lw[i] == -np.inf:
            continue
        acc += math.exp(lw[i] - mx)
        last = i
        if target < acc:
            return i
    return last


@njit(cache=True)
def _recompute_stats(x, g, counts, s1, s2):
    counts[:] = 0
    s1[:] = 0.0
    s2[:] = 0.0
    for j in range(x.shape[0]):
        c = g[j]
        counts[c] += 1
        s1[c] += x[j]
        s2[c] += x[j] * x[j]


@njit(cache=True)
def collapsed_gibbs_block(x, g, counts, s1, s2, uniforms, save, out_g, out_pos,
                          prior, alpha, beta, kappa, delta, min_count):
    """Run ``uniforms.shape[0]`` full sweeps in place.

    After sweep ``s`` the allocation is copied to ``out_g[out_pos]`` when
    ``save[s]`` is set. Returns the next free output row.
    """
    n = x.shape[0]
    k = counts.shape[0]
    lw = np.empty(k)
    log_2beta = math.log(2.0 * beta) if prior == PRIOR_NIG else 0.0
    lgamma_alpha = math.lgamma(alpha) if prior == PRIOR_NIG else 0.0
    for s in range(uniforms.shape[0]):
        for j in range(n):
            xj = x[j]
            c = g[j]
            counts[c] -= 1
            s1[c] -= xj
            s2[c] -= xj * xj
            if counts[c] < min_count:
                # every other move would leave c below the minimum count
                new = c
            else:
                for i in range(k):
                    ni = counts[i]
                    lw[i] = (
                        _log_fi(prior, ni + 1, s1[i] + xj, s2[i] + xj * xj,
                                alpha, beta, kappa, log_2beta, lgamma_alpha)
                        - _log_fi(prior, ni, s1[i], s2[i],
                                  alpha, beta, kappa, log_2beta, lgamma_alpha)
                        + math.log(ni + delta[i])
                    )
                new = _sample_log_categorical(lw, uniforms[s, j])
            g[j] = new
            counts[new] += 1
            s1[new] += xj
            s2[new] += xj * xj
        _recompute_stats(x, g, counts, s1, s2)
        for i in range(k):
            if counts[i] < min_count:
                raise ValueError("min-count constraint violated")
        if save[s]:
            out_g[out_pos, :] = g
            out_pos += 1
    return out_pos


@njit(cache=True)
def _wrap(v, lo, hi):
    if v < lo or v > hi:
        width = hi - lo
        v = lo + (v - lo) % width
    return v


@njit(cache=True)
def _reflect(v, lo):
    if v < lo:
        v = 2.0 * lo - v
    return v


@njit(cache=True)
def _propose_allocation(x, mu, sig, u, g_out, counts, lp):
    """Draw G from its uniform-weight conditional; returns (log g(G), log f(x|theta,G))."""
    n = x.shape[0]
    k = mu.shape[0]
    counts[:] = 0
    log_g = 0.0
    log_f = 0.0
    for j in range(n):
        mx = -np.inf
        for i in range(k):
            z = (x[j] - mu[i]) / sig[i]
            lp[i] = -math.log(sig[i]) - 0.5 * z * z
            if lp[i] > mx:
                mx = lp[i]
        total = 0.0
        for i in range(k):
            total += math.exp(lp[i] - mx)
        lse = mx + math.log(total)
        c = _sample_log_categorical(lp, u[j])
        g_out[j] = c
        counts[c] += 1
        log_g += lp[c] - lse
        log_f += lp[c] - HALF_LOG_2PI
    return log_g, log_f


@njit(cache=True)
def _log_target(log_f, counts, sig, delta, min_count):
    k = counts.shape[0]
    lp = 0.0
    for i in range(k):
        if counts[i] < min_count:
            return -np.inf
        lp += math.lgamma(counts[i] + delta[i]) - math.log(sig[i])
    return log_f + lp


@njit(cache=True)
def log_allocation_proposal(x, mu, sig, g):
    """log g(G | mu, sigma) and log f(x | mu, sigma, G) for a given G."""
    k = mu.shape[0]
    lp = np.empty(k)
    log_g = 0.0
    log_f = 0.0
    for j in range(x.shape[0]):
        mx = -np.inf
        for i in range(k):
            z = (x[j] - mu[i]) / sig[i]
            lp[i] = -math.log(sig[i]) - 0.5 * z * z
            if lp[i] > mx:
                mx = lp[i]
        total = 0.0
        for i in range(k):
            total += math.exp(lp[i] - mx)
        c = g[j]
        log_g += lp[c] - mx - math.log(total)
        log_f += lp[c] - HALF_LOG_2PI
    return log_g, log_f


@njit(cache=True)
def metropolis_block(x, mu, sig, g, counts, state, normals, uniforms, save,
                     out_mu, out_sig, out_counts, out_g, out_pos,
                     mu_step, sigma_step, mu_min, mu_max, sigma_min, delta, min_count):
    """Run ``normals.shape[0]`` MH steps in place.

    ``state`` holds [log g(G|theta), log target(theta, G)] for the current
    state. ``normals`` has 2K columns (mu then sigma increments);
    ``uniforms`` has N + 1 columns (allocation draws then the accept draw).
    Returns (next output row, number of accepted moves).
    """
    n = x.shape[0]
    k = mu.shape[0]
    mu_new = np.empty(k)
    sig_new = np.empty(k)
    g_new = np.empty(n, dtype=g.dtype)
    counts_new = np.empty(k, dtype=counts.dtype)
    lp = np.empty(k)
    accepted = 0
    for s in range(normals.shape[0]):
        for i in range(k):
            mu_new[i] = _wrap(mu[i] + mu_step * normals[s, i], mu_min, mu_max)
            sig_new[i] = _reflect(sig[i] + sigma_step * normals[s, k + i], sigma_min)
        log_g_new, log_f_new = _propose_allocation(
            x, mu_new, sig_new, uniforms[s, :n], g_new, counts_new, lp)
        target_new = _log_target(log_f_new, counts_new, sig_new, delta, min_count)
        if target_new > -np.inf:
            log_a = state[0] - log_g_new + target_new - state[1]
            if math.log(uniforms[s, n]) < log_a:
                mu[:] = mu_new
                sig[:] = sig_new
                g[:] = g_new
                counts[:] = counts_new
                state[0] = log_g_new
                state[1] = target_new
                accepted += 1
        for i in range(k):
            if counts[i] < min_count:
                raise ValueError("min-count constraint violated")
        if save[s]:
            out_mu[out_pos, :] = mu
            out_sig[out_pos, :] = sig
            out_counts[out_pos, :] = counts
            if out_g.shape[0] > 0:
                out_g[out_pos, :] = g
            out_pos += 1
    return out_pos, accepted
