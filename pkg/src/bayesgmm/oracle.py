"""Ground truth for small problems.

- ``oracle_enumerate``: exact posterior over all allocations.
- ``quadrature_check``: 2-D adaptive quadrature of a component's marginal
  likelihood, independent of the closed forms in :mod:`bayesgmm.model`.
- ``lemma1_ratio_sweep``: log posterior ratio of a one-component allocation
  against another allocation as the NIG prior is made weaker.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln, logsumexp

from .model import (
    Dataset,
    InfeasibleError,
    ModelSpec,
    ModifiedJeffreys,
    Prior,
    StandardNIG,
    log_fi,
    log_fi_nig,
    log_prior_G,
    log_prior_G_standard,
)

MAX_ENUMERATION = 10**7
_CHUNK = 1 << 16


class EnumerationTooLarge(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnumeratedPosterior:
    allocations: np.ndarray  # (M, N) 0-based labels
    log_weights: np.ndarray
    normalized: np.ndarray

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in g): float(p) for g, p in zip(self.allocations, self.normalized)}

    def mean_counts(self) -> np.ndarray:
        k = int(self.allocations.max()) + 1 if self.allocations.size else 0
        counts = np.stack([(self.allocations == i).sum(axis=1) for i in range(k)], axis=1)
        return self.normalized @ counts


def _allocation_block(start, stop, n, k):
    idx = np.arange(start, stop, dtype=np.int64)
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers) % k


def oracle_enumerate(data: Dataset, spec: ModelSpec) -> EnumeratedPosterior:
    """Exact posterior over allocations, in base-K counter order (last point fastest)."""
    n, k = data.n, spec.k
    total = k**n
    if total > MAX_ENUMERATION:
        raise EnumerationTooLarge(
            f"K^N = {k}^{n} = {total} allocations exceeds the bound {MAX_ENUMERATION}")
    spec.check_feasible(n)
    x = data.values
    allocs, logw = [], []
    for start in range(0, total, _CHUNK):
        block = _allocation_block(start, min(total, start + _CHUNK), n, k)
        masks = [block == i for i in range(k)]
        counts = np.stack([m.sum(axis=1) for m in masks], axis=1)
        if spec.min_count:
            keep = np.all(counts >= spec.min_count, axis=1)
            block, counts = block[keep], counts[keep]
            masks = [m[keep] for m in masks]
        if block.shape[0] == 0:
            continue
        lw = log_prior_G(spec, counts)
        for i, m in enumerate(masks):
            lw = lw + log_fi(spec.prior, counts[:, i], m @ x, m @ (x * x))
        allocs.append(block)
        logw.append(lw)
    if not allocs:
        raise InfeasibleError("no feasible allocation")
    allocs = np.concatenate(allocs)
    logw = np.concatenate(logw)
    probs = np.exp(logw - logsumexp(logw))
    probs /= probs.sum()
    return EnumeratedPosterior(allocs, logw, probs)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

_QUAD_EPSREL = 1e-10
_QUAD_TOL = 1e-8
_WINDOW_SD = 12.0
_TAIL_DROP = 50.0
# Smallest variance visited, relative to max(1, mean x^2); below it the
# mu-dependent part of the integrand cannot be evaluated accurately.
_VAR_FLOOR = 1e-10
# The Jeffreys closed form omits a factor 1/2 common to all components.
_JEFFREYS_DROPPED = math.log(2.0)


def _quad(f, a, b, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=_QUAD_EPSREL,
                                      limit=400, points=points)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from None
    if not np.isfinite(val) or val <= 0 or err > _QUAD_TOL * val:
        raise QuadratureError(f"quadrature did not reach tolerance (value {val}, error {err})")
    return val


def _integrand_factory(x, prior):
    """Split the log integrand in (mu, t) into log_base(t) + rel(mu, t).

    ``log_base`` is the log integrand at the conditional mu-centre and
    ``rel(d, t)`` its change at mu = centre + d, written as a product so it
    stays accurate when sigma is tiny. NIG integrates over t = log sigma^2,
    Jeffreys over t = log sigma; the Jacobian of the change of variable is
    included.
    """
    n = x.size
    s1 = float(x.sum())
    log_2pi = math.log(2.0 * math.pi)
    if isinstance(prior, StandardNIG):
        a, b, kap = prior.alpha, prior.beta, prior.kappa
        const = a * math.log(b) - math.lgamma(a) + 0.5 * math.log(kap) - 0.5 * log_2pi
        centre = s1 / (n + kap)
        r0 = x - centre
        sq0 = float(r0 @ r0)

        def log_base(t):
            # prior density of (mu, sigma^2) times likelihood, times d sigma^2 / dt
            var = math.exp(t)
            log_prior = const - 0.5 * t - 0.5 * kap * centre * centre / var \
                - (a + 1.0) * t - b / var
            log_lik = -0.5 * n * (log_2pi + t) - 0.5 * sq0 / var
            return log_prior + log_lik + t

        def rel(d, t):
            mu_plus_c = 2.0 * centre + d
            return -0.5 * d * (kap * mu_plus_c - (2.0 * s1 - n * mu_plus_c)) / math.exp(t)

        def scale(t):
            return math.sqrt(math.exp(t) / (n + kap))

    elif isinstance(prior, ModifiedJeffreys):
        if n < 2:
            raise ValueError("Jeffreys quadrature needs at least two points")
        centre = s1 / n
        r0 = x - centre
        sq0 = float(r0 @ r0)

        def log_base(t):
            # sigma^-1 * likelihood * d sigma / dt
            return -t - 0.5 * n * (log_2pi + 2.0 * t) - 0.5 * sq0 * math.exp(-2.0 * t) + t

        def rel(d, t):
            return 0.5 * d * (2.0 * s1 - n * (2.0 * centre + d)) * math.exp(-2.0 * t)

        def scale(t):
            return math.exp(t) / math.sqrt(n)

    else:
        raise TypeError(f"no quadrature for {type(prior).__name__}")
    msq = float(x @ x) / n
    var_floor = math.log(_VAR_FLOOR * max(1.0, msq))
    t_min = var_floor if isinstance(prior, StandardNIG) else 0.5 * var_floor
    return log_base, rel, centre, scale, t_min


def log_marginal_quadrature(values, prior: Prior) -> float:
    """log of the double integral of prior x likelihood, by nested adaptive quadrature."""
    x = np.asarray(values, dtype=float).ravel()
    log_base, rel, centre, scale, t_min = _integrand_factory(x, prior)

    def log_inner(t):
        # mu = centre + s * z, integrated over z in a fixed standardized window
        s = scale(t)
        val = _quad(lambda z: math.exp(rel(s * z, t)), -_WINDOW_SD, _WINDOW_SD, points=[0.0])
        return log_base(t) + math.log(s) + math.log(val)

    # locate the peak of the outer integrand on a coarse grid, then refine
    grid = np.arange(t_min, 60.0, 0.5)
    vals = np.array([log_inner(t) for t in grid])
    i = int(np.argmax(vals))
    if i == 0:
        raise QuadratureError("integrand peaks at the variance floor (near-degenerate data)")
    res = optimize.minimize_scalar(
        lambda t: -log_inner(t),
        bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]), method="bounded")
    t_star = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    h_star = log_inner(t_star)

    # widen each side until the integrand has dropped by _TAIL_DROP nats
    lo = t_star - 1.0
    while lo > t_min and log_inner(lo) > h_star - _TAIL_DROP:
        lo = max(lo - 1.0, t_min)
    hi = t_star + 1.0
    while log_inner(hi) > h_star - _TAIL_DROP:
        hi += 1.0
    val = _quad(lambda t: math.exp(log_inner(t) - h_star), lo, hi, points=[t_star])
    return h_star + math.log(val)


def quadrature_check(values, prior: Prior) -> float:
    """Quadrature value on the same scale as :func:`bayesgmm.model.log_fi`."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size > 8:
        raise ValueError("quadrature check is limited to n_i <= 8")
    out = log_marginal_quadrature(x, prior)
    if isinstance(prior, ModifiedJeffreys):
        out += _JEFFREYS_DROPPED
    return out


# ---------------------------------------------------------------------------
# Lemma 1 sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lemma1SweepConfig:
    c1: float
    c2: float
    kappa_grid: tuple
    g_prime: np.ndarray
    g_double_prime: np.ndarray
    k: int = 2

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c1 and c2 must be positive")
        grid = np.asarray(self.kappa_grid, dtype=float)
        if grid.size < 1 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
            raise ValueError("kappa_grid must be positive and strictly decreasing")
        gp = np.asarray(self.g_prime)
        cp = np.bincount(gp, minlength=self.k)
        if np.sum(cp == 0) != self.k - 1:
            raise ValueError("g_prime must put every point in a single component")
        gpp = np.asarray(self.g_double_prime)
        if gpp.shape != gp.shape:
            raise ValueError("allocations must have the same length")
        if np.sum(np.bincount(gpp, minlength=self.k) == 0) == self.k - 1:
            raise ValueError("g_double_prime must not put every point in one component")


@dataclass(frozen=True)
class Lemma1Table:
    kappa: np.ndarray
    log_ratio: np.ndarray
    slope: np.ndarray  # d log-ratio / d log kappa between grid neighbours; NaN first


def single_split(n: int, k: int = 2):
    """(all in component 0, all but the last point in 0 and the last in 1)."""
    gp = np.zeros(n, dtype=np.int64)
    gpp = gp.copy()
    gpp[-1] = 1
    return gp, gpp


def balanced_split(data: Dataset, k: int = 2):
    """(all in component 0, points below the median in 0 and the rest in 1)."""
    n = data.n
    gp = np.zeros(n, dtype=np.int64)
    order = np.argsort(data.values, kind="stable")
    gpp = np.zeros(n, dtype=np.int64)
    gpp[order[n // 2:]] = 1
    return gp, gpp


def log_posterior_G_nig(data: Dataset, g, k: int, alpha, beta, kappa, delta=None) -> float:
    """Unnormalized log f(G | x) under the NIG prior and the standard allocation prior."""
    x = data.values
    g = np.asarray(g)
    delta = np.ones(k) if delta is None else np.asarray(delta, dtype=float)
    counts = np.bincount(g, minlength=k)
    total = float(log_prior_G_standard(counts, delta))
    for i in range(k):
        xi = x[g == i]
        total += float(log_fi_nig(xi.size, xi.sum(), (xi * xi).sum(), alpha, beta, kappa))
    return total


def lemma1_ratio_sweep(data: Dataset, cfg: Lemma1SweepConfig) -> Lemma1Table:
    if data.n <= cfg.k:
        raise ValueError("the sweep assumes N > K")
    kappas = np.asarray(cfg.kappa_grid, dtype=float)
    ratios = np.empty_like(kappas)
    for idx, kap in enumerate(kappas):
        a, b = cfg.c1 * kap, cfg.c2 * kap
        ratios[idx] = (log_posterior_G_nig(data, cfg.g_prime, cfg.k, a, b, kap)
                       - log_posterior_G_nig(data, cfg.g_double_prime, cfg.k, a, b, kap))
    slope = np.full_like(kappas, np.nan)
    if kappas.size > 1:
        slope[1:] = np.diff(ratios) / np.diff(np.log(kappas))
    return Lemma1Table(kappas, ratios, slope)
