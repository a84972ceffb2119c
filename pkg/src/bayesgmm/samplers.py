"""MCMC backends for the standard and min-count mixture models.

Three samplers are provided:

- ``run_da_gibbs``: data-augmentation Gibbs for the standard model under the
  NIG or Richardson-Green priors.
- ``run_collapsed_gibbs``: Gibbs over the allocation vector with component
  parameters integrated out (NIG with the Dirichlet-multinomial allocation
  prior, or Jeffreys with the min-count prior). Parameters are drawn
  retrospectively for each saved allocation.
- ``run_metropolis_hastings``: random-walk MH on (mu, sigma) with the
  allocation re-proposed from its uniform-weight conditional each step.

Each chain owns a ``numpy.random.Generator`` seeded from ``ChainConfig.seed``,
so identical inputs give bit-identical output.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .model import (
    Dataset,
    DegenerateComponentError,
    InfeasibleError,
    ModelSpec,
    ModifiedJeffreys,
    StandardNIG,
    StandardRG,
    degenerate_threshold,
)

SAMPLERS = ("da_gibbs", "collapsed_gibbs", "metropolis_hastings")

# Component variances are capped at exp(700) so prior draws for empty
# components stay finite; such a component has no practical pull on any point.
LOG_SIGMA2_MAX = 700.0
MIN_STABLE_ALPHA = 0.01
MAX_INIT_ATTEMPTS = 100_000
_BLOCK_ELEMENTS = 1 << 20


class NumericalStabilityError(RuntimeError):
    """Raised when a draw from a near-improper prior is requested."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ChainConfig:
    sampler: str = "collapsed_gibbs"
    burn_in: int = 10_000
    post_burn_in: int = 100_000
    thin: int = 10
    seed: int = 0
    mu_step: float | None = None
    sigma_step: float | None = None
    mu_min: float | None = None
    mu_max: float | None = None
    sigma_min: float = 0.01
    keep_allocations: bool = True

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ConfigurationError(f"unknown sampler {self.sampler!r}; choose from {SAMPLERS}")
        if self.burn_in < 0 or self.post_burn_in < 1 or self.thin < 1:
            raise ConfigurationError("need burn_in >= 0, post_burn_in >= 1, thin >= 1")
        for name in ("mu_step", "sigma_step"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not self.sigma_min > 0:
            raise ConfigurationError("sigma_min must be positive")
        if self.mu_min is not None and self.mu_max is not None and not self.mu_min < self.mu_max:
            raise ConfigurationError("need mu_min < mu_max")

    @property
    def n_saved(self) -> int:
        return self.post_burn_in // self.thin

    @property
    def n_iterations(self) -> int:
        return self.burn_in + self.post_burn_in

    def save_mask(self) -> np.ndarray:
        it = np.arange(self.n_iterations)
        post = it - self.burn_in + 1
        return (post > 0) & (post % self.thin == 0)

    def resolved(self, data: Dataset) -> "ChainConfig":
        """Fill data-dependent MH defaults (step sizes and mu bounds)."""
        sd = float(np.std(data.values)) or 1.0
        lo, hi = float(data.values.min()), float(data.values.max())
        return replace(
            self,
            mu_step=self.mu_step if self.mu_step is not None else 0.5 * sd,
            sigma_step=self.sigma_step if self.sigma_step is not None else 0.25 * sd,
            mu_min=self.mu_min if self.mu_min is not None else lo - 2.0 * sd,
            mu_max=self.mu_max if self.mu_max is not None else hi + 2.0 * sd,
        )


@dataclass
class PosteriorSamples:
    mu_draws: np.ndarray
    sigma2_draws: np.ndarray
    weight_draws: np.ndarray
    count_draws: np.ndarray
    allocations: np.ndarray | None = None
    acceptance_rate: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def empty_flags(self) -> np.ndarray:
        return np.any(self.count_draws == 0, axis=1)

    @property
    def n_states(self) -> int:
        return int(self.mu_draws.shape[0])

    @property
    def k(self) -> int:
        return int(self.mu_draws.shape[1])

    @property
    def n_data(self) -> int:
        return int(self.count_draws[0].sum()) if self.n_states else 0

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.mu_draws, self.sigma2_draws, self.weight_draws, self.count_draws):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.allocations is not None:
            h.update(np.ascontiguousarray(self.allocations).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Random variates
# ---------------------------------------------------------------------------


def log_gamma_variates(rng: np.random.Generator, shape) -> np.ndarray:
    """log of Gamma(shape, 1) draws, exact for small shapes.

    Uses Gamma(a) = Gamma(a + 1) * U^(1/a) for a < 1 so the log stays finite
    where the direct draw would underflow to zero.
    """
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    gam = rng.gamma(np.where(small, shape + 1.0, shape))
    u = rng.random(shape.shape)
    return np.log(gam) + np.where(small, np.log(u) / shape, 0.0)


def draw_inverse_gamma(rng, shape, rate) -> np.ndarray:
    log_s2 = np.log(rate) - log_gamma_variates(rng, shape)
    return np.exp(np.minimum(log_s2, LOG_SIGMA2_MAX))


def sample_categorical_rows(log_w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sample per row of max-shifted log weights."""
    w = np.exp(log_w - log_w.max(axis=1, keepdims=True))
    cum = np.cumsum(w, axis=1)
    target = u * cum[:, -1]
    idx = (cum <= target[:, None]).sum(axis=1)
    return np.minimum(idx, log_w.shape[1] - 1)


def _component_sums(x, g, k):
    counts = np.bincount(g, minlength=k)
    s1 = np.bincount(g, weights=x, minlength=k)
    s2 = np.bincount(g, weights=x * x, minlength=k)
    return counts, s1, s2


def _initial_params(data: Dataset, k: int):
    x = data.values
    mu = np.quantile(x, (np.arange(k) + 0.5) / k)
    sd = float(np.std(x)) or 1.0
    return mu.astype(float), np.full(k, sd)


def _nig_posterior(prior: StandardNIG, counts, s1, s2):
    kn = prior.kappa + counts
    mean = s1 / kn
    shape = prior.alpha + 0.5 * counts
    rate = prior.beta + 0.5 * np.maximum(s2 - s1 * s1 / kn, 0.0)
    return kn, mean, shape, rate


def nig_conditional_mean(prior: StandardNIG, counts, s1):
    """Posterior mean of mu_i given the allocation (shrunk towards zero)."""
    return np.asarray(s1, dtype=float) / (prior.kappa + np.asarray(counts, dtype=float))


def jeffreys_conditional(counts, s1, s2):
    """Parameters of the NIG conditional of (mu_i, sigma_i^2) under 1/sigma.

    Returns (mean, shape, rate): mu | s2 ~ N(mean, s2 / n), s2 ~ InvGamma(shape, rate).
    """
    counts = np.asarray(counts, dtype=float)
    mean = s1 / counts
    v = np.maximum(s2 / counts - mean * mean, 0.0)
    return mean, 0.5 * (counts - 1.0), 0.5 * counts * v


def rg_scale_conditional(prior: StandardRG, sig2):
    """(shape, rate) of the Gamma full conditional of the RG variance scale b."""
    sig2 = np.asarray(sig2, dtype=float)
    return prior.g + sig2.size * prior.alpha, prior.h + float(np.sum(1.0 / sig2))


def _check_empty_guard(prior, counts):
    if prior.alpha < MIN_STABLE_ALPHA and np.any(counts == 0):
        raise NumericalStabilityError(
            f"alpha = {prior.alpha} < {MIN_STABLE_ALPHA}: cannot draw the variance of an "
            "empty component from the inverse-gamma prior"
        )


# ---------------------------------------------------------------------------
# Data-augmentation Gibbs (standard model)
# ---------------------------------------------------------------------------


def run_da_gibbs(data: Dataset, spec: ModelSpec, cfg: ChainConfig) -> PosteriorSamples:
    prior = spec.prior
    if not isinstance(prior, (StandardNIG, StandardRG)):
        raise ConfigurationError("data-augmentation Gibbs needs a standard (NIG or RG) prior")
    rng = np.random.default_rng(cfg.seed)
    x = data.values
    n, k = data.n, spec.k
    delta = np.asarray(spec.delta)

    mu, sd = _initial_params(data, k)
    sig2 = sd * sd
    p = np.full(k, 1.0 / k)
    b = prior.g / prior.h if isinstance(prior, StandardRG) else None

    save = cfg.save_mask()
    n_saved = cfg.n_saved
    out_mu = np.empty((n_saved, k))
    out_s2 = np.empty((n_saved, k))
    out_p = np.empty((n_saved, k))
    out_n = np.empty((n_saved, k), dtype=np.int64)
    out_g = np.empty((n_saved, n), dtype=np.int16) if cfg.keep_allocations else None
    pos = 0

    for it in range(cfg.n_iterations):
        # (a) allocations given parameters
        z = (x[:, None] - mu) ** 2 / sig2
        log_w = np.log(p) - 0.5 * np.log(sig2) - 0.5 * z
        g = sample_categorical_rows(log_w, rng.random(n))
        counts, s1, s2 = _component_sums(x, g, k)
        _check_empty_guard(prior, counts)

        # (b) weights
        p = rng.dirichlet(delta + counts)
        p = np.maximum(p, np.finfo(float).tiny)
        p /= p.sum()

        # (c) component parameters
        if isinstance(prior, StandardNIG):
            kn, mean, shape, rate = _nig_posterior(prior, counts, s1, s2)
            sig2 = draw_inverse_gamma(rng, shape, rate)
            mu = mean + np.sqrt(sig2 / kn) * rng.standard_normal(k)
        else:
            prec = prior.kappa + counts / sig2
            mu = (s1 / sig2) / prec + rng.standard_normal(k) / np.sqrt(prec)
            ss = np.maximum(s2 - 2.0 * mu * s1 + counts * mu * mu, 0.0)
            sig2 = draw_inverse_gamma(rng, prior.alpha + 0.5 * counts, b + 0.5 * ss)
            # (d) hierarchical scale
            shape, rate = rg_scale_conditional(prior, sig2)
            b = rng.gamma(shape) / rate

        if save[it]:
            out_mu[pos] = mu
            out_s2[pos] = sig2
            out_p[pos] = p
            out_n[pos] = counts
            if out_g is not None:
                out_g[pos] = g
            pos += 1

    return PosteriorSamples(out_mu, out_s2, out_p, out_n, out_g,
                            info={"sampler": "da_gibbs"})


# ---------------------------------------------------------------------------
# Collapsed Gibbs
# ---------------------------------------------------------------------------


def _random_feasible_allocation(rng, n, k, m):
    for _ in range(MAX_INIT_ATTEMPTS):
        g = rng.integers(0, k, size=n)
        if m == 0 or np.all(np.bincount(g, minlength=k) >= m):
            return g
    raise InfeasibleError("could not draw a feasible starting allocation")


def _block_sizes(total, width):
    step = max(1, _BLOCK_ELEMENTS // max(width, 1))
    start = 0
    while start < total:
        stop = min(total, start + step)
        yield start, stop
        start = stop


def run_collapsed_gibbs(data: Dataset, spec: ModelSpec, cfg: ChainConfig) -> PosteriorSamples:
    prior = spec.prior
    if isinstance(prior, StandardRG):
        raise ConfigurationError(
            "collapsed Gibbs needs a closed-form component marginal; "
            "the hierarchical RG model cannot be implemented this way"
        )
    n, k, m = data.n, spec.k, spec.min_count
    spec.check_feasible(n)
    if m and n == m * k:
        # every component sits at the minimum, so no single-site move is feasible
        warnings.warn(f"N = min_count * K = {n}: collapsed Gibbs cannot leave its starting "
                      "allocation; use metropolis_hastings", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(cfg.seed)
    delta = np.ascontiguousarray(spec.delta, dtype=float)

    if isinstance(prior, ModifiedJeffreys):
        code, a, b_, kap = _kernels.PRIOR_JEFFREYS, 1.0, 1.0, 1.0
        # V_i is shift invariant; centering limits cancellation in s2/n - mean^2
        x = data.values - data.values.mean()
    else:
        code, a, b_, kap = _kernels.PRIOR_NIG, prior.alpha, prior.beta, prior.kappa
        x = data.values.copy()

    g = _random_feasible_allocation(rng, n, k, m).astype(np.int64)
    counts = np.zeros(k, dtype=np.int64)
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    _kernels._recompute_stats(x, g, counts, s1, s2)

    save = cfg.save_mask()
    out_g = np.empty((cfg.n_saved, n), dtype=np.int64)
    pos = 0
    try:
        for start, stop in _block_sizes(cfg.n_iterations, n):
            u = rng.random((stop - start, n))
            pos = _kernels.collapsed_gibbs_block(
                x, g, counts, s1, s2, u, save[start:stop], out_g, pos,
                code, a, b_, kap, delta, m)
    except ValueError as exc:
        if "degenerate" in str(exc):
            raise DegenerateComponentError(str(exc)) from None
        raise
    return _retrospective_draws(rng, data, spec, out_g, "collapsed_gibbs", cfg.keep_allocations)


def _retrospective_draws(rng, data, spec, alloc, sampler, keep):
    """Draw (mu, sigma^2) and weights for every saved allocation."""
    prior = spec.prior
    x = data.values
    s, k, n = alloc.shape[0], spec.k, data.n
    counts = np.zeros((s, k), dtype=np.int64)
    s1 = np.zeros((s, k))
    s2 = np.zeros((s, k))
    for i in range(k):
        mask = alloc == i
        counts[:, i] = mask.sum(axis=1)
        s1[:, i] = mask @ x
        s2[:, i] = mask @ (x * x)

    if isinstance(prior, ModifiedJeffreys):
        mean, shape, rate = jeffreys_conditional(counts, s1, s2)
        if np.any(2.0 * rate / counts <= degenerate_threshold(counts, s2)):
            raise DegenerateComponentError("degenerate component: zero within-component variance")
        sig2 = draw_inverse_gamma(rng, shape, rate)
        mu = mean + np.sqrt(sig2 / counts) * rng.standard_normal((s, k))
        weights = counts / n
    else:
        _check_empty_guard(prior, counts)
        kn, mean, shape, rate = _nig_posterior(prior, counts, s1, s2)
        sig2 = draw_inverse_gamma(rng, shape, rate)
        mu = mean + np.sqrt(sig2 / kn) * rng.standard_normal((s, k))
        gam = rng.gamma(np.asarray(spec.delta) + counts)
        weights = gam / gam.sum(axis=1, keepdims=True)
    return PosteriorSamples(mu, sig2, weights, counts,
                            alloc.astype(np.int16) if keep else None,
                            info={"sampler": sampler})


# ---------------------------------------------------------------------------
# Metropolis-Hastings (min-count model)
# ---------------------------------------------------------------------------


def wrap_mu(v, lo, hi):
    """Map values outside [lo, hi] to the opposite end of the interval."""
    v = np.asarray(v, dtype=float)
    out = np.where((v < lo) | (v > hi), lo + np.mod(v - lo, hi - lo), v)
    return out[()] if out.ndim == 0 else out


def reflect_sigma(v, lo):
    v = np.asarray(v, dtype=float)
    out = np.where(v < lo, 2.0 * lo - v, v)
    return out[()] if out.ndim == 0 else out


def run_metropolis_hastings(data: Dataset, spec: ModelSpec, cfg: ChainConfig) -> PosteriorSamples:
    if not isinstance(spec.prior, ModifiedJeffreys):
        raise ConfigurationError("Metropolis-Hastings is implemented for the Jeffreys min-count model")
    n, k, m = data.n, spec.k, spec.min_count
    spec.check_feasible(n)
    cfg = cfg.resolved(data)
    x = np.ascontiguousarray(data.values)
    if x.min() < cfg.mu_min or x.max() > cfg.mu_max:
        raise ConfigurationError(
            f"data range [{x.min()}, {x.max()}] lies outside [mu_min, mu_max] = "
            f"[{cfg.mu_min}, {cfg.mu_max}]")
    rng = np.random.default_rng(cfg.seed)
    delta = np.ascontiguousarray(spec.delta, dtype=float)

    mu, sig = _initial_params(data, k)
    mu = wrap_mu(mu, cfg.mu_min, cfg.mu_max).astype(float)
    sig = np.maximum(sig, cfg.sigma_min)

    # starting allocation: redraw from the proposal until feasible
    lw = -np.log(sig) - 0.5 * ((x[:, None] - mu) / sig) ** 2
    for _ in range(MAX_INIT_ATTEMPTS):
        g = sample_categorical_rows(lw, rng.random(n)).astype(np.int64)
        counts = np.bincount(g, minlength=k).astype(np.int64)
        if np.all(counts >= m):
            break
    else:
        raise InfeasibleError("could not draw a feasible starting allocation from the proposal")
    log_g, log_f = _kernels.log_allocation_proposal(x, mu, sig, g)
    state = np.array([log_g, _kernels._log_target(log_f, counts, sig, delta, m)])

    save = cfg.save_mask()
    s_out = cfg.n_saved
    out_mu = np.empty((s_out, k))
    out_sig = np.empty((s_out, k))
    out_n = np.empty((s_out, k), dtype=np.int64)
    out_g = np.empty((s_out if cfg.keep_allocations else 0, n), dtype=np.int64)
    pos, accepted = 0, 0
    for start, stop in _block_sizes(cfg.n_iterations, n + 2 * k + 1):
        steps = stop - start
        normals = rng.standard_normal((steps, 2 * k))
        u = rng.random((steps, n + 1))
        pos, acc = _kernels.metropolis_block(
            x, mu, sig, g, counts, state, normals, u, save[start:stop],
            out_mu, out_sig, out_n, out_g, pos,
            cfg.mu_step, cfg.sigma_step, cfg.mu_min, cfg.mu_max, cfg.sigma_min, delta, m)
        accepted += acc
    return PosteriorSamples(
        out_mu, out_sig ** 2, out_n / n, out_n,
        out_g.astype(np.int16) if cfg.keep_allocations else None,
        acceptance_rate=accepted / cfg.n_iterations,
        info={"sampler": "metropolis_hastings"})


def run_chain(data: Dataset, spec: ModelSpec, cfg: ChainConfig) -> PosteriorSamples:
    runner = {
        "da_gibbs": run_da_gibbs,
        "collapsed_gibbs": run_collapsed_gibbs,
        "metropolis_hastings": run_metropolis_hastings,
    }[cfg.sampler]
    return runner(data, spec, cfg)


__all__ = [
    "ChainConfig",
    "ConfigurationError",
    "NumericalStabilityError",
    "PosteriorSamples",
    "SAMPLERS",
    "draw_inverse_gamma",
    "jeffreys_conditional",
    "rg_scale_conditional",
    "log_gamma_variates",
    "nig_conditional_mean",
    "reflect_sigma",
    "run_chain",
    "run_collapsed_gibbs",
    "run_da_gibbs",
    "run_metropolis_hastings",
    "sample_categorical_rows",
    "wrap_mu",
]
