"""Data model, priors and closed-form log marginals for 1-D Gaussian mixtures.

Everything here is computed in log space. Functions that take sufficient
statistics accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gammaln

LOG_PI = math.log(math.pi)
LOG_2PI = math.log(2.0 * math.pi)

# Relative threshold under which a within-component variance counts as zero.
DEGENERATE_RTOL = 1e-12


class DegenerateComponentError(ValueError):
    """A component's within-component variance is (numerically) zero."""


class InfeasibleError(ValueError):
    """No allocation satisfies the minimum-count constraint."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("dataset must contain at least one observation")
        if not np.all(np.isfinite(v)):
            raise ValueError("dataset values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.n

    def centered(self) -> "Dataset":
        return Dataset(self.values - self.values.mean())


@dataclass(frozen=True)
class StandardNIG:
    """Conjugate normal-inverse-gamma prior with zero prior mean.

    mu | sigma^2 ~ N(0, sigma^2 / kappa),  sigma^2 ~ InvGamma(alpha, beta).
    """

    alpha: float
    beta: float
    kappa: float

    def __post_init__(self):
        _check_positive(alpha=self.alpha, beta=self.beta, kappa=self.kappa)


@dataclass(frozen=True)
class StandardRG:
    """Hierarchical prior: mu ~ N(0, 1/kappa), sigma^2 | b ~ InvGamma(alpha, b),
    b ~ Gamma(g, rate=h)."""

    alpha: float
    g: float
    h: float
    kappa: float

    def __post_init__(self):
        _check_positive(alpha=self.alpha, g=self.g, h=self.h, kappa=self.kappa)


@dataclass(frozen=True)
class ModifiedJeffreys:
    """Independent improper 1/sigma priors, paired with the min-count prior on G."""


Prior = Union[StandardNIG, StandardRG, ModifiedJeffreys]


def _check_positive(**kw):
    for name, value in kw.items():
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class ModelSpec:
    k: int
    prior: Prior
    delta: np.ndarray | None = None
    min_count: int | None = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be an integer >= 1")
        object.__setattr__(self, "k", int(self.k))
        if self.delta is None:
            delta = np.ones(self.k)
        else:
            delta = np.array(self.delta, dtype=float).ravel()
            if delta.size == 1 and self.k > 1:
                delta = np.full(self.k, delta[0])
        if delta.size != self.k or not np.all(delta > 0):
            raise ValueError("delta must hold k positive weights")
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)

        if self.modified:
            m = 2 if self.min_count is None else int(self.min_count)
            if m < 2:
                raise ValueError("the Jeffreys model needs min_count >= 2")
        else:
            m = 0 if self.min_count is None else int(self.min_count)
            if m != 0:
                raise ValueError("standard priors use min_count = 0")
        object.__setattr__(self, "min_count", m)

    @property
    def modified(self) -> bool:
        return isinstance(self.prior, ModifiedJeffreys)

    def check_feasible(self, n: int):
        if n < self.min_count * self.k:
            raise InfeasibleError(
                f"N = {n} < min_count * K = {self.min_count * self.k}: no feasible allocation"
            )


@dataclass(frozen=True)
class AllocationState:
    """Allocation vector with per-component counts and running sums.

    Labels are 0-based. ``move`` returns a new state with the sums updated
    incrementally; ``recomputed`` rebuilds them from scratch.
    """

    g: np.ndarray
    counts: np.ndarray
    sum_x: np.ndarray
    sum_x2: np.ndarray

    @classmethod
    def from_labels(cls, data: Dataset, g, k: int) -> "AllocationState":
        g = np.asarray(g, dtype=np.int64).ravel()
        if g.size != data.n:
            raise ValueError("allocation length does not match the data")
        if g.size and (g.min() < 0 or g.max() >= k):
            raise ValueError("labels must lie in 0..k-1")
        x = data.values
        counts = np.bincount(g, minlength=k).astype(np.int64)
        s1 = np.bincount(g, weights=x, minlength=k)
        s2 = np.bincount(g, weights=x * x, minlength=k)
        return cls(g, counts, s1, s2)

    @property
    def k(self) -> int:
        return int(self.counts.size)

    def move(self, data: Dataset, j: int, new: int) -> "AllocationState":
        old = int(self.g[j])
        g = self.g.copy()
        counts = self.counts.copy()
        s1 = self.sum_x.copy()
        s2 = self.sum_x2.copy()
        x = float(data.values[j])
        counts[old] -= 1
        s1[old] -= x
        s2[old] -= x * x
        if counts[old] == 0:
            s1[old] = s2[old] = 0.0
        g[j] = new
        counts[new] += 1
        s1[new] += x
        s2[new] += x * x
        return AllocationState(g, counts, s1, s2)

    def recomputed(self, data: Dataset) -> "AllocationState":
        return AllocationState.from_labels(data, self.g, self.k)

    def within_variance(self) -> np.ndarray:
        """V_i = sum_x2/n_i - (sum_x/n_i)^2, NaN for empty components."""
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = self.sum_x / self.counts
            v = self.sum_x2 / self.counts - mean * mean
        return np.where(self.counts > 0, np.maximum(v, 0.0), np.nan)


@dataclass(frozen=True)
class ComponentParams:
    mu: np.ndarray
    sigma: np.ndarray
    p: np.ndarray | None = None
    beta_hyper: float | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = np.asarray(self.sigma, dtype=float).ravel()
        if mu.shape != sigma.shape:
            raise ValueError("mu and sigma must have the same length")
        if not np.all(sigma > 0):
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if self.p is not None:
            p = np.asarray(self.p, dtype=float).ravel()
            if p.shape != mu.shape or not np.all(p > 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("p must be positive weights summing to 1")
            object.__setattr__(self, "p", p)
        if self.beta_hyper is not None and not self.beta_hyper > 0:
            raise ValueError("beta_hyper must be positive")

    @property
    def k(self) -> int:
        return int(self.mu.size)


# ---------------------------------------------------------------------------
# Log marginals
# ---------------------------------------------------------------------------


def component_stats(values):
    x = np.asarray(values, dtype=float).ravel()
    return x.size, float(x.sum()), float((x * x).sum())


def log_fi_nig(n, sum_x, sum_x2, alpha, beta, kappa):
    """Log marginal likelihood of one component under the NIG prior.

    Closed form obtained by integrating mu and sigma^2 out of the
    zero-mean normal-inverse-gamma prior times the component's Gaussian
    likelihood. Equals 0 for an empty component.
    """
    n = np.asarray(n, dtype=float)
    s1 = np.asarray(sum_x, dtype=float)
    s2 = np.asarray(sum_x2, dtype=float)
    nk = n + kappa
    a_n = 0.5 * n + alpha
    mean = s1 / nk
    # bracket = (2 beta_n) / (n + kappa) with beta_n the posterior rate
    bracket = np.maximum(s2 / nk - mean * mean, 0.0) + 2.0 * beta / nk
    out = (
        alpha * math.log(2.0 * beta)
        + 0.5 * math.log(kappa)
        + gammaln(a_n)
        - 0.5 * n * LOG_PI
        - (0.5 * (n + 1.0) + alpha) * np.log(nk)
        - gammaln(alpha)
        - a_n * np.log(bracket)
    )
    out = np.where(n == 0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def degenerate_threshold(n, sum_x2):
    n = np.asarray(n, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        msq = np.asarray(sum_x2, dtype=float) / n
    return DEGENERATE_RTOL * np.maximum(1.0, msq)


def log_fi_jeffreys(n, sum_x, sum_x2):
    """Log marginal of one component under the 1/sigma prior.

    Returns log[(pi V)^((1-n)/2) n^(-n/2) Gamma((n-1)/2)], i.e. the integral
    up to a constant factor shared by every component.
    """
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 2):
        raise ValueError("the Jeffreys marginal needs n_i >= 2")
    s1 = np.asarray(sum_x, dtype=float)
    s2 = np.asarray(sum_x2, dtype=float)
    mean = s1 / n_arr
    v = s2 / n_arr - mean * mean
    if np.any(v <= degenerate_threshold(n_arr, s2)):
        raise DegenerateComponentError("component has zero within-component variance")
    out = (
        0.5 * (1.0 - n_arr) * (LOG_PI + np.log(v))
        - 0.5 * n_arr * np.log(n_arr)
        + gammaln(0.5 * (n_arr - 1.0))
    )
    return out[()] if out.ndim == 0 else out


def log_fi(prior: Prior, n, sum_x, sum_x2):
    if isinstance(prior, StandardNIG):
        return log_fi_nig(n, sum_x, sum_x2, prior.alpha, prior.beta, prior.kappa)
    if isinstance(prior, ModifiedJeffreys):
        return log_fi_jeffreys(n, sum_x, sum_x2)
    raise TypeError(f"no closed-form marginal for {type(prior).__name__}")


# ---------------------------------------------------------------------------
# Priors on the allocation vector
# ---------------------------------------------------------------------------


def log_prior_G_standard(counts, delta):
    """Dirichlet-multinomial prior on G with the weights integrated out."""
    counts = np.asarray(counts, dtype=float)
    delta = np.asarray(delta, dtype=float)
    n = counts.sum(axis=-1)
    d = delta.sum()
    return gammaln(d) - gammaln(n + d) + np.sum(gammaln(counts + delta) - gammaln(delta), axis=-1)


def log_prior_G_star(counts, delta, m: int = 2):
    """Unnormalized min-count prior: -inf if any count < m, else sum log Gamma(n_i + delta_i)."""
    counts = np.asarray(counts, dtype=float)
    delta = np.asarray(delta, dtype=float)
    val = np.sum(gammaln(counts + delta), axis=-1)
    feasible = np.all(counts >= m, axis=-1)
    out = np.where(feasible, val, -np.inf)
    return out[()] if np.ndim(out) == 0 else out


def log_prior_G(spec: ModelSpec, counts):
    if spec.modified:
        return log_prior_G_star(counts, spec.delta, spec.min_count)
    return log_prior_G_standard(counts, spec.delta)


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------


def log_normal_pdf(x, mu, sigma):
    z = (np.asarray(x) - mu) / sigma
    return -0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z


def log_likelihood_given_G(data: Dataset, params: ComponentParams, alloc: AllocationState) -> float:
    """Completed-data log likelihood: each point under its assigned component."""
    if alloc.g.size != data.n or alloc.k != params.k:
        raise ValueError("params, allocation and data are not consistent")
    g = alloc.g
    return float(np.sum(log_normal_pdf(data.values, params.mu[g], params.sigma[g])))


def log_mixture_density(x, params: ComponentParams) -> np.ndarray:
    """Pointwise log of the mixture density; weights default to uniform."""
    k = params.k
    p = params.p if params.p is not None else np.full(k, 1.0 / k)
    x = np.asarray(x, dtype=float)[..., None]
    lw = np.log(p) + log_normal_pdf(x, params.mu, params.sigma)
    mx = lw.max(axis=-1, keepdims=True)
    return (mx + np.log(np.exp(lw - mx).sum(axis=-1, keepdims=True)))[..., 0]


__all__ = [
    "AllocationState",
    "ComponentParams",
    "Dataset",
    "DegenerateComponentError",
    "InfeasibleError",
    "ModelSpec",
    "ModifiedJeffreys",
    "Prior",
    "StandardNIG",
    "StandardRG",
    "component_stats",
    "log_fi",
    "log_fi_jeffreys",
    "log_fi_nig",
    "log_likelihood_given_G",
    "log_mixture_density",
    "log_normal_pdf",
    "log_prior_G",
    "log_prior_G_standard",
    "log_prior_G_star",
]
