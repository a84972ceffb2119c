import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import gammaln

from bayesgmm.model import (
    AllocationState,
    ComponentParams,
    Dataset,
    DegenerateComponentError,
    InfeasibleError,
    ModelSpec,
    ModifiedJeffreys,
    StandardNIG,
    StandardRG,
    log_fi_jeffreys,
    log_fi_nig,
    log_likelihood_given_G,
    log_mixture_density,
    log_prior_G_standard,
    log_prior_G_star,
)


def nig_predictive_chain(x, alpha, beta, kappa):
    """log marginal as a product of Student-t one-step predictives."""
    a, b, k, m = alpha, beta, kappa, 0.0
    total = 0.0
    for xi in x:
        scale = math.sqrt(b * (k + 1.0) / (a * k))
        total += stats.t.logpdf(xi, df=2.0 * a, loc=m, scale=scale)
        k_new = k + 1.0
        b += 0.5 * k * (xi - m) ** 2 / k_new
        m = (k * m + xi) / k_new
        a += 0.5
        k = k_new
    return total


def stats_of(x):
    x = np.asarray(x, dtype=float)
    return x.size, x.sum(), (x * x).sum()


# -- Dataset / specs ---------------------------------------------------------

def test_dataset_rejects_empty_and_nonfinite():
    with pytest.raises(ValueError):
        Dataset(np.array([]))
    with pytest.raises(ValueError):
        Dataset(np.array([1.0, np.nan]))


def test_dataset_is_read_only():
    d = Dataset(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        d.values[0] = 5.0


@pytest.mark.parametrize("kw", [dict(alpha=0.0, beta=1, kappa=1), dict(alpha=1, beta=-1, kappa=1),
                                dict(alpha=1, beta=1, kappa=0)])
def test_nig_hyperparameters_positive(kw):
    with pytest.raises(ValueError):
        StandardNIG(**kw)


def test_rg_hyperparameters_positive():
    with pytest.raises(ValueError):
        StandardRG(2.0, 0.2, 0.0, 1.0)


def test_min_count_rules():
    assert ModelSpec(2, ModifiedJeffreys()).min_count == 2
    assert ModelSpec(2, ModifiedJeffreys(), min_count=3).min_count == 3
    assert ModelSpec(2, StandardNIG(1, 1, 1)).min_count == 0
    with pytest.raises(ValueError):
        ModelSpec(2, ModifiedJeffreys(), min_count=1)
    with pytest.raises(ValueError):
        ModelSpec(2, StandardNIG(1, 1, 1), min_count=2)


def test_feasibility():
    spec = ModelSpec(3, ModifiedJeffreys())
    spec.check_feasible(6)
    with pytest.raises(InfeasibleError):
        spec.check_feasible(5)


def test_delta_broadcast_and_validation():
    assert np.all(ModelSpec(3, StandardNIG(1, 1, 1), delta=[2.0]).delta == 2.0)
    with pytest.raises(ValueError):
        ModelSpec(3, StandardNIG(1, 1, 1), delta=[1.0, 1.0])
    with pytest.raises(ValueError):
        ModelSpec(2, StandardNIG(1, 1, 1), delta=[1.0, 0.0])


# -- AllocationState ------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_incremental_stats_match_recomputation(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 30)), int(rng.integers(1, 5))
    data = Dataset(rng.normal(0, 10, size=n))
    state = AllocationState.from_labels(data, rng.integers(0, k, size=n), k)
    for _ in range(200):
        state = state.move(data, int(rng.integers(n)), int(rng.integers(k)))
    fresh = state.recomputed(data)
    assert np.array_equal(state.counts, np.bincount(state.g, minlength=k))
    assert state.counts.sum() == n
    np.testing.assert_allclose(state.sum_x, fresh.sum_x, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(state.sum_x2, fresh.sum_x2, rtol=1e-9, atol=1e-9)
    v = state.within_variance()
    assert np.all(v[state.counts > 0] >= 0.0)
    assert np.all(np.isnan(v[state.counts == 0]))


def test_component_params_validation():
    with pytest.raises(ValueError):
        ComponentParams(np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        ComponentParams(np.zeros(2), np.ones(2), p=np.array([0.5, 0.6]))
    ComponentParams(np.zeros(2), np.ones(2), p=np.array([0.25, 0.75]))


# -- NIG marginal -------------------------------------------------------------------

def test_nig_empty_component_is_one():
    assert log_fi_nig(0, 0.0, 0.0, 0.3, 0.7, 0.2) == 0.0


def test_nig_single_zero_point():
    assert log_fi_nig(1, 0.0, 0.0, 1.0, 1.0, 1.0) == pytest.approx(math.log(0.25), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=8),
       st.floats(-3, 1), st.floats(-3, 1), st.floats(-3, 1))
def test_nig_matches_predictive_chain(x, la, lb, lk):
    a, b, k = 10.0**la, 10.0**lb, 10.0**lk
    expected = nig_predictive_chain(x, a, b, k)
    got = log_fi_nig(*stats_of(x), a, b, k)
    assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_nig_vectorized():
    n = np.array([0, 1, 3])
    s1 = np.array([0.0, 0.5, 1.0])
    s2 = np.array([0.0, 0.25, 2.0])
    vec = log_fi_nig(n, s1, s2, 0.5, 0.5, 0.5)
    single = [log_fi_nig(int(a), b, c, 0.5, 0.5, 0.5) for a, b, c in zip(n, s1, s2)]
    np.testing.assert_allclose(vec, single, rtol=1e-13)


# -- Jeffreys marginal ----------------------------------------------------------

def test_jeffreys_two_points():
    assert log_fi_jeffreys(*stats_of([0.0, 2.0])) == pytest.approx(math.log(0.5), abs=1e-12)


def test_jeffreys_three_points():
    expected = math.log(3 ** -0.5 / (2 * math.pi))
    assert log_fi_jeffreys(*stats_of([-1.0, 0.0, 1.0])) == pytest.approx(expected, abs=1e-12)


def test_jeffreys_degenerate():
    with pytest.raises(DegenerateComponentError):
        log_fi_jeffreys(*stats_of([3.0, 3.0]))


def test_jeffreys_needs_two_points():
    with pytest.raises(ValueError):
        log_fi_jeffreys(*stats_of([1.0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 1000), st.floats(-1e6, 1e6), st.floats(-5, 3))
def test_log_domain_finite_for_large_inputs(n, loc, log_rel_scale):
    # spreads below ~1e-6 of the magnitude count as degenerate by the V tolerance
    rng = np.random.default_rng(n)
    scale = 10.0**log_rel_scale * max(1.0, abs(loc))
    x = loc + scale * rng.standard_normal(n)
    assert np.isfinite(log_fi_jeffreys(*stats_of(x)))
    assert np.isfinite(log_fi_nig(*stats_of(x), 0.01, 0.01, 0.01))


def test_log_domain_finite_for_n_1e5():
    x = 1e6 + np.random.default_rng(0).standard_normal(100_000)
    assert np.isfinite(log_fi_jeffreys(*stats_of(x)))
    assert np.isfinite(log_fi_nig(*stats_of(x), 0.01, 0.01, 0.01))
    c = np.array([50_000, 50_000])
    assert np.isfinite(log_prior_G_standard(c, np.ones(2)))
    assert np.isfinite(log_prior_G_star(c, np.ones(2)))


# -- Allocation priors ----------------------------------------------------------

def test_standard_prior_examples():
    d = np.ones(2)
    assert log_prior_G_standard(np.array([2, 2]), d) == pytest.approx(math.log(1 / 30), abs=1e-12)
    assert log_prior_G_standard(np.array([4, 0]), d) == pytest.approx(math.log(1 / 5), abs=1e-12)


def test_standard_prior_sums_to_one_n4():
    total = sum(math.exp(log_prior_G_standard(np.bincount(g, minlength=2), np.ones(2)))
                for g in itertools.product(range(2), repeat=4))
    assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_standard_prior_proper(n, k, seed):
    if k**n > 7000:
        n = 7
    delta = np.random.default_rng(seed).uniform(0.1, 5.0, size=k)
    g = np.array(list(itertools.product(range(k), repeat=n)))
    counts = np.stack([(g == i).sum(axis=1) for i in range(k)], axis=1)
    lp = log_prior_G_standard(counts, delta)
    assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-10)


def test_standard_prior_is_dirichlet_multinomial():
    # independent formula: integral of prod p^n against Dirichlet(delta)
    delta = np.array([0.3, 1.7, 2.0])
    n = np.array([3, 0, 2])
    expected = (gammaln(delta.sum()) - gammaln(delta.sum() + n.sum())
                + np.sum(gammaln(delta + n) - gammaln(delta)))
    assert log_prior_G_standard(n, delta) == pytest.approx(expected, rel=1e-12)


def test_star_prior_examples():
    d = np.ones(2)
    assert log_prior_G_star(np.array([2, 2]), d) == pytest.approx(math.log(4), abs=1e-12)
    assert log_prior_G_star(np.array([3, 1]), d) == -np.inf


def test_star_prior_count_uniformity_n6():
    g = np.array(list(itertools.product(range(2), repeat=6)))
    n1 = (g == 0).sum(axis=1)
    for c in (2, 3, 4):
        rows = n1 == c
        counts = np.stack([n1[rows], 6 - n1[rows]], axis=1)
        mass = np.exp(log_prior_G_star(counts, np.ones(2))).sum()
        assert mass == pytest.approx(720.0, rel=1e-12)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_star_prior_uniform_over_feasible_counts(n):
    g = np.array(list(itertools.product(range(2), repeat=n)))
    n1 = (g == 0).sum(axis=1)
    masses = []
    for c in range(2, n - 1):
        counts = np.stack([n1[n1 == c], n - n1[n1 == c]], axis=1)
        masses.append(np.exp(log_prior_G_star(counts, np.ones(2))).sum())
    np.testing.assert_allclose(masses, masses[0], rtol=1e-12)


# -- Likelihood -------------------------------------------------------------------

def test_likelihood_standard_normal_at_zero():
    data = Dataset(np.array([0.0]))
    params = ComponentParams(np.array([0.0]), np.array([1.0]))
    alloc = AllocationState.from_labels(data, [0], 1)
    assert log_likelihood_given_G(data, params, alloc) == pytest.approx(-0.5 * math.log(2 * math.pi))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_likelihood_matches_scipy_and_relabeling(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 20)), int(rng.integers(1, 4))
    data = Dataset(rng.normal(size=n))
    mu, sig = rng.normal(size=k), rng.uniform(0.2, 3, size=k)
    g = rng.integers(0, k, size=n)
    ll = log_likelihood_given_G(data, ComponentParams(mu, sig), AllocationState.from_labels(data, g, k))
    assert ll == pytest.approx(stats.norm.logpdf(data.values, mu[g], sig[g]).sum(), rel=1e-12)
    perm = rng.permutation(k)
    inv = np.argsort(perm)
    ll_perm = log_likelihood_given_G(
        data, ComponentParams(mu[perm], sig[perm]), AllocationState.from_labels(data, inv[g], k))
    assert ll_perm == pytest.approx(ll, rel=1e-12)


def test_mixture_density_matches_scipy():
    x = np.linspace(-3, 3, 7)
    params = ComponentParams(np.array([-1.0, 2.0]), np.array([0.5, 1.5]), p=np.array([0.3, 0.7]))
    expected = np.log(0.3 * stats.norm.pdf(x, -1, 0.5) + 0.7 * stats.norm.pdf(x, 2, 1.5))
    np.testing.assert_allclose(log_mixture_density(x, params), expected, rtol=1e-12)
