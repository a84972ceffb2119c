"""Post-chain summaries: empty-component fractions, histograms, symmetry scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .samplers import PosteriorSamples

DEFAULT_BINS = 50
TRIM = 0.005


@dataclass(frozen=True)
class HistogramSummary:
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    normalized_density: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def mass(self) -> np.ndarray:
        total = self.bin_counts.sum()
        return self.bin_counts / total if total else np.zeros(len(self.bin_counts))


def _summary(counts, edges) -> HistogramSummary:
    counts = np.asarray(counts, dtype=np.int64)
    total = counts.sum()
    dens = counts / (total * np.diff(edges)) if total else np.zeros(counts.size)
    return HistogramSummary(np.asarray(edges, dtype=float), counts, dens)


def empty_component_fraction(samples: PosteriorSamples) -> float:
    counts = np.asarray(samples.count_draws)
    if counts.shape[0] == 0:
        return 0.0
    return float(np.mean(counts.min(axis=1) == 0))


def histogram(draws, bins: int = DEFAULT_BINS, range=None) -> HistogramSummary:
    """Equal-width histogram over [min, max] (or ``range``), last bin closed."""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size == 0:
        raise ValueError("cannot build a histogram from no draws")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(draws, bins=bins, range=range)
    return _summary(counts, edges)


def trimmed_range(draws, trim: float = TRIM):
    lo, hi = np.quantile(np.asarray(draws, dtype=float), [trim, 1.0 - trim])
    if lo == hi:
        return None
    return float(lo), float(hi)


def binned_tv(a, b, bins: int = DEFAULT_BINS, range=None) -> float:
    """Total-variation distance between two samples on a shared equal-width binning."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if range is None:
        both = np.concatenate([a, b])
        range = (both.min(), both.max())
        if range[0] == range[1]:
            return 0.0
    ca, edges = np.histogram(a, bins=bins, range=range)
    cb, _ = np.histogram(b, bins=edges)
    # draws outside an explicit range count as one extra "overflow" cell each side
    oa = [np.sum(a < edges[0]), np.sum(a > edges[-1])]
    ob = [np.sum(b < edges[0]), np.sum(b > edges[-1])]
    pa = np.concatenate([ca, oa]) / a.size
    pb = np.concatenate([cb, ob]) / b.size
    return float(0.5 * np.abs(pa - pb).sum())


def mode_symmetry_score(samples: PosteriorSamples, i: int, j: int, bins: int = DEFAULT_BINS,
                        trim: float = TRIM) -> float:
    """Binned TV distance between the marginal draws of mu_i and mu_j.

    The common binning spans the pooled ``trim`` / ``1 - trim`` quantiles;
    draws outside it land in two overflow cells, so prior draws for empty
    components cannot stretch the bins.
    """
    k = samples.k
    if not (0 <= i < k and 0 <= j < k):
        raise IndexError("component index out of range")
    a, b = samples.mu_draws[:, i], samples.mu_draws[:, j]
    return binned_tv(a, b, bins=bins, range=trimmed_range(np.concatenate([a, b]), trim))


def count_posterior_summary(samples: PosteriorSamples, i: int) -> HistogramSummary:
    """Integer-binned histogram of n_i with one bin per value 0..N."""
    counts = np.asarray(samples.count_draws)
    n = int(counts[0].sum()) if counts.shape[0] else 0
    edges = np.arange(n + 2) - 0.5
    c = np.bincount(counts[:, i], minlength=n + 1)[: n + 1]
    return _summary(c, edges)


def pooled_mu(samples: PosteriorSamples) -> np.ndarray:
    return np.asarray(samples.mu_draws).ravel()


def window_mass(draws, lo: float, hi: float) -> float:
    draws = np.asarray(draws, dtype=float).ravel()
    return float(np.mean((draws >= lo) & (draws <= hi)))


def histogram_modes(hist: HistogramSummary, smooth: int = 5, prominence: float = 0.1) -> np.ndarray:
    """Locations of histogram modes.

    The density is smoothed with a centred moving average of ``smooth`` bins
    and peaks are kept when their prominence is at least ``prominence`` times
    the highest smoothed density.
    """
    d = np.asarray(hist.normalized_density, dtype=float)
    if smooth > 1:
        kernel = np.ones(smooth) / smooth
        d = np.convolve(np.pad(d, smooth // 2, mode="constant"), kernel, mode="valid")
    # zero padding lets a peak in the first/last bin register
    padded = np.concatenate([[0.0], d, [0.0]])
    peaks, _ = find_peaks(padded, prominence=prominence * d.max())
    return hist.centers[peaks - 1]


def allocation_tv(probabilities: dict, allocations) -> float:
    """TV distance between the empirical allocation frequencies and exact probabilities.

    ``probabilities`` maps allocation tuples to probabilities.
    """
    allocs = np.asarray(allocations)
    uniq, freq = np.unique(allocs, axis=0, return_counts=True)
    emp = {tuple(int(v) for v in row): f / allocs.shape[0] for row, f in zip(uniq, freq)}
    keys = set(emp) | set(probabilities)
    return float(0.5 * sum(abs(emp.get(key, 0.0) - probabilities.get(key, 0.0)) for key in keys))


def summary_report(samples: PosteriorSamples, bins: int = DEFAULT_BINS) -> dict:
    k = samples.k
    out = {
        "states": samples.n_states,
        "empty_component_fraction": empty_component_fraction(samples),
    }
    if samples.acceptance_rate is not None:
        out["acceptance_rate"] = samples.acceptance_rate
    for i in range(k):
        for j in range(i + 1, k):
            out[f"mode_symmetry_mu_{i + 1}_{j + 1}"] = mode_symmetry_score(samples, i, j, bins)
    return out
