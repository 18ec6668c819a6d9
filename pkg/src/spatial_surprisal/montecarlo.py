"""Permutation ensembles, exhaustive enumeration and goodness-of-fit metrics.

The sampler draws uniform arrangements of a fixed value scheme with the
counter-based streams of :mod:`spatial_surprisal.rng`; replicate ``r``
always uses stream ``r``, so results do not depend on how replicates are
split across worker threads.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numba
import numpy as np
from scipy.special import kolmogorov

from .analytic import AnalyticDist
from .errors import (
    DegenerateDistribution,
    RawSamplesRequired,
    SchemeSizeMismatch,
    TooManyArrangements,
)
from .graph import WeightGraph
from .rng import shuffle_rows
from .scheme import ValueScheme

CHUNK = 2048
KL_BINS = 50
KL_HALF_WIDTH = 5.0
# Pair-count identity cross-check tolerance, relative to sum_edges |z_i z_j|
IDENTITY_RTOL = 1e-9


@numba.njit(cache=True, nogil=True)
def _scan_kernel(labels, indptr, indices, m, dev, coef):
    n_rep, n = labels.shape
    counts = np.zeros((n_rep, m, m), dtype=np.int64)
    direct = np.zeros(n_rep, dtype=np.float64)
    from_counts = np.zeros(n_rep, dtype=np.float64)
    scale = np.zeros(n_rep, dtype=np.float64)
    for b in range(n_rep):
        row = labels[b]
        acc = 0.0
        for i in range(n):
            p = row[i]
            zi = dev[p]
            part = 0.0
            for e in range(indptr[i], indptr[i + 1]):
                q = row[indices[e]]
                counts[b, p, q] += 1
                part += dev[q]
            acc += zi * part
        direct[b] = acc
        s = 0.0
        a = 0.0
        for p in range(m):
            for q in range(m):
                c = counts[b, p, q]
                s += coef[p, q] * c
                a += abs(coef[p, q]) * c
        from_counts[b] = s
        scale[b] = a
    return counts, direct, from_counts, scale


class IdentityViolation(AssertionError):
    """Direct and pair-count evaluations of the unscaled Moran's I disagree."""


@dataclass(frozen=True, eq=False)
class EmpiricalDist:
    """Sampled values of the unscaled Moran's I.

    ``pair_counts`` is kept (shape ``(n, M, M)``) only when requested.
    """

    samples: np.ndarray
    pair_counts: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.samples.size)

    @property
    def mean(self) -> float:
        return math.fsum(self.samples.tolist()) / self.n if self.n else math.nan

    @property
    def std(self) -> float:
        if self.n < 2:
            return math.nan
        mu = self.mean
        return math.sqrt(math.fsum(((self.samples - mu) ** 2).tolist()) / (self.n - 1))

    def histogram(self, bins: int = KL_BINS, edges: np.ndarray | None = None):
        """Counts on ``edges`` (default: equal bins over the sample range).

        Values outside the outer edges are clamped into the edge bins.
        """
        if edges is None:
            lo, hi = (float(self.samples.min()), float(self.samples.max())) if self.n else (0.0, 1.0)
            if hi == lo:
                lo, hi = lo - 0.5, hi + 0.5
            edges = np.linspace(lo, hi, bins + 1)
        edges = np.asarray(edges, dtype=np.float64)
        idx = np.searchsorted(edges, self.samples, side="right") - 1
        idx = np.clip(idx, 0, edges.size - 2)
        return edges, np.bincount(idx, minlength=edges.size - 1)

    def same_value_counts(self) -> np.ndarray:
        """``|S_pp|`` per sample and value, shape ``(n, M)``."""
        if self.pair_counts is None:
            raise RawSamplesRequired("pair counts were not retained for this ensemble")
        return np.diagonal(self.pair_counts, axis1=1, axis2=2)

    def summary(self, d: AnalyticDist | None = None) -> dict:
        edges, counts = self.histogram()
        out = {
            "n": self.n,
            "mean": self.mean if self.n else None,
            "std": self.std if self.n > 1 else None,
            "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
        }
        if d is not None and self.n > 1 and np.unique(self.samples).size > 1:
            ks = ks_test(self, d)
            diffs = standardized_diffs(d, self)
            out.update(
                kl=kl_divergence(self, d),
                ks={"statistic": ks.statistic, "p_value": ks.p_value},
                mean_diff=diffs.mean_diff,
                std_diff=diffs.std_diff,
                analytic=d.to_dict(),
            )
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "i_bar"])
            for r, v in enumerate(self.samples.tolist()):
                w.writerow([r, repr(v)])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalDist":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["i_bar"]) for r in rows], dtype=np.float64))

    def write_summary(self, path, d: AnalyticDist | None = None) -> None:
        Path(path).write_text(json.dumps(self.summary(d), indent=2) + "\n")


@dataclass(frozen=True, eq=False)
class ExactDist:
    """Exact permutation law: distinct values with their probabilities."""

    support: np.ndarray
    probs: np.ndarray
    n_states: int

    @property
    def mean(self) -> float:
        return math.fsum((self.support * self.probs).tolist())

    @property
    def variance(self) -> float:
        mu = self.mean
        return math.fsum((self.probs * (self.support - mu) ** 2).tolist())

    def cdf(self, x):
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(self.support, x, side="right") - 1
        return np.where(idx >= 0, cum[np.maximum(idx, 0)], 0.0)


def _labels_base(scheme: ValueScheme) -> np.ndarray:
    dtype = np.int8 if scheme.m <= 127 else np.int32
    return np.repeat(np.arange(scheme.m, dtype=dtype), scheme.sizes)


def _scan(labels, g: WeightGraph, scheme: ValueScheme):
    dev = scheme.deviations.astype(np.float64)
    coef = np.outer(dev, dev)
    return _scan_kernel(labels, g.indptr, g.indices, scheme.m, dev, coef)


def _check_identity(direct, from_counts, scale, start: int) -> None:
    err = np.abs(direct - from_counts)
    bad = err > IDENTITY_RTOL * np.maximum(scale, 1e-300)
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0])
        raise IdentityViolation(
            f"replicate {start + r}: direct {direct[r]!r} != from counts {from_counts[r]!r}"
        )


def sample_distribution(
    scheme: ValueScheme,
    g: WeightGraph,
    n_samples: int,
    seed: int,
    workers: int = 1,
    keep_pair_counts: bool = False,
) -> EmpiricalDist:
    """Unscaled Moran's I of ``n_samples`` uniform random arrangements.

    Each sample is evaluated both by an edge scan and through its pair-set
    cardinalities; a disagreement beyond ``IDENTITY_RTOL`` raises
    IdentityViolation. Output is identical for any ``workers``.
    """
    if scheme.n != g.n_vertices:
        raise SchemeSizeMismatch(f"scheme has {scheme.n} observations, graph has {g.n_vertices}")
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    base = _labels_base(scheme)
    starts = list(range(0, n_samples, CHUNK))

    def run(start: int):
        stop = min(start + CHUNK, n_samples)
        labels = shuffle_rows(base, seed, np.arange(start, stop, dtype=np.int64))
        counts, direct, from_counts, scale = _scan(labels, g, scheme)
        _check_identity(direct, from_counts, scale, start)
        return direct, (counts if keep_pair_counts else None)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    samples = np.concatenate([p[0] for p in parts]) if parts else np.empty(0)
    pcs = None
    if keep_pair_counts:
        pcs = (
            np.concatenate([p[1] for p in parts])
            if parts
            else np.empty((0, scheme.m, scheme.m), dtype=np.int64)
        )
    return EmpiricalDist(samples, pcs)


def arrangement_count(scheme: ValueScheme) -> int:
    """Number of distinguishable arrangements, ``N! / prod(n_p!)``."""
    total, remaining = 1, scheme.n
    for n_p in scheme.sizes.tolist():
        total *= math.comb(remaining, n_p)
        remaining -= n_p
    return total


def _arrangements(sizes: list[int], n: int):
    """Yield label vectors for every distinguishable arrangement."""

    def rec(free: tuple[int, ...], p: int, labels: list[int]):
        if p == len(sizes) - 1:
            for i in free:
                labels[i] = p
            yield list(labels)
            return
        for chosen in itertools.combinations(free, sizes[p]):
            for i in chosen:
                labels[i] = p
            chosen_set = set(chosen)
            rest = tuple(i for i in free if i not in chosen_set)
            yield from rec(rest, p + 1, labels)

    yield from rec(tuple(range(n)), 0, [0] * n)


def enumerate_arrangement_values(
    scheme: ValueScheme, g: WeightGraph, max_states: int = 2_000_000
) -> np.ndarray:
    """Unscaled Moran's I of every arrangement, by dense quadratic forms."""
    if scheme.n != g.n_vertices:
        raise SchemeSizeMismatch(f"scheme has {scheme.n} observations, graph has {g.n_vertices}")
    states = arrangement_count(scheme)
    if states > max_states:
        raise TooManyArrangements(f"{states} arrangements exceed max_states={max_states}")
    w = g.to_dense().astype(np.float64)
    dev = scheme.values - scheme.values.dot(scheme.sizes) / scheme.n
    out = []
    gen = _arrangements(scheme.sizes.tolist(), scheme.n)
    while True:
        block = list(itertools.islice(gen, 65536))
        if not block:
            break
        z = dev[np.asarray(block)]
        out.append(np.einsum("si,ij,sj->s", z, w, z))
    return np.concatenate(out)


def _group_values(values: np.ndarray, rtol: float = 1e-9):
    v = np.sort(values)
    scale = max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0
    breaks = np.flatnonzero(np.diff(v) > rtol * scale) + 1
    groups = np.split(v, breaks)
    support = np.array([g.mean() for g in groups])
    counts = np.array([g.size for g in groups], dtype=np.int64)
    return support, counts


def enumerate_exact(scheme: ValueScheme, g: WeightGraph, max_states: int = 2_000_000) -> ExactDist:
    """Exact pmf of the unscaled Moran's I over all arrangements."""
    values = enumerate_arrangement_values(scheme, g, max_states)
    support, counts = _group_values(values)
    return ExactDist(support, counts / values.size, int(values.size))


def empirical_pmf_on(e: EmpiricalDist, exact: ExactDist, rtol: float = 1e-9) -> np.ndarray:
    """Frequencies of the sampled values on the exact support."""
    s = exact.support
    idx = np.clip(np.searchsorted(s, e.samples), 0, s.size - 1)
    left = np.clip(idx - 1, 0, s.size - 1)
    pick = np.where(np.abs(s[left] - e.samples) < np.abs(s[idx] - e.samples), left, idx)
    scale = max(1.0, float(np.max(np.abs(s))))
    if np.any(np.abs(s[pick] - e.samples) > rtol * scale):
        raise DegenerateDistribution("sampled values fall outside the exact support")
    return np.bincount(pick, minlength=s.size) / e.n


def total_variation(e: EmpiricalDist, exact: ExactDist) -> float:
    return 0.5 * float(np.abs(empirical_pmf_on(e, exact) - exact.probs).sum())


def ks_statistic_exact(e: EmpiricalDist, exact: ExactDist) -> float:
    """Sup distance between the sample ECDF and a discrete exact CDF."""
    return float(np.max(np.abs(np.cumsum(empirical_pmf_on(e, exact)) - np.cumsum(exact.probs))))


def _require_spread(e: EmpiricalDist) -> None:
    if e.n < 2 or np.unique(e.samples).size < 2:
        raise DegenerateDistribution("empirical distribution needs at least two distinct values")


def kl_bin_edges(d: AnalyticDist, bins: int = KL_BINS, half_width: float = KL_HALF_WIDTH):
    return np.linspace(d.mean - half_width * d.std, d.mean + half_width * d.std, bins + 1)


def kl_divergence(e: EmpiricalDist, d: AnalyticDist, bins: int = KL_BINS) -> float:
    """``sum_b p_b ln(p_b / q_b)`` on equal bins over ``mu +- 5 sigma``.

    Samples beyond the outer edges fall into the edge bins, and the edge
    bins' analytic mass includes the corresponding normal tails.
    """
    _require_spread(e)
    edges = kl_bin_edges(d, bins)
    _, counts = e.histogram(edges=edges)
    p = counts / e.n
    cdf = np.asarray(d.cdf(edges))
    q = np.diff(cdf)
    q[0] += cdf[0]
    q[-1] += 1.0 - cdf[-1]
    q = np.maximum(q, 1e-300)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


class KSResult(NamedTuple):
    statistic: float
    p_value: float


def ks_statistic(samples: np.ndarray, cdf) -> float:
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_test(e: EmpiricalDist, d: AnalyticDist) -> KSResult:
    """One-sample KS test against the analytic normal law (asymptotic p)."""
    if e.samples is None or e.n == 0:
        raise RawSamplesRequired("KS test needs the raw samples")
    stat = ks_statistic(e.samples, d.cdf)
    return KSResult(stat, float(kolmogorov(math.sqrt(e.n) * stat)))


class StandardizedDiffs(NamedTuple):
    mean_diff: float
    std_diff: float


def standardized_diffs(d: AnalyticDist, e: EmpiricalDist | tuple[float, float]) -> StandardizedDiffs:
    """``|mu_a - mu_e| / sigma_a`` and ``|sigma_a - sigma_e| / sigma_e``.

    ``e`` may also be a ``(mean, std)`` pair of empirical moments.
    """
    mu_e, sd_e = (e.mean, e.std) if isinstance(e, EmpiricalDist) else e
    if not d.std > 0 or not sd_e > 0:
        raise DegenerateDistribution("standardized differences need positive deviations")
    return StandardizedDiffs(abs(d.mean - mu_e) / d.std, abs(d.std - sd_e) / sd_e)
