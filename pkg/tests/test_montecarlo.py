import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from spatial_surprisal.analytic import Corrections, analytic_distribution
from spatial_surprisal.errors import (
    DegenerateDistribution,
    RawSamplesRequired,
    SchemeSizeMismatch,
    TooManyArrangements,
)
from spatial_surprisal.graph import build_bounded_grid, build_torus_grid, perturb_systematic
from spatial_surprisal.montecarlo import (
    EmpiricalDist,
    arrangement_count,
    enumerate_exact,
    kl_divergence,
    ks_statistic_exact,
    ks_test,
    sample_distribution,
    standardized_diffs,
    total_variation,
)
from spatial_surprisal.moran import unscaled_moran
from spatial_surprisal.scheme import ValueScheme

S84 = ValueScheme.from_pairs([(0, 6), (1, 3)])
S90 = ValueScheme.from_pairs([(0, 90), (1, 10)])


def brute_pmf(scheme, g):
    """Every distinct permutation of the multiset, Ibar in rationals."""
    base = np.repeat(scheme.values, scheme.sizes)
    w = g.to_dense()
    out = Counter()
    for perm in set(itertools.permutations(base.tolist())):
        xs = [Fraction(v) for v in perm]
        mean = sum(xs) / len(xs)
        out[sum((xs[i] - mean) * (xs[j] - mean) for i, j in zip(*np.nonzero(w)))] += 1
    return out


def test_enumeration_3x3_torus():
    g = build_torus_grid(3, 3)
    ex = enumerate_exact(S84, g)
    assert ex.n_states == 84 == arrangement_count(S84)
    assert ex.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(ex.probs * 84, np.round(ex.probs * 84), atol=1e-9)
    assert abs(ex.mean - (-1.0)) < 1e-12
    assert abs(ex.mean - (-4 * S84.ss / 8)) < 1e-12
    oracle = brute_pmf(S84, g)
    assert sorted(oracle.values()) == sorted(np.round(ex.probs * 84).astype(int).tolist())
    assert np.allclose(sorted(float(v) for v in oracle), ex.support, atol=1e-12)


def test_enumeration_2x2_bounded_hand_listing():
    # 1s at an adjacent pair: like and unlike edges cancel (4 arrangements, Ibar 0);
    # 1s on a diagonal: every edge unlike, 8 directed edges x (-0.25) (2 arrangements)
    ex = enumerate_exact(ValueScheme.from_pairs([(0, 2), (1, 2)]), build_bounded_grid(2, 2))
    assert ex.n_states == 6
    assert ex.support.tolist() == [-2.0, 0.0]
    assert ex.probs.tolist() == pytest.approx([2 / 6, 4 / 6])


def test_enumeration_single_value_and_limits():
    ex = enumerate_exact(ValueScheme.from_pairs([(5, 9)]), build_torus_grid(3, 3))
    assert ex.n_states == 1 and ex.support.tolist() == [0.0] and ex.probs.tolist() == [1.0]
    with pytest.raises(TooManyArrangements):
        enumerate_exact(ValueScheme.from_pairs([(0, 8), (1, 8)]), build_torus_grid(4, 4), max_states=1000)


@pytest.mark.parametrize(
    "scheme,g",
    [
        (ValueScheme.from_pairs([(0, 8), (1, 4), (2, 4)]), build_torus_grid(4, 4, "rook")),
        (ValueScheme.from_pairs([(-1, 3), (1, 3), (3, 10)]), build_torus_grid(4, 4, "queen")),
        (ValueScheme.from_pairs([(0, 10), (2, 2)]), build_torus_grid(3, 4, "rook")),
    ],
)
def test_exact_mean_law_on_regular_graphs(scheme, g):
    ex = enumerate_exact(scheme, g)
    assert ex.mean == pytest.approx(-g.k_nominal * scheme.ss / (scheme.n - 1), rel=1e-12, abs=1e-12)


def test_enumeration_matches_direct_scan_on_irregular_graph():
    g = perturb_systematic(build_bounded_grid(3, 3), 5, 2)
    ex = enumerate_exact(S84, g)
    oracle = brute_pmf(S84, g)
    assert np.allclose(sorted(float(v) for v in oracle), ex.support, atol=1e-12)
    assert ex.mean == pytest.approx(float(sum(v * c for v, c in oracle.items()) / 84), abs=1e-12)


def test_sampler_against_exact_law():
    g = build_torus_grid(3, 3)
    e = sample_distribution(S84, g, 100_000, seed=7)
    ex = enumerate_exact(S84, g)
    assert abs(e.mean - (-1.0)) < 3 * math.sqrt(ex.variance / e.n)
    assert total_variation(e, ex) < 0.02


def test_sampler_matches_direct_scan_per_sample():
    from spatial_surprisal.rng import shuffle_rows

    g = build_bounded_grid(5, 4, "queen")
    s = ValueScheme.from_pairs([(0, 11), (1.5, 5), (4, 4)])
    e = sample_distribution(s, g, 300, seed=99)
    labels = shuffle_rows(np.repeat(np.arange(3), s.sizes), 99, np.arange(300))
    direct = [unscaled_moran(s.values[row], g) for row in labels]
    assert np.allclose(e.samples, direct, rtol=1e-12, atol=1e-12)


def test_sampler_determinism_and_workers():
    g = build_bounded_grid(12, 12)
    s = ValueScheme.from_pairs([(0, 90), (1, 30), (2, 24)])
    a = sample_distribution(s, g, 5000, seed=3, workers=1)
    b = sample_distribution(s, g, 5000, seed=3, workers=8)
    assert a.samples.tobytes() == b.samples.tobytes()
    c = sample_distribution(s, g, 5000, seed=4)
    assert not np.array_equal(a.samples, c.samples)
    prefix = sample_distribution(s, g, 2100, seed=3)
    assert np.array_equal(prefix.samples, a.samples[:2100])


def test_sampler_edge_cases():
    g = build_torus_grid(3, 3)
    e = sample_distribution(ValueScheme.from_pairs([(2, 9)]), g, 50, seed=1)
    assert np.all(e.samples == 0.0) and e.std == 0.0
    assert sample_distribution(S84, g, 0, seed=1).n == 0
    with pytest.raises(SchemeSizeMismatch):
        sample_distribution(S84, build_torus_grid(4, 4), 10, seed=1)


def test_pair_counts_retained():
    g = build_torus_grid(4, 4)
    s = ValueScheme.from_pairs([(0, 10), (1, 6)])
    e = sample_distribution(s, g, 100, seed=5, keep_pair_counts=True)
    assert e.pair_counts.shape == (100, 2, 2)
    assert np.all(e.pair_counts.sum(axis=(1, 2)) == 64)
    assert np.all(e.pair_counts.sum(axis=2) == 4 * s.sizes)
    assert e.same_value_counts().shape == (100, 2)
    with pytest.raises(RawSamplesRequired):
        sample_distribution(s, g, 10, seed=5).same_value_counts()


def test_empirical_moments_and_histogram():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    e = EmpiricalDist(x)
    assert e.mean == 3.5 and e.std == pytest.approx(np.std(x, ddof=1), rel=1e-12)
    edges, counts = e.histogram(edges=np.array([2.0, 3.0, 5.0]))
    assert counts.tolist() == [2, 2] and counts.sum() == e.n


def test_csv_roundtrip(tmp_path):
    e = sample_distribution(S90, build_torus_grid(10, 10), 500, seed=2)
    p = tmp_path / "s.csv"
    e.to_csv(p)
    assert np.array_equal(EmpiricalDist.from_csv(p).samples, e.samples)


def test_kl_calibration():
    d = analytic_distribution(S90, 4)
    assert kl_divergence(EmpiricalDist(d.sample(10_000, 11)), d) < 5e-3
    far = EmpiricalDist(np.full(1000, d.mean + 40 * d.std) + np.arange(1000) * 1e-6)
    assert kl_divergence(far, d) > 10
    with pytest.raises(DegenerateDistribution):
        kl_divergence(EmpiricalDist(np.full(10, 1.0)), d)


def test_kl_decreases_with_more_samples_in_expectation():
    d = analytic_distribution(S90, 4)
    small = np.mean([kl_divergence(EmpiricalDist(d.sample(5000, s)), d) for s in range(10)])
    large = np.mean([kl_divergence(EmpiricalDist(d.sample(10_000, 100 + s)), d) for s in range(10)])
    assert large <= small


def test_ks():
    d = analytic_distribution(S90, 4)
    x = d.sample(10_000, 5)
    assert ks_test(EmpiricalDist(x), d).p_value > 0.05
    assert ks_test(EmpiricalDist(x + 10 * d.std), d).p_value < 1e-6
    res = ks_test(EmpiricalDist(x), d)
    from scipy.stats import kstest

    ref = kstest(x, d.cdf, method="asymp")
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-6)
    y = (x - d.mean) / d.std
    std = analytic_distribution(S90, 4).with_moments(0.0, 1.0)
    assert ks_test(EmpiricalDist(y), std).statistic == pytest.approx(res.statistic, abs=1e-12)


def test_ks_against_exact_step_function():
    g = build_torus_grid(3, 3)
    ex = enumerate_exact(S84, g)
    values = np.repeat(ex.support, np.round(ex.probs * 84).astype(int))
    assert ks_statistic_exact(EmpiricalDist(values), ex) == pytest.approx(0.0, abs=1e-15)


def test_standardized_diffs_reference_values():
    d = analytic_distribution(S90, 4).with_moments(-5.21, 135.11**2)
    diffs = standardized_diffs(d, (-4.51, 132.84))
    assert diffs.mean_diff == pytest.approx(0.00518, abs=5e-6)
    assert diffs.std_diff == pytest.approx(0.01709, abs=5e-6)
    d = d.with_moments(-4.39, 161.66**2)
    diffs = standardized_diffs(d, (-3.94, 139.85))
    assert diffs.mean_diff == pytest.approx(0.00278, abs=5e-6)
    assert diffs.std_diff == pytest.approx(0.15595, abs=5e-6)
    assert standardized_diffs(d, (d.mean, d.std)) == (0.0, 0.0)
    with pytest.raises(DegenerateDistribution):
        standardized_diffs(d, (0.0, 0.0))


def test_summary_contents():
    g = build_bounded_grid(10, 10)
    s = ValueScheme.from_pairs([(0, 65), (1, 35)])
    e = sample_distribution(s, g, 2000, seed=1)
    summ = e.summary(analytic_distribution(s, 4, Corrections(True, True), g.delta_n))
    assert {"n", "mean", "std", "kl", "ks", "mean_diff", "std_diff", "analytic", "histogram"} <= set(summ)
    assert sum(summ["histogram"]["counts"]) == 2000
