import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatial_surprisal.errors import EmptySample, InvalidValue
from spatial_surprisal.rng import shuffle_rows
from spatial_surprisal.scheme import (
    AssumptionWarning,
    Sample,
    ValueScheme,
    bucketize,
    extract_scheme,
    random_arrangement,
)


def test_extract_examples():
    s = extract_scheme([0, 0, 1], warn=False)
    assert s.pairs() == [(0.0, 2), (1.0, 1)]
    assert s.mean == pytest.approx(1 / 3, rel=1e-15)
    assert s.ss == pytest.approx(2 / 3, rel=1e-15)

    s = extract_scheme([5, 5, 5, 5], warn=False)
    assert s.pairs() == [(5.0, 4)] and s.ss == 0.0

    s = extract_scheme([2, 0, 1, 0], warn=False)
    assert s.pairs() == [(0.0, 2), (1.0, 1), (2.0, 1)]
    assert s.mean == 0.75 and s.ss == pytest.approx(2.75, rel=1e-15)


def test_extract_empty_and_nonfinite():
    with pytest.raises(EmptySample):
        extract_scheme([])
    with pytest.raises(InvalidValue):
        Sample([1.0, math.nan])


def test_many_distinct_values_warn():
    with pytest.warns(AssumptionWarning):
        extract_scheme(np.arange(20.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        extract_scheme([0] * 29 + [1])


def test_scheme_derived_quantities_and_background():
    s = ValueScheme.from_pairs([(3, 5), (1, 5), (2, 2)])
    assert s.values.tolist() == [1.0, 2.0, 3.0]
    assert s.background_index == 0  # tie between 1 and 3 goes to the smaller value
    assert s.background_proportion == 5 / 12
    raw = np.repeat(s.values, s.sizes)
    assert s.mean == pytest.approx(raw.mean(), rel=1e-12)
    assert s.ss == pytest.approx(((raw - raw.mean()) ** 2).sum(), rel=1e-12)
    with pytest.raises(ValueError):
        ValueScheme.from_pairs([(1, 2), (1, 3)])
    with pytest.raises(ValueError):
        ValueScheme.from_pairs([(1, 0)])


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=60))
def test_scheme_matches_direct_pass(values):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AssumptionWarning)
        s = extract_scheme(values)
    x = np.array(values, dtype=float)
    assert s.n == x.size
    assert s.mean == pytest.approx(x.mean(), rel=1e-12, abs=1e-12)
    assert s.ss == pytest.approx(((x - x.mean()) ** 2).sum(), rel=1e-12, abs=1e-12)
    assert sorted(set(values)) == s.values.tolist()


def test_bucketize_examples():
    assert bucketize([0, 19, 20], 20).values.tolist() == [1, 1, 2]
    assert bucketize([250], 20, 0, 250).values.tolist() == [13]
    assert bucketize([239.9], 20, 0, 250).values.tolist() == [12]
    labels = bucketize(np.arange(251), 20, 0, 250).values
    assert labels.min() == 1 and labels.max() == 13
    assert np.count_nonzero(labels == 13) == 11  # 240..250
    with pytest.raises(InvalidValue):
        bucketize([1.0, math.inf], 20)
    with pytest.raises(ValueError):
        bucketize([1.0], 0)


@given(
    st.lists(st.floats(0, 1000, allow_nan=False), min_size=1, max_size=50),
    st.floats(0.5, 100),
)
def test_bucketize_monotone_and_idempotent(values, width):
    dmax = 1000.0
    x = np.sort(np.array(values))
    labels = bucketize(x, width, 0.0, dmax).values
    assert np.all(np.diff(labels) >= 0)
    midpoints = (labels - 0.5) * width
    assert np.array_equal(bucketize(midpoints, width, 0.0, dmax).values, labels)


def test_random_arrangement_preserves_scheme_and_is_deterministic():
    t = ValueScheme.from_pairs([(0, 6), (1, 3), (4, 2)])
    a = random_arrangement(t, 11, 5)
    assert extract_scheme(a, warn=False) == t
    assert np.array_equal(a.values, random_arrangement(t, 11, 5).values)
    assert random_arrangement(ValueScheme.from_pairs([(7, 4)]), 4, 1).values.tolist() == [7] * 4


@settings(max_examples=50)
@given(st.integers(0, 2**63 - 1))
def test_extract_inverts_random_arrangement(seed):
    t = ValueScheme.from_pairs([(-1.5, 3), (0, 7), (2, 1)])
    assert extract_scheme(random_arrangement(t, 11, seed), warn=False) == t


def test_random_arrangement_uniform():
    t = ValueScheme.from_pairs([(0, 2), (1, 2)])
    base = np.repeat(t.values, t.sizes)
    rows = shuffle_rows(base, 2024, np.arange(60_000)).astype(int)
    draws = [tuple(r) for r in rows.tolist()]
    counts = {p: draws.count(p) for p in set(itertools.permutations((0, 0, 1, 1)))}
    assert len(counts) == 6
    band = 3 * math.sqrt(60_000 * (1 / 6) * (5 / 6))
    for c in counts.values():
        assert abs(c - 10_000) < band
