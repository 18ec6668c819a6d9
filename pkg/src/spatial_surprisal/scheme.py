"""Samples, value schemes and fixed-width bucketization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySample, InvalidValue, SchemeSizeMismatch
from .rng import shuffle_rows


class AssumptionWarning(UserWarning):
    """The data violate an approximation assumption; results may be poor."""


@dataclass(frozen=True, eq=False)
class Sample:
    """Observed values, one per vertex, index-aligned with a WeightGraph.

    ``shape`` records the grid shape when the sample came from a raster or
    CSV grid (row-major flattening); it is informational only.
    """

    values: np.ndarray
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise InvalidValue("sample values must be finite")
        if self.shape is not None and self.shape[0] * self.shape[1] != v.size:
            raise SchemeSizeMismatch(f"shape {self.shape} does not match {v.size} values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def grid(self) -> np.ndarray:
        if self.shape is None:
            raise ValueError("sample has no grid shape")
        return self.values.reshape(self.shape)


@dataclass(frozen=True, eq=False)
class ValueScheme:
    """Distinct values ``c_p`` (ascending) with their sizes ``n_p``."""

    values: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        c = np.array(self.values, dtype=np.float64).ravel()
        n = np.array(self.sizes, dtype=np.int64).ravel()
        if c.size == 0:
            raise EmptySample("value scheme is empty")
        if c.shape != n.shape:
            raise SchemeSizeMismatch("values and sizes differ in length")
        if not np.all(np.isfinite(c)):
            raise InvalidValue("scheme values must be finite")
        if np.any(n < 1):
            raise SchemeSizeMismatch("every value size must be >= 1")
        if c.size > 1 and np.any(np.diff(c) <= 0):
            raise InvalidValue("scheme values must be strictly increasing")
        c.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "values", c)
        object.__setattr__(self, "sizes", n)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "ValueScheme":
        """Build from ``(value, size)`` pairs in any order."""
        pairs = sorted((float(v), int(n)) for v, n in pairs)
        if not pairs:
            raise EmptySample("value scheme is empty")
        return cls(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))

    def pairs(self) -> list[tuple[float, int]]:
        return list(zip(self.values.tolist(), self.sizes.tolist()))

    @property
    def m(self) -> int:
        return int(self.values.size)

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    @cached_property
    def mean(self) -> float:
        if self.m == 1:
            return float(self.values[0])
        return math.fsum((self.values * self.sizes).tolist()) / self.n

    @cached_property
    def deviations(self) -> np.ndarray:
        """``c_p - mean`` per value."""
        return self.values - self.mean

    @cached_property
    def ss(self) -> float:
        """Sum of squared deviations over all observations."""
        d = self.deviations
        return math.fsum((d * d * self.sizes).tolist())

    @cached_property
    def background_index(self) -> int:
        # argmax returns the first maximum, i.e. the smallest value on ties
        return int(np.argmax(self.sizes))

    @property
    def background_proportion(self) -> float:
        return int(self.sizes[self.background_index]) / self.n

    def index_of(self, x: np.ndarray) -> np.ndarray:
        """Map raw sample values to scheme indices."""
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.values, x)
        idx = np.clip(idx, 0, self.m - 1)
        if not np.array_equal(self.values[idx], x):
            raise SchemeSizeMismatch("sample contains values outside the scheme")
        return idx

    def to_json(self) -> list[list[float | int]]:
        return [[v, n] for v, n in self.pairs()]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ValueScheme):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(self.sizes, other.sizes)

    def __hash__(self) -> int:
        return hash((self.values.tobytes(), self.sizes.tobytes()))

    def __repr__(self) -> str:
        return f"ValueScheme({self.pairs()})"


def extract_scheme(s: Sample | np.ndarray | Sequence[float], warn: bool = True) -> ValueScheme:
    """Distinct values of a sample with their multiplicities.

    Emits an AssumptionWarning when there are more than N/10 distinct
    values, since the normal approximation then degrades.
    """
    values = s.values if isinstance(s, Sample) else Sample(s).values
    if values.size == 0:
        raise EmptySample("cannot extract a scheme from an empty sample")
    c, n = np.unique(values, return_counts=True)
    if warn and c.size > 0.1 * values.size:
        warnings.warn(
            f"{c.size} distinct values for {values.size} observations; "
            "the small-number-of-values assumption does not hold, consider bucketize()",
            AssumptionWarning,
            stacklevel=2,
        )
    return ValueScheme(c, n)


def bucket_count(bin_width: float, origin: float, domain_max: float) -> int:
    """Number of buckets: the label that ``domain_max`` itself receives."""
    return max(1, 1 + math.floor((domain_max - origin) / bin_width))


def bucketize(
    values,
    bin_width: float,
    origin: float = 0.0,
    domain_max: float | None = None,
    shape: tuple[int, int] | None = None,
) -> Sample:
    """Map values to bucket labels ``1 + floor((v - origin) / bin_width)``.

    Labels are clamped into ``[1, bucket_count]``, so values beyond
    ``domain_max`` (default: the largest value) join the last bucket. With width 20,
    origin 0 and maximum 250 this gives 0-19 -> 1, ..., 240-250 -> 13.
    """
    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise InvalidValue("cannot bucketize non-finite values")
    if domain_max is None:
        domain_max = float(v.max()) if v.size else origin
    last = bucket_count(bin_width, origin, domain_max)
    labels = 1.0 + np.floor((v - origin) / bin_width)
    labels = np.clip(labels, 1, last)
    return Sample(labels.ravel(), shape=shape)


def random_arrangement(scheme: ValueScheme, n_vertices: int, seed: int) -> Sample:
    """Uniformly random spatial arrangement of the scheme's multiset."""
    if scheme.n != n_vertices:
        raise SchemeSizeMismatch(f"scheme has {scheme.n} observations, graph has {n_vertices}")
    base = np.repeat(scheme.values, scheme.sizes)
    return Sample(shuffle_rows(base, seed, np.zeros(1, dtype=np.int64))[0])
