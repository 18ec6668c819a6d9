"""Binary spatial-weight graphs on lattices and general digraphs.

Adjacency is stored in compressed row form: the out-neighbours of vertex
``i`` are ``indices[indptr[i]:indptr[i + 1]]``, sorted ascending. An entry
``(i, j)`` corresponds to ``w_ij = 1``. Graphs may be asymmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, InvalidDimension, InvalidGraph, PerturbationInfeasible

Contiguity = Literal["rook", "queen"]

_OFFSETS = {
    "rook": ((-1, 0), (0, -1), (0, 1), (1, 0)),
    "queen": ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)),
}

# beyond this many vertices the complement of the edge set is sampled by
# rejection instead of being enumerated
_DENSE_COMPLEMENT_MAX_N = 2048


@dataclass(frozen=True, eq=False)
class WeightGraph:
    """Directed binary weight graph with a nominal uniform degree."""

    n_vertices: int
    indptr: np.ndarray
    indices: np.ndarray
    k_nominal: int

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_edges(cls, n_vertices: int, src, dst, k_nominal: int) -> "WeightGraph":
        """Build a graph from parallel source/destination arrays.

        Raises InvalidGraph on self-loops, out-of-range endpoints or
        duplicate directed edges.
        """
        n = int(n_vertices)
        if n < 1:
            raise InvalidGraph(f"graph needs at least one vertex, got {n}")
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise InvalidGraph("source and destination arrays differ in length")
        if src.size:
            if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
                raise InvalidGraph(f"edge endpoint outside [0, {n})")
            if np.any(src == dst):
                raise InvalidGraph("self-loops are not allowed")
        codes = src * n + dst
        order = np.argsort(codes, kind="stable")
        codes = codes[order]
        if codes.size > 1 and np.any(codes[1:] == codes[:-1]):
            raise InvalidGraph("duplicate directed edge")
        return cls._from_sorted_codes(n, codes, k_nominal)

    @classmethod
    def _from_sorted_codes(cls, n: int, codes: np.ndarray, k_nominal: int) -> "WeightGraph":
        src = codes // n
        indices = (codes % n).astype(np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(n, indptr, indices, int(k_nominal))

    @property
    def total_edges(self) -> int:
        return int(self.indices.size)

    @property
    def delta_n(self) -> int:
        """Actual directed edge count minus the nominal ``k * N``."""
        return self.total_edges - self.k_nominal * self.n_vertices

    @cached_property
    def sources(self) -> np.ndarray:
        src = np.repeat(np.arange(self.n_vertices, dtype=np.int64), np.diff(self.indptr))
        src.setflags(write=False)
        return src

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.sources, self.indices

    def edge_codes(self) -> np.ndarray:
        """Edges encoded as ``i * N + j``, sorted ascending."""
        return self.sources * self.n_vertices + self.indices

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def is_symmetric(self) -> bool:
        fwd = self.edge_codes()
        rev = np.sort(self.indices * self.n_vertices + self.sources)
        return bool(np.array_equal(fwd, rev))

    def to_sparse(self) -> sp.csr_matrix:
        data = np.ones(self.total_edges, dtype=np.float64)
        n = self.n_vertices
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        w = np.zeros((self.n_vertices, self.n_vertices), dtype=np.int8)
        w[self.sources, self.indices] = 1
        return w

    def same_edges(self, other: "WeightGraph") -> bool:
        return self.n_vertices == other.n_vertices and np.array_equal(
            self.edge_codes(), other.edge_codes()
        )

    def __repr__(self) -> str:
        return (
            f"WeightGraph(n_vertices={self.n_vertices}, total_edges={self.total_edges}, "
            f"k_nominal={self.k_nominal}, delta_n={self.delta_n})"
        )


def _grid_edges(rows: int, cols: int, contiguity: str, wrap: bool):
    try:
        offsets = _OFFSETS[contiguity]
    except KeyError:
        raise ValueError(f"unknown contiguity {contiguity!r}; expected 'rook' or 'queen'") from None
    r, c = np.divmod(np.arange(rows * cols, dtype=np.int64), cols)
    src, dst = [], []
    for dr, dc in offsets:
        rr, cc = r + dr, c + dc
        if wrap:
            rr %= rows
            cc %= cols
            keep = np.ones(rr.shape, dtype=bool)
        else:
            keep = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols)
        src.append((r * cols + c)[keep])
        dst.append((rr * cols + cc)[keep])
    return np.concatenate(src), np.concatenate(dst), len(offsets)


def build_torus_grid(rows: int, cols: int, contiguity: Contiguity = "rook") -> WeightGraph:
    """Grid with wrap-around adjacency; every vertex has exactly k neighbours."""
    if rows < 3 or cols < 3:
        raise InvalidDimension(f"torus grid needs rows, cols >= 3; got {rows}x{cols}")
    src, dst, k = _grid_edges(rows, cols, contiguity, wrap=True)
    return WeightGraph.from_edges(rows * cols, src, dst, k)


def build_bounded_grid(rows: int, cols: int, contiguity: Contiguity = "rook") -> WeightGraph:
    """Non-wrapping grid; border and corner cells have fewer neighbours."""
    if rows < 2 or cols < 2:
        raise InvalidDimension(f"bounded grid needs rows, cols >= 2; got {rows}x{cols}")
    src, dst, k = _grid_edges(rows, cols, contiguity, wrap=False)
    return WeightGraph.from_edges(rows * cols, src, dst, k)


def _flip_count(rho: float, k: int, n: int) -> int:
    # rho * k * N is meant as an exact product; guard against 959.999...
    return int(math.floor(rho * k * n + 1e-9))


def _sample_absent(g: WeightGraph, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` distinct non-diagonal codes absent from ``g``."""
    n = g.n_vertices
    present = g.edge_codes()
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if n <= _DENSE_COMPLEMENT_MAX_N:
        mask = np.ones(n * n, dtype=bool)
        mask[present] = False
        mask[np.arange(n, dtype=np.int64) * (n + 1)] = False
        candidates = np.flatnonzero(mask)
        return rng.choice(candidates, size=count, replace=False)
    chosen: list[int] = []
    seen = set(present.tolist())
    while len(chosen) < count:
        i, j = rng.integers(0, n, size=2)
        code = int(i) * n + int(j)
        if i == j or code in seen:
            continue
        seen.add(code)
        chosen.append(code)
    return np.asarray(chosen, dtype=np.int64)


def perturb_balanced(g: WeightGraph, rho: float, seed: int) -> WeightGraph:
    """Flip floor(rho*k*N) present entries off and as many absent entries on.

    Both sets are chosen from the original weight matrix, so the total edge
    count is preserved while degrees become irregular. Symmetry is not kept.
    """
    if not 0.0 <= rho < 1.0:
        raise PerturbationInfeasible(f"rho must lie in [0, 1), got {rho}")
    n = g.n_vertices
    flips = _flip_count(rho, g.k_nominal, n)
    absent = n * (n - 1) - g.total_edges
    if flips > g.total_edges or flips > absent:
        raise PerturbationInfeasible(
            f"{flips} flips requested but graph has {g.total_edges} edges and {absent} free entries"
        )
    if flips == 0:
        return g
    rng = np.random.default_rng(seed)
    present = g.edge_codes()
    removed = rng.choice(present.size, size=flips, replace=False)
    added = _sample_absent(g, flips, rng)
    kept = np.delete(present, removed)
    return WeightGraph._from_sorted_codes(n, np.sort(np.concatenate([kept, added])), g.k_nominal)


def perturb_systematic(g: WeightGraph, delta: int, seed: int) -> WeightGraph:
    """Add (delta > 0) or remove (delta < 0) ``|delta|`` random directed edges."""
    n = g.n_vertices
    delta = int(delta)
    if delta < -g.total_edges or delta > n * (n - 1) - g.total_edges:
        raise PerturbationInfeasible(f"cannot change {g.total_edges} edges by {delta}")
    if delta == 0:
        return g
    rng = np.random.default_rng(seed)
    present = g.edge_codes()
    if delta < 0:
        removed = rng.choice(present.size, size=-delta, replace=False)
        codes = np.delete(present, removed)
    else:
        codes = np.sort(np.concatenate([present, _sample_absent(g, delta, rng)]))
    return WeightGraph._from_sorted_codes(n, codes, g.k_nominal)


def write_edgelist(g: WeightGraph, path) -> None:
    """Header ``N k_nominal`` then one ``i j`` line per directed edge."""
    src, dst = g.edges()
    lines = [f"{g.n_vertices} {g.k_nominal}"]
    lines.extend(f"{i} {j}" for i, j in zip(src.tolist(), dst.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> WeightGraph:
    text = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in text if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise FormatError(f"{path}: missing 'N k_nominal' header")
    try:
        n, k = int(rows[0][0]), int(rows[0][1])
        pairs = np.array([[int(a), int(b)] for a, b in rows[1:]], dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    try:
        return WeightGraph.from_edges(n, pairs[:, 0], pairs[:, 1], k)
    except InvalidGraph as exc:
        raise FormatError(f"{path}: {exc}") from exc
