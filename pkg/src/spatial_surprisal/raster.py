"""Raster ingestion, tiling and per-patch surprisal analysis.

``flat_binary`` layout: the 4-byte magic ``b"SRAS"``, then ``rows`` and
``cols`` as little-endian uint32, then ``rows * cols`` uint8 values in
row-major order. Nothing else; trailing bytes are an error.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Literal, NamedTuple, Sequence

import numpy as np

from .analytic import Corrections, analytic_distribution, self_information, tail_probability
from .errors import DegenerateScheme, FormatError, InvalidTiling
from .graph import build_bounded_grid
from .moran import pair_counts, unscaled_from_counts, unscaled_moran
from .scheme import bucketize, extract_scheme

MAGIC = b"SRAS"
_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True, eq=False)
class RasterGrid:
    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64)
        if a.ndim != 2:
            raise FormatError(f"raster must be 2-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise FormatError("raster contains non-finite values")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def value_range(self) -> tuple[float, float]:
        if self.data.size == 0:
            return (0.0, 0.0)
        return float(self.data.min()), float(self.data.max())


def _read_csv(path) -> RasterGrid:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path}: empty CSV grid")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise FormatError(f"{path}: ragged CSV rows")
    try:
        return RasterGrid(np.array([[float(c) for c in r] for r in rows]))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _read_flat(path) -> RasterGrid:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    payload = blob[_HEADER.size :]
    if len(payload) != rows * cols:
        raise FormatError(f"{path}: header says {rows}x{cols} but payload has {len(payload)} bytes")
    return RasterGrid(np.frombuffer(payload, dtype=np.uint8).reshape(rows, cols))


def load_raster(path, format: Literal["csv", "flat_binary"] = "csv") -> RasterGrid:
    if format == "csv":
        return _read_csv(path)
    if format == "flat_binary":
        return _read_flat(path)
    raise FormatError(f"unknown raster format {format!r}")


def write_raster(r: RasterGrid, path, format: Literal["csv", "flat_binary"] = "csv") -> None:
    if format == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in r.data.tolist():
                w.writerow([int(v) if float(v).is_integer() else repr(v) for v in row])
    elif format == "flat_binary":
        d = r.data
        if np.any(d < 0) or np.any(d > 255) or np.any(d != np.floor(d)):
            raise FormatError("flat_binary stores uint8 values only")
        Path(path).write_bytes(_HEADER.pack(MAGIC, r.rows, r.cols) + d.astype(np.uint8).tobytes())
    else:
        raise FormatError(f"unknown raster format {format!r}")


class PatchId(NamedTuple):
    tile_row: int
    tile_col: int
    patch_row: int
    patch_col: int

    def __str__(self) -> str:
        return f"{self.tile_row}-{self.tile_col}/{self.patch_row}-{self.patch_col}"


def tile(r: RasterGrid, tile: int, patch: int) -> Iterator[tuple[PatchId, RasterGrid]]:
    """Non-overlapping ``patch`` x ``patch`` windows inside ``tile`` x ``tile`` tiles.

    Row-major over tiles, then row-major over patches within a tile. Tiles
    that do not fit entirely inside the raster are dropped.
    """
    if tile < 1 or patch < 1 or tile % patch:
        raise InvalidTiling(f"patch size {patch} must divide tile size {tile}")
    per = tile // patch
    for tr in range(r.rows // tile):
        for tc in range(r.cols // tile):
            block = r.data[tr * tile : (tr + 1) * tile, tc * tile : (tc + 1) * tile]
            for pr in range(per):
                for pc in range(per):
                    win = block[pr * patch : (pr + 1) * patch, pc * patch : (pc + 1) * patch]
                    yield PatchId(tr, tc, pr, pc), RasterGrid(win)


@dataclass(frozen=True)
class PatchReport:
    """Per-patch statistics; ``status`` is ``ok`` unless the patch is degenerate."""

    patch_id: str
    tile_row: int
    tile_col: int
    patch_row: int
    patch_col: int
    m: int
    b: float
    status: str = "ok"
    moran_i: float | None = None
    i_bar: float | None = None
    mu: float | None = None
    sigma: float | None = None
    self_information: float | None = None
    tail_p: float | None = None

    @property
    def key(self) -> PatchId:
        return PatchId(self.tile_row, self.tile_col, self.patch_row, self.patch_col)

    def to_dict(self) -> dict:
        return asdict(self)


def analyze_patch(
    p: RasterGrid,
    bin_width: float = 20.0,
    contiguity: str = "rook",
    origin: float = 0.0,
    domain_max: float | None = None,
    patch_id: PatchId = PatchId(0, 0, 0, 0),
    corrections: Corrections = Corrections(delta_n_scaling=True, common_neighbor=True),
) -> PatchReport:
    """Bucketize, then Moran's I and surprisal on bounded-grid weights.

    Constant or degenerate patches come back with a non-``ok`` status.
    """
    if domain_max is None:
        domain_max = p.value_range[1]
    sample = bucketize(p.data, bin_width, origin, domain_max, shape=(p.rows, p.cols))
    scheme = extract_scheme(sample, warn=False)
    base = dict(
        patch_id=str(patch_id),
        **patch_id._asdict(),
        m=scheme.m,
        b=scheme.background_proportion,
    )
    if scheme.m < 2:
        return PatchReport(status="zero_variance", **base)
    g = build_bounded_grid(p.rows, p.cols, contiguity)
    i_bar = unscaled_moran(sample, g)
    pc = pair_counts(sample, g, scheme)
    if pc.total != g.total_edges or not math.isclose(
        unscaled_from_counts(scheme, pc), i_bar, rel_tol=1e-9, abs_tol=1e-9 * scheme.ss
    ):
        raise AssertionError(f"pair-count bookkeeping failed on patch {patch_id}")
    moran = p.rows * p.cols / g.total_edges * i_bar / scheme.ss
    try:
        d = analytic_distribution(scheme, g.k_nominal, corrections, g.delta_n)
    except DegenerateScheme:
        return PatchReport(status="degenerate", moran_i=moran, i_bar=i_bar, **base)
    return PatchReport(
        moran_i=moran,
        i_bar=i_bar,
        mu=d.mean,
        sigma=d.std,
        self_information=self_information(i_bar, d),
        tail_p=tail_probability(i_bar, d, "two"),
        **base,
    )


def analyze_raster(
    r: RasterGrid,
    tile_size: int = 1000,
    patch_size: int = 50,
    bin_width: float = 20.0,
    contiguity: str = "rook",
    origin: float = 0.0,
    domain_max: float | None = None,
    workers: int = 1,
) -> list[PatchReport]:
    """Analyse every patch; buckets span the whole raster's value range."""
    if domain_max is None:
        domain_max = r.value_range[1]

    def one(item):
        pid, grid = item
        return analyze_patch(grid, bin_width, contiguity, origin, domain_max, pid)

    patches = list(tile(r, tile_size, patch_size))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, patches))
    else:
        reports = [one(item) for item in patches]
    return sorted(reports, key=lambda rep: rep.key)


def rank_patches(
    reports: Sequence[PatchReport],
    by: Literal["moran_i", "self_information"] = "self_information",
    b_filter: tuple[float, float] | None = None,
) -> list[PatchReport]:
    """Ascending order on ``by``; ties fall back to the patch id.

    Reports without a value for ``by`` (degenerate patches) are dropped, as
    are those whose background proportion lies outside ``b_filter``.
    """
    if by not in ("moran_i", "self_information"):
        raise ValueError(f"cannot rank by {by!r}")
    kept = [rep for rep in reports if getattr(rep, by) is not None]
    if b_filter is not None:
        lo, hi = b_filter
        kept = [rep for rep in kept if lo <= rep.b <= hi]
    return sorted(kept, key=lambda rep: (getattr(rep, by), rep.key))


def write_reports_csv(reports: Sequence[PatchReport], path) -> None:
    fields = list(PatchReport.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for rep in reports:
            w.writerow({k: ("" if v is None else v) for k, v in rep.to_dict().items()})


def write_reports_json(reports: Sequence[PatchReport], path) -> None:
    Path(path).write_text(json.dumps([rep.to_dict() for rep in reports], indent=2) + "\n")
