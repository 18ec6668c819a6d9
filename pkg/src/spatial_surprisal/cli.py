"""Command-line entry point.

Machine-readable JSON goes to stdout, human-readable notes to stderr. Exit
codes: 0 success, 1 I/O or format error, 2 degenerate input, 3 infeasible
configuration. Every command that writes files also writes a run manifest
(``<out>/manifest.json``) that ``spatial-surprisal rerun`` can replay.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Callable

from . import __version__
from .analytic import Corrections, analytic_distribution, self_information, tail_probability
from .errors import FormatError, SpatialSurprisalError
from .experiments import SWEEPS, SweepConfig
from .graph import build_bounded_grid, build_torus_grid
from .montecarlo import sample_distribution
from .moran import moran_i, pair_counts, unscaled_moran
from .raster import analyze_raster, load_raster, rank_patches, write_reports_csv, write_reports_json
from .scheme import Sample, ValueScheme, extract_scheme

DEFAULT_SEED = 20240601
_DEGREE = {"rook": 4, "queen": 8}


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _note(msg: str) -> None:
    sys.stderr.write(msg + "\n")


def _write_manifest(out_dir: Path, args: argparse.Namespace, inputs: list, outputs: list) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir")}
    man = {
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "input_digests": {str(p): _digest(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    (out_dir / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return man


def _load_scheme(path) -> ValueScheme:
    try:
        pairs = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not isinstance(pairs, list) or not all(isinstance(p, list) and len(p) == 2 for p in pairs):
        raise FormatError(f"{path}: expected a JSON list of [value, count] pairs")
    return ValueScheme.from_pairs(pairs)


def _graph(rows: int, cols: int, contiguity: str, torus: bool):
    return (build_torus_grid if torus else build_bounded_grid)(rows, cols, contiguity)


def _shape(text: str) -> tuple[int, int]:
    try:
        r, c = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid shape must look like 40x40, got {text!r}") from None
    return r, c


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like 0.55,0.65, got {text!r}") from None
    return lo, hi


def cmd_moran(args) -> int:
    grid = load_raster(args.input, args.format)
    s = Sample(grid.data.ravel(), shape=(grid.rows, grid.cols))
    g = _graph(grid.rows, grid.cols, args.contiguity, args.torus)
    scheme = extract_scheme(s, warn=False)
    _emit(
        {
            "I": moran_i(s, g),
            "i_bar": unscaled_moran(s, g),
            "pair_counts": pair_counts(s, g, scheme).tolist(),
            "scheme": scheme.to_json(),
            "total_edges": g.total_edges,
            "delta_n": g.delta_n,
        }
    )
    return 0


def cmd_analytic(args) -> int:
    if args.scheme:
        scheme = _load_scheme(args.scheme)
    else:
        grid = load_raster(args.from_grid, args.format)
        scheme = extract_scheme(grid.data.ravel(), warn=False)
    k = args.k if args.k is not None else _DEGREE[args.contiguity]
    d = analytic_distribution(scheme, k, Corrections.parse(args.corrections), args.delta_n)
    out = d.to_dict()
    if args.observed is not None:
        out["J"] = self_information(args.observed, d)
        out["tail_p"] = tail_probability(args.observed, d, args.side)
    _emit(out)
    return 0


def cmd_sample(args) -> int:
    scheme = _load_scheme(args.scheme)
    rows, cols = args.grid_shape
    g = _graph(rows, cols, args.contiguity, args.torus)
    e = sample_distribution(scheme, g, args.n, args.seed, workers=args.workers)
    d = None
    if scheme.m >= 2:
        d = analytic_distribution(scheme, g.k_nominal, Corrections.parse(args.corrections), g.delta_n)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples_path, summary_path = out_dir / "samples.csv", out_dir / "summary.json"
    e.to_csv(samples_path)
    summary = e.summary(d)
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_manifest(out_dir, args, [args.scheme], [samples_path, summary_path])
    _emit(summary)
    return 0


def cmd_sweep(args) -> int:
    cfg = SweepConfig()
    inputs = []
    if args.config:
        cfg = SweepConfig.from_dict(json.loads(Path(args.config).read_text()))
        inputs.append(args.config)
    overrides = {
        k: v
        for k, v in (("seed", args.seed), ("n_samples", args.samples), ("repeats", args.repeats), ("workers", args.workers))
        if v is not None
    }
    cfg = SweepConfig.from_dict({**cfg.to_dict(), **overrides})
    result = SWEEPS[args.kind](cfg)
    out_dir = Path(args.out_dir)
    man = result.write(out_dir)
    _write_manifest(out_dir, args, inputs, man["outputs"])
    for row in result.rows:
        agg = row.aggregates()
        _note(
            f"{result.sweep_var}={row.sweep_value:<8g} {row.variant:<12} "
            + " ".join(f"{k}={v[0]:.5g}" for k, v in agg.items())
        )
    _emit(man)
    return 0


def cmd_raster(args) -> int:
    r = load_raster(args.input, args.format)
    reports = analyze_raster(
        r,
        args.tile,
        args.patch,
        args.bin_width,
        args.contiguity,
        args.origin,
        args.domain_max,
        workers=args.workers,
    )
    if args.rank_by:
        reports = rank_patches(reports, args.rank_by, args.b_range)
    elif args.b_range:
        lo, hi = args.b_range
        reports = [rep for rep in reports if lo <= rep.b <= hi]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / "patches.csv", out_dir / "patches.json"
    write_reports_csv(reports, csv_path)
    write_reports_json(reports, json_path)
    _write_manifest(out_dir, args, [args.input], [csv_path, json_path])
    _emit([rep.to_dict() for rep in reports])
    return 0


def cmd_rerun(args) -> int:
    man = json.loads(Path(args.manifest).read_text())
    for path, digest in man.get("input_digests", {}).items():
        if _digest(path) != digest:
            raise FormatError(f"input {path} changed since the manifest was written")
    config = dict(man["config"])
    config["out_dir"] = args.out_dir
    ns = argparse.Namespace(**config)
    if isinstance(getattr(ns, "grid_shape", None), list):
        ns.grid_shape = tuple(ns.grid_shape)
    if isinstance(getattr(ns, "b_range", None), list):
        ns.b_range = tuple(ns.b_range)
    return _HANDLERS[man["subcommand"]](ns)


_HANDLERS: dict[str, Callable] = {
    "moran": cmd_moran,
    "analytic": cmd_analytic,
    "sample": cmd_sample,
    "sweep": cmd_sweep,
    "raster": cmd_raster,
    "rerun": cmd_rerun,
}


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--contiguity", choices=("rook", "queen"), default="rook")
    wrap = p.add_mutually_exclusive_group()
    wrap.add_argument("--torus", action="store_true", help="wrap-around adjacency")
    wrap.add_argument("--bounded", dest="torus", action="store_false", help="bounded grid (default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatial-surprisal",
        description="Moran's I, its analytic null law, and spatial self-information.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    formats = ("csv", "flat_binary")

    p = sub.add_parser("moran", help="Moran's I and pair counts of a grid")
    p.add_argument("input")
    p.add_argument("--format", choices=formats, default="csv")
    _add_grid_flags(p)

    p = sub.add_parser("analytic", help="analytic normal law of the unscaled Moran's I")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scheme", help="JSON list of [value, count] pairs")
    src.add_argument("--from-grid", help="grid file whose value scheme is used")
    p.add_argument("--format", choices=formats, default="csv")
    p.add_argument("--contiguity", choices=("rook", "queen"), default="rook")
    p.add_argument("--k", type=float, default=None, help="degree (default: 4 rook, 8 queen)")
    p.add_argument("--delta-n", type=int, default=0)
    p.add_argument("--corrections", default="none", help="comma list: delta_n, common_neighbor, all, none")
    p.add_argument("--observed", type=float, default=None, help="observed unscaled Moran's I")
    p.add_argument("--side", choices=("two", "upper", "lower"), default="two")

    p = sub.add_parser("sample", help="Monte Carlo null distribution of the unscaled Moran's I")
    p.add_argument("--scheme", required=True)
    p.add_argument("--grid-shape", type=_shape, required=True, help="ROWSxCOLS")
    _add_grid_flags(p)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--corrections", default="all")
    p.add_argument("--out-dir", default="sample_out")

    p = sub.add_parser("sweep", help="run one of the validation sweeps")
    p.add_argument("kind", choices=sorted(SWEEPS))
    p.add_argument("--config", help="JSON sweep configuration")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", default="sweep_out")

    p = sub.add_parser("raster", help="tile a raster and rank its patches")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=formats, default="csv")
    p.add_argument("--tile", type=int, default=1000)
    p.add_argument("--patch", type=int, default=50)
    p.add_argument("--bin-width", type=float, default=20.0)
    p.add_argument("--origin", type=float, default=0.0)
    p.add_argument("--domain-max", type=float, default=None)
    p.add_argument("--contiguity", choices=("rook", "queen"), default="rook")
    p.add_argument("--rank-by", choices=("moran_i", "self_information"), default=None)
    p.add_argument("--b-range", type=_range, default=None, help="LO,HI background proportion filter")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="raster_out")

    p = sub.add_parser("rerun", help="replay a run manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except SpatialSurprisalError as exc:
        _note(f"error: {exc}")
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        _note(f"error: {exc}")
        return 1
    except ValueError as exc:
        _note(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
