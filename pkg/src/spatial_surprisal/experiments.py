"""Synthetic sweeps measuring how well the analytic law fits permutation data.

Four sweeps vary one stress factor each: background proportion, balanced
weight perturbation, systematic change of the edge total, and the size of
same-valued foreground groups. Every point draws ``repeats`` ensembles of
``n_samples`` arrangements and compares them with the analytic law with
and without the relevant correction.

Seeding: repeat ``r`` draws its arrangements from
``derive_seed(seed, r)`` at every sweep point (common random numbers), and
graph perturbations use ``derive_seed(seed, r, point, 1)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analytic import (
    AnalyticDist,
    Corrections,
    analytic_distribution,
    corrected_moments,
)
from .errors import SchemeSizeMismatch
from .graph import WeightGraph, build_bounded_grid, build_torus_grid, perturb_balanced, perturb_systematic
from .montecarlo import EmpiricalDist, kl_divergence, ks_test, sample_distribution, standardized_diffs
from .rng import derive_seed
from .scheme import ValueScheme

CSV_COLUMNS = [
    "sweep_var",
    "repeat",
    "mean_diff",
    "std_diff",
    "kl",
    "ks_p",
    "mu_t",
    "sigma_t",
    "mu_e",
    "sigma_e",
    "variant",
]
METRICS = ("mean_diff", "std_diff", "kl", "ks_p")
ALL = Corrections(delta_n_scaling=True, common_neighbor=True)


@dataclass(frozen=True)
class SweepConfig:
    rows: int = 40
    cols: int = 40
    contiguity: str = "rook"
    torus: bool = False
    n_samples: int = 10_000
    repeats: int = 10
    seed: int = 20240601
    background_value: float = 0.0
    foreground_values: tuple[float, ...] = (1.0, 2.0, 3.0)
    workers: int = 1

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2 or self.n_samples < 2 or self.repeats < 1:
            raise ValueError("SweepConfig needs rows, cols, n_samples >= 2 and repeats >= 1")
        object.__setattr__(self, "foreground_values", tuple(float(v) for v in self.foreground_values))

    @property
    def n_vertices(self) -> int:
        return self.rows * self.cols

    def graph(self) -> WeightGraph:
        build = build_torus_grid if self.torus else build_bounded_grid
        return build(self.rows, self.cols, self.contiguity)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["foreground_values"] = list(self.foreground_values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        d = dict(d)
        if "foreground_values" in d:
            d["foreground_values"] = tuple(d["foreground_values"])
        return cls(**d)


def split_evenly(total: int, parts: int) -> list[int]:
    """``total`` split into ``parts`` near-equal shares, larger shares first."""
    q, r = divmod(total, parts)
    return [q + 1 if i < r else q for i in range(parts)]


def background_scheme(cfg: SweepConfig, b: float) -> ValueScheme:
    """Background of ``round(b N)`` plus foreground values sharing the rest."""
    if not 0.0 < b < 1.0:
        raise SchemeSizeMismatch(f"background proportion must lie in (0, 1), got {b}")
    n = cfg.n_vertices
    n_bg = int(math.floor(b * n + 0.5))
    shares = split_evenly(n - n_bg, len(cfg.foreground_values))
    if n_bg < 1 or min(shares) < 1:
        raise SchemeSizeMismatch(f"b={b} leaves an empty value on {n} cells")
    return ValueScheme.from_pairs([(cfg.background_value, n_bg), *zip(cfg.foreground_values, shares)])


def foreground_scheme(cfg: SweepConfig, n_each: int) -> ValueScheme:
    """Every foreground value of size ``n_each``; the background takes the rest."""
    n_bg = cfg.n_vertices - n_each * len(cfg.foreground_values)
    if n_each < 1 or n_bg < 1:
        raise SchemeSizeMismatch(f"{len(cfg.foreground_values)} x {n_each} does not fit {cfg.n_vertices} cells")
    return ValueScheme.from_pairs(
        [(cfg.background_value, n_bg), *((v, n_each) for v in cfg.foreground_values)]
    )


@dataclass(frozen=True)
class RepeatMetrics:
    repeat: int
    mean_diff: float
    std_diff: float
    kl: float
    ks_p: float
    mu_t: float
    sigma_t: float
    mu_e: float
    sigma_e: float


@dataclass
class SweepRow:
    """Metrics of one sweep value against one analytic variant."""

    sweep_value: float
    variant: str
    repeats: list[RepeatMetrics] = field(default_factory=list)

    def values(self, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.repeats])

    def aggregate(self, metric: str) -> tuple[float, float]:
        """Mean and standard deviation (ddof=1) across repeats."""
        v = self.values(metric)
        return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0

    def aggregates(self) -> dict[str, tuple[float, float]]:
        return {m: self.aggregate(m) for m in METRICS}


@dataclass
class SweepResult:
    kind: str
    sweep_var: str
    config: SweepConfig
    rows: list[SweepRow]
    tables: dict[str, list[dict]] = field(default_factory=dict)

    def row(self, value: float, variant: str) -> SweepRow:
        for r in self.rows:
            if r.variant == variant and math.isclose(r.sweep_value, value, rel_tol=0, abs_tol=1e-12):
                return r
        raise KeyError((value, variant))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in self.rows:
                for m in row.repeats:
                    w.writerow(
                        [
                            repr(row.sweep_value),
                            m.repeat,
                            *(repr(getattr(m, c)) for c in CSV_COLUMNS[2:-1]),
                            row.variant,
                        ]
                    )

    def write_table_csv(self, name: str, path) -> None:
        table = self.tables[name]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(table[0]))
            w.writeheader()
            for rec in table:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})

    def manifest(self, outputs: Sequence[str] = ()) -> dict:
        return {
            "sweep": self.kind,
            "sweep_var": self.sweep_var,
            "values": sorted({r.sweep_value for r in self.rows}),
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "tool_version": __version__,
            "outputs": list(outputs),
        }

    def write(self, out_dir, stem: str | None = None) -> dict:
        """Write the sweep CSV, extra tables and a JSON manifest to ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.kind
        paths = [out / f"{stem}.csv"]
        self.write_csv(paths[0])
        for name in sorted(self.tables):
            p = out / f"{stem}_{name}.csv"
            self.write_table_csv(name, p)
            paths.append(p)
        man = self.manifest([str(p) for p in paths])
        (out / f"{stem}_manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
        return man


def _metrics(repeat: int, e: EmpiricalDist, d: AnalyticDist) -> RepeatMetrics:
    diffs = standardized_diffs(d, e)
    return RepeatMetrics(
        repeat=repeat,
        mean_diff=diffs.mean_diff,
        std_diff=diffs.std_diff,
        kl=kl_divergence(e, d),
        ks_p=ks_test(e, d).p_value,
        mu_t=d.mean,
        sigma_t=d.std,
        mu_e=e.mean,
        sigma_e=e.std,
    )


def _laws(scheme: ValueScheme, g: WeightGraph, variants: dict[str, Corrections]) -> dict[str, AnalyticDist]:
    k = g.k_nominal
    return {name: analytic_distribution(scheme, k, c, g.delta_n) for name, c in variants.items()}


def _run_point(
    cfg: SweepConfig,
    value: float,
    scheme: ValueScheme,
    graph_for_repeat,
    variants: dict[str, Corrections],
    keep_pair_counts: bool = False,
):
    rows = {name: SweepRow(float(value), name) for name in variants}
    ensembles = []
    for r in range(cfg.repeats):
        g = graph_for_repeat(r)
        e = sample_distribution(
            scheme, g, cfg.n_samples, derive_seed(cfg.seed, r), cfg.workers, keep_pair_counts
        )
        for name, d in _laws(scheme, g, variants).items():
            rows[name].repeats.append(_metrics(r, e, d))
        ensembles.append((g, e))
    return list(rows.values()), ensembles


def independence_sweep(
    cfg: SweepConfig, b_values: Sequence[float] = (0.65, 0.55, 0.45, 0.35, 0.25)
) -> SweepResult:
    """Fit quality as the background proportion ``b`` shrinks."""
    g = cfg.graph()
    variants = {"corrected": ALL, "uncorrected": Corrections()}
    rows: list[SweepRow] = []
    for b in b_values:
        point_rows, _ = _run_point(cfg, b, background_scheme(cfg, b), lambda r: g, variants)
        rows.extend(point_rows)
    return SweepResult("independence", "b", cfg, rows)


def perturbation_sweep(
    cfg: SweepConfig, rho_values: Sequence[float] = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3), b: float = 0.65
) -> SweepResult:
    """Balanced edge flips at rate ``rho``; the analytic law keeps nominal k."""
    base = cfg.graph()
    scheme = background_scheme(cfg, b)
    variants = {"corrected": ALL, "uncorrected": Corrections()}
    rows: list[SweepRow] = []
    for i, rho in enumerate(rho_values):
        def graph_for(r, rho=rho, i=i):
            return perturb_balanced(base, rho, derive_seed(cfg.seed, r, i, 1))

        point_rows, _ = _run_point(cfg, rho, scheme, graph_for, variants)
        rows.extend(point_rows)
    return SweepResult("perturb", "rho", cfg, rows)


def systematic_sweep(
    cfg: SweepConfig,
    change_rates: Sequence[float] = (-0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15),
    b: float = 0.65,
) -> SweepResult:
    """Add or remove ``rate * k N`` random directed edges.

    ``corrected`` rescales the moments by the actual edge total;
    ``uncorrected`` keeps every other correction but assumes ``k N`` edges.
    """
    base = cfg.graph()
    kn = base.k_nominal * base.n_vertices
    scheme = background_scheme(cfg, b)
    variants = {"corrected": ALL, "uncorrected": replace(ALL, delta_n_scaling=False)}
    rows: list[SweepRow] = []
    for i, rate in enumerate(change_rates):
        delta = int(round(rate * kn))

        def graph_for(r, delta=delta, i=i):
            return perturb_systematic(base, delta, derive_seed(cfg.seed, r, i, 1))

        point_rows, _ = _run_point(cfg, rate, scheme, graph_for, variants)
        rows.extend(point_rows)
    return SweepResult("systematic", "change_rate", cfg, rows)


def common_neighbor_sweep(
    cfg: SweepConfig, n_values: Sequence[int] = tuple(range(200, 301, 20))
) -> SweepResult:
    """Equal-size foreground groups of growing size ``n``.

    Besides the distribution metrics, the ``same_value`` table lists the
    empirical mean of ``|S_pp|`` over all foreground values and samples,
    next to the analytic ``mu_pp`` with and without the common-neighbour
    adjustment (both rescaled to the actual edge total).
    """
    g = cfg.graph()
    variants = {"corrected": ALL, "uncorrected": replace(ALL, common_neighbor=False)}
    rows: list[SweepRow] = []
    table: list[dict] = []
    for n_each in n_values:
        scheme = foreground_scheme(cfg, n_each)
        point_rows, ensembles = _run_point(cfg, n_each, scheme, lambda r: g, variants, keep_pair_counts=True)
        rows.extend(point_rows)
        fg = [p for p in range(scheme.m) if p != scheme.background_index]
        per_repeat = [float(e.same_value_counts()[:, fg].mean()) for _, e in ensembles]
        k = g.k_nominal
        unc = corrected_moments(scheme, k, variants["uncorrected"], g.delta_n)
        cor = corrected_moments(scheme, k, variants["corrected"], g.delta_n)
        table.append(
            {
                "n": int(n_each),
                "empirical_spp": float(np.mean(per_repeat)),
                "empirical_spp_sd": float(np.std(per_repeat, ddof=1)) if len(per_repeat) > 1 else 0.0,
                "uncorrected_mu_pp": float(np.mean([unc.mu_pp(p) for p in fg])),
                "corrected_mu_pp": float(np.mean([cor.mu_pp(p) for p in fg])),
            }
        )
    return SweepResult("common-neighbor", "n", cfg, rows, {"same_value": table})


SWEEPS = {
    "independence": independence_sweep,
    "perturb": perturbation_sweep,
    "systematic": systematic_sweep,
    "common-neighbor": common_neighbor_sweep,
}
