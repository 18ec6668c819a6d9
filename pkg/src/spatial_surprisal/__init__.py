"""Moran's I on discrete lattices, its analytic permutation law, and the
spatial self-information (surprisal) of an observed pattern."""

__version__ = "0.1.0"

from .analytic import (
    AnalyticDist,
    Corrections,
    PairMoments,
    analytic_distribution,
    apply_common_neighbor_correction,
    apply_delta_correction,
    approx_mean,
    approx_variance,
    ease_ratio,
    pair_moments,
    self_information,
    tail_probability,
)
from .graph import (
    WeightGraph,
    build_bounded_grid,
    build_torus_grid,
    perturb_balanced,
    perturb_systematic,
    read_edgelist,
    write_edgelist,
)
from .montecarlo import (
    EmpiricalDist,
    ExactDist,
    enumerate_exact,
    kl_divergence,
    ks_test,
    sample_distribution,
    standardized_diffs,
)
from .moran import (
    PairCounts,
    foreground_identity_check,
    moran_i,
    pair_counts,
    unscaled_from_counts,
    unscaled_moran,
)
from .scheme import Sample, ValueScheme, bucketize, extract_scheme, random_arrangement

__all__ = [name for name in dir() if not name.startswith("_")]
