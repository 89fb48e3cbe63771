"""Combination tests for independent p-values with hard power bounds."""

from .alternatives import AlternativeSpec, SummandFamily, stouffer_analytic_power, summand_cdf
from .bounded_dist import (
    BoundPair,
    Grid,
    GridDistribution,
    convolve_grid,
    convolve_sequence,
    discretize,
    max_combine,
    quantile_bounds,
    self_convolve,
    tail_bounds,
)
from .combiners import (
    PValueInterval,
    StatFamilyResult,
    combined_pvalue,
    fisher_stats,
    gaussian_stats,
    statistic,
    stouffer_stats,
    t_lrt_stat,
    two_sided_from_one_sided,
)
from .errors import (
    ConvergenceError,
    IncompatibleGridError,
    InvalidConvolutionError,
    InvalidGridError,
    InvalidInputError,
    MetaCombineError,
    NumericDegradationError,
    ResolutionError,
)
from .methods import Family, Side, TestMethod
from .power import (
    CriticalBounds,
    PowerInterval,
    calibrate_delta,
    critical_bounds,
    mc_power,
    power_bounds,
    power_curve,
)
from .special import chisq_quantile_even, chisq_sf_even, norm_cdf, norm_quantile

__version__ = "0.1.0"
