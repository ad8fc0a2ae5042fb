"""Robust Bayesian functional principal component analysis.

Annealed-SMC fits of skew-normal / skew-t factor models for functional
data, with posterior covariance summaries, evidence-based model
comparison, robust outlier detection, and the simulation designs used to
benchmark them.
"""

from ._core import (
    BenchRow,
    CompareRow,
    Dataset,
    FitResult,
    FpcaSummary,
    NaiveResult,
    OutlierReport,
    Truth,
    __version__,
    bench,
    chi2_quantile,
    compare,
    detect,
    eigen_fpca,
    fit,
    l2_cov,
    naive,
    pc_error,
    simulate,
)

__all__ = [
    "BenchRow",
    "CompareRow",
    "Dataset",
    "FitResult",
    "FpcaSummary",
    "NaiveResult",
    "OutlierReport",
    "Truth",
    "__version__",
    "bench",
    "chi2_quantile",
    "compare",
    "detect",
    "eigen_fpca",
    "fit",
    "l2_cov",
    "naive",
    "pc_error",
    "simulate",
]
