"""Empirical-likelihood comparison of spline regression models.

Fits additive and varying-coefficient B-spline regressions, turns their exact
leave-one-out prediction errors into per-observation scores, and tests whether
the two models predict equally well. A sharded variant tests whether one
additive component can be dropped when the data are split across workers.
"""

from .data_io import Dataset, load_csv, rescale_unit_interval
from .elr import Decision, ElrReport, ScoreVector, chi2_1_quantile, chi2_1_sf, elr_statistic, elr_test, power_approx
from .errors import DataError, ElrError, NumericalError
from .loocv import LoocvResult, ModelSpec, loocv_fast, loocv_naive, select_knot_counts
from .splines import BasisSpec, basis_matrix

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "DataError",
    "Dataset",
    "Decision",
    "ElrError",
    "ElrReport",
    "LoocvResult",
    "ModelSpec",
    "NumericalError",
    "ScoreVector",
    "basis_matrix",
    "chi2_1_quantile",
    "chi2_1_sf",
    "elr_statistic",
    "elr_test",
    "load_csv",
    "loocv_fast",
    "loocv_naive",
    "power_approx",
    "rescale_unit_interval",
    "select_knot_counts",
]
