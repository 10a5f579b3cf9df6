"""Estimation and inference."""

from .bootstrap import BootstrapResult, block_bootstrap_se
from .diagnostics import DfbetaResult, dfbeta, dfbeta_filter, pearson_test, vif, winsor_bounds, winsorize
from .ols import OLSFit, design_rank, ols_fit
from .randomized import RandomizedResult, nelson_kim_pvalue
from .tables import Inference, RegressionResult, RegressionSpec, Table, estimate, run_table, stars

__all__ = [
    "BootstrapResult", "block_bootstrap_se",
    "DfbetaResult", "dfbeta", "dfbeta_filter", "pearson_test", "vif", "winsor_bounds", "winsorize",
    "OLSFit", "design_rank", "ols_fit",
    "RandomizedResult", "nelson_kim_pvalue",
    "Inference", "RegressionResult", "RegressionSpec", "Table", "estimate", "run_table", "stars",
]
