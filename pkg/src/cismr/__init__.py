"""Weak-instrument-robust causal inference from two-sample summary statistics
in a single gene region, using estimated genetic factors as instruments."""

__version__ = "0.1.0"

from .errors import CisMRError, NumericalError, RareSelectionError, SelectionError, ValidationError
from .factors import FactorBasis, estimate_loadings, parse_rank_policy, scree, suggest_rank
from .heterogeneity import QResult, cochran_q
from .liml import LimlFit, fit_liml, liml_gradient, liml_objective, liml_variance, wald_interval, wald_test
from .moments import InstrumentTransform, MomentSystem, build_moments, factor_transform
from .pruning import PruneResult, prune, prune_indices, variant_instrument_set
from .psd import inv_sqrt, nearest_correlation, sqrt_psd, sym_eigen
from .robust import (
    ClrDraws,
    ConfidenceSet,
    TestResult,
    ar_test,
    clr_statistic,
    clr_test,
    invert_test,
    lm_test,
    st_decomposition,
)
from .selective import Selection, conditional_test, fit_sliml, pretest_factors, selective_interval
from .summary_data import CovariancePair, SummaryDataset, build_covariances, load_dataset, write_dataset

__all__ = [name for name in dir() if not name.startswith("_")]
