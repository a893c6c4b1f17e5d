"""Group-SLOPE penalized CP low-rank tensor regression with slice-level FDR control."""

__version__ = "0.1.0"

from .errors import DivergedError, FormatError, InvalidArgumentError, NumericalError
from .tensor import frontal_slice_norms, khatri_rao, mode3_fold, mode3_product, mode3_unfold
from .linalg import Rng, procrustes_h, spectral_norm, thin_svd
from .penalty import ChiQuantileParams, chi_quantile, group_slope_prox, lambda_chi_sequence, slope_prox
from .solvers import (
    Problem,
    SolverConfig,
    SolverResult,
    orthogonal_fast_path,
    solve_pdcae,
    solve_tbmm,
    solve_tglasso,
    solve_tlrr,
)
from .metrics import bic, compare_support, discovery, fdp, mse, mspe, rgee, tp_rate
from .experiments import SimulationSpec, gen_design, gen_response, gen_truth, run_fdr_study, run_study
