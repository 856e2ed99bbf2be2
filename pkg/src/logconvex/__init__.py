"""Logarithmic convexity, harmonic weights and initial-data reconstruction
for heat-type, subdiffusive, analytic and fractional Ornstein-Uhlenbeck
evolutions."""

from .convexity import ConvexityForm, ConvexityReport, backward_uniqueness_probe, convexity_report, fit_min_constant
from .frac_ou import (
    FourierGrid,
    FracOUParams,
    GridState,
    LatticeBallRegion,
    fd_solve,
    fourier_solve,
    geom_check,
    invariant_covariance,
    weighted_norm,
)
from .inverse import (
    AdmissibleSet,
    IntervalMask,
    make_problem,
    reconstruct,
    spectral_forward,
    stability_curve,
)
from .mittag_leffler import DomainError, MLParams, caputo_apply, ml_eval, ml_eval_array
from .presets import PRESETS, ExperimentConfig, emit_tables, run_preset
from .spectral import Trajectory, dirichlet_laplacian_model, evolve, symmetrized_drift_model, transport_trajectory
from .weight import Sector, matrix_sector_estimate, weight_f, weight_h, weight_lower_bound, weight_w

__version__ = "0.1.0"
