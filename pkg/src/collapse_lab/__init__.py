"""Numerical laboratory for neural-collapse geometry of softmax classifiers."""
__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import CollapseLabError, InvalidArgument, NonConverged, NumericFailure, UnsupportedNorm
from .final_layer import (
    ClassifierOutputs,
    SolverSettings,
    collapse_to_means,
    minimize_phi_on_ball,
    minimize_risk_on_ball,
    project_lp_ball,
    project_ones_complement,
)
from .loss import LabeledPointSet, grad_phi, hess_phi, phi, risk, softmax
from .metrics import CollapseReport, collapse_report
from .penultimate import (
    PenultimateState,
    center_of_mass,
    check_isometry,
    optimize_penultimate,
    project_spectral,
)
from .simplex import SimplexConfig, pairwise_distance_sq, simplex_l2, simplex_lp, vertex
