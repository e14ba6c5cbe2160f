"""Shift-policy effect estimation with Super Learner nuisances and TMLE."""

from .core import (
    AnalysisFrame,
    DegenerateOutcomeError,
    OutcomeScaler,
    ShiftEstimate,
    ShiftPolicy,
    apply_shift,
    fit_scaler,
    shift_frame,
)
from .density_ratio import build_stack, estimate_density_ratio
from .learners import LearnerSpec, default_library
from .super_learner import ensemble_predict, fit_super_learner, make_folds
from .tmle import estimate_shift, influence_curve, run_tmle, target, wald_interval

__version__ = "0.1.0"

__all__ = [
    "AnalysisFrame",
    "DegenerateOutcomeError",
    "LearnerSpec",
    "OutcomeScaler",
    "ShiftEstimate",
    "ShiftPolicy",
    "apply_shift",
    "build_stack",
    "default_library",
    "ensemble_predict",
    "estimate_density_ratio",
    "estimate_shift",
    "fit_scaler",
    "fit_super_learner",
    "influence_curve",
    "make_folds",
    "run_tmle",
    "shift_frame",
    "target",
    "wald_interval",
]
