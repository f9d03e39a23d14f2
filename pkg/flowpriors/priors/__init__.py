"""Physical-prior constraints, the weighted clip objective and the gradient checker."""

from .anchor import c_cam, c_dist
from .effort import c_eff
from .gradcheck import THRESHOLDS, finite_difference_check
from .objective import ClipData, ClipVariables, draw_window, total_objective
from .silhouette import c_silh
from .skeletal import BoneAssignment, c_skel
from .support import SupportSelection, c_com, contact_weights, select_support
from .types import (
    CONSTRAINT_NAMES,
    ConstraintResult,
    ObjectiveResult,
    PriorWeights,
    TeacherSet,
    Tolerances,
    load_prior_config,
    prior_config_from_dict,
)

__all__ = [
    "BoneAssignment",
    "CONSTRAINT_NAMES",
    "ClipData",
    "ClipVariables",
    "ConstraintResult",
    "ObjectiveResult",
    "PriorWeights",
    "SupportSelection",
    "THRESHOLDS",
    "TeacherSet",
    "Tolerances",
    "c_cam",
    "c_com",
    "c_dist",
    "c_eff",
    "c_silh",
    "c_skel",
    "contact_weights",
    "draw_window",
    "finite_difference_check",
    "load_prior_config",
    "prior_config_from_dict",
    "select_support",
    "total_objective",
]
