"""Minimum-effort paths: poses inside a window should follow the quintic arc between its endpoints."""

from typing import List, Optional, Sequence

import numpy as np

from ..errors import DomainError
from ..kinematics import Pose, Skeleton, min_jerk_references
from .types import ConstraintResult, Tolerances


def c_eff(
    poses: Sequence[Pose],
    s: Skeleton,
    tol: Tolerances,
    reference: Optional[List[Pose]] = None,
) -> ConstraintResult:
    """
    Mean hinge on the Frobenius distance between each pose and its
    minimum-jerk reference.

    The reference depends on the endpoint poses only and is not
    differentiated; endpoint gradients are zero. ``grad_pose`` has shape
    (|W|, J, 3).

    Raises:
        DomainError: for windows shorter than 3 frames
    """
    size = len(poses)
    if size < 3:
        raise DomainError(f"effort window needs at least 3 frames, got {size}")
    if reference is None:
        reference = min_jerk_references(poses[0], poses[-1], 0, size - 1, range(size), s)

    terms = np.zeros(size)
    grad_pose = np.zeros((size,) + poses[0].joints.shape)
    active = np.zeros(size, dtype=bool)
    for i in range(1, size - 1):
        deviation = poses[i].joints - reference[i].joints
        distance = float(np.linalg.norm(deviation))
        if distance - tol.rho_eff > 0:
            active[i] = True
            terms[i] = (distance - tol.rho_eff) / size
            grad_pose[i] = deviation / (distance * size)
    return ConstraintResult(float(np.sum(terms)), grad_pose=grad_pose, selection=reference, active=active, terms=terms)
