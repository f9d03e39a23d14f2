"""Anchoring to noisy teachers and per-frame intrinsics consistency."""

from typing import Sequence

import numpy as np

from ..camera import CameraParams
from ..errors import DomainError
from ..fields.dense import DepthField, MaskField
from ..kinematics import Pose
from .types import ConstraintResult, Tolerances


def c_dist(
    depth: DepthField,
    pose: Pose,
    teacher_depth: DepthField,
    teacher_pose: Pose,
    mask: MaskField,
    tol: Tolerances,
) -> ConstraintResult:
    """
    Margin hinges on the depth gap (averaged over the whole grid) and on the
    per-joint position gap (averaged over joints).

    ``mask`` is accepted for signature symmetry; the depth term is not
    restricted to the foreground.
    """
    if teacher_depth.grid != depth.grid:
        raise DomainError("teacher depth grid does not match the prediction")
    gap = depth.values - teacher_depth.values
    depth_excess = np.abs(gap) - tol.rho_depth
    depth_active = depth_excess > 0
    depth_term = float(np.sum(depth_excess[depth_active])) / depth.grid.size
    grad_depth = np.where(depth_active, np.sign(gap), 0.0) / depth.grid.size

    offsets = pose.joints - teacher_pose.joints
    distances = np.linalg.norm(offsets, axis=1)
    joint_active = distances - tol.rho_pose > 0
    joints = len(distances)
    pose_term = float(np.sum(distances[joint_active] - tol.rho_pose)) / joints
    grad_pose = np.zeros_like(offsets)
    grad_pose[joint_active] = offsets[joint_active] / distances[joint_active, None] / joints

    return ConstraintResult(
        depth_term + pose_term,
        grad_depth=grad_depth,
        grad_pose=grad_pose,
        active=np.concatenate([depth_active.ravel(), joint_active]),
        terms=np.concatenate(
            [
                np.where(depth_active, depth_excess, 0.0).ravel() / depth.grid.size,
                np.where(joint_active, distances - tol.rho_pose, 0.0) / joints,
            ]
        ),
    )


def c_cam(cameras: Sequence[CameraParams]) -> ConstraintResult:
    """
    Mean pairwise squared distance between normalized intrinsics,
    (1/T^2) sum_ij |K_i - K_j|^2 = (2/T) sum_i |K_i - mean K|^2.

    ``grad_intrinsics`` has shape (T, 4).
    """
    count = len(cameras)
    if count < 2:
        raise DomainError(f"intrinsics consistency needs at least 2 frames, got {count}")
    intrinsics = np.stack([c.intrinsics for c in cameras])
    # Offsets from the first frame keep identical intrinsics at exactly zero.
    offsets = intrinsics - intrinsics[0]
    total = offsets.sum(axis=0)
    value = 2.0 / count * float(np.sum(offsets * offsets)) - 2.0 / count**2 * float(np.sum(total * total))
    value = max(value, 0.0)
    centered = offsets - total / count
    return ConstraintResult(value, grad_intrinsics=4.0 / count * centered)
