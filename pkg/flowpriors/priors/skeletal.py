"""
Skeletal-surface coupling.

Every foreground pixel is lifted to 3D, assigned to its nearest bone, and its
flow is compared to the motion of that bone interpolated between the bone's
two joints. Deviations are tolerated up to a margin that grows with the
point's distance from the bone.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..camera import CameraParams, world_rays
from ..errors import DomainError
from ..fields.dense import DepthField, FlowField, MaskField
from ..kinematics import Pose, Skeleton, joint_motion, nearest_bones
from .types import ConstraintResult, Tolerances


@dataclass(frozen=True)
class BoneAssignment:
    """Frozen nearest-bone choice per foreground pixel (row-major order)."""

    bones: np.ndarray
    alphas: np.ndarray


def _unit(vectors: np.ndarray) -> tuple:
    norms = np.linalg.norm(vectors, axis=-1)
    units = np.divide(vectors, norms[..., None], out=np.zeros_like(vectors), where=norms[..., None] > 0)
    return units, norms


def c_skel(
    flow: FlowField,
    depth: DepthField,
    pose: Pose,
    pose_next: Pose,
    mask: MaskField,
    camera: CameraParams,
    s: Skeleton,
    tol: Tolerances,
    assignment: Optional[BoneAssignment] = None,
) -> ConstraintResult:
    """
    Hinge on the gap between pixel flow and interpolated bone motion.

    ``grad_pose`` has shape (2, J, 3) for (pose, pose_next).

    Raises:
        DomainError: if the mask is empty
    """
    foreground = mask.foreground
    count = int(foreground.sum())
    if count == 0:
        raise DomainError("skeletal coupling needs at least one foreground pixel")

    rays = world_rays(camera)[foreground]
    points = depth.values[foreground][:, None] * rays + camera.translation
    if assignment is None:
        bones, alphas, _ = nearest_bones(points, pose, s)
        assignment = BoneAssignment(bones, alphas)
    bones, alphas = assignment.bones, assignment.alphas
    starts = s.bone_parents[bones]
    ends = bones + 1

    anchors = pose.joints[starts] + alphas[:, None] * (pose.joints[ends] - pose.joints[starts])
    normals, bone_distance = _unit(points - anchors)

    deltas = joint_motion(pose, pose_next).deltas
    bone_motion = (1.0 - alphas)[:, None] * deltas[starts] + alphas[:, None] * deltas[ends]
    directions, residual = _unit(flow.values[foreground] - bone_motion)

    excess = residual - (tol.rho_min + tol.alpha * bone_distance)
    active = excess > 0
    value = float(np.sum(excess[active])) / count

    scale = active[:, None] / count
    grad_flow = np.zeros_like(flow.values)
    grad_flow[foreground] = directions * scale

    grad_depth = np.zeros_like(depth.values)
    grad_depth[foreground] = -tol.alpha * np.einsum("nk,nk->n", normals, rays) * active / count

    # d(value)/d(bone motion) = -direction; d(value)/d(anchor) = +alpha_tol * normal.
    toward_motion = directions * scale
    toward_anchor = tol.alpha * normals * scale
    w_start = (1.0 - alphas)[:, None]
    w_end = alphas[:, None]
    grad_pose = np.zeros((2,) + pose.joints.shape)
    np.add.at(grad_pose[0], starts, w_start * (toward_motion + toward_anchor))
    np.add.at(grad_pose[0], ends, w_end * (toward_motion + toward_anchor))
    np.add.at(grad_pose[1], starts, -w_start * toward_motion)
    np.add.at(grad_pose[1], ends, -w_end * toward_motion)

    return ConstraintResult(
        value,
        grad_depth=grad_depth,
        grad_flow=grad_flow,
        grad_pose=grad_pose,
        selection=assignment,
        active=active,
        terms=np.where(active, excess, 0.0) / count,
    )
