"""
Center-of-mass support.

The body's mass center, projected on the fitted ground plane, should lie
inside the convex hull of end effectors that touch the ground.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from ..camera import CameraParams, project_points
from ..fields.dense import DepthField, MaskField
from ..geometry import Plane, Polygon2D, convex_hull, polygon_closest_point, ransac_ground_plane
from ..kinematics import MassProfile, Pose, Skeleton, center_of_mass
from .types import ConstraintResult, Tolerances

logger = logging.getLogger(__name__)

CONTACT_MASK_DILATION = 2


@dataclass(frozen=True)
class SupportSelection:
    """Plane, contact joints and support polygon held fixed for one evaluation."""

    plane: Plane
    contacts: tuple
    polygon: Optional[Polygon2D]


def contact_weights(pose: Pose, plane: Plane, s: Skeleton, tol: Tolerances) -> np.ndarray:
    """exp(-h^2 / sigma^2) for every end effector, h = height above the plane."""
    heights = plane.height(pose.joints[list(s.end_effectors)])
    return np.exp(-(heights**2) / tol.sigma_contact**2)


def _on_mask(points: np.ndarray, mask: MaskField, camera: CameraParams) -> np.ndarray:
    dilated = ndimage.binary_dilation(mask.foreground, iterations=CONTACT_MASK_DILATION)
    uv, z = project_points(points, camera)
    inside = np.zeros(len(points), dtype=bool)
    for index, ((u, v), depth) in enumerate(zip(uv, z)):
        if not depth > 0 or not np.isfinite(u) or not np.isfinite(v):
            continue
        col, row = int(round(u)), int(round(v))
        if 0 <= row < mask.grid.height and 0 <= col < mask.grid.width:
            inside[index] = dilated[row, col]
    return inside


def select_support(
    pose: Pose,
    depth: DepthField,
    mask: MaskField,
    camera: CameraParams,
    s: Skeleton,
    tol: Tolerances,
    seed: int,
    restrict_to_mask: Optional[bool] = None,
) -> SupportSelection:
    """
    Fit the ground and pick contact end effectors and their hull.

    With ``restrict_to_mask`` (default ``tol.contacts_on_mask``) an effector
    only counts when it projects into the dilated foreground.
    """
    if restrict_to_mask is None:
        restrict_to_mask = tol.contacts_on_mask
    plane = ransac_ground_plane(depth, mask, camera, seed)
    effectors = np.array(s.end_effectors)
    touching = contact_weights(pose, plane, s, tol) >= tol.contact_threshold
    if restrict_to_mask:
        touching &= _on_mask(pose.joints[effectors], mask, camera)
    contacts = tuple(int(j) for j in effectors[touching])
    if not contacts:
        return SupportSelection(plane, contacts, None)
    polygon = convex_hull(plane.project_2d(pose.joints[list(contacts)]))
    return SupportSelection(plane, contacts, polygon)


def c_com(
    pose: Pose,
    depth: DepthField,
    mask: MaskField,
    camera: CameraParams,
    m: MassProfile,
    s: Skeleton,
    tol: Tolerances,
    seed: int,
    support: Optional[SupportSelection] = None,
    restrict_to_mask: Optional[bool] = None,
) -> ConstraintResult:
    """
    Exterior distance of the projected mass center from the support polygon.

    Zero when no end effector is in contact. Exterior distances up to
    ``tol.support_eps`` count as inside. The gradient reaches the pose through
    the mass center only; ``grad_pose`` has shape (J, 3).
    """
    if support is None:
        support = select_support(pose, depth, mask, camera, s, tol, seed, restrict_to_mask)
    grad_pose = np.zeros_like(pose.joints)
    if support.polygon is None:
        logger.debug("No end effector in ground contact; support term is zero")
        return ConstraintResult(0.0, grad_pose=grad_pose, selection=support, active=np.zeros(1, dtype=bool))

    center = center_of_mass(pose, m)
    query = support.plane.project_2d(center)
    distance, nearest = polygon_closest_point(query, support.polygon)
    if distance <= tol.support_eps:
        return ConstraintResult(0.0, grad_pose=grad_pose, selection=support, active=np.zeros(1, dtype=bool))

    g = (query - nearest) / distance
    e1, e2 = support.plane.basis()
    direction = g[0] * e1 + g[1] * e2
    grad_pose = m.weights[:, None] * direction[None, :]
    return ConstraintResult(float(distance), grad_pose=grad_pose, selection=support, active=np.ones(1, dtype=bool))
