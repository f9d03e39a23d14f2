"""
Skinned capsule humanoid.

Every bone carries a capsule: a cylinder around the bone capped by two
hemispheres. Capsule vertices follow their bone rigidly, except the proximal
hemisphere, which blends toward the parent bone so joints bend smoothly.
Garment-tagged vertices add a bounded offset that lags behind the motion of
their bone.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import ValidationError
from ..kinematics import JointAngles, Pose, Skeleton, bone_frames, fallback_axis, forward_kinematics

logger = logging.getLogger(__name__)

MIN_SUBDIVISIONS = 4
PARENT_BLEND = 0.5

# Capsule radius per bone, keyed by the bone's distal joint.
DEFAULT_RADII = {
    "left_hip": 0.08,
    "right_hip": 0.08,
    "spine1": 0.10,
    "left_knee": 0.07,
    "right_knee": 0.07,
    "spine2": 0.11,
    "left_ankle": 0.05,
    "right_ankle": 0.05,
    "spine3": 0.10,
    "left_foot": 0.03,
    "right_foot": 0.03,
    "neck": 0.05,
    "left_collar": 0.05,
    "right_collar": 0.05,
    "head": 0.09,
    "left_shoulder": 0.05,
    "right_shoulder": 0.05,
    "left_elbow": 0.045,
    "right_elbow": 0.045,
    "left_wrist": 0.04,
    "right_wrist": 0.04,
    "left_hand": 0.035,
    "right_hand": 0.035,
}

# Bones whose vertices wear a garment, keyed by distal joint.
GARMENT_BONES = ("spine1", "left_knee", "right_knee", "left_elbow", "right_elbow")


@dataclass(frozen=True)
class BodyProfile:
    """Limb radii (meters) and garment coverage; lengths come from the skeleton."""

    radii: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RADII))
    garment_bones: Tuple[str, ...] = GARMENT_BONES


@dataclass(frozen=True)
class GarmentParams:
    """First-order lag: time constant in seconds and offset cap in meters."""

    lag_seconds: float = 0.1
    max_offset: float = 0.008


@dataclass(frozen=True, eq=False)
class Humanoid:
    """
    Template mesh in the rest pose with linear-blend skinning.

    ``skin_bones`` and ``skin_weights`` are (N, 2): each vertex blends at most
    two bones; unused slots carry weight 0.
    """

    skeleton: Skeleton
    vertices: np.ndarray
    triangles: np.ndarray
    skin_bones: np.ndarray
    skin_weights: np.ndarray
    owner: np.ndarray
    garment_gain: np.ndarray

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @property
    def garment_tagged(self) -> np.ndarray:
        return self.garment_gain > 0

    def check(self) -> None:
        """Raise ValidationError unless the mesh and skinning invariants hold."""
        if np.any(self.skin_weights < 0) or np.max(np.abs(self.skin_weights.sum(axis=1) - 1.0)) > 1e-6:
            raise ValidationError("skinning weights must be non-negative and sum to 1")
        if self.triangles.min() < 0 or self.triangles.max() >= self.vertex_count:
            raise ValidationError("triangle references a missing vertex")


@dataclass(frozen=True, eq=False)
class GarmentState:
    """Current garment offset per bone, meters, shape (B, 3)."""

    offsets: np.ndarray

    @classmethod
    def zeros(cls, s: Skeleton) -> "GarmentState":
        return cls(np.zeros((s.bone_count, 3)))


def _capsule(
    start: np.ndarray, end: np.ndarray, radius: float, subdivisions: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Capsule vertices, triangles and each vertex's hemisphere level.

    Level k in [0, s] counts rings from the proximal pole (0) to the proximal
    equator (s); all other vertices get level s.
    """
    around = 8 * subdivisions
    axis = end - start
    length = np.linalg.norm(axis)
    axis = axis / length
    e1 = fallback_axis(axis)
    e2 = np.cross(axis, e1)
    angles = 2.0 * np.pi * np.arange(around) / around
    circle = np.cos(angles)[:, None] * e1 + np.sin(angles)[:, None] * e2

    polar = 0.5 * np.pi * np.arange(1, subdivisions + 1) / subdivisions
    rings, levels = [], []
    for k, theta in enumerate(polar, start=1):
        rings.append(start - radius * np.cos(theta) * axis + radius * np.sin(theta) * circle)
        levels.append(k)
    segments = 2 * subdivisions
    for j in range(1, segments):
        rings.append(start + (j / segments) * length * axis + radius * circle)
        levels.append(subdivisions)
    for theta in polar[::-1]:
        rings.append(end + radius * np.cos(theta) * axis + radius * np.sin(theta) * circle)
        levels.append(subdivisions)

    bottom = start - radius * axis
    top = end + radius * axis
    vertices = np.vstack([bottom[None, :]] + rings + [top[None, :]])
    vertex_levels = np.concatenate([[0]] + [np.full(around, level) for level in levels] + [[subdivisions]])

    count = len(rings)
    top_index = 1 + count * around
    ring_start = lambda r: 1 + r * around  # noqa: E731
    triangles = []
    nxt = (np.arange(around) + 1) % around
    cur = np.arange(around)
    triangles.append(np.stack([np.zeros(around, dtype=np.int64), ring_start(0) + nxt, ring_start(0) + cur], axis=1))
    for r in range(count - 1):
        a, b = ring_start(r), ring_start(r + 1)
        triangles.append(np.stack([a + cur, a + nxt, b + nxt], axis=1))
        triangles.append(np.stack([a + cur, b + nxt, b + cur], axis=1))
    last = ring_start(count - 1)
    triangles.append(np.stack([np.full(around, top_index), last + cur, last + nxt], axis=1))
    return vertices, np.vstack(triangles), vertex_levels


def build_humanoid(
    s: Skeleton,
    profile: Optional[BodyProfile] = None,
    subdivisions: int = 5,
    seed: int = 0,
) -> Humanoid:
    """
    Build the capsule body in the skeleton's rest pose.

    The geometry does not depend on ``seed``; the seed only draws per-vertex
    garment gains in [0.5, 1].

    Raises:
        ValidationError: for fewer than 4 subdivisions or a non-positive radius
    """
    if subdivisions < MIN_SUBDIVISIONS:
        raise ValidationError(f"subdivisions must be at least {MIN_SUBDIVISIONS}, got {subdivisions}")
    profile = profile or BodyProfile()
    rest = s.rest_pose().joints
    garment_bones = {s.index(name) - 1 for name in profile.garment_bones}

    vertices, triangles, bones, weights, owners, tagged = [], [], [], [], [], []
    offset = 0
    for bone in range(s.bone_count):
        child = bone + 1
        radius = profile.radii.get(s.names[child])
        if radius is None or not radius > 0:
            raise ValidationError(f"capsule radius for bone ending at {s.names[child]} must be positive")
        start, end = rest[s.parents[child]], rest[child]
        capsule_vertices, capsule_triangles, levels = _capsule(start, end, radius, subdivisions)
        count = len(capsule_vertices)
        parent = s.parent_bone[bone]
        if parent >= 0:
            to_parent = PARENT_BLEND * (1.0 - levels / subdivisions)
        else:
            to_parent = np.zeros(count)
            parent = bone
        vertices.append(capsule_vertices)
        triangles.append(capsule_triangles + offset)
        bones.append(np.stack([np.full(count, bone), np.full(count, parent)], axis=1))
        weights.append(np.stack([1.0 - to_parent, to_parent], axis=1))
        owners.append(np.full(count, bone))
        tagged.append(np.full(count, bone in garment_bones))
        offset += count

    rng = np.random.default_rng(seed)
    tagged_mask = np.concatenate(tagged)
    gains = np.where(tagged_mask, rng.uniform(0.5, 1.0, len(tagged_mask)), 0.0)
    humanoid = Humanoid(
        skeleton=s,
        vertices=np.vstack(vertices),
        triangles=np.vstack(triangles).astype(np.int64),
        skin_bones=np.vstack(bones).astype(np.int64),
        skin_weights=np.vstack(weights),
        owner=np.concatenate(owners),
        garment_gain=gains,
    )
    humanoid.check()
    logger.debug(f"Built humanoid: {humanoid.vertex_count} vertices, {humanoid.triangle_count} triangles")
    return humanoid


def bone_transforms(q: JointAngles, s: Skeleton) -> Tuple[np.ndarray, np.ndarray, Pose]:
    """Per-bone (rotation, proximal joint position) and the posed skeleton."""
    frames = bone_frames(q, s)
    pose = forward_kinematics(q, s)
    return frames, pose.joints[s.bone_parents], pose


def skin_vertices(h: Humanoid, q: JointAngles, garment: Optional[GarmentState] = None) -> np.ndarray:
    """
    Linear-blend skinning plus garment offsets.

    Each bone maps a rest vertex v to ``P_start + G (v - rest_start)``.
    """
    s = h.skeleton
    rotations, starts, _ = bone_transforms(q, s)
    rest_starts = s.rest_pose().joints[s.bone_parents]
    posed = np.zeros_like(h.vertices)
    for slot in range(h.skin_bones.shape[1]):
        bones = h.skin_bones[:, slot]
        local = h.vertices - rest_starts[bones]
        moved = np.einsum("nij,nj->ni", rotations[bones], local) + starts[bones]
        posed += h.skin_weights[:, slot, None] * moved
    if garment is not None:
        posed += h.garment_gain[:, None] * garment.offsets[h.owner]
    return posed


def advance_garment(
    state: GarmentState,
    previous: Pose,
    current: Pose,
    s: Skeleton,
    params: GarmentParams,
    dt: float,
) -> GarmentState:
    """
    One lag step.

    The target offset opposes the velocity of each bone's midpoint relative to
    its proximal joint; the offset relaxes toward it with time constant
    ``params.lag_seconds``, stays perpendicular to the bone and never exceeds
    ``params.max_offset``.
    """
    starts, ends = s.bone_parents, np.arange(1, s.joint_count)
    relative = 0.5 * ((current.joints[ends] - previous.joints[ends]) - (current.joints[starts] - previous.joints[starts]))
    directions = current.joints[ends] - current.joints[starts]
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    def perpendicular(vectors: np.ndarray) -> np.ndarray:
        return vectors - np.einsum("bk,bk->b", vectors, directions)[:, None] * directions

    def capped(vectors: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        factor = np.minimum(1.0, np.divide(params.max_offset, norms, out=np.ones_like(norms), where=norms > 0))
        return vectors * factor

    target = capped(-params.lag_seconds * perpendicular(relative) / dt)
    decay = np.exp(-dt / params.lag_seconds)
    offsets = capped(perpendicular(decay * state.offsets + (1.0 - decay) * target))
    return GarmentState(offsets)
