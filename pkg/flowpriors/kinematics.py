"""
Articulated kinematics for the 24-joint skeleton.

Joint angles are stored per bone as local axis-angle vectors. A bone's global
rotation is its parent bone's global rotation composed with its own local
rotation; bones hanging off the root use the identity as parent rotation. In
the rest pose every bone points along its stored rest direction.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DomainError, ValidationError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_SKELETON_FILE = DATA_DIR / "smpl24_skeleton.txt"
DEFAULT_MASS_FILE = DATA_DIR / "deleva_mass.txt"

END_EFFECTOR_NAMES = ("left_foot", "right_foot", "left_hand", "right_hand", "head")
MIN_BONE_LENGTH = 0.01
MAX_BONE_LENGTH = 1.0
_PARALLEL_EPS = 1e-12


def _readonly(values, dtype=np.float64) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Skeleton:
    """
    Kinematic tree.

    Joints are ordered so that every parent precedes its children. Bone ``b``
    connects ``parents[b + 1]`` to joint ``b + 1``.
    """

    names: Tuple[str, ...]
    parents: np.ndarray
    rest_offsets: np.ndarray
    end_effectors: Tuple[int, ...]

    def __post_init__(self):
        parents = _readonly(self.parents, np.int64)
        offsets = _readonly(self.rest_offsets)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "rest_offsets", offsets)
        object.__setattr__(self, "end_effectors", tuple(int(j) for j in self.end_effectors))
        self._validate()
        lengths = np.linalg.norm(offsets[1:], axis=1)
        object.__setattr__(self, "rest_lengths", _readonly(lengths))
        object.__setattr__(self, "rest_directions", _readonly(offsets[1:] / lengths[:, None]))
        # Bone index of each joint's incoming bone; -1 for the root.
        object.__setattr__(self, "parent_bone", _readonly(parents[1:] - 1, np.int64))

    def _validate(self) -> None:
        count = len(self.names)
        if self.parents.shape != (count,) or self.rest_offsets.shape != (count, 3):
            raise ValidationError("skeleton names, parents and offsets disagree in length")
        if int(np.sum(self.parents < 0)) != 1 or self.parents[0] >= 0:
            raise ValidationError("skeleton must have exactly one root, listed first")
        for joint in range(1, count):
            if not 0 <= self.parents[joint] < joint:
                raise ValidationError(
                    f"joint {self.names[joint]} has parent {self.parents[joint]}; parents must precede children"
                )
        lengths = np.linalg.norm(self.rest_offsets[1:], axis=1)
        if np.any(lengths <= 0):
            raise ValidationError("skeleton has a zero-length rest bone")
        for joint in self.end_effectors:
            if not 0 <= joint < count:
                raise ValidationError(f"end effector index {joint} out of range")

    @property
    def joint_count(self) -> int:
        return len(self.names)

    @property
    def bone_count(self) -> int:
        return len(self.names) - 1

    @property
    def bones(self) -> List[Tuple[int, int]]:
        return [(int(self.parents[j]), j) for j in range(1, self.joint_count)]

    @property
    def bone_parents(self) -> np.ndarray:
        """Proximal joint index per bone."""
        return self.parents[1:]

    @property
    def bone_children(self) -> np.ndarray:
        """Distal joint index per bone."""
        return np.arange(1, self.joint_count)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown joint name {name!r}")

    def rest_pose(self) -> "Pose":
        joints = np.zeros((self.joint_count, 3))
        joints[0] = self.rest_offsets[0]
        for joint in range(1, self.joint_count):
            joints[joint] = joints[self.parents[joint]] + self.rest_offsets[joint]
        return Pose(joints)


@dataclass(frozen=True, eq=False)
class Pose:
    """World-space joint positions, meters, shape (J, 3)."""

    joints: np.ndarray

    def __post_init__(self):
        joints = _readonly(self.joints)
        if joints.ndim != 2 or joints.shape[1] != 3:
            raise ValidationError(f"pose must be (J, 3), got shape {joints.shape}")
        object.__setattr__(self, "joints", joints)

    def bone_lengths(self, s: Skeleton) -> np.ndarray:
        return np.linalg.norm(self.joints[1:] - self.joints[s.bone_parents], axis=1)

    def violations(self, s: Skeleton) -> List[str]:
        """Invariant rules this pose breaks for the given skeleton."""
        problems = []
        if self.joints.shape[0] != s.joint_count:
            return [f"pose has {self.joints.shape[0]} joints, expected {s.joint_count}"]
        if not np.all(np.isfinite(self.joints)):
            problems.append("pose finite")
        lengths = self.bone_lengths(s)
        if not np.all((lengths > MIN_BONE_LENGTH) & (lengths < MAX_BONE_LENGTH)):
            problems.append("bone length in (0.01, 1.0)")
        return problems

    def translated(self, offset) -> "Pose":
        return Pose(self.joints + np.asarray(offset, dtype=np.float64))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.joints, other.joints)

    def __hash__(self) -> int:
        return hash(self.joints.tobytes())


@dataclass(frozen=True, eq=False)
class JointAngles:
    """
    Local joint coordinates q.

    Attributes:
        root: Root joint position, meters
        rotvecs: Per-bone local axis-angle, radians, shape (B, 3)
        lengths: Per-bone length, meters, shape (B,)
    """

    root: np.ndarray
    rotvecs: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        root = _readonly(self.root)
        rotvecs = _readonly(self.rotvecs)
        lengths = _readonly(self.lengths)
        if root.shape != (3,) or rotvecs.ndim != 2 or rotvecs.shape[1] != 3:
            raise ValidationError("joint angles need a 3-vector root and (B, 3) rotation vectors")
        if lengths.shape != (rotvecs.shape[0],):
            raise ValidationError("joint angles need one length per bone")
        if np.any(lengths <= 0):
            raise ValidationError("bone lengths must be positive")
        if np.any(np.linalg.norm(rotvecs, axis=1) > np.pi + 1e-12):
            raise ValidationError("axis-angle magnitude must not exceed pi")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "rotvecs", rotvecs)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def rest(cls, s: Skeleton, root=None) -> "JointAngles":
        root = s.rest_offsets[0] if root is None else root
        return cls(np.asarray(root, dtype=np.float64), np.zeros((s.bone_count, 3)), s.rest_lengths)

    def replace(self, root=None, rotvecs=None, lengths=None) -> "JointAngles":
        return JointAngles(
            self.root if root is None else root,
            self.rotvecs if rotvecs is None else rotvecs,
            self.lengths if lengths is None else lengths,
        )

    def interpolate(self, other: "JointAngles", phi: float, tau: float) -> "JointAngles":
        """Root and angles blend by ``phi``; lengths blend linearly by ``tau``."""
        return JointAngles(
            self.root + (other.root - self.root) * phi,
            self.rotvecs + (other.rotvecs - self.rotvecs) * phi,
            self.lengths + (other.lengths - self.lengths) * tau,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, JointAngles):
            return NotImplemented
        return (
            np.array_equal(self.root, other.root)
            and np.array_equal(self.rotvecs, other.rotvecs)
            and np.array_equal(self.lengths, other.lengths)
        )

    def __hash__(self) -> int:
        return hash((self.root.tobytes(), self.rotvecs.tobytes(), self.lengths.tobytes()))


@dataclass(frozen=True, eq=False)
class JointMotion:
    """Per-joint displacement between consecutive frames, meters, shape (J, 3)."""

    deltas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "deltas", _readonly(self.deltas))


@dataclass(frozen=True, eq=False)
class MassProfile:
    """Per-joint mass weights summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        weights = _readonly(self.weights)
        if weights.ndim != 1:
            raise ValidationError("mass weights must be a vector")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValidationError("mass weights must be finite and non-negative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValidationError(f"mass weights sum to {weights.sum():.12g}, expected 1")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def normalized(cls, raw: Sequence[float]) -> "MassProfile":
        raw = np.asarray(raw, dtype=np.float64)
        total = raw.sum()
        if not total > 0:
            raise ValidationError("mass weights must have a positive total")
        return cls(raw / total)

    @classmethod
    def uniform(cls, joint_count: int) -> "MassProfile":
        return cls(np.full(joint_count, 1.0 / joint_count))

    @classmethod
    def delta(cls, joint_count: int, joint: int) -> "MassProfile":
        weights = np.zeros(joint_count)
        weights[joint] = 1.0
        return cls(weights)


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------


def _data_lines(path: Path) -> List[Tuple[int, List[str]]]:
    rows = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if text:
            rows.append((number, text.split()))
    return rows


def load_skeleton(path: Union[str, Path, None] = None) -> Skeleton:
    """
    Load a skeleton file with lines ``name parent_index rest_dx rest_dy rest_dz``.

    Raises:
        ValidationError: on malformed lines or a topology that is not a rooted tree
    """
    path = Path(path) if path is not None else DEFAULT_SKELETON_FILE
    names, parents, offsets = [], [], []
    for number, parts in _data_lines(path):
        if len(parts) != 5:
            raise ValidationError(f"{path}:{number}: expected 5 columns, got {len(parts)}")
        try:
            parents.append(int(parts[1]))
            offsets.append([float(value) for value in parts[2:]])
        except ValueError:
            raise ValidationError(f"{path}:{number}: non-numeric skeleton entry")
        names.append(parts[0])
    effectors = [names.index(name) for name in END_EFFECTOR_NAMES if name in names]
    skeleton = Skeleton(tuple(names), np.array(parents), np.array(offsets), tuple(effectors))
    logger.debug(f"Loaded skeleton with {skeleton.joint_count} joints from {path}")
    return skeleton


def load_mass_profile(s: Skeleton, path: Union[str, Path, None] = None) -> MassProfile:
    """Load ``name weight`` lines, ordered by the skeleton's joint names, and normalize."""
    path = Path(path) if path is not None else DEFAULT_MASS_FILE
    raw = {}
    for number, parts in _data_lines(path):
        if len(parts) != 2:
            raise ValidationError(f"{path}:{number}: expected 'name weight'")
        try:
            raw[parts[0]] = float(parts[1])
        except ValueError:
            raise ValidationError(f"{path}:{number}: non-numeric weight {parts[1]!r}")
    missing = [name for name in s.names if name not in raw]
    extra = [name for name in raw if name not in s.names]
    if missing or extra:
        raise ValidationError(f"mass profile does not match skeleton (missing {missing}, unknown {extra})")
    return MassProfile.normalized([raw[name] for name in s.names])


@lru_cache(maxsize=1)
def default_skeleton() -> Skeleton:
    return load_skeleton()


@lru_cache(maxsize=1)
def default_mass_profile() -> MassProfile:
    return load_mass_profile(default_skeleton())


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------


def fallback_axis(direction: np.ndarray) -> np.ndarray:
    """
    Unit axis perpendicular to ``direction``.

    Crosses the canonical axis least aligned with ``direction`` (lowest index on
    ties) with ``direction``. Used for anti-parallel IK and for ground-plane bases.
    """
    direction = np.asarray(direction, dtype=np.float64)
    canonical = np.zeros(3)
    canonical[int(np.argmin(np.abs(direction)))] = 1.0
    axis = np.cross(canonical, direction)
    return axis / np.linalg.norm(axis)


def minimal_rotation(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """
    Axis-angle vector of the smallest rotation taking ``source`` onto ``target``.

    Both inputs must be unit vectors. Anti-parallel inputs rotate by pi about
    ``fallback_axis(source)``.
    """
    cross = np.cross(source, target)
    sin_angle = np.linalg.norm(cross)
    cos_angle = float(np.dot(source, target))
    if sin_angle <= _PARALLEL_EPS:
        if cos_angle > 0:
            return np.zeros(3)
        return np.pi * fallback_axis(source)
    return cross / sin_angle * np.arctan2(sin_angle, cos_angle)


def bone_frames(q: JointAngles, s: Skeleton) -> np.ndarray:
    """Global rotation of every bone, shape (B, 3, 3)."""
    local = Rotation.from_rotvec(np.array(q.rotvecs, dtype=float)).as_matrix()
    frames = np.empty_like(local)
    for bone in range(s.bone_count):
        parent = s.parent_bone[bone]
        frames[bone] = local[bone] if parent < 0 else frames[parent] @ local[bone]
    return frames


def forward_kinematics(q: JointAngles, s: Skeleton) -> Pose:
    """
    Joint positions from local coordinates.

    The root sits at ``q.root``; each child is its parent plus the bone length
    times the bone's global rotation applied to its rest direction.
    """
    frames = bone_frames(q, s)
    joints = np.empty((s.joint_count, 3))
    joints[0] = q.root
    for bone in range(s.bone_count):
        child = bone + 1
        joints[child] = joints[s.parents[child]] + q.lengths[bone] * (frames[bone] @ s.rest_directions[bone])
    return Pose(joints)


def inverse_kinematics(p: Pose, s: Skeleton) -> JointAngles:
    """
    Roll-free local coordinates reproducing ``p``.

    Walks from the root to the leaves; each bone gets the minimal rotation
    taking its rest direction to the observed direction expressed in the parent
    bone's frame.

    Raises:
        ValidationError: if a bone has zero length
    """
    if p.joints.shape != (s.joint_count, 3):
        raise ValidationError(f"pose has shape {p.joints.shape}, expected ({s.joint_count}, 3)")
    vectors = p.joints[1:] - p.joints[s.bone_parents]
    lengths = np.linalg.norm(vectors, axis=1)
    if np.any(lengths <= 0) or not np.all(np.isfinite(lengths)):
        bad = int(np.argmin(lengths))
        raise ValidationError(f"bone {s.names[s.bone_parents[bad]]}->{s.names[bad + 1]} has zero length")
    rotvecs = np.zeros((s.bone_count, 3))
    frames = np.empty((s.bone_count, 3, 3))
    for bone in range(s.bone_count):
        parent = s.parent_bone[bone]
        parent_frame = np.eye(3) if parent < 0 else frames[parent]
        local_direction = parent_frame.T @ (vectors[bone] / lengths[bone])
        rotvecs[bone] = minimal_rotation(s.rest_directions[bone], local_direction)
        frames[bone] = parent_frame @ Rotation.from_rotvec(np.array(rotvecs[bone], dtype=float)).as_matrix()
    return JointAngles(p.joints[0].copy(), rotvecs, lengths)


# ---------------------------------------------------------------------------
# Minimum-jerk references
# ---------------------------------------------------------------------------


def _check_tau(tau: float) -> float:
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    return float(tau)


def min_jerk_phi(tau: float) -> float:
    """Quintic minimum-jerk profile 10t^3 - 15t^4 + 6t^5."""
    t = _check_tau(tau)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def min_jerk_derivative(tau: float, order: int = 1) -> float:
    """First, second or third derivative of the quintic profile."""
    t = _check_tau(tau)
    if order == 1:
        return 30.0 * t * t * (1.0 - t) ** 2
    if order == 2:
        return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    if order == 3:
        return 60.0 * (1.0 - 6.0 * t + 6.0 * t * t)
    raise DomainError(f"derivative order must be 1, 2 or 3, got {order}")


def _window_tau(i0: int, iT: int, i: int) -> float:
    if i0 == iT:
        raise DomainError(f"minimum-jerk window needs distinct endpoints, got {i0} == {iT}")
    lo, hi = min(i0, iT), max(i0, iT)
    if not lo <= i <= hi:
        raise DomainError(f"frame {i} outside window [{lo}, {hi}]")
    return (i - i0) / (iT - i0)


def min_jerk_references(p0: Pose, pT: Pose, i0: int, iT: int, frames: Sequence[int], s: Skeleton) -> List[Pose]:
    """``min_jerk_reference`` for several frames, solving IK once per endpoint."""
    q0 = inverse_kinematics(p0, s)
    qT = inverse_kinematics(pT, s)
    references = []
    for i in frames:
        tau = _window_tau(i0, iT, i)
        if i == i0:
            references.append(Pose(p0.joints))
        elif i == iT:
            references.append(Pose(pT.joints))
        else:
            references.append(forward_kinematics(q0.interpolate(qT, min_jerk_phi(tau), tau), s))
    return references


def min_jerk_reference(p0: Pose, pT: Pose, i0: int, iT: int, i: int, s: Skeleton) -> Pose:
    """
    Minimum-jerk reference pose at frame ``i`` of the window ``[i0, iT]``.

    Raises:
        DomainError: if ``i0 == iT`` or ``i`` lies outside the window
    """
    return min_jerk_references(p0, pT, i0, iT, [i], s)[0]


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def nearest_bones(points: np.ndarray, p: Pose, s: Skeleton) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized nearest-bone query.

    Args:
        points: (N, 3) world points
        p: pose
        s: skeleton

    Returns:
        (bone index (N,), clamped segment parameter (N,), distance (N,));
        ties resolve to the lowest bone index.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    starts = p.joints[s.bone_parents]
    segments = p.joints[1:] - starts
    offsets = points[:, None, :] - starts[None, :, :]
    length_sq = np.einsum("bk,bk->b", segments, segments)
    alpha = np.clip(np.einsum("nbk,bk->nb", offsets, segments) / length_sq, 0.0, 1.0)
    residual = offsets - alpha[..., None] * segments[None, :, :]
    distance = np.sqrt(np.einsum("nbk,nbk->nb", residual, residual))
    best = np.argmin(distance, axis=1)
    rows = np.arange(points.shape[0])
    return best, alpha[rows, best], distance[rows, best]


def nearest_bone(x, p: Pose, s: Skeleton) -> Tuple[int, float, float]:
    """Nearest bone to one point as (bone index, segment parameter, distance)."""
    bone, alpha, distance = nearest_bones(np.asarray(x, dtype=np.float64).reshape(1, 3), p, s)
    return int(bone[0]), float(alpha[0]), float(distance[0])


def joint_motion(p_i: Pose, p_next: Pose) -> JointMotion:
    return JointMotion(p_next.joints - p_i.joints)


def center_of_mass(p: Pose, m: MassProfile) -> np.ndarray:
    """Mass-weighted joint average."""
    return m.weights @ p.joints
