"""
Motion scripts: keyposes on a frame timeline, joined by quintic
minimum-jerk interpolation, plus the garment lag parameters.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import ValidationError
from ..kinematics import JointAngles, Skeleton, min_jerk_phi
from ..priors.types import Tolerances
from .humanoid import GarmentParams

logger = logging.getLogger(__name__)

PRESETS = ("idle", "walk", "swing")
KEYPOSE_SPACING = 5
STANDING_HEIGHT = 0.96
LEG_LENGTH = 0.84
SUBJECT_DEPTH = 3.5
ARM_DROP = np.deg2rad(20.0)
WALK_STRIDE_ANGLE = 0.12
WALK_ARM_SWING = 0.15
WALK_STEP = 0.08
SWING_ARM_SWING = 0.4


@dataclass(frozen=True, eq=False)
class MotionScript:
    """
    Keyposes as (frame, JointAngles) pairs with strictly increasing frames.

    Between two keyposes the root and the joint angles follow the quintic
    profile; before the first and after the last keypose the pose is held.
    """

    keyposes: Tuple[Tuple[int, JointAngles], ...]
    garment: GarmentParams = field(default_factory=GarmentParams)

    def __post_init__(self):
        object.__setattr__(self, "keyposes", tuple((int(frame), q) for frame, q in self.keyposes))
        if not self.keyposes:
            raise ValidationError("motion script needs at least one keypose")
        frames = [frame for frame, _ in self.keyposes]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError(f"keypose frames must be strictly increasing, got {frames}")
        if not 0 < self.garment.max_offset < Tolerances().rho_min:
            raise ValidationError(
                f"garment max offset {self.garment.max_offset} m must lie in (0, {Tolerances().rho_min}) m"
            )
        if not self.garment.lag_seconds > 0:
            raise ValidationError("garment lag time constant must be positive")

    @property
    def frames(self) -> List[int]:
        return [frame for frame, _ in self.keyposes]

    def angles_at(self, frame: int) -> JointAngles:
        frames = self.frames
        if frame <= frames[0]:
            return self.keyposes[0][1]
        if frame >= frames[-1]:
            return self.keyposes[-1][1]
        k = int(np.searchsorted(frames, frame, side="right")) - 1
        (f0, q0), (f1, q1) = self.keyposes[k], self.keyposes[k + 1]
        if frame == f0:
            return q0
        tau = (frame - f0) / (f1 - f0)
        return q0.interpolate(q1, min_jerk_phi(tau), tau)

    def windows(self) -> List[Tuple[int, int]]:
        """Keypose-to-keypose frame windows."""
        frames = self.frames
        return list(zip(frames, frames[1:]))


def _arm_rotvecs(s: Skeleton, rotvecs: np.ndarray, swing: float) -> None:
    rotvecs[s.index("left_elbow") - 1] = (0.0, swing, -ARM_DROP)
    rotvecs[s.index("right_elbow") - 1] = (0.0, swing, ARM_DROP)


def _keyframes(frames: int) -> List[int]:
    last = max(frames - 1, 1)
    count = -(-last // KEYPOSE_SPACING)
    return [k * KEYPOSE_SPACING for k in range(count + 1)]


def _pose(s: Skeleton, root: Sequence[float], leg: float, arm_swing: float) -> JointAngles:
    rotvecs = np.zeros((s.bone_count, 3))
    _arm_rotvecs(s, rotvecs, arm_swing)
    rotvecs[s.index("left_knee") - 1] = (leg, 0.0, 0.0)
    rotvecs[s.index("right_knee") - 1] = (-leg, 0.0, 0.0)
    return JointAngles(np.asarray(root, dtype=np.float64), rotvecs, s.rest_lengths)


def preset_script(name: str, frames: int, s: Skeleton, ground_y: float) -> MotionScript:
    """
    Build one of the named presets for a clip of ``frames`` frames.

    Every keypose is mirror-symmetric under a half turn about the vertical
    axis through the root, so the body's mass center stays above the midpoint
    of the two feet.

    Raises:
        ValidationError: for an unknown preset name
    """
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")
    standing = ground_y + STANDING_HEIGHT
    if name == "idle":
        return MotionScript(((0, _pose(s, (0.0, standing, SUBJECT_DEPTH), 0.0, 0.0)),))

    keyposes = []
    for k, frame in enumerate(_keyframes(frames)):
        sign = 1.0 if k % 2 == 0 else -1.0
        if name == "walk":
            root_y = standing - LEG_LENGTH * (1.0 - np.cos(WALK_STRIDE_ANGLE))
            root = (0.0, root_y, SUBJECT_DEPTH - WALK_STEP * k)
            keyposes.append((frame, _pose(s, root, sign * WALK_STRIDE_ANGLE, sign * WALK_ARM_SWING)))
        else:
            keyposes.append((frame, _pose(s, (0.0, standing, SUBJECT_DEPTH), 0.0, sign * SWING_ARM_SWING)))
    logger.debug(f"Preset {name}: {len(keyposes)} keyposes over {frames} frames")
    return MotionScript(tuple(keyposes))


def preset_summary(script: MotionScript) -> Dict[str, object]:
    return {
        "keyposes": len(script.keyposes),
        "lag_seconds": script.garment.lag_seconds,
        "max_offset": script.garment.max_offset,
    }
