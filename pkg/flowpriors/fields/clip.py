"""
Clip records: per-frame fields plus pose and camera, and invariant checks.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..camera import CameraParams
from ..kinematics import Pose, Skeleton, default_skeleton
from .dense import DepthField, FlowField, Grid, MaskField, RasterBuffers

FORMAT_VERSION = 1
# Stored rotations pass through float32, which cannot hold orthonormality to 1e-9.
STORED_ROTATION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ClipMeta:
    """Clip-global metadata."""

    seed: int = 0
    dt_seconds: float = 1.0 / 30.0
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> Dict[str, object]:
        return {"seed": self.seed, "dt_seconds": self.dt_seconds, "format_version": self.format_version}


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """Everything known about frame i."""

    depth: DepthField
    flow: FlowField
    mask: MaskField
    pose: Pose
    camera: CameraParams
    raster: Optional[RasterBuffers] = None

    @property
    def grid(self) -> Grid:
        return self.depth.grid

    def replace(self, **changes) -> "FrameRecord":
        return replace(self, **changes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameRecord):
            return NotImplemented
        return (
            self.depth == other.depth
            and self.flow == other.flow
            and self.mask == other.mask
            and self.pose == other.pose
            and self.camera == other.camera
            and self.raster == other.raster
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SceneClip:
    """An ordered sequence of frames with shared metadata."""

    frames: Tuple[FrameRecord, ...]
    meta: ClipMeta = field(default_factory=ClipMeta)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, index: int) -> FrameRecord:
        return self.frames[index]

    def __iter__(self):
        return iter(self.frames)

    @property
    def grid(self) -> Grid:
        return self.frames[0].grid

    @property
    def poses(self) -> List[Pose]:
        return [frame.pose for frame in self.frames]

    @property
    def cameras(self) -> List[CameraParams]:
        return [frame.camera for frame in self.frames]

    def with_frames(self, frames: Sequence[FrameRecord]) -> "SceneClip":
        return SceneClip(tuple(frames), self.meta)

    def quantized(self) -> "SceneClip":
        """The clip as it reads back from a container: every float payload rounded through float32."""

        def f32(values: np.ndarray) -> np.ndarray:
            return values.astype(np.float32).astype(np.float64)

        frames = []
        for frame in self.frames:
            grid = frame.grid
            depth = f32(frame.depth.values)
            raster = None
            if frame.raster is not None:
                valid = frame.raster.foreground
                raster = RasterBuffers(
                    frame.raster.triangle_ids,
                    f32(frame.raster.barycentrics),
                    np.where(valid, depth, np.inf),
                    empty=not bool(valid.any()),
                )
            camera = frame.camera
            frames.append(
                FrameRecord(
                    DepthField(grid, depth),
                    FlowField(grid, f32(frame.flow.values)),
                    frame.mask,
                    Pose(f32(frame.pose.joints)),
                    CameraParams(f32(camera.rotation), f32(camera.translation), f32(camera.intrinsics), grid),
                    raster,
                )
            )
        return SceneClip(tuple(frames), self.meta)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SceneClip):
            return NotImplemented
        return self.meta == other.meta and self.frames == other.frames

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    """One broken invariant. ``frame`` is -1 for clip-wide rules."""

    frame: int
    field: str
    rule: str

    def __str__(self) -> str:
        where = "clip" if self.frame < 0 else f"frame {self.frame}"
        return f"{where}: {self.field}: {self.rule}"


def _frame_violations(index: int, frame: FrameRecord, is_last: bool, s: Skeleton) -> List[Violation]:
    found: List[Violation] = []

    def fail(name: str, rule: str) -> None:
        found.append(Violation(index, name, rule))

    grid = frame.depth.grid
    if not grid.is_valid():
        fail("grid", "width >= 8 and height >= 8")
    grids = [frame.flow.grid, frame.mask.grid, frame.camera.grid]
    if frame.raster is not None:
        grids.append(frame.raster.grid)
    if any(other != grid for other in grids):
        fail("grid", "all grids equal")

    depth = frame.depth.values
    if not np.all(np.isfinite(depth)):
        fail("depth", "depth finite")
    if not np.all(depth[np.isfinite(depth)] > 0):
        fail("depth", "depth > 0")

    flow = frame.flow.values
    if not np.all(np.isfinite(flow)):
        fail("flow", "flow finite")
    elif is_last and np.any(flow != 0):
        fail("flow", "last frame flow is zero")

    mask = frame.mask.values
    if not np.all((mask == 0) | (mask == 1)):
        fail("mask", "mask in {0, 1}")
    if not np.any(mask):
        fail("mask", "at least one foreground pixel")

    for rule in frame.pose.violations(s):
        fail("pose", rule)

    camera = frame.camera
    if (
        camera.orthonormality_error() >= STORED_ROTATION_TOLERANCE
        or abs(np.linalg.det(camera.rotation) - 1.0) >= STORED_ROTATION_TOLERANCE
    ):
        fail("camera", "rotation orthonormal with det 1")
    if not (camera.intrinsics[0] > 0 and camera.intrinsics[1] > 0):
        fail("camera", "fx/W > 0 and fy/H > 0")

    raster = frame.raster
    if raster is not None and raster.grid == grid:
        valid = raster.foreground
        if not np.array_equal(valid, mask != 0):
            fail("raster", "triangle id valid iff mask")
        sums = raster.barycentrics[valid].sum(axis=1)
        if sums.size and np.max(np.abs(sums - 1.0)) > 1e-6:
            fail("raster", "barycentrics sum to 1")
    return found


def validate_clip(clip: SceneClip, s: Optional[Skeleton] = None) -> List[Violation]:
    """
    Check every clip invariant.

    Returns:
        One Violation per broken rule per frame, empty when the clip is valid
    """
    s = s or default_skeleton()
    violations: List[Violation] = []
    if len(clip.frames) < 2:
        violations.append(Violation(-1, "frames", "clip has at least 2 frames"))
    if not clip.frames:
        return violations
    first = clip.frames[0].camera
    if not (np.array_equal(first.rotation, np.eye(3)) and not np.any(first.translation)):
        violations.append(Violation(0, "camera", "frame 0 camera is the world anchor"))
    last = len(clip.frames) - 1
    for index, frame in enumerate(clip.frames):
        violations.extend(_frame_violations(index, frame, index == last, s))
    return violations
