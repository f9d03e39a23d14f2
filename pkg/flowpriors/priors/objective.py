"""
The weighted constraint sum over a clip.

Per-frame terms are evaluated on a thread pool and reduced in frame order, so
the result does not depend on the worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..camera import CameraParams
from ..config import worker_threads
from ..fields.clip import SceneClip
from ..fields.dense import DepthField, FlowField, Grid, MaskField
from ..geometry import SignedDistanceField, mask_sdf
from ..kinematics import MassProfile, Pose, Skeleton, default_mass_profile, default_skeleton
from .anchor import c_cam, c_dist
from .effort import c_eff
from .silhouette import c_silh
from .skeletal import c_skel
from .support import c_com
from .types import CONSTRAINT_NAMES, ConstraintResult, ObjectiveResult, PriorWeights, TeacherSet, Tolerances

logger = logging.getLogger(__name__)


@dataclass
class ClipVariables:
    """Decision variables stacked over frames."""

    depth: np.ndarray  # (T, H, W)
    flow: np.ndarray  # (T, H, W, 3)
    poses: np.ndarray  # (T, J, 3)

    @classmethod
    def from_clip(cls, clip: SceneClip) -> "ClipVariables":
        return cls(
            np.stack([frame.depth.values for frame in clip]),
            np.stack([frame.flow.values for frame in clip]),
            np.stack([frame.pose.joints for frame in clip]),
        )

    def copy(self) -> "ClipVariables":
        return ClipVariables(self.depth.copy(), self.flow.copy(), self.poses.copy())

    def __len__(self) -> int:
        return self.depth.shape[0]

    def depth_field(self, grid: Grid, i: int) -> DepthField:
        return DepthField(grid, self.depth[i])

    def flow_field(self, grid: Grid, i: int) -> FlowField:
        return FlowField(grid, self.flow[i])

    def pose(self, i: int) -> Pose:
        return Pose(self.poses[i])


@dataclass
class ClipData:
    """Fixed inputs: masks, cameras and body model, with cached distance fields."""

    grid: Grid
    masks: List[MaskField]
    cameras: List[CameraParams]
    skeleton: Skeleton
    mass: MassProfile
    sdfs: List[Optional[SignedDistanceField]] = field(default_factory=list)

    @classmethod
    def from_clip(
        cls,
        clip: SceneClip,
        tol: Tolerances,
        skeleton: Optional[Skeleton] = None,
        mass: Optional[MassProfile] = None,
    ) -> "ClipData":
        masks = [frame.mask for frame in clip]
        return cls(
            clip.grid,
            masks,
            clip.cameras,
            skeleton or default_skeleton(),
            mass or default_mass_profile(),
            [mask_sdf(mask, tol.tau_sat) for mask in masks],
        )

    def __len__(self) -> int:
        return len(self.masks)


def draw_window(frames: int, tol: Tolerances, rng: np.random.Generator) -> Optional[Tuple[int, int]]:
    """
    Draw an effort window as (start, size).

    The size is uniform in [window_min, min(window_max, T)], clamped to T for
    short clips. Returns None when the clip has fewer than 3 frames.
    """
    if frames < 3:
        return None
    high = min(tol.window_max, frames)
    low = min(tol.window_min, high)
    size = int(rng.integers(low, high + 1))
    start = int(rng.integers(0, frames - size + 1))
    return start, size


def _frame_terms(
    i: int,
    variables: ClipVariables,
    data: ClipData,
    teachers: TeacherSet,
    weights: PriorWeights,
    tol: Tolerances,
    com_seed: int,
) -> Dict[str, ConstraintResult]:
    grid = data.grid
    depth = variables.depth_field(grid, i)
    pose = variables.pose(i)
    terms: Dict[str, ConstraintResult] = {}
    if weights.lambda_silh > 0:
        terms["silh"] = c_silh(depth, variables.flow_field(grid, i), data.masks[i], tol, sdf=data.sdfs[i])
    if weights.lambda_skel > 0 and i < len(variables) - 1:
        terms["skel"] = c_skel(
            variables.flow_field(grid, i),
            depth,
            pose,
            variables.pose(i + 1),
            data.masks[i],
            data.cameras[i],
            data.skeleton,
            tol,
        )
    if weights.lambda_com > 0:
        terms["com"] = c_com(pose, depth, data.masks[i], data.cameras[i], data.mass, data.skeleton, tol, com_seed)
    if weights.lambda_dist > 0:
        terms["dist"] = c_dist(depth, pose, teachers.depth[i], teachers.poses[i], data.masks[i], tol)
    return terms


def total_objective(
    variables: ClipVariables,
    data: ClipData,
    teachers: TeacherSet,
    weights: PriorWeights,
    tol: Tolerances,
    seed: int,
    threads: Optional[int] = None,
) -> ObjectiveResult:
    """
    Evaluate sum_k lambda_k C_k over the clip.

    Silhouette, skeletal and anchor terms are summed over frames (skeletal over
    frames 0..T-2), support is averaged over frames, effort uses one window
    drawn from ``seed`` and camera consistency is evaluated once. The last
    frame's flow gradient is zero since that flow is pinned.
    """
    frames = len(variables)
    rng = np.random.default_rng(seed)
    window = draw_window(frames, tol, rng)
    com_seeds = rng.integers(0, 2**63 - 1, size=frames)

    grad_depth = np.zeros_like(variables.depth)
    grad_flow = np.zeros_like(variables.flow)
    grad_pose = np.zeros_like(variables.poses)
    grad_intrinsics = np.zeros((frames, 4))
    parts = {name: 0.0 for name in CONSTRAINT_NAMES}
    nonfinite: List[str] = []

    def evaluate(i: int) -> Dict[str, ConstraintResult]:
        return _frame_terms(i, variables, data, teachers, weights, tol, int(com_seeds[i]))

    threads = threads or worker_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_frame = list(pool.map(evaluate, range(frames)))
    else:
        per_frame = [evaluate(i) for i in range(frames)]

    for i, terms in enumerate(per_frame):
        for name, result in terms.items():
            if not result.is_finite() and name not in nonfinite:
                nonfinite.append(name)
            share = 1.0 / frames if name == "com" else 1.0
            scale = weights.weight(name) * share
            parts[name] += share * result.value
            if result.grad_depth is not None:
                grad_depth[i] += scale * result.grad_depth
            if result.grad_flow is not None:
                grad_flow[i] += scale * result.grad_flow
            if result.grad_pose is not None:
                if name == "skel":
                    grad_pose[i] += scale * result.grad_pose[0]
                    grad_pose[i + 1] += scale * result.grad_pose[1]
                else:
                    grad_pose[i] += scale * result.grad_pose

    if weights.lambda_eff > 0 and window is not None:
        start, size = window
        result = c_eff([variables.pose(i) for i in range(start, start + size)], data.skeleton, tol)
        if not result.is_finite():
            nonfinite.append("eff")
        parts["eff"] = result.value
        grad_pose[start : start + size] += weights.lambda_eff * result.grad_pose

    if weights.lambda_cam > 0:
        result = c_cam(data.cameras)
        if not result.is_finite():
            nonfinite.append("cam")
        parts["cam"] = result.value
        grad_intrinsics += weights.lambda_cam * result.grad_intrinsics

    grad_flow[frames - 1] = 0.0
    value = sum(weights.weight(name) * parts[name] for name in CONSTRAINT_NAMES)
    return ObjectiveResult(
        float(value),
        parts,
        grad_depth,
        grad_flow,
        grad_pose,
        grad_intrinsics,
        window=window,
        nonfinite=tuple(nonfinite),
    )
