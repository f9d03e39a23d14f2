"""
Direct descent on clip variables.

Ground-truth depth, flow and poses are perturbed, then moved by plain
gradient descent on the weighted constraint sum while masks, cameras and the
body model stay fixed. Metrics against the ground truth are logged every few
steps.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import DivergenceError, ValidationError
from .fields.clip import SceneClip
from .fields.dense import DepthField
from .kinematics import Pose
from .metrics import evaluate_clips
from .priors.objective import ClipData, ClipVariables, total_objective
from .priors.types import ObjectiveResult, PriorWeights, TeacherSet, Tolerances

logger = logging.getLogger(__name__)

MIN_DEPTH = 1e-4
NOISE_KERNEL_PIXELS = 4.0
LOG_EVERY = 10
ABLATION_COMPONENTS = ("silh", "skel", "com", "eff", "dist")
LOG_HEADER = "step,objective,epe_m,mpjpe_m,mae_m"


@dataclass(frozen=True)
class OptimConfig:
    """
    Descent settings.

    Step sizes are in meters per unit of count-scaled gradient: each variable
    moves by ``step * n * g`` where ``n`` is the number of elements its
    constraints average over (pixels for depth and flow, joints for poses).
    """

    steps: int = 500
    step_flow: float = 0.001
    step_depth: float = 0.001
    step_pose: float = 0.002
    weights: PriorWeights = field(default_factory=PriorWeights)
    tolerances: Tolerances = field(default_factory=Tolerances)
    sigma_flow: float = 0.1
    sigma_depth: float = 0.05
    sigma_pose: float = 0.05
    teacher_depth_noise: float = 0.02
    teacher_bias: float = 0.03
    teacher_pose_noise: float = 0.01
    seed: int = 0
    log_every: int = LOG_EVERY

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError(f"iteration count must be at least 1, got {self.steps}")
        for name in ("step_flow", "step_depth", "step_pose"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("sigma_flow", "sigma_depth", "sigma_pose", "teacher_depth_noise", "teacher_pose_noise"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.log_every < 1:
            raise ValidationError("log interval must be at least 1")
        if self.weights.is_all_zero():
            raise ValidationError("every prior weight is zero; nothing to optimize")

    def replace(self, **changes) -> "OptimConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class LogRecord:
    step: int
    objective: float
    epe_m: float
    mpjpe_m: float
    mae_m: float

    def to_line(self) -> str:
        return f"{self.step},{self.objective:.17g},{self.epe_m:.17g},{self.mpjpe_m:.17g},{self.mae_m:.17g}"


@dataclass
class OptimState:
    """
    Current variables and the number of steps taken.

    ``objective`` is the value the last step started from; None before the
    first step.
    """

    variables: ClipVariables
    step: int = 0
    objective: Optional[float] = None


def smooth_noise(shape: Tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Gaussian-blurred white noise rescaled to unit standard deviation."""
    noise = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=NOISE_KERNEL_PIXELS, mode="nearest")
    spread = float(noise.std())
    return noise / spread if spread > 0 else noise


def make_teachers(clip: SceneClip, sigma_depth: float, bias: float, sigma_pose: float, seed: int) -> TeacherSet:
    """
    Synthetic noisy teachers.

    Teacher depth is ground truth plus smooth noise (white noise blurred with a
    Gaussian of 4 px, rescaled to ``sigma_depth``) plus a constant ``bias``;
    teacher joints get i.i.d. Gaussian noise of ``sigma_pose`` per axis.
    """
    rng = np.random.default_rng(seed)
    grid = clip.grid
    depth, poses = [], []
    for frame in clip:
        noisy = frame.depth.values + sigma_depth * smooth_noise(grid.shape, rng) + bias
        depth.append(DepthField(grid, np.maximum(noisy, MIN_DEPTH)))
        poses.append(Pose(frame.pose.joints + sigma_pose * rng.standard_normal(frame.pose.joints.shape)))
    return TeacherSet(tuple(depth), tuple(poses))


def perturb(clip: SceneClip, sigma_flow: float, sigma_depth: float, sigma_pose: float, seed: int) -> OptimState:
    """
    Initial state: ground truth plus noise.

    Flow gets i.i.d. Gaussian noise per pixel and axis on every frame but the
    last, whose flow stays pinned at zero. Depth gets smooth noise (same kernel
    as the teachers) and joints i.i.d. Gaussian noise.
    """
    if min(sigma_flow, sigma_depth, sigma_pose) < 0:
        raise ValidationError("perturbation magnitudes must be non-negative")
    rng = np.random.default_rng(seed)
    variables = ClipVariables.from_clip(clip)
    frames, height, width = variables.depth.shape
    variables.flow[:-1] += sigma_flow * rng.standard_normal(variables.flow[:-1].shape)
    for i in range(frames):
        variables.depth[i] += sigma_depth * smooth_noise((height, width), rng)
    variables.poses += sigma_pose * rng.standard_normal(variables.poses.shape)
    np.maximum(variables.depth, MIN_DEPTH, out=variables.depth)
    return OptimState(variables)


def _step_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, step]).generate_state(1, dtype=np.uint64)[0] >> 1)


def evaluate_state(
    state: OptimState,
    data: ClipData,
    teachers: TeacherSet,
    config: OptimConfig,
    threads: Optional[int] = None,
) -> ObjectiveResult:
    """The objective at ``state`` with the effort window of its step."""
    return total_objective(
        state.variables,
        data,
        teachers,
        config.weights,
        config.tolerances,
        _step_seed(config.seed, state.step),
        threads=threads,
    )


def step(
    state: OptimState,
    data: ClipData,
    teachers: TeacherSet,
    config: OptimConfig,
    threads: Optional[int] = None,
) -> OptimState:
    """
    One gradient-descent update.

    Raises:
        DivergenceError: if a constraint produces a non-finite value or
            gradient, or the update leaves the finite range
    """
    result = evaluate_state(state, data, teachers, config, threads)
    if result.nonfinite:
        raise DivergenceError(result.nonfinite[0], state.step)
    pixels = data.grid.size
    joints = state.variables.poses.shape[1]
    variables = state.variables.copy()
    variables.flow -= config.step_flow * pixels * result.grad_flow
    variables.depth -= config.step_depth * pixels * result.grad_depth
    variables.poses -= config.step_pose * joints * result.grad_pose
    for name, values in (("flow", variables.flow), ("depth", variables.depth), ("pose", variables.poses)):
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"{name} update", state.step)
    np.maximum(variables.depth, MIN_DEPTH, out=variables.depth)
    return OptimState(variables, state.step + 1, result.value)


def predicted_clip(gt: SceneClip, variables: ClipVariables) -> SceneClip:
    """``gt`` with depth, flow and poses replaced by the current variables."""
    grid = gt.grid
    frames = [
        frame.replace(
            depth=variables.depth_field(grid, i),
            flow=variables.flow_field(grid, i),
            pose=variables.pose(i),
            raster=None,
        )
        for i, frame in enumerate(gt)
    ]
    return gt.with_frames(frames)


def log_record(gt: SceneClip, state: OptimState, objective: float) -> LogRecord:
    report = evaluate_clips(predicted_clip(gt, state.variables), gt)
    return LogRecord(state.step, objective, report.flow.epe, report.pose.mpjpe, report.depth.mae)


def run(
    clip: SceneClip,
    config: OptimConfig,
    threads: Optional[int] = None,
) -> Tuple[OptimState, List[LogRecord]]:
    """
    Perturb, descend for ``config.steps`` steps and log every
    ``config.log_every`` steps plus the final state.

    Teachers are drawn from ``config.seed``, the initial perturbation from
    ``config.seed + 1`` and effort windows from ``(config.seed, step)``.
    """
    data = ClipData.from_clip(clip, config.tolerances)
    teachers = make_teachers(
        clip, config.teacher_depth_noise, config.teacher_bias, config.teacher_pose_noise, config.seed
    )
    state = perturb(clip, config.sigma_flow, config.sigma_depth, config.sigma_pose, config.seed + 1)
    log: List[LogRecord] = []
    for _ in range(config.steps):
        next_state = step(state, data, teachers, config, threads)
        if state.step % config.log_every == 0:
            record = log_record(clip, state, next_state.objective)
            log.append(record)
            logger.info(
                f"step {record.step}: objective {record.objective:.6g}, epe {record.epe_m:.4g} m, "
                f"mpjpe {record.mpjpe_m:.4g} m, mae {record.mae_m:.4g} m"
            )
        state = next_state
    final = evaluate_state(state, data, teachers, config, threads)
    log.append(log_record(clip, state, final.value))
    return state, log


def log_lines(records: Iterable[LogRecord]) -> List[str]:
    return [LOG_HEADER] + [record.to_line() for record in records]


def write_log(records: Sequence[LogRecord], path: Union[str, Path]) -> None:
    Path(path).write_text("\n".join(log_lines(records)) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class AblationRow:
    """Final metrics of one run; ``removed`` is None for the full objective."""

    removed: Optional[str]
    epe_m: float
    mpjpe_m: float
    mae_m: float

    @property
    def label(self) -> str:
        return "full" if self.removed is None else f"w/o {self.removed}"


def ablation_sweep(
    clip: SceneClip,
    config: OptimConfig,
    components: Sequence[str] = ABLATION_COMPONENTS,
    threads: Optional[int] = None,
) -> List[AblationRow]:
    """
    The full run followed by one run per removed component, all with the same
    seed so teachers, perturbation and effort windows are paired.
    """
    rows = []
    for removed in [None, *components]:
        weights = config.weights if removed is None else config.weights.without(removed)
        _, log = run(clip, config.replace(weights=weights), threads)
        final = log[-1]
        rows.append(AblationRow(removed, final.epe_m, final.mpjpe_m, final.mae_m))
        logger.info(f"Ablation {rows[-1].label}: epe {final.epe_m:.4g} m, mpjpe {final.mpjpe_m:.4g} m")
    return rows


def ablation_table(rows: Sequence[AblationRow]) -> Dict[str, Dict[str, float]]:
    return {row.label: {"epe_m": row.epe_m, "mpjpe_m": row.mpjpe_m, "mae_m": row.mae_m} for row in rows}
