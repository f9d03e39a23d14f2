"""
Central finite-difference verification of the analytic constraint gradients.

Each constraint has a seeded fixture with its hinges active. Discrete
selections (bone assignment, support, reference arc) are frozen at the
unperturbed point; when a perturbation changes the hinge pattern the fixture is
redrawn. Differences are taken over the per-element ``terms`` when a
constraint reports them, which keeps round-off at the scale of the touched
elements instead of the whole sum.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np

from ..camera import CameraParams, project, world_rays
from ..errors import DomainError, InconclusiveSampleError, ValidationError
from ..fields.dense import DepthField, FlowField, Grid, MaskField
from ..geometry import ground_depth, mask_sdf
from ..kinematics import (
    JointAngles,
    Pose,
    default_mass_profile,
    default_skeleton,
    forward_kinematics,
    joint_motion,
    min_jerk_references,
    nearest_bones,
)
from .anchor import c_cam, c_dist
from .effort import c_eff
from .silhouette import c_silh
from .skeletal import c_skel
from .support import c_com
from .types import CONSTRAINT_NAMES, ConstraintResult, Tolerances

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-6
MAX_REDRAWS = 10
FULL_CHECK_LIMIT = 512
SAMPLED_ENTRIES = 128
DENOMINATOR_FLOOR = 1e-8
FIXTURE_SIZE = 64
INTRINSICS = (1.2, 1.2, 0.5, 0.5)

THRESHOLDS = {"silh": 1e-4, "skel": 1e-4, "com": 1e-4, "eff": 1e-4, "dist": 1e-4, "cam": 1e-6}

Evaluate = Callable[[Dict[str, np.ndarray], Any], ConstraintResult]


@dataclass
class GradientFixture:
    """Variables, an evaluator taking (variables, frozen selection), and the result slot per variable."""

    variables: Dict[str, np.ndarray]
    evaluate: Evaluate
    slots: Dict[str, str]


def _camera(grid: Grid) -> CameraParams:
    return CameraParams.identity(grid, INTRINSICS)


def _standing_pose(rng: np.random.Generator, jitter: float) -> Pose:
    s = default_skeleton()
    rest = s.rest_pose().joints
    root = np.array([0.0, 0.0, 3.5])
    return Pose(rest + root + rng.normal(0.0, jitter, rest.shape))


def _silh_fixture(rng: np.random.Generator, tol: Tolerances) -> GradientFixture:
    grid = Grid(FIXTURE_SIZE, FIXTURE_SIZE)
    v, u = np.mgrid[0 : grid.height, 0 : grid.width].astype(np.float64)
    center = (grid.width - 1) / 2.0
    mask = MaskField(grid, (u - center) ** 2 + (v - center) ** 2 <= (0.3 * grid.width) ** 2)
    sdf = mask_sdf(mask, tol.tau_sat)
    # Ramps keep every Sobel response away from zero, where the norm has a kink.
    depth = 3.0 + 0.05 * u + 0.02 * v + 0.005 * rng.normal(size=grid.shape)
    flow = np.stack([0.03 * v, 0.02 * u, 0.01 * (u + v)], axis=-1) + 0.005 * rng.normal(size=grid.shape + (3,))

    def evaluate(values: Dict[str, np.ndarray], selection: Any) -> ConstraintResult:
        return c_silh(DepthField(grid, values["depth"]), FlowField(grid, values["flow"]), mask, tol, sdf=sdf)

    return GradientFixture({"depth": depth, "flow": flow}, evaluate, {"depth": "grad_depth", "flow": "grad_flow"})


def _skel_fixture(rng: np.random.Generator, tol: Tolerances, pixels: int = 8) -> GradientFixture:
    s = default_skeleton()
    grid = Grid(FIXTURE_SIZE, FIXTURE_SIZE)
    camera = _camera(grid)
    pose = _standing_pose(rng, 0.01)
    pose_next = Pose(pose.joints + rng.normal(0.0, 0.02, pose.joints.shape))

    depth = np.full(grid.shape, 5.0)
    mask = np.zeros(grid.shape, dtype=np.uint8)
    while int(mask.sum()) < pixels:
        bone = int(rng.integers(0, s.bone_count))
        start, end = pose.joints[s.bone_parents[bone]], pose.joints[bone + 1]
        axis = end - start
        side = np.cross(axis, rng.normal(size=3))
        side /= np.linalg.norm(side)
        point = start + rng.uniform(0.2, 0.8) * axis + rng.uniform(0.03, 0.06) * side
        (col, row), z = project(point, camera)
        col, row = int(round(col)), int(round(row))
        if 0 <= row < grid.height and 0 <= col < grid.width and not mask[row, col]:
            mask[row, col] = 1
            depth[row, col] = z
    mask_field = MaskField(grid, mask)

    foreground = mask_field.foreground
    rays = world_rays(camera)[foreground]
    points = depth[foreground][:, None] * rays
    bones, alphas, distances = nearest_bones(points, pose, s)
    deltas = joint_motion(pose, pose_next).deltas
    starts, ends = s.bone_parents[bones], bones + 1
    motion = (1.0 - alphas)[:, None] * deltas[starts] + alphas[:, None] * deltas[ends]
    directions = rng.normal(size=motion.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    lengths = tol.rho_min + tol.alpha * distances + rng.uniform(0.02, 0.05, len(distances))
    flow = np.zeros(grid.shape + (3,))
    flow[foreground] = motion + lengths[:, None] * directions

    def evaluate(values: Dict[str, np.ndarray], selection: Any) -> ConstraintResult:
        return c_skel(
            FlowField(grid, values["flow"]),
            DepthField(grid, values["depth"]),
            Pose(values["pose"][0]),
            Pose(values["pose"][1]),
            mask_field,
            camera,
            s,
            tol,
            assignment=selection,
        )

    variables = {"flow": flow, "depth": depth, "pose": np.stack([pose.joints, pose_next.joints])}
    return GradientFixture(variables, evaluate, {"flow": "grad_flow", "depth": "grad_depth", "pose": "grad_pose"})


def _com_fixture(rng: np.random.Generator, tol: Tolerances) -> GradientFixture:
    s = default_skeleton()
    mass = default_mass_profile()
    grid = Grid(FIXTURE_SIZE, FIXTURE_SIZE)
    camera = _camera(grid)
    ground_y = -1.0
    joints = s.rest_pose().joints + np.array([0.0, ground_y + 0.96, 3.5])
    # Lift the right leg so only the left foot supports a body whose mass center lies off it.
    for name in ("right_knee", "right_ankle", "right_foot"):
        joints[s.index(name), 1] += 0.3
    joints += rng.normal(0.0, 0.005, joints.shape)
    pose = Pose(joints)

    depth = ground_depth(camera, ground_y)
    mask = np.zeros(grid.shape, dtype=np.uint8)
    for point in joints:
        (col, row), z = project(point, camera)
        col, row = int(round(col)), int(round(row))
        if 0 <= row < grid.height and 0 <= col < grid.width:
            mask[row, col] = 1
            depth[row, col] = z
    depth_field = DepthField(grid, depth)
    mask_field = MaskField(grid, mask)
    seed = int(rng.integers(0, 2**32))

    def evaluate(values: Dict[str, np.ndarray], selection: Any) -> ConstraintResult:
        return c_com(Pose(values["pose"]), depth_field, mask_field, camera, mass, s, tol, seed, support=selection)

    return GradientFixture({"pose": joints}, evaluate, {"pose": "grad_pose"})


def _eff_fixture(rng: np.random.Generator, tol: Tolerances, window: int = 5) -> GradientFixture:
    s = default_skeleton()
    start_angles = JointAngles.rest(s, root=np.array([0.0, 0.0, 3.5]))
    end_angles = start_angles.replace(
        root=start_angles.root + rng.normal(0.0, 0.1, 3),
        rotvecs=rng.normal(0.0, 0.2, start_angles.rotvecs.shape),
    )
    first, last = forward_kinematics(start_angles, s), forward_kinematics(end_angles, s)
    reference = min_jerk_references(first, last, 0, window - 1, range(window), s)
    poses = [first.joints]
    for i in range(1, window - 1):
        deviation = rng.normal(size=first.joints.shape)
        deviation *= rng.uniform(0.15, 0.25) / np.linalg.norm(deviation)
        poses.append(reference[i].joints + deviation)
    poses.append(last.joints)

    def evaluate(values: Dict[str, np.ndarray], selection: Any) -> ConstraintResult:
        return c_eff([Pose(p) for p in values["poses"]], s, tol, reference=selection)

    return GradientFixture({"poses": np.stack(poses)}, evaluate, {"poses": "grad_pose"})


def _dist_fixture(rng: np.random.Generator, tol: Tolerances) -> GradientFixture:
    grid = Grid(FIXTURE_SIZE, FIXTURE_SIZE)
    teacher_depth = DepthField(grid, rng.uniform(2.0, 6.0, grid.shape))
    outside = rng.random(grid.shape) < 0.5
    magnitude = np.where(outside, rng.uniform(tol.rho_depth + 0.01, tol.rho_depth + 0.2, grid.shape), rng.uniform(0.0, 0.9 * tol.rho_depth, grid.shape))
    depth = teacher_depth.values + np.where(rng.random(grid.shape) < 0.5, -1.0, 1.0) * magnitude

    teacher_pose = _standing_pose(rng, 0.0)
    directions = rng.normal(size=teacher_pose.joints.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    far = rng.random(len(directions)) < 0.5
    offsets = np.where(far, rng.uniform(tol.rho_pose + 0.01, 0.2, len(far)), rng.uniform(0.0, 0.9 * tol.rho_pose, len(far)))
    pose = teacher_pose.joints + offsets[:, None] * directions
    mask = MaskField(grid, np.ones(grid.shape, dtype=np.uint8))

    def evaluate(values: Dict[str, np.ndarray], selection: Any) -> ConstraintResult:
        return c_dist(DepthField(grid, values["depth"]), Pose(values["pose"]), teacher_depth, teacher_pose, mask, tol)

    return GradientFixture({"depth": depth, "pose": pose}, evaluate, {"depth": "grad_depth", "pose": "grad_pose"})


def _cam_fixture(rng: np.random.Generator, tol: Tolerances, frames: int = 4) -> GradientFixture:
    grid = Grid(FIXTURE_SIZE, FIXTURE_SIZE)
    intrinsics = np.array(INTRINSICS) + rng.normal(0.0, 0.05, (frames, 4))

    def evaluate(values: Dict[str, np.ndarray], selection: Any) -> ConstraintResult:
        return c_cam([CameraParams.identity(grid, k) for k in values["intrinsics"]])

    return GradientFixture({"intrinsics": intrinsics}, evaluate, {"intrinsics": "grad_intrinsics"})


FIXTURES = {
    "silh": _silh_fixture,
    "skel": _skel_fixture,
    "com": _com_fixture,
    "eff": _eff_fixture,
    "dist": _dist_fixture,
    "cam": _cam_fixture,
}


def _difference(plus: ConstraintResult, minus: ConstraintResult) -> float:
    if plus.terms is not None and minus.terms is not None:
        return float(np.sum(plus.terms - minus.terms))
    return plus.value - minus.value


def _same_branch(base: ConstraintResult, other: ConstraintResult) -> bool:
    if base.active is None or other.active is None:
        return True
    return np.array_equal(base.active, other.active)


def _pick_entries(gradient: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    size = gradient.size
    if size <= FULL_CHECK_LIMIT:
        return np.arange(size)
    nonzero = np.flatnonzero(gradient)
    half = min(SAMPLED_ENTRIES // 2, len(nonzero))
    chosen = rng.choice(nonzero, half, replace=False) if half else np.empty(0, dtype=np.int64)
    rest = rng.choice(size, SAMPLED_ENTRIES - half, replace=False)
    return np.unique(np.concatenate([chosen, rest]))


def _relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(numeric), DENOMINATOR_FLOOR)


def _check_fixture(fixture: GradientFixture, rng: np.random.Generator, step: float) -> Optional[float]:
    """Max relative error, or None when a perturbation crossed a branch."""
    base = fixture.evaluate(fixture.variables, None)
    selection = base.selection
    worst = 0.0

    def perturbed(name: str, delta: np.ndarray) -> Dict[str, np.ndarray]:
        values = dict(fixture.variables)
        values[name] = fixture.variables[name] + delta
        return values

    for name, slot in fixture.slots.items():
        analytic = getattr(base, slot)
        array = fixture.variables[name]
        for flat in _pick_entries(analytic, rng):
            delta = np.zeros_like(array)
            delta.flat[flat] = step
            plus = fixture.evaluate(perturbed(name, delta), selection)
            minus = fixture.evaluate(perturbed(name, -delta), selection)
            if not (_same_branch(base, plus) and _same_branch(base, minus)):
                return None
            numeric = _difference(plus, minus) / (2.0 * step)
            worst = max(worst, _relative_error(float(analytic.flat[flat]), numeric))

    # One random direction through all variables at once.
    directions = {name: rng.normal(size=array.shape) for name, array in fixture.variables.items()}
    norm = np.sqrt(sum(float(np.sum(d * d)) for d in directions.values()))
    plus_values = {name: array + step * directions[name] / norm for name, array in fixture.variables.items()}
    minus_values = {name: array - step * directions[name] / norm for name, array in fixture.variables.items()}
    plus = fixture.evaluate(plus_values, selection)
    minus = fixture.evaluate(minus_values, selection)
    if not (_same_branch(base, plus) and _same_branch(base, minus)):
        return None
    analytic = sum(float(np.sum(getattr(base, slot) * directions[name])) / norm for name, slot in fixture.slots.items())
    numeric = _difference(plus, minus) / (2.0 * step)
    return max(worst, _relative_error(analytic, numeric))


def finite_difference_check(
    constraint: str,
    seed: int,
    step: float = DEFAULT_STEP,
    tol: Optional[Tolerances] = None,
) -> float:
    """
    Max relative error between analytic and central-difference gradients.

    Args:
        constraint: One of silh, skel, com, eff, dist, cam
        seed: Fixture seed
        step: Difference step in [1e-8, 1e-3]
        tol: Tolerances, defaults when None

    Raises:
        DomainError: for a step outside [1e-8, 1e-3]
        ValidationError: for an unknown constraint
        InconclusiveSampleError: if 10 redrawn fixtures all crossed a branch
    """
    if constraint not in FIXTURES:
        raise ValidationError(f"unknown constraint {constraint!r}; choose from {list(CONSTRAINT_NAMES)}")
    if not 1e-8 <= step <= 1e-3:
        raise DomainError(f"finite-difference step must lie in [1e-8, 1e-3], got {step}")
    tol = tol or Tolerances()
    for attempt in range(MAX_REDRAWS):
        rng = np.random.default_rng([seed, attempt])
        fixture = FIXTURES[constraint](rng, tol)
        error = _check_fixture(fixture, rng, step)
        if error is not None:
            logger.info(f"Gradient check {constraint} seed {seed}: max relative error {error:.3e}")
            return error
        logger.debug(f"Gradient check {constraint} seed {seed}: branch crossed, redrawing (attempt {attempt + 1})")
    raise InconclusiveSampleError(f"{constraint}: perturbations crossed a branch in {MAX_REDRAWS} fixtures")
