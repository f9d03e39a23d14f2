"""
Evaluation metrics: scene flow, joint positions and depth.

All quantities are in meters; conversion to millimeters happens only when a
report is rendered.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .fields.clip import SceneClip
from .fields.dense import DepthField, FlowField, MaskField
from .kinematics import Pose

logger = logging.getLogger(__name__)

ACC_THRESHOLDS = (0.05, 0.10)
MIN_COSINE_NORM = 1e-6
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class FlowReport:
    epe: float
    one_minus_cos: float
    acc_strict: float
    acc_relaxed: float
    count: int


@dataclass(frozen=True)
class PoseReport:
    mpjpe: float
    pa_mpjpe: float


@dataclass(frozen=True)
class DepthReport:
    mae: float
    silog: float
    count: int
    clamped: int = 0


@dataclass(frozen=True)
class EvaluationReport:
    """Clip-level metrics."""

    flow: FlowReport
    pose: PoseReport
    depth: DepthReport

    def to_dict(self) -> Dict[str, Dict[str, float]]:
        return {"flow": asdict(self.flow), "pose": asdict(self.pose), "depth": asdict(self.depth)}

    def to_key_value(self) -> str:
        lines = []
        for group, values in self.to_dict().items():
            for key, value in values.items():
                lines.append(f"{group}.{key}={value!r}")
        return "\n".join(lines) + "\n"


def _flow_report(pred: np.ndarray, gt: np.ndarray, thresholds: Tuple[float, float]) -> FlowReport:
    if len(gt) == 0:
        raise DomainError("flow metrics need at least one foreground pixel")
    errors = np.linalg.norm(pred - gt, axis=1)
    pred_norm = np.linalg.norm(pred, axis=1)
    gt_norm = np.linalg.norm(gt, axis=1)
    defined = (pred_norm > MIN_COSINE_NORM) & (gt_norm > MIN_COSINE_NORM)
    if defined.any():
        cosine = np.einsum("nk,nk->n", pred[defined], gt[defined]) / (pred_norm[defined] * gt_norm[defined])
        one_minus_cos = float(np.mean(1.0 - cosine))
    else:
        one_minus_cos = 0.0
    strict, relaxed = thresholds
    return FlowReport(
        epe=float(np.mean(errors)),
        one_minus_cos=one_minus_cos,
        acc_strict=float(np.mean(errors < strict)),
        acc_relaxed=float(np.mean(errors < relaxed)),
        count=len(errors),
    )


def flow_metrics(
    pred: FlowField,
    gt: FlowField,
    mask: MaskField,
    thresholds: Tuple[float, float] = ACC_THRESHOLDS,
) -> FlowReport:
    """
    EPE, 1 - cosine and threshold accuracies over the foreground.

    Pixels where either vector is shorter than 1e-6 m are left out of the
    cosine term only.

    Raises:
        DomainError: if the mask is empty
    """
    if pred.grid != gt.grid or mask.grid != gt.grid:
        raise DomainError("flow metric inputs have different grids")
    foreground = mask.foreground
    return _flow_report(pred.values[foreground], gt.values[foreground], thresholds)


def similarity_procrustes(source: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Closed-form similarity (scale, rotation, translation) mapping ``source``
    onto ``target`` in the least-squares sense, with reflections excluded.
    """
    mu_source = source.mean(axis=0)
    mu_target = target.mean(axis=0)
    centered_source = source - mu_source
    centered_target = target - mu_target
    variance = float(np.sum(centered_source**2)) / len(source)
    covariance = centered_target.T @ centered_source / len(source)
    u, singular, vt = np.linalg.svd(covariance)
    correction = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        correction[2, 2] = -1.0
    rotation = u @ correction @ vt
    scale = float(np.trace(np.diag(singular) @ correction)) / variance if variance > 0 else 1.0
    translation = mu_target - scale * rotation @ mu_source
    return scale, rotation, translation


def pose_metrics(pred: Sequence[Pose], gt: Sequence[Pose]) -> PoseReport:
    """
    MPJPE and Procrustes-aligned MPJPE averaged over frames and joints.

    Raises:
        DomainError: if the sequences differ in length or joint count
    """
    if len(pred) != len(gt) or len(gt) == 0:
        raise DomainError(f"pose sequences differ in length ({len(pred)} vs {len(gt)})")
    raw, aligned = [], []
    for p, g in zip(pred, gt):
        if p.joints.shape != g.joints.shape:
            raise DomainError("pose sequences differ in joint count")
        raw.append(np.linalg.norm(p.joints - g.joints, axis=1))
        scale, rotation, translation = similarity_procrustes(p.joints, g.joints)
        moved = scale * p.joints @ rotation.T + translation
        aligned.append(np.linalg.norm(moved - g.joints, axis=1))
    return PoseReport(mpjpe=float(np.mean(raw)), pa_mpjpe=float(np.mean(aligned)))


def _depth_report(pred: np.ndarray, gt: np.ndarray) -> DepthReport:
    if len(gt) == 0:
        raise DomainError("depth metrics need a non-empty region")
    if np.any(gt <= 0):
        raise DomainError("ground-truth depth must be positive on the evaluated region")
    clamped = int(np.count_nonzero(pred <= 0))
    if clamped:
        logger.warning(f"Clamped {clamped} non-positive predicted depth values to {MIN_DEPTH} m")
        pred = np.where(pred <= 0, MIN_DEPTH, pred)
    delta = np.log(pred) - np.log(gt)
    variance = float(np.mean(delta**2) - np.mean(delta) ** 2)
    return DepthReport(
        mae=float(np.mean(np.abs(pred - gt))),
        silog=100.0 * float(np.sqrt(max(variance, 0.0))),
        count=len(gt),
        clamped=clamped,
    )


def depth_metrics(pred: DepthField, gt: DepthField, region: MaskField) -> DepthReport:
    """
    Mean absolute error and scale-invariant log error over a region.

    Raises:
        DomainError: if the region is empty
    """
    foreground = region.foreground
    return _depth_report(pred.values[foreground], gt.values[foreground])


def evaluate_clips(pred: SceneClip, gt: SceneClip, thresholds: Tuple[float, float] = ACC_THRESHOLDS) -> EvaluationReport:
    """
    Pool pixels over a clip: flow over frames 0..T-2, depth and pose over all
    frames, always on the ground-truth foreground.
    """
    if len(pred) != len(gt):
        raise DomainError(f"clips differ in length ({len(pred)} vs {len(gt)})")
    if pred.grid != gt.grid:
        raise DomainError("clips differ in grid")
    flow_pred, flow_gt, depth_pred, depth_gt = [], [], [], []
    for index, (p, g) in enumerate(zip(pred, gt)):
        foreground = g.mask.foreground
        if index < len(gt) - 1:
            flow_pred.append(p.flow.values[foreground])
            flow_gt.append(g.flow.values[foreground])
        depth_pred.append(p.depth.values[foreground])
        depth_gt.append(g.depth.values[foreground])
    return EvaluationReport(
        flow=_flow_report(np.concatenate(flow_pred), np.concatenate(flow_gt), thresholds),
        pose=pose_metrics(pred.poses, gt.poses),
        depth=_depth_report(np.concatenate(depth_pred), np.concatenate(depth_gt)),
    )
