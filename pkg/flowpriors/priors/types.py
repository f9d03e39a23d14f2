"""
Configuration and result records shared by the constraint modules.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import read_key_value_file
from ..errors import ValidationError
from ..fields.dense import DepthField
from ..kinematics import Pose

logger = logging.getLogger(__name__)

CONSTRAINT_NAMES = ("silh", "skel", "com", "eff", "dist", "cam")
_FLAGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


@dataclass(frozen=True)
class Tolerances:
    """Margins and constants of the physical priors (meters unless noted)."""

    rho_min: float = 0.01
    alpha: float = 0.5
    rho_eff: float = 0.05
    tau_sat: float = 32.0  # pixels
    sigma_contact: float = 0.05
    rho_depth: float = 0.10
    rho_pose: float = 0.03
    window_min: int = 8  # frames
    window_max: int = 32  # frames
    contact_threshold: float = 0.5
    support_eps: float = 1e-6
    contacts_on_mask: bool = False  # contacts must project into the dilated foreground

    def __post_init__(self):
        for item in fields(self):
            if isinstance(getattr(self, item.name), bool):
                continue
            if not getattr(self, item.name) > 0:
                raise ValidationError(f"tolerance {item.name} must be positive")
        if self.window_min > self.window_max:
            raise ValidationError("window_min must not exceed window_max")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class PriorWeights:
    """The weights lambda_k of the constraint sum."""

    lambda_silh: float = 1.0
    lambda_skel: float = 1.0
    lambda_com: float = 1.0
    lambda_eff: float = 1.0
    lambda_dist: float = 1.0
    lambda_cam: float = 1.0

    def __post_init__(self):
        for item in fields(self):
            if not getattr(self, item.name) >= 0:
                raise ValidationError(f"weight {item.name} must be non-negative")

    def weight(self, name: str) -> float:
        return getattr(self, f"lambda_{name}")

    def without(self, *names: str) -> "PriorWeights":
        """Weights with the named constraints switched off."""
        unknown = [name for name in names if name not in CONSTRAINT_NAMES]
        if unknown:
            raise ValidationError(f"unknown constraint(s) {unknown}; choose from {list(CONSTRAINT_NAMES)}")
        return replace(self, **{f"lambda_{name}": 0.0 for name in names})

    @classmethod
    def only(cls, *names: str) -> "PriorWeights":
        return cls().without(*(name for name in CONSTRAINT_NAMES if name not in names))

    def is_all_zero(self) -> bool:
        return all(self.weight(name) == 0 for name in CONSTRAINT_NAMES)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class TeacherSet:
    """Per-frame noisy teacher depth and pose."""

    depth: Tuple[DepthField, ...]
    poses: Tuple[Pose, ...]

    def __post_init__(self):
        object.__setattr__(self, "depth", tuple(self.depth))
        object.__setattr__(self, "poses", tuple(self.poses))
        if len(self.depth) != len(self.poses):
            raise ValidationError("teacher depth and pose sequences differ in length")

    def __len__(self) -> int:
        return len(self.depth)


@dataclass
class ConstraintResult:
    """
    Value of one constraint and its gradients.

    Gradient slots are None for variables the constraint does not read.
    ``selection`` holds the frozen discrete choices of the evaluation and
    ``active`` the hinge pattern, so callers can re-evaluate with the same
    branch and detect branch changes. ``terms``, when present, holds the
    per-element contributions that sum to ``value``.
    """

    value: float
    grad_depth: Optional[np.ndarray] = None
    grad_flow: Optional[np.ndarray] = None
    grad_pose: Optional[np.ndarray] = None
    grad_intrinsics: Optional[np.ndarray] = None
    selection: Any = None
    active: Optional[np.ndarray] = None
    terms: Optional[np.ndarray] = None

    def gradients(self) -> Dict[str, np.ndarray]:
        slots = {
            "depth": self.grad_depth,
            "flow": self.grad_flow,
            "pose": self.grad_pose,
            "intrinsics": self.grad_intrinsics,
        }
        return {name: grad for name, grad in slots.items() if grad is not None}

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.value)) and all(np.all(np.isfinite(g)) for g in self.gradients().values())


@dataclass
class ObjectiveResult:
    """Weighted clip objective with per-variable gradients stacked over frames."""

    value: float
    parts: Dict[str, float]
    grad_depth: np.ndarray
    grad_flow: np.ndarray
    grad_pose: np.ndarray
    grad_intrinsics: np.ndarray
    window: Optional[Tuple[int, int]] = None
    nonfinite: Sequence[str] = field(default_factory=tuple)

    def gradient_norm(self) -> float:
        total = sum(float(np.sum(g * g)) for g in (self.grad_depth, self.grad_flow, self.grad_pose, self.grad_intrinsics))
        return float(np.sqrt(total))


def _coerce(value: str, target: Any, key: str) -> Any:
    if isinstance(target, bool):
        flag = value.strip().lower()
        if flag not in _FLAGS:
            raise ValidationError(f"config key {key!r} needs true or false, got {value!r}")
        return _FLAGS[flag]
    try:
        return int(value) if isinstance(target, int) and not isinstance(target, bool) else float(value)
    except ValueError:
        raise ValidationError(f"config key {key!r} needs a number, got {value!r}")


def prior_config_from_dict(entries: Dict[str, str]) -> Tuple[Tolerances, PriorWeights]:
    """
    Split ``key = value`` entries into Tolerances and PriorWeights overrides.

    Raises:
        ValidationError: on unknown keys or non-numeric values
    """
    tolerances, weights = Tolerances(), PriorWeights()
    tol_keys = {item.name for item in fields(Tolerances)}
    weight_keys = {item.name for item in fields(PriorWeights)}
    unknown = sorted(set(entries) - tol_keys - weight_keys)
    if unknown:
        raise ValidationError(f"unknown config keys {unknown}")
    tol_changes = {k: _coerce(v, getattr(tolerances, k), k) for k, v in entries.items() if k in tol_keys}
    weight_changes = {k: _coerce(v, 0.0, k) for k, v in entries.items() if k in weight_keys}
    return replace(tolerances, **tol_changes), replace(weights, **weight_changes)


def load_prior_config(path: Union[str, Path, None]) -> Tuple[Tolerances, PriorWeights]:
    """Load tolerances and weights from a ``key = value`` file; defaults when ``path`` is None."""
    if path is None:
        return Tolerances(), PriorWeights()
    tolerances, weights = prior_config_from_dict(read_key_value_file(path))
    logger.info(f"Loaded prior configuration from {path}")
    return tolerances, weights
