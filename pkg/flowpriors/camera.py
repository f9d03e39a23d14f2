"""
Camera parameterization: 6D rotation, translation and normalized intrinsics.

Conventions used everywhere in flowpriors:

- Extrinsics map a world point to the camera frame as ``X_cam = R @ (p - t)``,
  where ``t`` is the camera center in world coordinates.
- Projection is pinhole: ``u = fx/W * X/Z * W + cx/W * W`` and likewise for
  ``v`` with the height. Pixel centers sit at integer coordinates.
- Camera-frame axes are +X right, +Y up, +Z forward; image rows grow with +Y.
- The 13-vector layout is ``[first rotation column, second rotation column,
  translation, (fx/W, fy/H, cx/W, cy/H)]``.
"""

from dataclasses import dataclass
from typing import Iterable, Tuple, Union

import numpy as np

from .errors import DomainError, NumericError
from .fields.dense import Grid

MIN_COLUMN_NORM = 1e-8
MIN_CAMERA_DEPTH = 1e-6

ArrayLike = Union[np.ndarray, Iterable[float]]


@dataclass(frozen=True, eq=False)
class Rot6D:
    """Six scalars: the first two columns of a rotation before orthonormalization."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(6)
        object.__setattr__(self, "values", values)

    @property
    def columns(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.values[:3], self.values[3:]


def rot6d_to_matrix(r: Union[Rot6D, ArrayLike]) -> np.ndarray:
    """
    Gram-Schmidt a 6D rotation into a proper rotation matrix.

    Args:
        r: Rot6D or six numbers (first column, then second column)

    Returns:
        3x3 orthonormal matrix with determinant +1

    Raises:
        NumericError: if a column is near zero or the columns are parallel
    """
    a, b = (r if isinstance(r, Rot6D) else Rot6D(np.asarray(r))).columns
    norm_a = np.linalg.norm(a)
    if not np.isfinite(norm_a) or norm_a <= MIN_COLUMN_NORM:
        raise NumericError("degenerate 6D rotation: column 1 is near zero")
    c1 = a / norm_a
    b_orth = b - np.dot(c1, b) * c1
    norm_b = np.linalg.norm(b_orth)
    if not np.isfinite(norm_b) or norm_b <= MIN_COLUMN_NORM:
        raise NumericError("degenerate 6D rotation: column 2 is near zero or parallel to column 1")
    c2 = b_orth / norm_b
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=1)


def matrix_to_rot6d(rotation: np.ndarray) -> Rot6D:
    """The first two columns, verbatim."""
    rotation = np.asarray(rotation, dtype=np.float64)
    return Rot6D(np.concatenate([rotation[:, 0], rotation[:, 1]]))


@dataclass(frozen=True, eq=False)
class CameraParams:
    """
    Per-frame camera C = (K, R, t).

    ``intrinsics`` holds (fx/W, fy/H, cx/W, cy/H). ``translation`` is the
    camera center in world coordinates, meters.
    """

    rotation: np.ndarray
    translation: np.ndarray
    intrinsics: np.ndarray
    grid: Grid

    def __post_init__(self):
        for name, shape in (("rotation", (3, 3)), ("translation", (3,)), ("intrinsics", (4,))):
            value = np.array(getattr(self, name), dtype=np.float64)
            if value.shape != shape:
                raise DomainError(f"camera {name} has shape {value.shape}, expected {shape}")
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @classmethod
    def identity(cls, grid: Grid, intrinsics: ArrayLike = (1.0, 1.0, 0.5, 0.5)) -> "CameraParams":
        return cls(np.eye(3), np.zeros(3), np.asarray(intrinsics, dtype=np.float64), grid)

    @property
    def focal_pixels(self) -> Tuple[float, float]:
        return self.intrinsics[0] * self.grid.width, self.intrinsics[1] * self.grid.height

    @property
    def principal_pixels(self) -> Tuple[float, float]:
        return self.intrinsics[2] * self.grid.width, self.intrinsics[3] * self.grid.height

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))))

    def is_valid(self) -> bool:
        return (
            self.orthonormality_error() < 1e-9
            and abs(np.linalg.det(self.rotation) - 1.0) < 1e-9
            and self.intrinsics[0] > 0
            and self.intrinsics[1] > 0
            and bool(np.all(np.isfinite(self.translation)))
        )

    def with_intrinsics(self, intrinsics: ArrayLike) -> "CameraParams":
        return CameraParams(self.rotation, self.translation, np.asarray(intrinsics), self.grid)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CameraParams):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and np.array_equal(self.intrinsics, other.intrinsics)
        )

    def __hash__(self) -> int:
        return hash((self.grid, self.rotation.tobytes(), self.translation.tobytes(), self.intrinsics.tobytes()))


def camera_pack(c: CameraParams) -> np.ndarray:
    """Pack a camera into its 13-vector."""
    return np.concatenate([matrix_to_rot6d(c.rotation).values, c.translation, c.intrinsics])


def camera_unpack(v: ArrayLike, grid: Grid) -> CameraParams:
    """
    Unpack a 13-vector.

    Raises:
        NumericError: if the rotation slots are degenerate
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (13,):
        raise DomainError(f"camera vector must have 13 entries, got shape {v.shape}")
    return CameraParams(rot6d_to_matrix(v[:6]), v[6:9], v[9:13], grid)


def pixel_rays(c: CameraParams) -> np.ndarray:
    """
    Camera-frame rays ``(a, b, 1)`` for every pixel, shape (H, W, 3).

    A pixel with camera-frame depth Z unprojects to ``Z * ray``.
    """
    fx, fy = c.focal_pixels
    cx, cy = c.principal_pixels
    v, u = np.mgrid[0 : c.grid.height, 0 : c.grid.width].astype(np.float64)
    rays = np.empty(c.grid.shape + (3,))
    rays[..., 0] = (u - cx) / fx
    rays[..., 1] = (v - cy) / fy
    rays[..., 2] = 1.0
    return rays


def world_rays(c: CameraParams) -> np.ndarray:
    """Per-pixel rays rotated into the world frame (not normalized; camera-z component 1)."""
    return pixel_rays(c) @ c.rotation


def unproject_depth(depth: np.ndarray, c: CameraParams) -> np.ndarray:
    """Unproject a full (H, W) depth map to world points, shape (H, W, 3)."""
    return depth[..., None] * world_rays(c) + c.translation


def project_points(points: np.ndarray, c: CameraParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized projection without domain checks.

    Args:
        points: (..., 3) world points
        c: camera

    Returns:
        (uv, z): pixel coordinates (..., 2) and camera-frame depth (...)
    """
    cam = (np.asarray(points, dtype=np.float64) - c.translation) @ c.rotation.T
    fx, fy = c.focal_pixels
    cx, cy = c.principal_pixels
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([fx * cam[..., 0] / z + cx, fy * cam[..., 1] / z + cy], axis=-1)
    return uv, z


def project(p: ArrayLike, c: CameraParams) -> Tuple[np.ndarray, float]:
    """
    Project one world point.

    Returns:
        (pixel (u, v), camera-frame depth)

    Raises:
        DomainError: if the point is not in front of the camera
    """
    uv, z = project_points(np.asarray(p, dtype=np.float64).reshape(3), c)
    if not z > MIN_CAMERA_DEPTH:
        raise DomainError(f"point is behind the camera (camera-frame z = {float(z):.3g} m)")
    return uv, float(z)


def unproject(u: ArrayLike, d: float, c: CameraParams) -> np.ndarray:
    """
    Lift a pixel with camera-frame depth ``d`` to a world point.

    Raises:
        DomainError: if d <= 0
    """
    if not d > 0:
        raise DomainError(f"depth must be positive, got {d}")
    fx, fy = c.focal_pixels
    cx, cy = c.principal_pixels
    u = np.asarray(u, dtype=np.float64).reshape(2)
    cam = np.array([(u[0] - cx) / fx * d, (u[1] - cy) / fy * d, d])
    return c.rotation.T @ cam + c.translation
