"""
Geometric substrate of the priors: mask signed distance fields, Sobel edge
magnitudes with their adjoint, ground planes, convex hulls and polygon
signed distances.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import ndimage

from .camera import CameraParams, unproject_depth, world_rays
from .errors import DegenerateMaskError, DomainError, InsufficientSupportError, ValidationError
from .fields.dense import Grid, MaskField
from .kinematics import fallback_axis

logger = logging.getLogger(__name__)

DEFAULT_TAU_SAT = 32.0

SOBEL_DERIVATIVE = np.array([-1.0, 0.0, 1.0])
SOBEL_SMOOTHING = np.array([1.0, 2.0, 1.0])
SOBEL_SCALE = 1.0 / 8.0

RANSAC_ITERATIONS = 256
RANSAC_THRESHOLD = 0.02
RANSAC_SLACK = 0.05
RANSAC_MIN_CANDIDATES = 50
RANSAC_SCORING_POINTS = 4096


@dataclass(frozen=True, eq=False)
class SignedDistanceField:
    """Per-pixel distance to the mask boundary, pixels; positive outside, saturated at ``tau_sat``."""

    grid: Grid
    values: np.ndarray
    tau_sat: float


@dataclass(frozen=True, eq=False)
class Plane:
    """The plane ``{x : normal . x = offset}`` with a unit, upward normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.array(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise ValidationError("plane normal must be a unit vector")
        normal.flags.writeable = False
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    def height(self, points: np.ndarray) -> np.ndarray:
        """Signed height above the plane along the normal."""
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset

    def basis(self) -> Tuple[np.ndarray, np.ndarray]:
        """In-plane orthonormal axes (e1, e2) with e1 x e2 = normal."""
        e1 = fallback_axis(self.normal)
        e2 = np.cross(self.normal, e1)
        return e1, e2

    def project_2d(self, points: np.ndarray) -> np.ndarray:
        """In-plane coordinates of the orthogonal projection of ``points``."""
        e1, e2 = self.basis()
        points = np.asarray(points, dtype=np.float64)
        return np.stack([points @ e1, points @ e2], axis=-1)


@dataclass(frozen=True, eq=False)
class Polygon2D:
    """Convex polygon in counter-clockwise order. One vertex is a point, two a segment."""

    vertices: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(vertices) == 0:
            raise ValidationError("polygon needs at least one vertex")
        vertices.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def edges(self) -> Sequence[Tuple[np.ndarray, np.ndarray]]:
        count = len(self.vertices)
        if count == 1:
            return []
        if count == 2:
            return [(self.vertices[0], self.vertices[1])]
        return [(self.vertices[i], self.vertices[(i + 1) % count]) for i in range(count)]


# ---------------------------------------------------------------------------
# Mask distance and edges
# ---------------------------------------------------------------------------


def mask_sdf(m: MaskField, tau_sat: float = DEFAULT_TAU_SAT) -> SignedDistanceField:
    """
    Saturated signed Euclidean distance to the mask boundary.

    Background pixels hold the distance to the nearest foreground pixel,
    foreground pixels minus the distance to the nearest background pixel.

    Raises:
        DegenerateMaskError: if the mask is all foreground or all background
    """
    foreground = m.foreground
    if foreground.all() or not foreground.any():
        raise DegenerateMaskError("mask needs both foreground and background pixels")
    outside = ndimage.distance_transform_edt(~foreground)
    inside = ndimage.distance_transform_edt(foreground)
    values = np.clip(outside - inside, -tau_sat, tau_sat)
    return SignedDistanceField(m.grid, values, float(tau_sat))


def _channels(values: np.ndarray) -> np.ndarray:
    return values[..., None] if values.ndim == 2 else values


def sobel_xy(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Normalized Sobel responses per channel with replicate borders.

    Args:
        values: (H, W) or (H, W, C) array

    Returns:
        (gx, gy) shaped like ``values``; x runs along columns, y along rows
    """
    stacked = _channels(np.asarray(values, dtype=np.float64))
    gx = np.empty_like(stacked)
    gy = np.empty_like(stacked)
    for channel in range(stacked.shape[-1]):
        plane = stacked[..., channel]
        gx[..., channel] = ndimage.sobel(plane, axis=1, mode="nearest") * SOBEL_SCALE
        gy[..., channel] = ndimage.sobel(plane, axis=0, mode="nearest") * SOBEL_SCALE
    if np.ndim(values) == 2:
        return gx[..., 0], gy[..., 0]
    return gx, gy


def grad_norm(values: np.ndarray) -> np.ndarray:
    """Per-pixel l2 norm of the Sobel responses over x, y and channels."""
    if hasattr(values, "values"):
        values = values.values
    gx, gy = sobel_xy(values)
    squares = gx * gx + gy * gy
    if squares.ndim == 3:
        squares = squares.sum(axis=-1)
    return np.sqrt(squares)


def _correlate1d_adjoint(upstream: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    # Forward: out[i] = sum_k w[k] * in[clip(i + k - 1)], replicate borders.
    size = upstream.shape[axis]
    result = np.zeros_like(upstream)
    moved_result = np.moveaxis(result, axis, 0)
    moved_upstream = np.moveaxis(upstream, axis, 0)
    positions = np.arange(size)
    for k, weight in enumerate(weights):
        if weight == 0.0:
            continue
        targets = np.clip(positions + k - 1, 0, size - 1)
        np.add.at(moved_result, targets, weight * moved_upstream)
    return result


def sobel_adjoint(upstream_x: np.ndarray, upstream_y: np.ndarray) -> np.ndarray:
    """
    Adjoint of ``sobel_xy`` for 2D arrays: the gradient of
    ``sum(upstream_x * gx + upstream_y * gy)`` with respect to the input.
    """
    along_x = _correlate1d_adjoint(_correlate1d_adjoint(upstream_x, SOBEL_SMOOTHING, 0), SOBEL_DERIVATIVE, 1)
    along_y = _correlate1d_adjoint(_correlate1d_adjoint(upstream_y, SOBEL_SMOOTHING, 1), SOBEL_DERIVATIVE, 0)
    return (along_x + along_y) * SOBEL_SCALE


def weighted_grad_norm(values: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-pixel ``weights * grad_norm(values)`` and the gradient of its sum
    with respect to ``values``.

    The subgradient at pixels with zero Sobel response is taken as zero.
    """
    values = np.asarray(values, dtype=np.float64)
    gx, gy = sobel_xy(values)
    gx, gy = _channels(gx), _channels(gy)
    norm = np.sqrt((gx * gx + gy * gy).sum(axis=-1))
    contributions = weights * norm
    scale = np.divide(weights, norm, out=np.zeros_like(norm), where=norm > 0)
    gradient = np.empty_like(gx)
    for channel in range(gx.shape[-1]):
        gradient[..., channel] = sobel_adjoint(scale * gx[..., channel], scale * gy[..., channel])
    return contributions, gradient.reshape(values.shape)


# ---------------------------------------------------------------------------
# Polygons
# ---------------------------------------------------------------------------


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence[Sequence[float]]) -> Polygon2D:
    """
    Counter-clockwise convex hull by Andrew's monotone chain.

    Collinear boundary points are dropped; one distinct point gives a point
    polygon, collinear input a two-vertex segment.

    Raises:
        DomainError: on empty input
    """
    array = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(array) == 0:
        raise DomainError("convex hull of an empty point set")
    unique = sorted({(float(x), float(y)) for x, y in array})
    if len(unique) <= 2:
        return Polygon2D(np.array(unique))
    pts = [np.array(p) for p in unique]

    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return Polygon2D(np.array(hull))


def _closest_on_segment(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    direction = b - a
    length_sq = float(direction @ direction)
    if length_sq == 0.0:
        return a
    t = min(max(float((q - a) @ direction) / length_sq, 0.0), 1.0)
    return a + t * direction


def polygon_closest_point(q: Sequence[float], poly: Polygon2D) -> Tuple[float, np.ndarray]:
    """
    Signed distance and the nearest boundary point.

    Negative inside, positive outside. Point and segment polygons have no
    interior.
    """
    q = np.asarray(q, dtype=np.float64).reshape(2)
    if len(poly) == 1:
        nearest = poly.vertices[0]
        return float(np.linalg.norm(q - nearest)), nearest
    best_distance, nearest = np.inf, poly.vertices[0]
    for a, b in poly.edges:
        candidate = _closest_on_segment(q, a, b)
        distance = float(np.linalg.norm(q - candidate))
        if distance < best_distance:
            best_distance, nearest = distance, candidate
    if len(poly) >= 3 and all(_cross(a, b, q) >= 0 for a, b in poly.edges):
        return -best_distance, nearest
    return best_distance, nearest


def polygon_signed_distance(q: Sequence[float], poly: Polygon2D) -> float:
    """Signed distance from ``q`` to the polygon boundary, meters."""
    return polygon_closest_point(q, poly)[0]


# ---------------------------------------------------------------------------
# Ground plane
# ---------------------------------------------------------------------------


def fit_plane(points: np.ndarray) -> Plane:
    """Least-squares plane through ``points`` with its normal oriented toward +Y."""
    center = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - center, full_matrices=False)
    normal = vt[-1] / np.linalg.norm(vt[-1])
    if normal[1] < 0:
        normal = -normal
    return Plane(normal, float(normal @ center))


def ground_candidates(depth: np.ndarray, mask: MaskField, camera: CameraParams, slack: float = RANSAC_SLACK) -> np.ndarray:
    """Background world points below the foreground's lowest point plus ``slack``."""
    points = unproject_depth(np.asarray(depth, dtype=np.float64), camera)
    foreground = mask.foreground
    finite = np.isfinite(points).all(axis=-1)
    if not foreground.any():
        raise InsufficientSupportError("no foreground to bound the ground search")
    floor = points[foreground & finite][:, 1].min() + slack
    background = points[~foreground & finite]
    return background[background[:, 1] < floor]


def ransac_ground_plane(
    depth,
    mask: MaskField,
    camera: CameraParams,
    seed: int,
    iterations: int = RANSAC_ITERATIONS,
    threshold: float = RANSAC_THRESHOLD,
    slack: float = RANSAC_SLACK,
) -> Plane:
    """
    Fit the ground under the subject.

    Hypotheses come from random point triples and are scored on a seeded
    subsample of at most 4096 candidates; the best one is refit by least
    squares on its inliers among all candidates.

    Raises:
        InsufficientSupportError: if fewer than 50 candidates exist
    """
    values = depth.values if hasattr(depth, "values") else depth
    candidates = ground_candidates(values, mask, camera, slack)
    if len(candidates) < RANSAC_MIN_CANDIDATES:
        raise InsufficientSupportError(
            f"only {len(candidates)} ground candidates below the subject, need {RANSAC_MIN_CANDIDATES}"
        )
    rng = np.random.default_rng(seed)
    scoring = candidates
    if len(candidates) > RANSAC_SCORING_POINTS:
        scoring = candidates[rng.choice(len(candidates), RANSAC_SCORING_POINTS, replace=False)]

    triples = candidates[rng.integers(0, len(candidates), size=(iterations, 3))]
    normals = np.cross(triples[:, 1] - triples[:, 0], triples[:, 2] - triples[:, 0])
    lengths = np.linalg.norm(normals, axis=1)
    usable = lengths > 1e-12
    normals = np.divide(normals, lengths[:, None], out=np.zeros_like(normals), where=usable[:, None])
    offsets = np.einsum("ik,ik->i", normals, triples[:, 0])
    counts = np.zeros(iterations, dtype=np.int64)
    for start in range(0, iterations, 64):
        block = slice(start, start + 64)
        distances = np.abs(scoring @ normals[block].T - offsets[block])
        counts[block] = np.sum(distances < threshold, axis=0)
    counts[~usable] = -1
    best = int(np.argmax(counts))
    if counts[best] < 3:
        raise InsufficientSupportError("no plane hypothesis gathered inliers")

    inliers = candidates[np.abs(candidates @ normals[best] - offsets[best]) < threshold]
    plane = fit_plane(inliers)
    logger.debug(f"Ground plane from {len(inliers)}/{len(candidates)} inliers: n={plane.normal}, offset={plane.offset:.4f}")
    return plane


def ground_depth(camera: CameraParams, ground_y: float, far_depth: float = 50.0) -> np.ndarray:
    """
    Camera-frame depth of the horizontal plane ``y = ground_y`` for every pixel.

    Pixels whose ray does not hit the plane in front of the camera get
    ``far_depth``.
    """
    rays = world_rays(camera)
    drop = ground_y - camera.translation[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = drop / rays[..., 1]
    return np.where((rays[..., 1] < 0) & (depth > 0), depth, far_depth)
