import numpy as np
import pytest

from flowpriors.camera import CameraParams, unproject_depth
from flowpriors.errors import DegenerateMaskError, DomainError, InsufficientSupportError
from flowpriors.fields.dense import Grid, MaskField
from flowpriors.geometry import (
    Plane,
    Polygon2D,
    convex_hull,
    grad_norm,
    ground_depth,
    mask_sdf,
    polygon_closest_point,
    polygon_signed_distance,
    ransac_ground_plane,
    sobel_adjoint,
    sobel_xy,
    weighted_grad_norm,
)


def _brute_sdf(foreground, tau):
    rows, cols = np.indices(foreground.shape)
    fg = np.argwhere(foreground)
    bg = np.argwhere(~foreground)
    result = np.empty(foreground.shape)
    for v, u in zip(rows.ravel(), cols.ravel()):
        if foreground[v, u]:
            result[v, u] = -np.min(np.hypot(bg[:, 0] - v, bg[:, 1] - u))
        else:
            result[v, u] = np.min(np.hypot(fg[:, 0] - v, fg[:, 1] - u))
    return np.clip(result, -tau, tau)


@pytest.mark.parametrize("shape", [(16, 16), (40, 24), (64, 64)])
def test_mask_sdf_matches_brute_force(shape, rng):
    foreground = np.zeros(shape, dtype=bool)
    for _ in range(3):
        v, u = rng.integers(0, shape[0]), rng.integers(0, shape[1])
        radius = rng.uniform(2, 8)
        rows, cols = np.indices(shape)
        foreground |= (rows - v) ** 2 + (cols - u) ** 2 <= radius**2
    foreground[0, 0] = False
    foreground[-1, -1] = True
    mask = MaskField(Grid(shape[1], shape[0]), foreground.astype(np.uint8))
    sdf = mask_sdf(mask, tau_sat=10.0)
    assert np.allclose(sdf.values, _brute_sdf(foreground, 10.0), atol=1e-12)


def test_mask_sdf_single_pixel():
    values = np.zeros((9, 9), dtype=np.uint8)
    values[4, 4] = 1
    sdf = mask_sdf(MaskField(Grid(9, 9), values))
    assert sdf.values[4, 4] == -1.0
    assert sdf.values[4, 7] == 3.0
    assert sdf.values[0, 0] == pytest.approx(np.hypot(4, 4))


def test_mask_sdf_degenerate():
    with pytest.raises(DegenerateMaskError):
        mask_sdf(MaskField(Grid(8, 8), np.ones((8, 8))))
    with pytest.raises(DegenerateMaskError):
        mask_sdf(MaskField(Grid(8, 8), np.zeros((8, 8))))


def test_sobel_of_ramp():
    v, u = np.indices((10, 12)).astype(float)
    gx, gy = sobel_xy(2.0 * u + 3.0 * v)
    assert np.allclose(gx[1:-1, 1:-1], 2.0)
    assert np.allclose(gy[1:-1, 1:-1], 3.0)
    assert np.allclose(grad_norm(2.0 * u + 3.0 * v)[5, 5], np.hypot(2.0, 3.0))


def test_sobel_adjoint_is_transpose(rng):
    x = rng.normal(size=(11, 13))
    ux, uy = rng.normal(size=(2, 11, 13))
    gx, gy = sobel_xy(x)
    forward = np.sum(ux * gx) + np.sum(uy * gy)
    backward = np.sum(x * sobel_adjoint(ux, uy))
    assert forward == pytest.approx(backward, rel=1e-10)


def test_weighted_grad_norm_gradient(rng):
    v, u = np.indices((12, 12)).astype(float)
    values = np.stack([u + 0.1 * rng.normal(size=u.shape), v, u - v], axis=-1)
    weights = rng.uniform(0.0, 1.0, size=u.shape)
    _, gradient = weighted_grad_norm(values, weights)
    direction = rng.normal(size=values.shape)
    h = 1e-6
    plus, _ = weighted_grad_norm(values + h * direction, weights)
    minus, _ = weighted_grad_norm(values - h * direction, weights)
    numeric = (plus - minus).sum() / (2 * h)
    assert numeric == pytest.approx(np.sum(gradient * direction), rel=1e-6)


def test_convex_hull_square_with_interior():
    points = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5), (0.5, 0), (0.2, 0.7)]
    hull = convex_hull(points)
    assert len(hull) == 4
    signed_area = 0.5 * sum(a[0] * b[1] - b[0] * a[1] for a, b in hull.edges)
    assert signed_area == pytest.approx(1.0)


def test_convex_hull_degenerate_inputs():
    assert len(convex_hull([(1, 2), (1, 2)])) == 1
    assert len(convex_hull([(0, 0), (2, 0)])) == 2
    assert len(convex_hull([(0, 0), (1, 0), (2, 0)])) == 2
    with pytest.raises(DomainError):
        convex_hull(np.zeros((0, 2)))


def test_polygon_signed_distance():
    square = convex_hull([(0, 0), (2, 0), (2, 2), (0, 2)])
    assert polygon_signed_distance((1, 1), square) == pytest.approx(-1.0)
    assert polygon_signed_distance((3, 1), square) == pytest.approx(1.0)
    assert polygon_signed_distance((3, 3), square) == pytest.approx(np.sqrt(2))
    distance, nearest = polygon_closest_point((2, 1), square)
    assert distance == 0.0
    assert np.allclose(nearest, (2, 1))


def test_segment_polygon_has_no_interior():
    segment = Polygon2D(np.array([[-1.0, 0.0], [1.0, 0.0]]))
    assert polygon_signed_distance((0.0, 0.5), segment) == pytest.approx(0.5)
    assert polygon_signed_distance((0.0, 0.0), segment) == 0.0


def test_plane_basis():
    plane = Plane(np.array([0.0, 1.0, 0.0]), -1.0)
    e1, e2 = plane.basis()
    assert np.allclose(np.cross(e1, e2), plane.normal)
    assert plane.height(np.array([[0.0, 0.5, 0.0]]))[0] == pytest.approx(1.5)


def _floor_scene(grid, ground_y=-1.0):
    camera = CameraParams.identity(grid, (1.2, 1.2, 0.5, 0.5))
    depth = ground_depth(camera, ground_y)
    mask = np.zeros(grid.shape, dtype=np.uint8)
    mask[grid.height // 2 - 4 : grid.height // 2 + 4, grid.width // 2 - 3 : grid.width // 2 + 3] = 1
    depth = np.where(mask == 1, 3.0, depth)
    return camera, depth, MaskField(grid, mask)


def test_ground_depth_lies_on_plane():
    camera, depth, mask = _floor_scene(Grid(32, 32))
    points = unproject_depth(depth, camera)
    hits = (~mask.foreground) & (depth < 50.0)
    assert hits.any()
    assert np.allclose(points[hits][:, 1], -1.0)


def test_ransac_recovers_floor(rng):
    grid = Grid(64, 64)
    camera, depth, mask = _floor_scene(grid)
    noisy = depth + np.where(mask.foreground, 0.0, rng.normal(scale=0.002, size=depth.shape))
    plane = ransac_ground_plane(noisy, mask, camera, seed=0)
    assert plane.normal[1] > 0.999
    assert plane.offset == pytest.approx(-1.0, abs=0.01)


def test_ransac_deterministic():
    grid = Grid(48, 48)
    camera, depth, mask = _floor_scene(grid)
    a = ransac_ground_plane(depth, mask, camera, seed=5)
    b = ransac_ground_plane(depth, mask, camera, seed=5)
    assert np.array_equal(a.normal, b.normal) and a.offset == b.offset


def test_ransac_needs_support():
    grid = Grid(16, 16)
    camera = CameraParams.identity(grid)
    mask = np.zeros(grid.shape, dtype=np.uint8)
    mask[0:2, :] = 1
    with pytest.raises(InsufficientSupportError):
        ransac_ground_plane(np.full(grid.shape, 5.0), MaskField(grid, mask), camera, seed=0)
