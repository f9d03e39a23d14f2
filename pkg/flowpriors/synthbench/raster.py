"""
Software rasterizer with perspective-correct barycentrics, plus exact
per-pixel flow propagated from vertex motion.

Pixel centers sit at integer coordinates and buffers are indexed ``[v, u]``.
Coverage is hard (no antialiasing): a pixel belongs to a triangle when its
center lies inside it, and centers exactly on a shared edge go to the one
triangle that owns that edge.
"""

import logging

import numpy as np
from numba import njit

from ..camera import MIN_CAMERA_DEPTH, CameraParams, project_points
from ..errors import CorruptionError
from ..fields.dense import BACKGROUND_TRIANGLE, FlowField, Grid, RasterBuffers

logger = logging.getLogger(__name__)


@njit(cache=True)
def _owns_edge(dx: float, dy: float) -> bool:
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


@njit(cache=True)
def _raster_kernel(uv, z, triangles, near, triangle_ids, barycentrics, depth):
    height, width = depth.shape
    for t in range(triangles.shape[0]):
        a = triangles[t, 0]
        b = triangles[t, 1]
        c = triangles[t, 2]
        if z[a] <= near or z[b] <= near or z[c] <= near:
            continue
        ax, ay = uv[a, 0], uv[a, 1]
        bx, by = uv[b, 0], uv[b, 1]
        cx, cy = uv[c, 0], uv[c, 1]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0 or not np.isfinite(area):
            continue
        # slot[k] is the original vertex slot of the k-th corner after reordering
        s1, s2 = 1, 2
        if area < 0.0:
            bx, by, cx, cy = cx, cy, bx, by
            b, c = c, b
            s1, s2 = 2, 1
            area = -area
        u_lo = max(int(np.ceil(min(ax, bx, cx))), 0)
        u_hi = min(int(np.floor(max(ax, bx, cx))), width - 1)
        v_lo = max(int(np.ceil(min(ay, by, cy))), 0)
        v_hi = min(int(np.floor(max(ay, by, cy))), height - 1)
        own_a = _owns_edge(cx - bx, cy - by)
        own_b = _owns_edge(ax - cx, ay - cy)
        own_c = _owns_edge(bx - ax, by - ay)
        inv_za, inv_zb, inv_zc = 1.0 / z[a], 1.0 / z[b], 1.0 / z[c]
        for v in range(v_lo, v_hi + 1):
            py = float(v)
            for u in range(u_lo, u_hi + 1):
                px = float(u)
                wa = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                wb = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                wc = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                if wa < 0.0 or wb < 0.0 or wc < 0.0:
                    continue
                if (wa == 0.0 and not own_a) or (wb == 0.0 and not own_b) or (wc == 0.0 and not own_c):
                    continue
                pa = wa / area * inv_za
                pb = wb / area * inv_zb
                pc = wc / area * inv_zc
                total = pa + pb + pc
                pixel_depth = 1.0 / total
                if pixel_depth < depth[v, u]:
                    depth[v, u] = pixel_depth
                    triangle_ids[v, u] = t
                    barycentrics[v, u, 0] = pa / total
                    barycentrics[v, u, s1] = pb / total
                    barycentrics[v, u, s2] = pc / total


def rasterize_frame(
    vertices: np.ndarray,
    triangles: np.ndarray,
    camera: CameraParams,
    grid: Grid,
    near: float = MIN_CAMERA_DEPTH,
) -> RasterBuffers:
    """
    Rasterize a triangle mesh given in world coordinates.

    Triangles with any vertex at camera depth ``<= near`` are skipped. The
    depth test is strict and triangles are visited in index order, so equal
    depths resolve to the lower triangle id. An image with no foreground is
    returned with ``empty=True``.
    """
    uv, z = project_points(np.asarray(vertices, dtype=np.float64), camera)
    triangle_ids = np.full(grid.shape, BACKGROUND_TRIANGLE, dtype=np.uint32)
    barycentrics = np.zeros(grid.shape + (3,))
    depth = np.full(grid.shape, np.inf)
    _raster_kernel(
        np.ascontiguousarray(uv),
        np.ascontiguousarray(z),
        np.ascontiguousarray(triangles, dtype=np.int64),
        float(near),
        triangle_ids,
        barycentrics,
        depth,
    )
    empty = not bool(np.any(triangle_ids != BACKGROUND_TRIANGLE))
    if empty:
        logger.warning(f"Rasterized frame at {grid.width}x{grid.height} has no foreground pixels")
    return RasterBuffers(triangle_ids, barycentrics, depth, empty=empty)


def pixel_flow_gt(
    buffers: RasterBuffers,
    vertices_i: np.ndarray,
    vertices_next: np.ndarray,
    triangles: np.ndarray,
) -> FlowField:
    """
    Exact scene flow at every foreground pixel of frame i.

    Each pixel moves with the surface point it sees: the barycentric blend of
    its triangle's vertex displacements. Background flow is zero.

    Raises:
        CorruptionError: if a triangle id does not index ``triangles``
    """
    grid = buffers.grid
    foreground = buffers.foreground
    ids = buffers.triangle_ids[foreground].astype(np.int64)
    if ids.size and ids.max() >= len(triangles):
        raise CorruptionError(
            f"triangle id {int(ids.max())} out of range for a mesh of {len(triangles)} triangles", tag="TRID"
        )
    motion = np.asarray(vertices_next, dtype=np.float64) - np.asarray(vertices_i, dtype=np.float64)
    corners = motion[np.asarray(triangles)[ids]]
    flow = np.zeros(grid.shape + (3,))
    flow[foreground] = np.einsum("nk,nkc->nc", buffers.barycentrics[foreground], corners)
    return FlowField(grid, flow)
