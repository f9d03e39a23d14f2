"""
Synthetic scene generation.

A single subject plays a motion preset in front of a camera that sits at the
world origin for frame 0 (optionally orbiting afterwards). The background is
the ground plane; rays that miss it read a far depth.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation

from ..camera import CameraParams
from ..config import worker_threads
from ..errors import ValidationError
from ..fields.clip import ClipMeta, FrameRecord, SceneClip
from ..fields.dense import DepthField, FlowField, Grid, MaskField, RasterBuffers
from ..geometry import ground_depth
from ..kinematics import Pose, default_skeleton, forward_kinematics
from .humanoid import GarmentState, Humanoid, advance_garment, build_humanoid, skin_vertices
from .motion import SUBJECT_DEPTH, preset_script, preset_summary
from .raster import pixel_flow_gt, rasterize_frame

logger = logging.getLogger(__name__)

GROUND_Y = -1.0
FAR_DEPTH = 50.0
CAMERA_INTRINSICS = (1.2, 1.2, 0.5, 0.5)
ORBIT_RATE = 0.02
VERTICES_PER_PIXEL = 3


def orbit_camera(frame: int, grid: Grid, rate: float = ORBIT_RATE) -> CameraParams:
    """
    Camera for ``frame`` circling the vertical axis through the subject.

    Frame 0 is the identity camera at the origin.
    """
    if frame == 0:
        return CameraParams.identity(grid, CAMERA_INTRINSICS)
    pivot = np.array([0.0, 0.0, SUBJECT_DEPTH])
    turn = Rotation.from_rotvec([0.0, rate * frame, 0.0]).as_matrix()
    center = pivot + turn @ (np.zeros(3) - pivot)
    return CameraParams(turn.T, center, np.asarray(CAMERA_INTRINSICS), grid)


def _check_vertex_budget(h: Humanoid, rasters: List[RasterBuffers]) -> None:
    widest = max(int(np.count_nonzero(r.foreground)) for r in rasters)
    needed = VERTICES_PER_PIXEL * widest
    if h.vertex_count < needed:
        raise ValidationError(
            f"mesh has {h.vertex_count} vertices but the largest silhouette covers {widest} pixels; "
            f"need at least {needed}. Raise the subdivisions or lower the resolution"
        )
    if h.vertex_count < 2 * needed:
        logger.warning(f"Vertex budget is tight: {h.vertex_count} vertices for {widest} foreground pixels")


def generate_scene(
    preset: str,
    grid: Grid,
    frames: int,
    dt: float = 1.0 / 30.0,
    seed: int = 0,
    orbit: bool = False,
    subdivisions: int = 5,
    threads: Optional[int] = None,
) -> SceneClip:
    """
    Render a ground-truth clip.

    Flow is expressed in the world frame, so orbiting the camera changes the
    depth, mask and raster buffers but not the flow of any surface point.

    Raises:
        ValidationError: for fewer than 2 frames, an invalid grid, an unknown
            preset or a mesh too coarse for the resolution
    """
    if frames < 2:
        raise ValidationError(f"a clip needs at least 2 frames, got {frames}")
    if not grid.is_valid():
        raise ValidationError(f"grid {grid.width}x{grid.height} is below the 8x8 minimum")
    if not dt > 0:
        raise ValidationError(f"frame interval must be positive, got {dt}")

    s = default_skeleton()
    h = build_humanoid(s, subdivisions=subdivisions, seed=seed)
    script = preset_script(preset, frames, s, GROUND_Y)

    poses: List[Pose] = []
    vertices: List[np.ndarray] = []
    garment = GarmentState.zeros(s)
    for i in range(frames):
        q = script.angles_at(i)
        pose = forward_kinematics(q, s)
        if poses:
            garment = advance_garment(garment, poses[-1], pose, s, script.garment, dt)
        poses.append(pose)
        vertices.append(skin_vertices(h, q, garment))

    cameras = [orbit_camera(i, grid) if orbit else CameraParams.identity(grid, CAMERA_INTRINSICS) for i in range(frames)]
    with ThreadPoolExecutor(max_workers=threads or worker_threads()) as pool:
        rasters = list(pool.map(lambda i: rasterize_frame(vertices[i], h.triangles, cameras[i], grid), range(frames)))
    _check_vertex_budget(h, rasters)

    records = []
    for i, raster in enumerate(rasters):
        if i + 1 < frames:
            flow = pixel_flow_gt(raster, vertices[i], vertices[i + 1], h.triangles)
        else:
            flow = FlowField.zeros(grid)
        foreground = raster.foreground
        background = ground_depth(cameras[i], GROUND_Y, FAR_DEPTH)
        depth = np.where(foreground, raster.depth, background)
        records.append(
            FrameRecord(
                DepthField(grid, depth),
                flow,
                MaskField(grid, foreground.astype(np.uint8)),
                poses[i],
                cameras[i],
                raster,
            )
        )
    summary = preset_summary(script)
    logger.info(
        f"Generated {preset} clip: {frames} frames at {grid.width}x{grid.height}, "
        f"{h.triangle_count} triangles, {summary['keyposes']} keyposes"
    )
    return SceneClip(tuple(records), ClipMeta(seed=seed, dt_seconds=dt))


def flow_magnitude_image(flow: FlowField, scale: Optional[float] = None) -> np.ndarray:
    """
    8-bit grayscale flow magnitude, top row first.

    ``scale`` maps to white; it defaults to the largest magnitude in the frame.
    """
    magnitude = np.linalg.norm(flow.values, axis=-1)
    top = float(magnitude.max()) if scale is None else scale
    if top > 0:
        magnitude = magnitude / top
    return np.clip(np.rint(magnitude[::-1] * 255.0), 0, 255).astype(np.uint8)


def write_ppm(image: np.ndarray, path: Union[str, Path]) -> None:
    """Write a grayscale image as a binary P6 PPM."""
    height, width = image.shape
    rgb = np.repeat(image[..., None], 3, axis=-1)
    with open(path, "wb") as handle:
        handle.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        handle.write(rgb.tobytes())


def dump_flow_ppms(clip: SceneClip, directory: Union[str, Path]) -> List[Path]:
    """One flow magnitude PPM per frame, shared scale across the clip."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scale = max(float(np.linalg.norm(frame.flow.values, axis=-1).max()) for frame in clip)
    paths = []
    for i, frame in enumerate(clip):
        path = directory / f"flow_{i:04d}.ppm"
        write_ppm(flow_magnitude_image(frame.flow, scale or None), path)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} flow images")
    return paths
