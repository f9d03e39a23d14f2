"""Synthetic clips with exact scene flow ground truth."""

from .humanoid import (
    BodyProfile,
    GarmentParams,
    GarmentState,
    Humanoid,
    advance_garment,
    build_humanoid,
    skin_vertices,
)
from .motion import PRESETS, MotionScript, preset_script
from .raster import pixel_flow_gt, rasterize_frame
from .scene import GROUND_Y, dump_flow_ppms, generate_scene, orbit_camera

__all__ = [
    "BodyProfile",
    "GarmentParams",
    "GarmentState",
    "Humanoid",
    "advance_garment",
    "build_humanoid",
    "skin_vertices",
    "PRESETS",
    "MotionScript",
    "preset_script",
    "pixel_flow_gt",
    "rasterize_frame",
    "GROUND_Y",
    "dump_flow_ppms",
    "generate_scene",
    "orbit_camera",
]
