"""Dense fields and clip records. Import ``clip`` and ``container`` from their modules."""

from .dense import (
    BACKGROUND_TRIANGLE,
    DepthField,
    FlowField,
    Grid,
    MaskField,
    RasterBuffers,
)

__all__ = [
    "BACKGROUND_TRIANGLE",
    "DepthField",
    "FlowField",
    "Grid",
    "MaskField",
    "RasterBuffers",
]
