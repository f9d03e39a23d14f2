"""
Dense per-pixel fields over an image grid.

Arrays are stored row-major as ``[row, column]`` with row index ``v`` and column
index ``u``. Pixel centers sit at integer coordinates. Values are float64 in
memory; the container stores float32. Construction checks shapes only: value
invariants (positive depth, binary mask, ...) are reported by ``validate_clip``
so that invalid data can still be loaded and inspected.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from ..errors import ValidationError

BACKGROUND_TRIANGLE = 0xFFFFFFFF


def _frozen(values: Any, dtype: Any) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Grid:
    """Image grid Ω, in pixels."""

    width: int
    height: int

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.width * self.height

    def is_valid(self) -> bool:
        return self.width >= 8 and self.height >= 8

    def to_dict(self) -> Dict[str, int]:
        return {"width": self.width, "height": self.height}

    @classmethod
    def parse(cls, text: str) -> "Grid":
        """Parse ``WIDTHxHEIGHT`` as used by the CLI."""
        try:
            width, height = (int(part) for part in text.lower().split("x"))
        except ValueError:
            raise ValidationError(f"grid size must look like 128x128, got {text!r}")
        return cls(width, height)


def _check_shape(name: str, values: np.ndarray, expected: tuple) -> None:
    if values.shape != expected:
        raise ValidationError(f"{name} has shape {values.shape}, expected {expected}")


class _Field:
    grid: Grid
    values: np.ndarray

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.grid, self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class DepthField(_Field):
    """Per-pixel camera-frame depth D, meters."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        _check_shape("depth", values, self.grid.shape)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class FlowField(_Field):
    """Per-pixel world-frame displacement F from frame i to i+1, meters."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        _check_shape("flow", values, self.grid.shape + (3,))
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "FlowField":
        return cls(grid, np.zeros(grid.shape + (3,)))


@dataclass(frozen=True, eq=False)
class MaskField(_Field):
    """Per-pixel foreground indicator in {0, 1}."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.uint8)
        _check_shape("mask", values, self.grid.shape)
        object.__setattr__(self, "values", values)

    @property
    def foreground(self) -> np.ndarray:
        """Boolean view of the foreground."""
        return self.values != 0

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.values))


@dataclass(frozen=True, eq=False)
class RasterBuffers:
    """
    Rasterization outputs for one frame.

    Background pixels carry triangle id ``BACKGROUND_TRIANGLE``, zero
    barycentrics and infinite depth.
    """

    triangle_ids: np.ndarray
    barycentrics: np.ndarray
    depth: np.ndarray
    empty: bool = False

    def __post_init__(self):
        ids = _frozen(self.triangle_ids, np.uint32)
        bary = _frozen(self.barycentrics, np.float64)
        depth = _frozen(self.depth, np.float64)
        _check_shape("barycentrics", bary, ids.shape + (3,))
        _check_shape("raster depth", depth, ids.shape)
        object.__setattr__(self, "triangle_ids", ids)
        object.__setattr__(self, "barycentrics", bary)
        object.__setattr__(self, "depth", depth)

    @property
    def grid(self) -> Grid:
        height, width = self.triangle_ids.shape
        return Grid(width, height)

    @property
    def foreground(self) -> np.ndarray:
        return self.triangle_ids != BACKGROUND_TRIANGLE

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterBuffers):
            return NotImplemented
        return (
            np.array_equal(self.triangle_ids, other.triangle_ids)
            and np.array_equal(self.barycentrics, other.barycentrics)
            and np.array_equal(self.depth, other.depth)
            and self.empty == other.empty
        )
