"""2D boxes and instance masks.

Boxes are inclusive on both ends and live on the integer pixel grid, so a
box (x_min, y_min, x_max, y_max) spans ``x_max - x_min + 1`` pixels while
its geometric extent is ``x_max - x_min``. All scaling arithmetic below
works on extents; endpoints are rounded half-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class EmptyMaskError(ValueError):
    pass


def round_half_up(v: float) -> int:
    """The one rounding rule used for all box/side arithmetic."""
    return int(math.floor(v + 0.5))


_iround = round_half_up


@dataclass(frozen=True)
class BBox2D:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"degenerate box {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def width(self) -> int:
        """Pixel count along x (inclusive endpoints)."""
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains(self, other: "BBox2D") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )


@dataclass(frozen=True)
class InstanceMask:
    """Binary raster tied to one object instance."""

    mask: np.ndarray
    instance_id: int
    class_name: str

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        if m.ndim != 2:
            raise ValueError("mask must be 2-D")

    @property
    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    @property
    def pixel_count(self) -> int:
        return int(np.count_nonzero(self.mask))


def bbox_from_mask(mask) -> BBox2D:
    """Tightest box containing every set pixel; raises on an empty mask."""
    m = mask.mask if isinstance(mask, InstanceMask) else np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(m)
    if ys.size == 0:
        raise EmptyMaskError("mask has no set pixels")
    return BBox2D(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def expand_bbox(box: BBox2D, factor: float, bounds: tuple[int, int]) -> BBox2D:
    """Scale a box about its center by ``factor``, then clamp to the image.

    ``bounds`` is (width, height). Endpoints are rounded half-up before
    clamping; clamping absorbs any overflow without re-centering.
    """
    if factor < 1.0:
        raise ValueError(f"expansion factor must be >= 1, got {factor}")
    w, h = bounds
    cx, cy = box.center()
    half_w = (box.x_max - box.x_min) * factor / 2.0
    half_h = (box.y_max - box.y_min) * factor / 2.0
    x0 = max(0, _iround(cx - half_w))
    y0 = max(0, _iround(cy - half_h))
    x1 = min(w - 1, _iround(cx + half_w))
    y1 = min(h - 1, _iround(cy + half_h))
    return BBox2D(x0, y0, x1, y1)


def square_bbox(box: BBox2D, bounds: tuple[int, int]) -> BBox2D:
    """Smallest square covering the box, kept inside the image.

    The square has side max(width, height) of the input (extent semantics)
    and is centered on the box center. If it pokes outside the image it is
    translated back in; only a side longer than the image itself gets
    truncated (per axis), in which case the result is no longer square.
    """
    w, h = bounds
    side = max(box.x_max - box.x_min, box.y_max - box.y_min)
    cx, cy = box.center()

    def _axis(center: float, limit: int) -> tuple[int, int]:
        lo = _iround(center - side / 2.0)
        hi = lo + side
        if hi - lo > limit - 1:
            return 0, limit - 1
        if lo < 0:
            hi -= lo
            lo = 0
        if hi > limit - 1:
            lo -= hi - (limit - 1)
            hi = limit - 1
        return lo, hi

    x0, x1 = _axis(cx, w)
    y0, y1 = _axis(cy, h)
    return BBox2D(x0, y0, x1, y1)


def crop(image: np.ndarray, box: BBox2D) -> np.ndarray:
    """Extract the inclusive box region from an (H,W[,C]) array."""
    return image[box.y_min : box.y_max + 1, box.x_min : box.x_max + 1]


def paste(image: np.ndarray, patch: np.ndarray, box: BBox2D) -> None:
    """Write ``patch`` into the inclusive box region, in place."""
    expected = (box.height, box.width)
    if patch.shape[:2] != expected:
        raise ValueError(f"patch shape {patch.shape[:2]} != box size {expected}")
    image[box.y_min : box.y_max + 1, box.x_min : box.x_max + 1] = patch
