"""
Box geometry
============

Boxes are stored in center form ``(cx, cy, w, h)``; corner form
``(x1, y1, x2, y2)`` is only used at I/O boundaries and inside the kernels.

The IoU arithmetic here is the reference that the compiled and numpy
kernels reproduce operation for operation, so legality decisions
(``iou > tau``) agree bit-for-bit across every code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidBoxError

__all__ = ["Box", "iou", "iou_corners", "nms", "to_corner_array"]


@dataclass(frozen=True, slots=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidBoxError(f"box {name}={v!r} is not finite")
        if not (self.w > 0 and self.h > 0):
            raise InvalidBoxError(f"box must have w > 0 and h > 0, got w={self.w!r} h={self.h!r}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return cls(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1)

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Box":
        if len(values) != 4:
            raise InvalidBoxError(f"box needs 4 values, got {len(values)}")
        cx, cy, w, h = (float(v) for v in values)
        return cls(cx, cy, w, h)

    def corners(self) -> tuple[float, float, float, float]:
        hw = 0.5 * self.w
        hh = 0.5 * self.h
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    def to_list(self) -> list[float]:
        return [self.cx, self.cy, self.w, self.h]

    @property
    def area(self) -> float:
        return self.w * self.h


def iou_corners(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2) -> float:
    """IoU of two corner-form boxes; touching edges count as no overlap."""
    iw = min(ax2, bx2) - max(ax1, bx1)
    if iw <= 0.0:
        return 0.0
    ih = min(ay2, by2) - max(ay1, by1)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / ((area_a + area_b) - inter)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    return iou_corners(*a.corners(), *b.corners())


def to_corner_array(boxes: Sequence[Box]) -> np.ndarray:
    """(N, 4) float64 corner array using the same rounding as :meth:`Box.corners`."""
    out = np.empty((len(boxes), 4), dtype=np.float64)
    for k, b in enumerate(boxes):
        out[k] = b.corners()
    return out


def nms(boxes: Sequence[tuple[Box, float]], threshold: float) -> list[int]:
    """Greedy non-maximum suppression.

    Returns the indices of kept boxes in descending score order. A box is
    dropped when its IoU with an already kept box exceeds ``threshold``.
    Equal scores are visited in order of original index.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold!r}")
    for _, s in boxes:
        if not math.isfinite(s):
            raise ValueError(f"non-finite score {s!r}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i][1], i))
    corners = [boxes[i][0].corners() for i in range(len(boxes))]
    keep: list[int] = []
    for i in order:
        ci = corners[i]
        if all(iou_corners(*ci, *corners[k]) <= threshold for k in keep):
            keep.append(i)
    return keep
