"""
Regression targets and tube losses.

Offsets follow the coordinate-normalised parameterisation

    dx = (x - x*) / x*      dy = (y - y*) / y*
    dw = ln(w / w*)         dh = ln(h / h*)

where ``*`` marks the reference (ground-truth) box. Note the centre offsets
are divided by the reference *coordinates*, not by its width and height as
in Faster R-CNN; this makes them depend on the image origin and undefined
for references centred on an axis, which :func:`encode` rejects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DecodeOverflowError, DegenerateAnchorError
from .geometry import Box, iou

__all__ = [
    "Offsets",
    "TubePrediction",
    "encode",
    "decode",
    "smooth_l1",
    "smooth_l1_grad",
    "tube_loss",
    "tube_loss_grad",
    "assign_label",
    "POSITIVE_IOU",
]

ANCHOR_EPS = 1e-9
POSITIVE_IOU = 0.5


class Offsets(NamedTuple):
    dx: float
    dy: float
    dw: float
    dh: float


@dataclass(frozen=True)
class TubePrediction:
    """Class distribution over ``C + 1`` classes (0 = background) and
    per-frame, per-foreground-class offsets of shape ``(T, C, 4)``."""

    class_probs: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.class_probs, dtype=np.float64)
        o = np.asarray(self.offsets, dtype=np.float64)
        if p.ndim != 1 or p.shape[0] < 1:
            raise ValueError("class_probs must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("class_probs must be a probability vector")
        if o.ndim != 3 or o.shape[1] != p.shape[0] - 1 or o.shape[2] != 4:
            raise ValueError(f"offsets must have shape (T, {p.shape[0] - 1}, 4), got {o.shape}")
        object.__setattr__(self, "class_probs", p)
        object.__setattr__(self, "offsets", o)

    @property
    def num_classes(self) -> int:
        return self.class_probs.shape[0] - 1


def encode(b: Box, b_star: Box) -> Offsets:
    """Offsets that move reference ``b_star`` onto ``b``."""
    if abs(b_star.cx) < ANCHOR_EPS or abs(b_star.cy) < ANCHOR_EPS:
        raise DegenerateAnchorError(
            f"reference centre ({b_star.cx}, {b_star.cy}) lies on an axis; offsets are undefined"
        )
    return Offsets(
        (b.cx - b_star.cx) / b_star.cx,
        (b.cy - b_star.cy) / b_star.cy,
        math.log(b.w / b_star.w),
        math.log(b.h / b_star.h),
    )


def decode(o: Offsets, b_star: Box) -> Box:
    """Inverse of :func:`encode`."""
    try:
        w = b_star.w * math.exp(o[2])
        h = b_star.h * math.exp(o[3])
    except OverflowError:
        raise DecodeOverflowError(f"offsets {tuple(o)} overflow the box size") from None
    if not (math.isfinite(w) and math.isfinite(h)) or w <= 0 or h <= 0:
        raise DecodeOverflowError(f"offsets {tuple(o)} give a non-finite or empty box")
    return Box(b_star.cx * (1.0 + o[0]), b_star.cy * (1.0 + o[1]), w, h)


def smooth_l1(x):
    """0.5 x^2 for |x| < 1, |x| - 0.5 otherwise. Works on scalars and arrays."""
    a = np.abs(x)
    out = np.where(a < 1.0, 0.5 * a * a, a - 0.5)
    return float(out) if np.ndim(out) == 0 else out


def smooth_l1_grad(x):
    a = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(a) < 1.0, a, np.sign(a))
    return float(out) if np.ndim(out) == 0 else out


def _check(pred: TubePrediction, gt_class: int, gt_offsets) -> np.ndarray:
    if not 0 <= gt_class <= pred.num_classes:
        raise ValueError(f"gt_class must lie in 0..{pred.num_classes}, got {gt_class}")
    tgt = np.asarray(gt_offsets, dtype=np.float64)
    T = pred.offsets.shape[0]
    if gt_class > 0 and tgt.shape != (T, 4):
        raise ValueError(f"gt_offsets must have shape ({T}, 4), got {tgt.shape}")
    return tgt


def tube_loss(pred: TubePrediction, gt_class: int, gt_offsets: Sequence[Sequence[float]] | None = None) -> float:
    """Cross-entropy of the true class plus smooth-L1 box regression.

    The regression term is only present for foreground tubes and only reads
    the offsets predicted for ``gt_class``. Returns ``inf`` when the
    predicted probability of the true class is zero.
    """
    tgt = _check(pred, gt_class, gt_offsets)
    p = pred.class_probs[gt_class]
    cls = math.inf if p == 0.0 else -math.log(p)
    if gt_class == 0:
        return cls
    diff = pred.offsets[:, gt_class - 1, :] - tgt
    return cls + float(np.sum(smooth_l1(diff)))


def tube_loss_grad(pred: TubePrediction, gt_class: int, gt_offsets=None) -> np.ndarray:
    """Gradient of :func:`tube_loss` w.r.t. the predicted offsets, shape (T, C, 4)."""
    tgt = _check(pred, gt_class, gt_offsets)
    g = np.zeros_like(pred.offsets)
    if gt_class > 0:
        g[:, gt_class - 1, :] = smooth_l1_grad(pred.offsets[:, gt_class - 1, :] - tgt)
    return g


def assign_label(tube, gts) -> tuple[int, object | None]:
    """Class of the ground-truth tube with the highest mean per-frame IoU.

    A tube counts as positive when that mean is at least 0.5; otherwise it is
    background ``(0, None)``. Equal means go to the earlier ground truth.
    """
    best, best_gt = -1.0, None
    for g in gts:
        if len(g.boxes) != len(tube.boxes):
            raise ValueError("tube and ground truth must span the same frames")
        m = sum(iou(a, b) for a, b in zip(tube.boxes, g.boxes)) / len(g.boxes)
        if m > best:
            best, best_gt = m, g
    if best_gt is None or best < POSITIVE_IOU:
        return 0, None
    return best_gt.label, best_gt
