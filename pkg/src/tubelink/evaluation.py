"""
Detection metrics: frame-mAP, video-mAP and the coselection rate.

Frame and video detections share one representation: a keyed, labelled,
scored sequence of boxes (one box for a frame detection, ``T`` boxes for a
tube). Overlap between two such sequences is the mean per-frame IoU, which
reduces to plain IoU for single boxes.

AP uses the all-points precision envelope (VOC 2010+ style). Classes
without ground truth are left out of the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .geometry import Box, iou

__all__ = [
    "Detection",
    "GroundTruth",
    "CoselectionInput",
    "tube_iou",
    "average_precision",
    "mean_average_precision",
    "frame_map",
    "video_map",
    "explode_frames",
    "coselection_rate",
    "mean_coselection_rate",
    "FRAME_SIGMA",
    "VIDEO_SIGMA",
]

FRAME_SIGMA = 0.5
VIDEO_SIGMA = 0.2


@dataclass(frozen=True)
class Detection:
    key: Hashable
    label: int
    confidence: float
    boxes: tuple[Box, ...]

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not math.isfinite(self.confidence):
            raise ValueError(f"non-finite confidence {self.confidence!r}")


@dataclass(frozen=True)
class GroundTruth:
    key: Hashable
    label: int
    boxes: tuple[Box, ...]

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))


def tube_iou(a: Sequence[Box], b: Sequence[Box]) -> float:
    """Mean per-frame IoU of two equally long box sequences."""
    if len(a) != len(b) or not a:
        raise ValueError(f"box sequences must be non-empty and equally long ({len(a)} vs {len(b)})")
    return sum(iou(x, y) for x, y in zip(a, b)) / len(a)


def _ap_from_flags(tp: Sequence[bool], n_gt: int) -> float:
    if not tp:
        return 0.0
    flags = np.asarray(tp, dtype=np.float64)
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(1.0 - flags)
    rec = tp_cum / n_gt
    prec = tp_cum / (tp_cum + fp_cum)
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    i = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth], sigma: float) -> list[bool]:
    """TP/FP flag per detection, in ranked order (confidence desc, key, index).

    Each detection claims the best-overlapping unmatched ground truth with the
    same key; it is a true positive when that overlap exceeds ``sigma``.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, dets[i].key, i))
    by_key: dict = {}
    for g_idx, g in enumerate(gts):
        by_key.setdefault(g.key, []).append(g_idx)
    used = set()
    flags = []
    for i in order:
        d = dets[i]
        best, best_g = -1.0, None
        for g_idx in by_key.get(d.key, ()):
            if g_idx in used:
                continue
            ov = tube_iou(d.boxes, gts[g_idx].boxes)
            if ov > best:
                best, best_g = ov, g_idx
        if best_g is not None and best > sigma:
            used.add(best_g)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(dets: Sequence[Detection], gts: Sequence[GroundTruth], sigma: float) -> float | None:
    """AP for a single class. Returns None when there is no ground truth."""
    if not gts:
        return None
    return _ap_from_flags(match_detections(dets, gts, sigma), len(gts))


def mean_average_precision(
    dets: Iterable[Detection], gts: Iterable[GroundTruth], sigma: float
) -> tuple[float, dict[int, float]]:
    """Mean AP over classes that have ground truth, plus per-class AP.

    The mean is NaN when no class has ground truth.
    """
    dets, gts = list(dets), list(gts)
    per_class = {}
    for c in sorted({g.label for g in gts}):
        ap = average_precision([d for d in dets if d.label == c], [g for g in gts if g.label == c], sigma)
        per_class[c] = ap
    if not per_class:
        return math.nan, {}
    return sum(per_class.values()) / len(per_class), per_class


def frame_map(dets, gts, sigma: float = FRAME_SIGMA):
    """Frame-mAP over single-box detections keyed by frame."""
    return mean_average_precision(dets, gts, sigma)


def video_map(dets, gts, sigma: float = VIDEO_SIGMA):
    """Video-mAP over tube detections keyed by video."""
    return mean_average_precision(dets, gts, sigma)


def explode_frames(items):
    """Split tube detections / ground truths into per-frame ones keyed ``(key, t)``."""
    out = []
    for it in items:
        for t, b in enumerate(it.boxes):
            if isinstance(it, Detection):
                out.append(Detection((it.key, t), it.label, it.confidence, (b,)))
            else:
                out.append(GroundTruth((it.key, t), it.label, (b,)))
    return out


@dataclass(frozen=True)
class CoselectionInput:
    """Tubes found with top-K selection (``set_a``) and without (``set_b``)."""

    set_a: Sequence = field(repr=False)
    set_b: Sequence = field(repr=False)
    theta: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if len(self.set_a) < self.n:
            raise ValueError(f"set_a has {len(self.set_a)} tubes, fewer than n={self.n}")


def _same_boxes(a, b) -> bool:
    return len(a) == len(b) and all(x == y for x, y in zip(a, b))


def coselection_rate(inp: CoselectionInput) -> float:
    """Fraction of the top-``n`` tubes of ``set_a`` (by score) that overlap
    some tube of ``set_b`` with mean IoU above ``theta``.

    ``theta = 1`` cannot be exceeded, so it is read as "identical boxes".
    """
    order = sorted(range(len(inp.set_a)), key=lambda i: (-inp.set_a[i].score, i))[: inp.n]
    tp = 0
    for i in order:
        a = inp.set_a[i].boxes
        if inp.theta >= 1.0:
            hit = any(_same_boxes(a, b.boxes) for b in inp.set_b)
        else:
            hit = any(len(b.boxes) == len(a) and tube_iou(a, b.boxes) > inp.theta for b in inp.set_b)
        tp += hit
    return tp / inp.n


def mean_coselection_rate(inputs: Iterable[CoselectionInput]) -> float:
    """Arithmetic mean of per-video coselection rates."""
    rates = [coselection_rate(x) for x in inputs]
    if not rates:
        raise ValueError("no videos to average")
    return sum(rates) / len(rates)
