"""
Per-frame region proposals: data model, JSON I/O and a synthetic generator.

The generator stands in for an RPN. Each actor follows a seeded random walk
(fixed step length, uniformly random heading, reflected at the frame
borders) and emits a handful of jittered proposals per frame; background
proposals are scattered uniformly. Randomness comes from numpy's PCG64
bit generator (``numpy.random.default_rng(seed)``), so a scenario is fully
determined by its fields.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import InvalidBoxError, ProposalFormatError, ScenarioError
from .geometry import Box

__all__ = [
    "RegionProposal",
    "VideoProposals",
    "GroundTruthTube",
    "SyntheticScenario",
    "generate",
    "load",
    "save",
    "dumps",
    "loads",
    "load_ground_truth",
    "save_ground_truth",
]

# half-width of the uniform objectness noise band
SCORE_SPREAD = 0.05


@dataclass(frozen=True, slots=True)
class RegionProposal:
    box: Box
    objectness: float
    frame: int
    id: int

    def __post_init__(self):
        if not (math.isfinite(self.objectness) and 0.0 <= self.objectness <= 1.0):
            raise ValueError(f"objectness must be finite and in [0, 1], got {self.objectness!r}")
        if self.frame < 0:
            raise ValueError(f"frame index must be >= 0, got {self.frame}")


@dataclass(frozen=True)
class VideoProposals:
    video_id: str
    frames: tuple[tuple[RegionProposal, ...], ...]
    # flat array view built on first use by the linker; the video is immutable
    _flat: Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(tuple(f) for f in self.frames))
        if not self.frames:
            raise ValueError("a video needs at least one frame")
        for t, props in enumerate(self.frames):
            seen = set()
            for p in props:
                if p.frame != t:
                    raise ValueError(f"proposal {p.id} stored in frame {t} but tagged frame {p.frame}")
                if p.id in seen:
                    raise ValueError(f"duplicate proposal id {p.id} in frame {t}")
                seen.add(p.id)

    @property
    def T(self) -> int:
        return len(self.frames)

    def counts(self) -> list[int]:
        return [len(f) for f in self.frames]


@dataclass(frozen=True)
class GroundTruthTube:
    label: int
    boxes: tuple[Box, ...]

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.label < 1:
            raise ValueError(f"ground-truth label must be >= 1 (0 is background), got {self.label}")


@dataclass(frozen=True)
class SyntheticScenario:
    """Parameters of a synthetic proposal video.

    ``proposals_per_actor``, ``actor_size``, ``classes`` and ``video_id`` are
    generator knobs beyond the minimal scenario description; the defaults
    give a few proposals per actor and single-class ground truth.
    """

    actors: int = 2
    motion_step: float = 4.0
    jitter: float = 2.0
    background_count: int = 20
    objectness_signal: float = 0.9
    objectness_noise: float = 0.3
    seed: int = 0
    frame_size: tuple[float, float] = (640.0, 480.0)
    T: int = 5
    proposals_per_actor: int = 4
    actor_size: tuple[float, float] = (60.0, 120.0)
    classes: int = 1
    video_id: str = "synthetic"

    def validate(self) -> None:
        if self.T < 1:
            raise ScenarioError(f"T must be >= 1, got {self.T}")
        for name in ("actors", "background_count", "proposals_per_actor"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be >= 0")
        if self.jitter < 0 or self.motion_step < 0:
            raise ScenarioError("jitter and motion_step must be >= 0")
        if self.classes < 1:
            raise ScenarioError("classes must be >= 1")
        for name in ("objectness_signal", "objectness_noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ScenarioError(f"{name} must lie in [0, 1]")
        fw, fh = self.frame_size
        aw, ah = self.actor_size
        if not (aw > 0 and ah > 0):
            raise ScenarioError("actor_size must be positive")
        if aw > fw or ah > fh:
            raise ScenarioError(
                f"frame_size {self.frame_size} too small to contain actor boxes {self.actor_size}"
            )


def _reflect(x: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return lo
    while x < lo or x > hi:
        if x < lo:
            x = 2.0 * lo - x
        if x > hi:
            x = 2.0 * hi - x
    return x


def _scores(rng: np.random.Generator, mean: float, size: int) -> np.ndarray:
    s = rng.uniform(mean - SCORE_SPREAD, mean + SCORE_SPREAD, size=size)
    return np.clip(s, 0.0, 1.0)


def generate(s: SyntheticScenario) -> tuple[VideoProposals, list[GroundTruthTube]]:
    """Generate proposals and ground-truth tubes for a scenario."""
    s.validate()
    rng = np.random.default_rng(s.seed)
    fw, fh = s.frame_size
    aw, ah = s.actor_size
    xlo, xhi = 0.5 * aw, fw - 0.5 * aw
    ylo, yhi = 0.5 * ah, fh - 0.5 * ah

    labels = [int(v) for v in rng.integers(1, s.classes + 1, size=s.actors)]
    tracks = []
    for _ in range(s.actors):
        cx, cy = float(rng.uniform(xlo, xhi)), float(rng.uniform(ylo, yhi))
        path = [(cx, cy)]
        for _ in range(1, s.T):
            heading = float(rng.uniform(0.0, 2.0 * math.pi))
            cx = _reflect(cx + s.motion_step * math.cos(heading), xlo, xhi)
            cy = _reflect(cy + s.motion_step * math.sin(heading), ylo, yhi)
            path.append((cx, cy))
        tracks.append(path)

    n_act = s.actors * s.proposals_per_actor
    n_all = n_act + s.background_count
    frames = []
    for t in range(s.T):
        jit = rng.uniform(-s.jitter, s.jitter, size=(n_act, 4))
        act_scores = _scores(rng, s.objectness_signal, n_act)
        bg_xy = rng.uniform(0.0, 1.0, size=(s.background_count, 2)) * (fw, fh)
        bg_wh = rng.uniform(0.5, 1.5, size=(s.background_count, 2)) * (aw, ah)
        bg_scores = _scores(rng, s.objectness_noise, s.background_count)
        ids = rng.permutation(n_all)

        props = []
        k = 0
        for a in range(s.actors):
            cx, cy = tracks[a][t]
            for _ in range(s.proposals_per_actor):
                dx, dy, dw, dh = (float(v) for v in jit[k])
                box = Box(cx + dx, cy + dy, max(aw + dw, 0.1 * aw), max(ah + dh, 0.1 * ah))
                props.append(RegionProposal(box, float(act_scores[k]), t, int(ids[k])))
                k += 1
        for b in range(s.background_count):
            box = Box(float(bg_xy[b, 0]), float(bg_xy[b, 1]), float(bg_wh[b, 0]), float(bg_wh[b, 1]))
            props.append(RegionProposal(box, float(bg_scores[b]), t, int(ids[k])))
            k += 1
        props.sort(key=lambda p: p.id)
        frames.append(tuple(props))

    gts = [
        GroundTruthTube(labels[a], tuple(Box(cx, cy, aw, ah) for cx, cy in tracks[a]))
        for a in range(s.actors)
    ]
    return VideoProposals(s.video_id, tuple(frames)), gts


# ---------------------------------------------------------------------------
# JSON I/O


def _finite(v: Any, what: str, frame=None, pid=None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProposalFormatError(f"{what} must be a number, got {v!r}", frame, pid)
    v = float(v)
    if not math.isfinite(v):
        raise ProposalFormatError(f"{what} is not finite", frame, pid)
    return v


def _parse_box(raw: Any, what: str, frame=None, pid=None) -> Box:
    if not isinstance(raw, list) or len(raw) != 4:
        raise ProposalFormatError(f"{what} must be a list [cx, cy, w, h]", frame, pid)
    vals = [_finite(v, what, frame, pid) for v in raw]
    try:
        return Box(*vals)
    except InvalidBoxError as exc:
        raise ProposalFormatError(f"{what}: {exc}", frame, pid) from None


def _int(v: Any, what: str, frame=None, pid=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProposalFormatError(f"{what} must be an integer, got {v!r}", frame, pid)
    return v


def _decode_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProposalFormatError(f"malformed JSON: {exc}") from None


def proposals_from_obj(obj: Any) -> VideoProposals:
    if not isinstance(obj, dict):
        raise ProposalFormatError("top level must be an object")
    vid = obj.get("video_id")
    if not isinstance(vid, str):
        raise ProposalFormatError("missing or non-string 'video_id'")
    T = _int(obj.get("T"), "'T'")
    raw_frames = obj.get("frames")
    if not isinstance(raw_frames, list):
        raise ProposalFormatError("missing 'frames' list")
    if T < 1:
        raise ProposalFormatError(f"'T' must be >= 1, got {T}")
    if len(raw_frames) != T:
        raise ProposalFormatError(f"'T' is {T} but {len(raw_frames)} frames are listed")

    frames = []
    for k, rf in enumerate(raw_frames):
        if not isinstance(rf, dict):
            raise ProposalFormatError(f"frame entry {k} must be an object", k)
        t = _int(rf.get("t"), "frame 't'", k)
        if t != k:
            raise ProposalFormatError(f"non-contiguous frames: expected t={k}, found t={t}", t)
        raw_props = rf.get("proposals")
        if not isinstance(raw_props, list):
            raise ProposalFormatError(f"frame {t}: missing 'proposals' list", t)
        seen = set()
        props = []
        for rp in raw_props:
            if not isinstance(rp, dict):
                raise ProposalFormatError(f"frame {t}: proposal must be an object", t)
            pid = _int(rp.get("id"), f"frame {t}: proposal 'id'", t)
            if pid in seen:
                raise ProposalFormatError(f"frame {t}: duplicate proposal id {pid}", t, pid)
            seen.add(pid)
            box = _parse_box(rp.get("box"), f"frame {t} id {pid}: 'box'", t, pid)
            score = _finite(rp.get("score"), f"frame {t} id {pid}: 'score'", t, pid)
            if not 0.0 <= score <= 1.0:
                raise ProposalFormatError(f"frame {t} id {pid}: score {score} outside [0, 1]", t, pid)
            props.append(RegionProposal(box, score, t, pid))
        frames.append(tuple(props))
    return VideoProposals(vid, tuple(frames))


def proposals_to_obj(v: VideoProposals) -> dict:
    return {
        "video_id": v.video_id,
        "T": v.T,
        "frames": [
            {
                "t": t,
                "proposals": [
                    {"id": p.id, "box": p.box.to_list(), "score": p.objectness} for p in props
                ],
            }
            for t, props in enumerate(v.frames)
        ],
    }


def dumps(v: VideoProposals) -> str:
    return json.dumps(proposals_to_obj(v), allow_nan=False)


def loads(text: str) -> VideoProposals:
    return proposals_from_obj(_decode_json(text))


def save(v: VideoProposals, path) -> None:
    Path(path).write_text(dumps(v) + "\n")


def load(path) -> VideoProposals:
    return loads(Path(path).read_text())


def ground_truth_to_obj(video_id: str, gts: Sequence[GroundTruthTube]) -> dict:
    return {
        "video_id": video_id,
        "tubes": [{"label": g.label, "boxes": [b.to_list() for b in g.boxes]} for g in gts],
    }


def ground_truth_from_obj(obj: Any) -> tuple[str, list[GroundTruthTube]]:
    if not isinstance(obj, dict) or not isinstance(obj.get("video_id"), str):
        raise ProposalFormatError("ground truth needs an object with a string 'video_id'")
    raw = obj.get("tubes")
    if not isinstance(raw, list):
        raise ProposalFormatError("ground truth needs a 'tubes' list")
    gts = []
    for k, rt in enumerate(raw):
        if not isinstance(rt, dict):
            raise ProposalFormatError(f"tube {k} must be an object")
        label = _int(rt.get("label"), f"tube {k}: 'label'")
        if label < 1:
            raise ProposalFormatError(f"tube {k}: label must be >= 1, got {label}")
        rb = rt.get("boxes")
        if not isinstance(rb, list) or not rb:
            raise ProposalFormatError(f"tube {k}: 'boxes' must be a non-empty list")
        boxes = tuple(_parse_box(b, f"tube {k} frame {t}", t) for t, b in enumerate(rb))
        gts.append(GroundTruthTube(label, boxes))
    return obj["video_id"], gts


def save_ground_truth(video_id: str, gts: Sequence[GroundTruthTube], path) -> None:
    Path(path).write_text(json.dumps(ground_truth_to_obj(video_id, gts), allow_nan=False) + "\n")


def load_ground_truth(path) -> tuple[str, list[GroundTruthTube]]:
    return ground_truth_from_obj(_decode_json(Path(path).read_text()))
