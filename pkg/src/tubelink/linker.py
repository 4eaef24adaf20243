"""
Tube linking
============

A tube picks one proposal per frame. Its action score is the summed
objectness plus a bonus of ``T`` when every consecutive pair of boxes
overlaps with IoU strictly above ``tau`` (a *legal* tube).

Three linkers find the best tube:

``exact``
    Viterbi over every (predecessor, successor) pair, O(T N^2). Considers all
    tubes; illegal ones simply miss the bonus.
``ht``
    Hard thresholding: only legal links are followed, O(T N Q) with ``Q`` the
    mean number of legal successors. Optimal among legal tubes.
``ht_ts``
    Hard thresholding plus top-K selection: a beam of the ``K`` best partial
    tubes by cumulative objectness, O(T Q K). Fast, legal, not always optimal.

:func:`extract_tubes` repeats a linker, deleting the proposals of every tube
it returns, to produce up to ``M`` disjoint tubes.

Ties are broken everywhere in favour of the lexicographically smallest
sequence of proposal ids.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .errors import InstanceTooLargeError, NoTubeError, ProposalFormatError
from .geometry import Box, iou
from .proposals import VideoProposals

__all__ = [
    "VARIANTS",
    "LinkerConfig",
    "Tube",
    "action_score",
    "is_legal",
    "link",
    "link_exact",
    "link_ht",
    "link_ht_ts",
    "extract_tubes",
    "oracle_exhaustive",
    "legal_successor_mean",
    "tubes_to_obj",
    "tubes_from_obj",
]

VARIANTS = ("exact", "ht", "ht_ts")
ORACLE_LIMIT = 10**6


@dataclass(frozen=True)
class LinkerConfig:
    tau: float = 0.3
    K: int = 10
    M: int = 200
    variant: str = "ht_ts"
    fill_illegal: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.tau) and 0.0 <= self.tau <= 1.0):
            raise ValueError(f"tau must lie in [0, 1], got {self.tau!r}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass(frozen=True)
class Tube:
    proposal_ids: tuple[int, ...]
    boxes: tuple[Box, ...]
    objectness: tuple[float, ...]
    score: float
    legal: bool

    @property
    def T(self) -> int:
        return len(self.proposal_ids)

    def to_obj(self) -> dict:
        return {
            "score": self.score,
            "legal": self.legal,
            "ids": list(self.proposal_ids),
            "boxes": [b.to_list() for b in self.boxes],
        }


def _forward_sum(values) -> float:
    # left-to-right accumulation, the same order the DP kernels use
    total = 0.0
    for v in values:
        total += v
    return total


def is_legal(boxes: Sequence[Box], tau: float) -> bool:
    """True when every consecutive pair of boxes has IoU strictly above ``tau``."""
    return all(iou(boxes[t], boxes[t + 1]) > tau for t in range(len(boxes) - 1))


def action_score(boxes: Sequence[Box], objectness: Sequence[float], tau: float) -> float:
    """Summed objectness plus ``T`` if the tube is legal (always legal for T = 1)."""
    if len(boxes) != len(objectness) or not boxes:
        raise ValueError("need one objectness value per box and T >= 1")
    T = len(boxes)
    return _forward_sum(objectness) + T * (1 if is_legal(boxes, tau) else 0)


def _tube(props, tau) -> Tube:
    boxes = tuple(p.box for p in props)
    obj = tuple(p.objectness for p in props)
    legal = is_legal(boxes, tau)
    return Tube(
        proposal_ids=tuple(p.id for p in props),
        boxes=boxes,
        objectness=obj,
        score=_forward_sum(obj) + len(props) * (1 if legal else 0),
        legal=legal,
    )


def _flatten(video: VideoProposals):
    """Id-sorted proposals with start offsets, corners and scores as arrays.

    Cached on the video so repeated linking skips the conversion.
    """
    if video._flat is None:
        frames = [sorted(f, key=lambda p: p.id) for f in video.frames]
        props = tuple(p for f in frames for p in f)
        starts = np.zeros(len(frames) + 1, dtype=np.int64)
        starts[1:] = np.cumsum([len(f) for f in frames])
        raw = np.array([(p.box.cx, p.box.cy, p.box.w, p.box.h) for p in props], dtype=np.float64).reshape(-1, 4)
        hw, hh = 0.5 * raw[:, 2], 0.5 * raw[:, 3]
        # same operation order as Box.corners
        corners = np.column_stack([raw[:, 0] - hw, raw[:, 1] - hh, raw[:, 0] + hw, raw[:, 1] + hh])
        scores = np.array([p.objectness for p in props], dtype=np.float64)
        for a in (starts, corners, scores):
            a.setflags(write=False)
        object.__setattr__(video, "_flat", (props, starts, corners, scores))
    return video._flat


class _Workspace:
    """Flat arrays for one video plus the deletion mask used during extraction."""

    def __init__(self, video: VideoProposals, cfg: LinkerConfig, backend=None):
        for t, props in enumerate(video.frames):
            if not props:
                raise NoTubeError(f"frame {t} has no proposals", frame=t)
        self.cfg = cfg
        self.k = _backend.get(backend)
        self.props, self.starts, self.corners, self.scores = _flatten(video)
        self.T = len(video.frames)
        self.alive = np.ones(len(self.props), dtype=np.uint8)
        self.remaining = video.counts()
        self._dense = None
        self._csr = None
        self._beam = None

    def frame(self, t):
        return slice(int(self.starts[t]), int(self.starts[t + 1]))

    # -- precomputed link structure ---------------------------------------

    def dense(self):
        if self._dense is None:
            mats = [
                self.k.dense_legal(self.corners[self.frame(t)], self.corners[self.frame(t + 1)], self.cfg.tau)
                for t in range(self.T - 1)
            ]
            sizes = [m.size for m in mats]
            dstart = np.zeros(max(self.T - 1, 1), dtype=np.int64)
            if mats:
                dstart[1:] = np.cumsum(sizes)[:-1]
                flat = np.concatenate([m.ravel() for m in mats])
            else:
                flat = np.zeros(0, dtype=np.uint8)
            self._dense = (mats, flat, dstart)
        return self._dense

    def csr(self):
        if self._csr is None:
            mats = self.dense()[0]
            n = len(self.props)
            counts = np.zeros(n, dtype=np.int64)
            parts = []
            for t, m in enumerate(mats):
                rows, cols = np.nonzero(m)
                counts[self.frame(t + 1)] = np.bincount(rows, minlength=m.shape[0])
                parts.append(cols.astype(np.int64) + self.starts[t])
            indptr = np.zeros(n + 1, dtype=np.int64)
            indptr[1:] = np.cumsum(counts)
            indices = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
            self._csr = (indptr, indices)
        return self._csr

    def beam_index(self):
        if self._beam is None:
            f0 = self.frame(0)
            s0 = self.scores[f0]
            idx0 = np.arange(s0.shape[0])
            order0 = np.lexsort((idx0, -s0)).astype(np.int64)
            xorder = np.empty(len(self.props), dtype=np.int64)
            xcorners = np.empty_like(self.corners)
            wmax = np.zeros(self.T, dtype=np.float64)
            for t in range(self.T):
                sl = self.frame(t)
                c = self.corners[sl]
                o = np.argsort(c[:, 0], kind="stable")
                xorder[sl] = o
                xcorners[sl] = c[o]
                wmax[t] = float(np.max(c[:, 2] - c[:, 0]))
            self._beam = (order0, xorder, xcorners, wmax)
        return self._beam

    # -- single extraction ------------------------------------------------

    def greedy_path(self):
        """Highest-objectness live proposal in every frame (lowest id on ties)."""
        path = np.empty(self.T, dtype=np.int64)
        for t in range(self.T):
            sl = self.frame(t)
            s = np.where(self.alive[sl].astype(bool), self.scores[sl], -np.inf)
            j = int(np.argmax(s))
            if not np.isfinite(s[j]):
                return None
            path[t] = sl.start + j
        return path

    def ht_path(self):
        indptr, indices = self.csr()
        return self.k.viterbi_sparse(self.starts, self.scores, self.alive, indptr, indices)

    def ht_ts_path(self):
        order0, xorder, xcorners, wmax = self.beam_index()
        return self.k.beam_search(
            self.starts, self.corners, self.scores, self.alive,
            order0, xorder, xcorners, wmax, self.cfg.tau, self.cfg.K,
        )

    def exact_path(self):
        _, flat, dstart = self.dense()
        legal = self.k.viterbi_dense(self.starts, self.scores, self.alive, flat, dstart)
        free = self.greedy_path()
        if legal is None:
            return free
        t_legal, t_free = self.tube(legal), self.tube(free)
        if (t_free.score, _neg(t_free.proposal_ids)) > (t_legal.score, _neg(t_legal.proposal_ids)):
            return free
        return legal

    def best_path(self):
        v = self.cfg.variant
        if v == "exact":
            return self.exact_path()
        if v == "ht":
            return self.ht_path()
        return self.ht_ts_path()

    def tube(self, path) -> Tube:
        return _tube([self.props[int(g)] for g in path], self.cfg.tau)

    def remove(self, path):
        for t, g in enumerate(path):
            self.alive[g] = 0
            self.remaining[t] -= 1

    def exhausted(self) -> bool:
        return min(self.remaining) == 0


def _neg(ids):
    return tuple(-i for i in ids)


def link_exact(video: VideoProposals, cfg: LinkerConfig = LinkerConfig(), *, backend=None) -> Tube:
    """Highest-scoring tube over all per-frame choices."""
    ws = _Workspace(video, cfg, backend)
    return ws.tube(ws.exact_path())


def link_ht(video: VideoProposals, cfg: LinkerConfig = LinkerConfig(), *, backend=None) -> Tube | None:
    """Highest-scoring legal tube, or None when no legal tube spans the video."""
    ws = _Workspace(video, cfg, backend)
    path = ws.ht_path()
    return None if path is None else ws.tube(path)


def link_ht_ts(video: VideoProposals, cfg: LinkerConfig = LinkerConfig(), *, backend=None) -> Tube | None:
    """Beam-pruned legal tube; None when the beam dies."""
    ws = _Workspace(video, cfg, backend)
    path = ws.ht_ts_path()
    return None if path is None else ws.tube(path)


def link(video: VideoProposals, cfg: LinkerConfig = LinkerConfig(), *, backend=None) -> Tube | None:
    """Run the linker selected by ``cfg.variant`` once."""
    ws = _Workspace(video, cfg, backend)
    path = ws.best_path()
    return None if path is None else ws.tube(path)


def extract_tubes(video: VideoProposals, cfg: LinkerConfig = LinkerConfig(), *, backend=None) -> list[Tube]:
    """Greedily extract up to ``cfg.M`` proposal-disjoint tubes.

    After each tube its proposals are deleted. Extraction stops when ``M``
    tubes are found, a frame runs out of proposals, or the linker finds no
    tube. With ``cfg.fill_illegal`` the last case instead continues with
    per-frame top-objectness tubes (which carry no legality bonus).
    """
    ws = _Workspace(video, cfg, backend)
    return _extract(ws, cfg)


def _extract(ws: _Workspace, cfg: LinkerConfig) -> list[Tube]:
    out: list[Tube] = []
    filling = False
    while len(out) < cfg.M and not ws.exhausted():
        path = None if filling else ws.best_path()
        if path is None:
            if not cfg.fill_illegal:
                break
            filling = True
            path = ws.greedy_path()
        out.append(ws.tube(path))
        ws.remove(path)
    return out


def oracle_exhaustive(video: VideoProposals, tau: float, legal_only: bool) -> Tube | None:
    """Best tube by enumerating every per-frame combination.

    Refuses instances with more than 10^6 candidate tubes.
    """
    frames = [sorted(f, key=lambda p: p.id) for f in video.frames]
    total = 1
    for f in frames:
        total *= len(f)
    if total == 0:
        return None
    if total > ORACLE_LIMIT:
        raise InstanceTooLargeError(f"{total} candidate tubes exceeds the oracle limit {ORACLE_LIMIT}")
    T = len(frames)
    overlap = [
        [[iou(a.box, b.box) for b in frames[t + 1]] for a in frames[t]] for t in range(T - 1)
    ]
    best = None
    best_score = -math.inf
    # product() walks id sequences in lexicographic order, so keeping the
    # first strict maximum yields the lexicographically smallest optimum
    for choice in itertools.product(*(range(len(f)) for f in frames)):
        legal = all(overlap[t][choice[t]][choice[t + 1]] > tau for t in range(T - 1))
        if legal_only and not legal:
            continue
        s = _forward_sum(frames[t][choice[t]].objectness for t in range(T)) + T * (1 if legal else 0)
        if s > best_score:
            best_score = s
            best = choice
    if best is None:
        return None
    return _tube([frames[t][best[t]] for t in range(T)], tau)


def legal_successor_mean(video: VideoProposals, tau: float, *, backend=None) -> float:
    """Mean number of legal next-frame proposals per proposal (frames 0..T-2)."""
    if video.T < 2:
        return 0.0
    ws = _Workspace(video, LinkerConfig(tau=tau), backend)
    mats = ws.dense()[0]
    links = sum(int(m.sum(dtype=np.int64)) for m in mats)
    sources = sum(m.shape[1] for m in mats)
    return links / sources


def tubes_to_obj(video_id: str, tubes: Sequence[Tube], labels: Sequence[int] | None = None) -> dict:
    rows = []
    for k, tb in enumerate(tubes):
        row = tb.to_obj()
        if labels is not None:
            row["label"] = int(labels[k])
        rows.append(row)
    return {"video_id": video_id, "tubes": rows}


def tubes_from_obj(obj) -> tuple[str, list[Tube], list[int | None]]:
    """Parse tube JSON. Returns (video_id, tubes, labels); labels are None if absent."""
    if not isinstance(obj, dict) or not isinstance(obj.get("video_id"), str):
        raise ProposalFormatError("tube file needs an object with a string 'video_id'")
    raw = obj.get("tubes")
    if not isinstance(raw, list):
        raise ProposalFormatError("tube file needs a 'tubes' list")
    tubes, labels = [], []
    for k, rt in enumerate(raw):
        try:
            boxes = tuple(Box.from_list(b) for b in rt["boxes"])
            ids = tuple(int(i) for i in rt.get("ids", range(len(boxes))))
            score = float(rt["score"])
            legal = bool(rt.get("legal", False))
            label = rt.get("label")
        except (KeyError, TypeError, ValueError) as exc:
            raise ProposalFormatError(f"tube {k}: {exc}") from None
        if not boxes or len(ids) != len(boxes) or not math.isfinite(score):
            raise ProposalFormatError(f"tube {k}: malformed boxes/ids/score")
        if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
            raise ProposalFormatError(f"tube {k}: label must be an integer")
        tubes.append(Tube(ids, boxes, (), score, legal))
        labels.append(label)
    return obj["video_id"], tubes, labels


def dumps_tubes(video_id: str, tubes: Sequence[Tube], labels=None) -> str:
    return json.dumps(tubes_to_obj(video_id, tubes, labels), allow_nan=False)
