"""Pure-Python / numpy linking kernels.

Fallback for :mod:`tubelink._ckernels`; both modules expose the same
functions and must return identical paths. Nodes are addressed by global
index into flat per-video arrays: frame ``t`` owns ``starts[t]:starts[t+1]``,
and inside a frame nodes are ordered by proposal id, so "lower index" and
"lower id" coincide.

Every kernel returns the chosen path as a length-``T`` int64 array of global
indices, or ``None`` when no admissible tube exists.

Tie-breaking: partial tubes ending in frame ``t`` carry a rank giving the
lexicographic order of their id prefixes. Among equal cumulative scores the
lower rank wins, which makes the final tube the lexicographically smallest
id sequence among the optima.
"""

import numpy as np

NAME = "python"

_NEG = -np.inf


def dense_legal(a, b, tau):
    """uint8 matrix ``m[j, i] = iou(a[i], b[j]) > tau``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ax1, ay1, ax2, ay2 = (a[:, k][None, :] for k in range(4))
    bx1, by1, bx2, by2 = (b[:, k][:, None] for k in range(4))
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    hit = (iw > 0.0) & (ih > 0.0)
    inter = np.where(hit, iw * ih, 0.0)
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = (area_a + area_b) - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        ov = np.where(hit, inter / union, 0.0)
    return (ov > tau).astype(np.uint8)


def _iou_row(box, cand):
    x1, y1, x2, y2 = box
    iw = np.minimum(x2, cand[:, 2]) - np.maximum(x1, cand[:, 0])
    ih = np.minimum(y2, cand[:, 3]) - np.maximum(y1, cand[:, 1])
    hit = (iw > 0.0) & (ih > 0.0)
    inter = np.where(hit, iw * ih, 0.0)
    area_a = (x2 - x1) * (y2 - y1)
    area_b = (cand[:, 2] - cand[:, 0]) * (cand[:, 3] - cand[:, 1])
    union = (area_a + area_b) - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(hit, inter / union, 0.0)


def _rank_frame(valid, pred_rank):
    """Ranks of the valid nodes of one frame, ordered by (pred_rank, index)."""
    rank = np.full(valid.shape[0], -1, dtype=np.int64)
    idx = np.flatnonzero(valid)
    order = idx[np.lexsort((idx, pred_rank[idx]))]
    rank[order] = np.arange(order.shape[0])
    return rank


def _finish(starts, cum, rank, back):
    T = starts.shape[0] - 1
    lo, hi = starts[T - 1], starts[T]
    c = cum[lo:hi]
    if not np.isfinite(c).any():
        return None
    best = c.max()
    r = np.where(c == best, rank[lo:hi], np.iinfo(np.int64).max)
    g = lo + int(np.argmin(r))
    path = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        path[t] = g
        g = back[g]
    return path


def _viterbi(starts, scores, alive, best_pred):
    """Shared forward pass; ``best_pred(t, cum_prev, rank_prev)`` picks predecessors."""
    starts = np.asarray(starts, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    alive = np.asarray(alive, dtype=bool)
    T = starts.shape[0] - 1
    n = int(starts[T])
    cum = np.full(n, _NEG)
    rank = np.full(n, -1, dtype=np.int64)
    back = np.full(n, -1, dtype=np.int64)

    lo, hi = starts[0], starts[1]
    live = alive[lo:hi]
    if not live.any():
        return None
    cum[lo:hi] = np.where(live, scores[lo:hi], _NEG)
    rank[lo:hi] = np.where(live, np.cumsum(live) - 1, -1)

    for t in range(1, T):
        a0, a1 = starts[t - 1], starts[t]
        b0, b1 = starts[t], starts[t + 1]
        pbest, parg = best_pred(t, cum[a0:a1], rank[a0:a1])
        valid = alive[b0:b1] & (parg >= 0)
        if not valid.any():
            return None
        cum[b0:b1] = np.where(valid, pbest + scores[b0:b1], _NEG)
        back[b0:b1] = np.where(valid, a0 + parg, -1)
        pred_rank = np.where(valid, rank[a0:a1][np.maximum(parg, 0)], -1)
        rank[b0:b1] = _rank_frame(valid, pred_rank)
    return _finish(starts, cum, rank, back)


def _select(vals, ranks, valid):
    """Row-wise max of ``vals`` over ``valid`` with lowest rank breaking ties.

    Returns (best value, argmax column) with -1 where a row has no valid entry.
    """
    v = np.where(valid, vals, _NEG)
    best = v.max(axis=1) if v.shape[1] else np.full(v.shape[0], _NEG)
    big = np.iinfo(np.int64).max
    r = np.where(valid & (v == best[:, None]), ranks, big)
    arg = r.argmin(axis=1) if r.shape[1] else np.zeros(r.shape[0], dtype=np.int64)
    has = np.isfinite(best)
    return best, np.where(has, arg, -1)


def viterbi_dense(starts, scores, alive, dense, dstart):
    """Best legal tube by scanning every (predecessor, successor) pair."""
    starts = np.asarray(starts, dtype=np.int64)
    dense = np.asarray(dense, dtype=np.uint8)

    def best_pred(t, cum_prev, rank_prev):
        na = starts[t] - starts[t - 1]
        nb = starts[t + 1] - starts[t]
        off = dstart[t - 1]
        m = dense[off:off + na * nb].reshape(nb, na).astype(bool)
        valid = m & np.isfinite(cum_prev)[None, :]
        return _select(np.broadcast_to(cum_prev, m.shape), np.broadcast_to(rank_prev, m.shape), valid)

    return _viterbi(starts, scores, alive, best_pred)


def viterbi_sparse(starts, scores, alive, indptr, indices):
    """Best legal tube visiting only each node's legal predecessors."""
    starts = np.asarray(starts, dtype=np.int64)
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)

    def best_pred(t, cum_prev, rank_prev):
        a0 = starts[t - 1]
        b0, b1 = starts[t], starts[t + 1]
        nb = b1 - b0
        pbest = np.full(nb, _NEG)
        parg = np.full(nb, -1, dtype=np.int64)
        for j in range(nb):
            g = b0 + j
            preds = indices[indptr[g]:indptr[g + 1]] - a0
            if preds.shape[0] == 0:
                continue
            c = cum_prev[preds]
            ok = np.isfinite(c)
            if not ok.any():
                continue
            best = c[ok].max()
            tie = ok & (c == best)
            k = preds[tie][np.argmin(rank_prev[preds[tie]])]
            pbest[j] = best
            parg[j] = k
        return pbest, parg

    return _viterbi(starts, scores, alive, best_pred)


def _window(x1, x2, wmax, tau):
    """Range of left edges a legal successor of box [x1, x2] can have.

    IoU > tau forces the horizontal intersection above tau * (x2 - x1), so
    the successor's left edge lies below x2 - tau*w and its right edge
    (at most left + wmax) above x1 + tau*w. The margin absorbs rounding.
    """
    shrink = tau * (x2 - x1)
    eps = 1e-6 * (1.0 + abs(x1) + abs(x2) + wmax)
    return (x1 + shrink - wmax) - eps, (x2 - shrink) + eps


def beam_search(starts, corners, scores, alive, order0, xorder, xcorners, wmax, tau, K):
    """Top-K pruned forward search over legal links.

    The beam starts with the ``K`` best live first-frame proposals by
    objectness. At each later frame every proposal adopts its best legal
    predecessor from the beam, and the ``K`` best resulting partial tubes
    by cumulative objectness survive.

    Candidates come from ``xcorners``, each frame's corners sorted by left
    edge (``xorder`` maps sorted position to local index).
    """
    starts = np.asarray(starts, dtype=np.int64)
    T = starts.shape[0] - 1

    beam = []  # (global node, cum, rank)
    for j in order0:
        g = int(starts[0] + j)
        if alive[g]:
            beam.append(g)
            if len(beam) == K:
                break
    if not beam:
        return None
    ranked = sorted(beam)
    beam = [(g, float(scores[g]), ranked.index(g)) for g in beam]
    history = [[(g, -1) for g, _, _ in beam]]

    for t in range(1, T):
        b0, b1 = int(starts[t]), int(starts[t + 1])
        xc = xcorners[b0:b1]
        xs = xc[:, 0]
        xo = xorder[b0:b1]
        best = {}  # local j -> (cum_pred, rank_pred, beam slot)
        for slot, (i, c, r) in enumerate(beam):
            x1, y1, x2, y2 = corners[i]
            lo, hi = _window(x1, x2, wmax[t], tau)
            p0 = int(np.searchsorted(xs, lo, side="left"))
            p1 = int(np.searchsorted(xs, hi, side="left"))
            if p1 <= p0:
                continue
            cand = xo[p0:p1]
            live = alive[b0 + cand].astype(bool)
            cand = cand[live]
            if cand.shape[0] == 0:
                continue
            ov = _iou_row((x1, y1, x2, y2), xc[p0:p1][live])
            for j in cand[ov > tau]:
                j = int(j)
                cur = best.get(j)
                if cur is None or c > cur[0] or (c == cur[0] and r < cur[1]):
                    best[j] = (c, r, slot)
        if not best:
            return None
        cands = [(best[j][0] + float(scores[b0 + j]), best[j][1], j, best[j][2]) for j in best]
        cands.sort(key=lambda e: (-e[0], e[1], e[2]))
        kept = cands[:K]
        order = sorted(range(len(kept)), key=lambda q: (kept[q][1], kept[q][2]))
        new_rank = [0] * len(kept)
        for pos, q in enumerate(order):
            new_rank[q] = pos
        beam = [(b0 + e[2], e[0], new_rank[q]) for q, e in enumerate(kept)]
        history.append([(b0 + e[2], e[3]) for e in kept])

    path = np.empty(T, dtype=np.int64)
    slot = 0
    for t in range(T - 1, -1, -1):
        g, prev = history[t][slot]
        path[t] = g
        slot = prev
    return path
