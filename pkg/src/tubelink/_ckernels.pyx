# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled linking kernels.

Same contract as :mod:`tubelink._pykernels`; see that module for the node
layout and tie-breaking rules. Floating point operations are written in the
same order as the reference so results agree bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs
from libc.stdint cimport int64_t, uint8_t

cnp.import_array()

NAME = "compiled"


cdef inline double _iou(double ax1, double ay1, double ax2, double ay2,
                        double bx1, double by1, double bx2, double by2) nogil:
    cdef double iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
    if iw <= 0.0:
        return 0.0
    cdef double ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
    if ih <= 0.0:
        return 0.0
    cdef double inter = iw * ih
    cdef double area_a = (ax2 - ax1) * (ay2 - ay1)
    cdef double area_b = (bx2 - bx1) * (by2 - by1)
    return inter / ((area_a + area_b) - inter)


def dense_legal(a, b, double tau):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], i, j
    out = np.zeros((nb, na), dtype=np.uint8)
    cdef uint8_t[:, ::1] M = out
    with nogil:
        for j in range(nb):
            for i in range(na):
                if _iou(A[i, 0], A[i, 1], A[i, 2], A[i, 3],
                        B[j, 0], B[j, 1], B[j, 2], B[j, 3]) > tau:
                    M[j, i] = 1
    return out


cdef void _rank_frame(int64_t b0, int64_t b1, int64_t na,
                      int64_t[::1] rank, int64_t[::1] back, int64_t[::1] cnt,
                      double[::1] cum) noexcept nogil:
    # counting sort of the valid nodes of frame [b0, b1) by (rank of pred, index)
    cdef int64_t g, k, s, tmp
    for k in range(na + 1):
        cnt[k] = 0
    for g in range(b0, b1):
        if cum[g] != -INFINITY:
            cnt[rank[back[g]]] += 1
    s = 0
    for k in range(na + 1):
        tmp = cnt[k]
        cnt[k] = s
        s += tmp
    for g in range(b0, b1):
        if cum[g] != -INFINITY:
            k = rank[back[g]]
            rank[g] = cnt[k]
            cnt[k] += 1


cdef object _finish(const int64_t[::1] starts, double[::1] cum, int64_t[::1] rank,
                    int64_t[::1] back, Py_ssize_t T):
    cdef int64_t lo = starts[T - 1], hi = starts[T], g, bg = -1, br = 0
    cdef double bv = -INFINITY
    for g in range(lo, hi):
        if cum[g] == -INFINITY:
            continue
        if bg < 0 or cum[g] > bv or (cum[g] == bv and rank[g] < br):
            bg = g
            bv = cum[g]
            br = rank[g]
    if bg < 0:
        return None
    path = np.empty(T, dtype=np.int64)
    cdef int64_t[::1] P = path
    cdef Py_ssize_t t
    for t in range(T - 1, -1, -1):
        P[t] = bg
        bg = back[bg]
    return path


cdef bint _init_frame0(const int64_t[::1] starts, const double[::1] scores,
                       const uint8_t[::1] alive, double[::1] cum, int64_t[::1] rank) noexcept nogil:
    cdef int64_t g, r = 0
    for g in range(starts[0], starts[1]):
        if alive[g]:
            cum[g] = scores[g]
            rank[g] = r
            r += 1
    return r > 0


def viterbi_dense(starts_, scores_, alive_, dense_, dstart_):
    cdef const int64_t[::1] starts = np.ascontiguousarray(starts_, dtype=np.int64)
    cdef const double[::1] scores = np.ascontiguousarray(scores_, dtype=np.float64)
    cdef const uint8_t[::1] alive = np.ascontiguousarray(alive_, dtype=np.uint8)
    cdef const uint8_t[::1] dense = np.ascontiguousarray(dense_, dtype=np.uint8)
    cdef const int64_t[::1] dstart = np.ascontiguousarray(dstart_, dtype=np.int64)
    cdef Py_ssize_t T = starts.shape[0] - 1
    cdef int64_t n = starts[T]
    cum_a = np.full(n, -np.inf)
    rank_a = np.full(n, -1, dtype=np.int64)
    back_a = np.full(n, -1, dtype=np.int64)
    cdef double[::1] cum = cum_a
    cdef int64_t[::1] rank = rank_a
    cdef int64_t[::1] back = back_a
    cdef int64_t maxn = 0, t, a0, b0, b1, na, j, i, g, gi, row, bi, br
    cdef double v, best
    cdef bint any_valid
    for t in range(T):
        if starts[t + 1] - starts[t] > maxn:
            maxn = starts[t + 1] - starts[t]
    cnt_a = np.zeros(maxn + 1, dtype=np.int64)
    cdef int64_t[::1] cnt = cnt_a

    with nogil:
        if not _init_frame0(starts, scores, alive, cum, rank):
            with gil:
                return None
        for t in range(1, T):
            a0 = starts[t - 1]
            b0 = starts[t]
            b1 = starts[t + 1]
            na = b0 - a0
            any_valid = False
            for j in range(b1 - b0):
                g = b0 + j
                if not alive[g]:
                    continue
                row = dstart[t - 1] + j * na
                best = -INFINITY
                bi = -1
                br = 0
                for i in range(na):
                    if dense[row + i]:
                        gi = a0 + i
                        v = cum[gi]
                        if v == -INFINITY:
                            continue
                        if bi < 0 or v > best or (v == best and rank[gi] < br):
                            best = v
                            bi = gi
                            br = rank[gi]
                if bi >= 0:
                    cum[g] = best + scores[g]
                    back[g] = bi
                    any_valid = True
            if not any_valid:
                with gil:
                    return None
            _rank_frame(b0, b1, na, rank, back, cnt, cum)
    return _finish(starts, cum, rank, back, T)


def viterbi_sparse(starts_, scores_, alive_, indptr_, indices_):
    cdef const int64_t[::1] starts = np.ascontiguousarray(starts_, dtype=np.int64)
    cdef const double[::1] scores = np.ascontiguousarray(scores_, dtype=np.float64)
    cdef const uint8_t[::1] alive = np.ascontiguousarray(alive_, dtype=np.uint8)
    cdef const int64_t[::1] indptr = np.ascontiguousarray(indptr_, dtype=np.int64)
    cdef const int64_t[::1] indices = np.ascontiguousarray(indices_, dtype=np.int64)
    cdef Py_ssize_t T = starts.shape[0] - 1
    cdef int64_t n = starts[T]
    cum_a = np.full(n, -np.inf)
    rank_a = np.full(n, -1, dtype=np.int64)
    back_a = np.full(n, -1, dtype=np.int64)
    cdef double[::1] cum = cum_a
    cdef int64_t[::1] rank = rank_a
    cdef int64_t[::1] back = back_a
    cdef int64_t maxn = 0, t, a0, b0, b1, g, gi, p, bi, br
    cdef double v, best
    cdef bint any_valid
    for t in range(T):
        if starts[t + 1] - starts[t] > maxn:
            maxn = starts[t + 1] - starts[t]
    cnt_a = np.zeros(maxn + 1, dtype=np.int64)
    cdef int64_t[::1] cnt = cnt_a

    with nogil:
        if not _init_frame0(starts, scores, alive, cum, rank):
            with gil:
                return None
        for t in range(1, T):
            a0 = starts[t - 1]
            b0 = starts[t]
            b1 = starts[t + 1]
            any_valid = False
            for g in range(b0, b1):
                if not alive[g]:
                    continue
                best = -INFINITY
                bi = -1
                br = 0
                for p in range(indptr[g], indptr[g + 1]):
                    gi = indices[p]
                    v = cum[gi]
                    if v == -INFINITY:
                        continue
                    if bi < 0 or v > best or (v == best and rank[gi] < br):
                        best = v
                        bi = gi
                        br = rank[gi]
                if bi >= 0:
                    cum[g] = best + scores[g]
                    back[g] = bi
                    any_valid = True
            if not any_valid:
                with gil:
                    return None
            _rank_frame(b0, b1, b0 - a0, rank, back, cnt, cum)
    return _finish(starts, cum, rank, back, T)


cdef inline bint _better(double c1, int64_t r1, int64_t j1,
                         double c2, int64_t r2, int64_t j2) noexcept nogil:
    if c1 != c2:
        return c1 > c2
    if r1 != r2:
        return r1 < r2
    return j1 < j2


def beam_search(starts_, corners_, scores_, alive_, order0_, xorder_, xcorners_, wmax_,
                double tau, Py_ssize_t K):
    cdef const int64_t[::1] starts = np.ascontiguousarray(starts_, dtype=np.int64)
    cdef const double[:, ::1] C = np.ascontiguousarray(corners_, dtype=np.float64)
    cdef const double[::1] scores = np.ascontiguousarray(scores_, dtype=np.float64)
    cdef const uint8_t[::1] alive = np.ascontiguousarray(alive_, dtype=np.uint8)
    cdef const int64_t[::1] order0 = np.ascontiguousarray(order0_, dtype=np.int64)
    cdef const int64_t[::1] xorder = np.ascontiguousarray(xorder_, dtype=np.int64)
    cdef const double[:, ::1] XC = np.ascontiguousarray(xcorners_, dtype=np.float64)
    cdef const double[::1] wmax = np.ascontiguousarray(wmax_, dtype=np.float64)
    cdef Py_ssize_t T = starts.shape[0] - 1
    cdef int64_t n = starts[T]

    # per-frame beam history: node and slot of predecessor in previous beam
    hnode_a = np.full(T * K, -1, dtype=np.int64)
    hback_a = np.full(T * K, -1, dtype=np.int64)
    cdef int64_t[::1] hnode = hnode_a
    cdef int64_t[::1] hback = hback_a
    # current beam
    bcum_a = np.empty(K, dtype=np.float64)
    brank_a = np.empty(K, dtype=np.int64)
    cdef double[::1] bcum = bcum_a
    cdef int64_t[::1] brank = brank_a
    # per-node scratch for the frame being extended
    mark_a = np.full(n, -1, dtype=np.int64)
    pc_a = np.empty(n, dtype=np.float64)
    pr_a = np.empty(n, dtype=np.int64)
    ps_a = np.empty(n, dtype=np.int64)
    touched_a = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] mark = mark_a
    cdef double[::1] pc = pc_a
    cdef int64_t[::1] pr = pr_a
    cdef int64_t[::1] ps = ps_a
    cdef int64_t[::1] touched = touched_a
    # top-K buffer, best first
    kc_a = np.empty(K, dtype=np.float64)
    kr_a = np.empty(K, dtype=np.int64)
    kj_a = np.empty(K, dtype=np.int64)
    ks_a = np.empty(K, dtype=np.int64)
    cdef double[::1] kc = kc_a
    cdef int64_t[::1] kr = kr_a
    cdef int64_t[::1] kj = kj_a
    cdef int64_t[::1] ks = ks_a

    cdef Py_ssize_t nbeam = 0, nk, ntouch, slot, q, q2, t
    cdef int64_t g, i, j, b0, b1, lo_i, hi_i, mid, pos, r, nr
    cdef double c, x1, y1, x2, y2, lo, hi, shrink, eps, cc, ov
    cdef int64_t tmp_r, tmp_j, tmp_s
    cdef double tmp_c

    with nogil:
        # frame 0: K best live proposals by objectness
        for q in range(order0.shape[0]):
            g = starts[0] + order0[q]
            if alive[g]:
                hnode[nbeam] = g
                bcum[nbeam] = scores[g]
                nbeam += 1
                if nbeam == K:
                    break
        if nbeam == 0:
            with gil:
                return None
        for slot in range(nbeam):
            r = 0
            for q in range(nbeam):
                if hnode[q] < hnode[slot]:
                    r += 1
            brank[slot] = r

        for t in range(1, T):
            b0 = starts[t]
            b1 = starts[t + 1]
            ntouch = 0
            for slot in range(nbeam):
                i = hnode[(t - 1) * K + slot]
                c = bcum[slot]
                r = brank[slot]
                x1 = C[i, 0]
                y1 = C[i, 1]
                x2 = C[i, 2]
                y2 = C[i, 3]
                # a legal successor overlaps horizontally by more than tau * w
                shrink = tau * (x2 - x1)
                eps = 1e-6 * (1.0 + fabs(x1) + fabs(x2) + wmax[t])
                lo = (x1 + shrink - wmax[t]) - eps
                hi = (x2 - shrink) + eps
                # first sorted position with left edge >= lo
                lo_i = b0
                hi_i = b1
                while lo_i < hi_i:
                    mid = (lo_i + hi_i) >> 1
                    if XC[mid, 0] < lo:
                        lo_i = mid + 1
                    else:
                        hi_i = mid
                pos = lo_i
                while pos < b1 and XC[pos, 0] < hi:
                    j = xorder[pos]
                    g = b0 + j
                    if not alive[g]:
                        pos += 1
                        continue
                    ov = _iou(x1, y1, x2, y2, XC[pos, 0], XC[pos, 1], XC[pos, 2], XC[pos, 3])
                    pos += 1
                    if ov > tau:
                        if mark[g] != t:
                            mark[g] = t
                            pc[g] = c
                            pr[g] = r
                            ps[g] = slot
                            touched[ntouch] = j
                            ntouch += 1
                        elif c > pc[g] or (c == pc[g] and r < pr[g]):
                            pc[g] = c
                            pr[g] = r
                            ps[g] = slot
            if ntouch == 0:
                with gil:
                    return None

            # keep the K best extended partials, ordered best first
            nk = 0
            for q in range(ntouch):
                j = touched[q]
                g = b0 + j
                cc = pc[g] + scores[g]
                if nk == K and not _better(cc, pr[g], j, kc[nk - 1], kr[nk - 1], kj[nk - 1]):
                    continue
                if nk < K:
                    nk += 1
                q2 = nk - 1
                while q2 > 0 and _better(cc, pr[g], j, kc[q2 - 1], kr[q2 - 1], kj[q2 - 1]):
                    kc[q2] = kc[q2 - 1]
                    kr[q2] = kr[q2 - 1]
                    kj[q2] = kj[q2 - 1]
                    ks[q2] = ks[q2 - 1]
                    q2 -= 1
                kc[q2] = cc
                kr[q2] = pr[g]
                kj[q2] = j
                ks[q2] = ps[g]

            nbeam = nk
            for slot in range(nk):
                hnode[t * K + slot] = b0 + kj[slot]
                hback[t * K + slot] = ks[slot]
                bcum[slot] = kc[slot]
                nr = 0
                for q in range(nk):
                    if kr[q] < kr[slot] or (kr[q] == kr[slot] and kj[q] < kj[slot]):
                        nr += 1
                brank[slot] = nr

    path = np.empty(T, dtype=np.int64)
    cdef int64_t[::1] P = path
    slot = 0
    for t in range(T - 1, -1, -1):
        P[t] = hnode[t * K + slot]
        slot = hback[t * K + slot]
    return path
