import numpy as np
import pytest

from tubelink import _backend
from tubelink.evaluation import tube_iou
from tubelink.geometry import Box
from tubelink.proposals import RegionProposal, VideoProposals

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_instance(rng, T_range=(2, 4), N_range=(2, 6), grid=True):
    """Small random video. With ``grid`` the boxes sit on a coarse lattice and
    scores are multiples of 1/8, so exact ties are common and every sum is
    exact in binary floating point."""
    T = int(rng.integers(T_range[0], T_range[1] + 1))
    frames = []
    for t in range(T):
        n = int(rng.integers(N_range[0], N_range[1] + 1))
        ids = rng.choice(100, size=n, replace=False)
        props = []
        for pid in ids:
            if grid:
                box = Box(
                    20.0 + 4.0 * int(rng.integers(0, 8)),
                    20.0 + 4.0 * int(rng.integers(0, 8)),
                    5.0 * int(rng.integers(2, 8)),
                    5.0 * int(rng.integers(2, 8)),
                )
                score = int(rng.integers(0, 9)) / 8
            else:
                box = Box(*rng.uniform(20, 50, 2), *rng.uniform(8, 40, 2))
                score = float(rng.uniform(0, 1))
            props.append(RegionProposal(box, score, t, int(pid)))
        frames.append(props)
    return VideoProposals("rand", frames)


def video_from_rows(rows, video_id="v"):
    """rows[t] = list of (id, (cx, cy, w, h), score)."""
    return VideoProposals(
        video_id,
        [[RegionProposal(Box(*b), s, t, i) for i, b, s in frame] for t, frame in enumerate(rows)],
    )


def reference_ap(dets, gts, sigma):
    """Quadratic reference: match in ranked order, then
    AP = sum over true positives k of (1/G) * max_{j >= k} precision_j."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, dets[i].key, i))
    used = set()
    flags = []
    for i in order:
        d = dets[i]
        cands = [(tube_iou(d.boxes, g.boxes), gi) for gi, g in enumerate(gts) if g.key == d.key and gi not in used]
        if cands:
            best = max(ov for ov, _ in cands)
            gi = min(gi for ov, gi in cands if ov == best)  # first gt wins ties
            if best > sigma:
                used.add(gi)
                flags.append(True)
                continue
        flags.append(False)
    prec = []
    tp = 0
    for k, f in enumerate(flags):
        tp += f
        prec.append(tp / (k + 1))
    return sum(max(prec[k:]) / len(gts) for k, f in enumerate(flags) if f)
