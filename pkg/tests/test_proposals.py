import json
import math

import pytest

from tubelink import proposals as P
from tubelink.errors import ProposalFormatError, ScenarioError
from tubelink.geometry import Box, iou
from tubelink.linker import LinkerConfig, link_ht


def test_background_only_scenario():
    v, gts = P.generate(P.SyntheticScenario(actors=0, background_count=5, T=3))
    assert v.T == 3
    assert v.counts() == [5, 5, 5]
    assert gts == []


def test_generation_is_deterministic():
    s = P.SyntheticScenario(actors=3, background_count=7, seed=11)
    assert P.dumps(P.generate(s)[0]) == P.dumps(P.generate(s)[0])
    assert P.generate(s)[1] == P.generate(s)[1]


def test_different_seed_differs():
    a = P.generate(P.SyntheticScenario(seed=1))[0]
    b = P.generate(P.SyntheticScenario(seed=2))[0]
    assert P.dumps(a) != P.dumps(b)


def closed_form_shift_iou(w, h, dx, dy):
    ow, oh = max(w - abs(dx), 0.0), max(h - abs(dy), 0.0)
    inter = ow * oh
    return inter / (2 * w * h - inter)


def test_clean_single_actor_matches_ground_truth():
    s = P.SyntheticScenario(
        actors=1, jitter=0.0, proposals_per_actor=1, background_count=0,
        motion_step=7.0, T=6, frame_size=(2000.0, 2000.0), seed=5,
    )
    v, (gt,) = P.generate(s)
    for t in range(s.T):
        (p,) = v.frames[t]
        assert p.box == gt.boxes[t]
    w, h = s.actor_size
    for t in range(s.T - 1):
        a, b = gt.boxes[t], gt.boxes[t + 1]
        dx, dy = b.cx - a.cx, b.cy - a.cy
        assert math.hypot(dx, dy) == pytest.approx(s.motion_step, rel=1e-12)
        assert iou(a, b) == pytest.approx(closed_form_shift_iou(w, h, dx, dy), rel=1e-12)


def test_walk_stays_in_frame_and_respects_step():
    s = P.SyntheticScenario(actors=5, motion_step=50.0, T=40, frame_size=(200.0, 300.0), seed=2)
    _, gts = P.generate(s)
    w, h = s.actor_size
    for g in gts:
        for t, b in enumerate(g.boxes):
            assert w / 2 <= b.cx <= 200 - w / 2
            assert h / 2 <= b.cy <= 300 - h / 2
            if t:
                prev = g.boxes[t - 1]
                assert math.hypot(b.cx - prev.cx, b.cy - prev.cy) <= s.motion_step + 1e-9


def test_static_clean_actor_best_tube():
    s = P.SyntheticScenario(actors=1, jitter=0.0, motion_step=0.0, proposals_per_actor=3,
                            background_count=0, T=4, seed=9)
    v, _ = P.generate(s)
    tube = link_ht(v, LinkerConfig())
    assert tube.legal
    assert tube.score == pytest.approx(sum(tube.objectness) + s.T, abs=1e-12)
    for a, b in zip(tube.boxes, tube.boxes[1:]):
        assert iou(a, b) == 1.0


def test_frame_too_small_rejected():
    with pytest.raises(ScenarioError):
        P.generate(P.SyntheticScenario(frame_size=(50.0, 50.0), actor_size=(60.0, 40.0)))


def test_objectness_in_band():
    v, _ = P.generate(P.SyntheticScenario(actors=4, background_count=30, objectness_signal=0.98,
                                          objectness_noise=0.02, seed=4))
    for f in v.frames:
        for p in f:
            assert 0.0 <= p.objectness <= 1.0


def test_minimal_file_parses(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({
        "video_id": "one", "T": 1,
        "frames": [{"t": 0, "proposals": [{"id": 4, "box": [1.5, 2.5, 3, 4], "score": 0.25}]}],
    }))
    v = P.load(path)
    assert v.video_id == "one"
    (p,) = v.frames[0]
    assert (p.id, p.box, p.objectness, p.frame) == (4, Box(1.5, 2.5, 3, 4), 0.25, 0)


def _doc(frames):
    return json.dumps({"video_id": "x", "T": len(frames), "frames": frames})


def test_gap_in_frames_rejected():
    frames = [{"t": 0, "proposals": []}, {"t": 2, "proposals": []}]
    with pytest.raises(ProposalFormatError, match="non-contiguous") as ei:
        P.loads(_doc(frames))
    assert ei.value.frame == 2


def test_duplicate_id_rejected():
    prop = {"id": 3, "box": [1, 1, 1, 1], "score": 0.5}
    with pytest.raises(ProposalFormatError, match="duplicate") as ei:
        P.loads(_doc([{"t": 0, "proposals": [prop, prop]}]))
    assert (ei.value.frame, ei.value.proposal_id) == (0, 3)


@pytest.mark.parametrize("text", [
    "{not json",
    json.dumps([]),
    json.dumps({"video_id": "x", "T": 2, "frames": [{"t": 0, "proposals": []}]}),
    _doc([{"t": 0, "proposals": [{"id": 1, "box": [1, 1, 0, 1], "score": 0.5}]}]),
    _doc([{"t": 0, "proposals": [{"id": 1, "box": [1, 1, 1, 1], "score": 1.5}]}]),
    _doc([{"t": 0, "proposals": [{"id": 1.5, "box": [1, 1, 1, 1], "score": 0.5}]}]),
])
def test_malformed_files_rejected(text):
    with pytest.raises(ProposalFormatError):
        P.loads(text)


def test_round_trip_generated(tmp_path):
    v, gts = P.generate(P.SyntheticScenario(actors=3, background_count=9, seed=21))
    P.save(v, tmp_path / "v.json")
    assert P.load(tmp_path / "v.json") == v
    P.save_ground_truth(v.video_id, gts, tmp_path / "g.json")
    assert P.load_ground_truth(tmp_path / "g.json") == (v.video_id, gts)


def test_save_is_byte_stable(tmp_path):
    s = P.SyntheticScenario(actors=2, seed=8)
    P.save(P.generate(s)[0], tmp_path / "a.json")
    P.save(P.generate(s)[0], tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
