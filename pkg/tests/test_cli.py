import csv
import io
import json
import os
import subprocess
import sys

import pytest

from tubelink.cli import main


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def run_proc(*argv, env=None):
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run(
        [sys.executable, "-m", "tubelink", *map(str, argv)], capture_output=True, text=True, env=full_env
    )


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture
def scenario(tmp_path, capsys):
    props, gt = tmp_path / "props.json", tmp_path / "gt.json"
    rc, _, _ = run(capsys, "generate", "-o", props, "--gt", gt, "--actors", 3, "--background", 15, "--seed", 4)
    assert rc == 0
    return props, gt


def single_chain(tmp_path):
    frames = [{"t": t, "proposals": [{"id": 7, "box": [50 + t, 50, 20, 20], "score": 0.5}]} for t in range(3)]
    return write(tmp_path / "one.json", {"video_id": "one", "T": 3, "frames": frames})


@pytest.mark.parametrize("algo", ["exact", "ht", "ht-ts"])
def test_link_single_proposal_per_frame(tmp_path, capsys, algo):
    rc, out, _ = run(capsys, "link", "-i", single_chain(tmp_path), "--algo", algo)
    assert rc == 0
    obj = json.loads(out)
    assert obj["video_id"] == "one"
    assert len(obj["tubes"]) == 1
    assert obj["tubes"][0]["ids"] == [7, 7, 7]


def test_link_empty_frame_is_data_error(tmp_path, capsys):
    frames = [{"t": 0, "proposals": [{"id": 0, "box": [10, 10, 5, 5], "score": 0.5}]}, {"t": 1, "proposals": []}]
    p = write(tmp_path / "e.json", {"video_id": "e", "T": 2, "frames": frames})
    rc, out, err = run(capsys, "link", "-i", p)
    assert rc == 2 and out == ""
    assert json.loads(err)["frame"] == 1


def test_link_parse_error_names_location(tmp_path, capsys):
    frames = [
        {"t": 0, "proposals": [{"id": 0, "box": [10, 10, -5, 5], "score": 0.5}]},
    ]
    p = write(tmp_path / "bad.json", {"video_id": "b", "T": 1, "frames": frames})
    rc, _, err = run(capsys, "link", "-i", p)
    assert rc == 2
    msg = json.loads(err)
    assert msg["frame"] == 0 and msg["id"] == 0


def test_link_malformed_json(tmp_path, capsys):
    p = tmp_path / "x.json"
    p.write_text("{nope")
    assert run(capsys, "link", "-i", p)[0] == 2
    assert run(capsys, "link", "-i", tmp_path / "missing.json")[0] == 2


def test_unknown_algo_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["link", "-i", str(single_chain(tmp_path)), "--algo", "viterbi"])
    assert exc.value.code == 64


def test_invalid_config_is_usage_error(tmp_path, capsys):
    assert run(capsys, "link", "-i", single_chain(tmp_path), "--tau", 1.5)[0] == 64


def test_ht_and_ht_ts_with_large_k_write_identical_files(scenario, tmp_path, capsys):
    props, _ = scenario
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "link", "-i", props, "-o", a, "--algo", "ht", "--m", 30)[0] == 0
    assert run(capsys, "link", "-i", props, "-o", b, "--algo", "ht-ts", "--k", 1000, "--m", 30)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_fill_illegal_reaches_m(scenario, capsys):
    props, _ = scenario
    rc, out, _ = run(capsys, "link", "-i", props, "--m", 20, "--fill-illegal", "--tau", 0.9)
    assert rc == 0
    tubes = json.loads(out)["tubes"]
    assert len(tubes) == 20
    assert any(not t["legal"] for t in tubes)


def _pred_from_gt(gt_path, out_path, score=1.0):
    obj = json.loads(gt_path.read_text())
    for t in obj["tubes"]:
        t["score"] = score
    return write(out_path, obj)


@pytest.mark.parametrize("metric", ["frame-map", "video-map"])
def test_eval_pred_equals_gt(scenario, tmp_path, capsys, metric):
    _, gt = scenario
    pred = _pred_from_gt(gt, tmp_path / "pred.json")
    rc, out, _ = run(capsys, "eval", "--pred", pred, "--gt", gt, "--metric", metric)
    assert rc == 0
    res = json.loads(out)
    assert res["value"] == 1.0
    assert res["sigma"] == (0.5 if metric == "frame-map" else 0.2)


def test_eval_mismatched_video_ids(scenario, tmp_path, capsys):
    _, gt = scenario
    obj = json.loads(gt.read_text())
    obj["video_id"] = "other"
    for t in obj["tubes"]:
        t["score"] = 1.0
    pred = write(tmp_path / "pred.json", obj)
    rc, out, err = run(capsys, "eval", "--pred", pred, "--gt", gt)
    assert rc == 2 and out == ""
    assert json.loads(err)["only_in_pred"] == ["other"]


def test_eval_requires_labels(scenario, tmp_path, capsys):
    props, gt = scenario
    tubes = tmp_path / "t.json"
    run(capsys, "link", "-i", props, "-o", tubes, "--m", 5)
    assert run(capsys, "eval", "--pred", tubes, "--gt", gt)[0] == 2


def test_coselect_same_sets(scenario, tmp_path, capsys):
    props, _ = scenario
    tubes = tmp_path / "t.json"
    run(capsys, "link", "-i", props, "-o", tubes, "--m", 12)
    rc, out, _ = run(capsys, "coselect", "--a", tubes, "--b", tubes, "--theta", 1.0, "--n", 10)
    assert rc == 0
    assert json.loads(out)["value"] == 1.0


def test_coselect_too_few_tubes(scenario, tmp_path, capsys):
    props, _ = scenario
    tubes = tmp_path / "t.json"
    run(capsys, "link", "-i", props, "-o", tubes, "--m", 3)
    assert run(capsys, "coselect", "--a", tubes, "--b", tubes, "--n", 10)[0] == 2


def test_sweep_emits_sixteen_cells(capsys):
    rc, out, _ = run(capsys, "sweep", "--videos", 2, "--proposals", 60, "--m", 50, "--ns", "10,20,30,40")
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 16
    assert {float(r["theta"]) for r in rows} == {0.7, 0.8, 0.9, 1.0}
    assert all(0.0 <= float(r["gamma"]) <= 1.0 for r in rows)


def test_sweep_independent_of_jobs(capsys):
    args = ["sweep", "--videos", 3, "--proposals", 60, "--m", 50, "--ns", "10,20"]
    one = run(capsys, *args, "--jobs", 1)[1]
    three = run(capsys, *args, "--jobs", 3)[1]
    assert one == three


def test_bench_csv_format(tmp_path, capsys):
    out_csv = tmp_path / "b.csv"
    rc, out, _ = run(capsys, "bench", "--n", "40,60", "--m", 10, "--repeat", 3, "--csv", out_csv)
    assert rc == 0
    assert out_csv.read_text() == out
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["variant", "N", "seconds", "Q", "speedup", "M"]
    assert [(r["variant"], r["N"]) for r in rows] == [
        ("exact", "40"), ("ht", "40"), ("ht-ts", "40"), ("exact", "60"), ("ht", "60"), ("ht-ts", "60")
    ]
    for r in rows:
        assert float(r["seconds"]) > 0
        assert 0 <= float(r["Q"]) <= int(r["N"])
    assert float(rows[0]["speedup"]) == 1.0


def test_bench_rejects_bad_n(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--n", "0,10"])
    assert exc.value.code == 64


def test_seed_env_overrides_flag(tmp_path, capsys, monkeypatch):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    run(capsys, "generate", "-o", a, "--seed", 1)
    monkeypatch.setenv("TUBELINK_SEED", "1")
    run(capsys, "generate", "-o", b, "--seed", 99)
    monkeypatch.setenv("TUBELINK_SEED", "2")
    run(capsys, "generate", "-o", c, "--seed", 1)
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    monkeypatch.setenv("TUBELINK_SEED", "abc")
    assert run(capsys, "generate", "--seed", 1)[0] == 64


def test_assign_and_loss(scenario, tmp_path, capsys):
    props, gt = scenario
    tubes = tmp_path / "t.json"
    run(capsys, "link", "-i", props, "-o", tubes, "--m", 6)
    rc, out, _ = run(capsys, "assign", "--tubes", tubes, "--gt", gt)
    assert rc == 0
    rows = json.loads(out)["assignments"]
    assert len(rows) == 6
    assert any(r["label"] == 1 for r in rows)
    for r in rows:
        assert (r["offsets"] is None) == (r["label"] == 0)

    pred = write(tmp_path / "p.json", {
        "class_probs": [0.0, 1.0], "offsets": [[[0.5, 0, 0, 0]]], "gt_class": 1, "targets": [[0, 0, 0, 0]],
    })
    rc, out, _ = run(capsys, "loss", "-i", pred)
    assert rc == 0 and json.loads(out) == {"loss": 0.125}
    pred = write(tmp_path / "q.json", {"class_probs": [1.0, 0.0], "offsets": [[[0, 0, 0, 0]]], "gt_class": 1,
                                       "targets": [[0, 0, 0, 0]]})
    assert json.loads(run(capsys, "loss", "-i", pred)[1]) == {"loss": "inf"}
    bad = write(tmp_path / "r.json", {"class_probs": [0.5, 0.6], "offsets": [[[0, 0, 0, 0]]], "gt_class": 1})
    assert run(capsys, "loss", "-i", bad)[0] == 2


THREAD_ENVS = [
    {"OMP_NUM_THREADS": "1", "OPENBLAS_NUM_THREADS": "1", "MKL_NUM_THREADS": "1"},
    {"OMP_NUM_THREADS": "4", "OPENBLAS_NUM_THREADS": "4", "MKL_NUM_THREADS": "4"},
]


def test_commands_byte_identical_across_runs_and_threads(tmp_path):
    outputs = []
    for k, env in enumerate(THREAD_ENVS * 2):
        d = tmp_path / str(k)
        d.mkdir()
        props, gt = d / "p.json", d / "g.json"
        r = run_proc("generate", "-o", props, "--gt", gt, "--seed", 3, "--actors", 3, env=env)
        assert r.returncode == 0, r.stderr
        link = run_proc("link", "-i", props, "--m", 20, env=env)
        sweep = run_proc("sweep", "--videos", 2, "--proposals", 50, "--m", 30, "--ns", "5,10", env=env)
        assert link.returncode == sweep.returncode == 0
        outputs.append((props.read_bytes(), gt.read_bytes(), link.stdout, sweep.stdout))
    assert all(o == outputs[0] for o in outputs)


def test_backends_give_identical_link_output(scenario, capsys):
    from tubelink import _backend

    props, _ = scenario
    outs = {run(capsys, "link", "-i", props, "--m", 25, "--backend", b)[1] for b in _backend.available()}
    assert len(outs) == 1
