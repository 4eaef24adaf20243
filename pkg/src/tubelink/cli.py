"""Command-line interface: ``tubelink <command> ...``.

Exit codes: 0 success, 2 data error, 64 usage error. ``TUBELINK_SEED``
overrides ``--seed`` wherever a command takes one.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import _backend, bench, evaluation, linker, proposals, targets
from .errors import NoTubeError, ProposalFormatError, ScenarioError, TubelinkError

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64

ALGOS = {"exact": "exact", "ht": "ht", "ht-ts": "ht_ts"}

log = logging.getLogger("tubelink")


class UsageError(Exception):
    pass


class DataError(Exception):
    def __init__(self, message, **where):
        super().__init__(message)
        self.where = where


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args) -> int:
    env = os.environ.get("TUBELINK_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"TUBELINK_SEED must be an integer, got {env!r}") from None
    return args.seed


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}", file=str(path)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON: {exc}", file=str(path)) from None


def _emit(payload: str, output=None):
    if output:
        Path(output).write_text(payload)
    else:
        sys.stdout.write(payload)


def _dump(obj) -> str:
    return json.dumps(obj, allow_nan=False, sort_keys=False) + "\n"


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args):
    s = proposals.SyntheticScenario(
        actors=args.actors,
        motion_step=args.motion_step,
        jitter=args.jitter,
        background_count=args.background,
        proposals_per_actor=args.per_actor,
        seed=_seed(args),
        T=args.t,
        classes=args.classes,
        video_id=args.video_id,
    )
    try:
        video, gts = proposals.generate(s)
    except ScenarioError as exc:
        raise DataError(str(exc)) from None
    _emit(proposals.dumps(video) + "\n", args.output)
    if args.gt:
        proposals.save_ground_truth(video.video_id, gts, args.gt)
    return EXIT_OK


def cmd_link(args):
    try:
        video = proposals.proposals_from_obj(_read_json(args.input))
    except ProposalFormatError as exc:
        raise DataError(f"{args.input}: {exc}", frame=exc.frame, id=exc.proposal_id) from None
    cfg = linker.LinkerConfig(
        tau=args.tau, K=args.k, M=args.m, variant=ALGOS[args.algo], fill_illegal=args.fill_illegal
    )
    try:
        tubes = linker.extract_tubes(video, cfg, backend=args.backend)
    except NoTubeError as exc:
        raise DataError(str(exc), frame=exc.frame) from None
    _emit(_dump(linker.tubes_to_obj(video.video_id, tubes)), args.output)
    return EXIT_OK


def cmd_bench(args):
    seed = _seed(args)
    rows = bench.run_runtime_bench(
        ns=args.n, T=args.t, M=args.m, K=args.k, tau=args.tau, seed=seed,
        repeat=args.repeat, backend=args.backend,
    )
    text = bench.rows_to_csv(rows)
    if args.csv:
        Path(args.csv).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _load_tube_files(paths, need_label):
    out = {}
    for p in paths:
        obj = _read_json(p)
        try:
            vid, tubes, labels = linker.tubes_from_obj(obj)
        except ProposalFormatError as exc:
            raise DataError(f"{p}: {exc}", file=str(p)) from None
        if need_label and any(lb is None for lb in labels):
            raise DataError(f"{p}: every predicted tube needs a 'label'", file=str(p))
        if vid in out:
            raise DataError(f"duplicate video_id {vid!r}", video_id=vid)
        out[vid] = (tubes, labels)
    return out


def _load_gt_files(paths):
    out = {}
    for p in paths:
        try:
            vid, gts = proposals.ground_truth_from_obj(_read_json(p))
        except ProposalFormatError as exc:
            raise DataError(f"{p}: {exc}", file=str(p)) from None
        if vid in out:
            raise DataError(f"duplicate video_id {vid!r}", video_id=vid)
        out[vid] = gts
    return out


def _same_videos(a: dict, b: dict, what_a: str, what_b: str):
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))
        only_b = sorted(set(b) - set(a))
        raise DataError(
            f"video ids differ between {what_a} and {what_b}",
            **{f"only_in_{what_a}": only_a, f"only_in_{what_b}": only_b},
        )


def cmd_eval(args):
    preds = _load_tube_files(args.pred, need_label=True)
    gts = _load_gt_files(args.gt)
    _same_videos(preds, gts, "pred", "gt")
    dets, anns = [], []
    for vid in sorted(preds):
        tubes, labels = preds[vid]
        dets += [evaluation.Detection(vid, lb, tb.score, tb.boxes) for tb, lb in zip(tubes, labels)]
        anns += [evaluation.GroundTruth(vid, g.label, g.boxes) for g in gts[vid]]
    if args.metric == "frame-map":
        sigma = evaluation.FRAME_SIGMA if args.sigma is None else args.sigma
        value, per_class = evaluation.frame_map(
            evaluation.explode_frames(dets), evaluation.explode_frames(anns), sigma
        )
    else:
        sigma = evaluation.VIDEO_SIGMA if args.sigma is None else args.sigma
        value, per_class = evaluation.video_map(dets, anns, sigma)
    _emit(_dump({
        "metric": args.metric,
        "sigma": sigma,
        "value": _num(value),
        "per_class": {str(c): v for c, v in per_class.items()},
    }))
    return EXIT_OK


def cmd_coselect(args):
    a = _load_tube_files(args.a, need_label=False)
    b = _load_tube_files(args.b, need_label=False)
    _same_videos(a, b, "a", "b")
    per_video = {}
    for vid in sorted(a):
        try:
            inp = evaluation.CoselectionInput(a[vid][0], b[vid][0], args.theta, args.n)
        except ValueError as exc:
            raise DataError(f"video {vid!r}: {exc}", video_id=vid) from None
        per_video[vid] = evaluation.coselection_rate(inp)
    value = sum(per_video.values()) / len(per_video) if per_video else None
    _emit(_dump({
        "metric": "coselection",
        "theta": args.theta,
        "n": args.n,
        "value": value,
        "per_video": per_video,
    }))
    return EXIT_OK


def cmd_sweep(args):
    table = bench.coselection_sweep(
        videos=args.videos, n_per_frame=args.proposals, T=args.t, M=args.m, K=args.k,
        tau=args.tau, seed=_seed(args), thetas=args.thetas, top_ns=args.ns,
        full_beam=args.full_beam, jobs=args.jobs, backend=args.backend,
    )
    text = bench.sweep_to_csv(table)
    if args.csv:
        Path(args.csv).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_assign(args):
    tubes = _load_tube_files([args.tubes], need_label=False)
    gts = _load_gt_files([args.gt])
    _same_videos(tubes, gts, "tubes", "gt")
    (vid,) = tubes
    rows = []
    for k, tb in enumerate(tubes[vid][0]):
        label, gt = targets.assign_label(tb, gts[vid])
        row = {"tube": k, "label": label, "gt": None, "offsets": None}
        if gt is not None:
            row["gt"] = gts[vid].index(gt)
            try:
                row["offsets"] = [list(targets.encode(b, g)) for b, g in zip(tb.boxes, gt.boxes)]
            except TubelinkError as exc:
                raise DataError(f"tube {k}: {exc}") from None
        rows.append(row)
    _emit(_dump({"video_id": vid, "assignments": rows}))
    return EXIT_OK


def cmd_loss(args):
    obj = _read_json(args.input)
    try:
        pred = targets.TubePrediction(obj["class_probs"], obj["offsets"])
        c = int(obj["gt_class"])
        value = targets.tube_loss(pred, c, obj.get("targets"))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.input}: {exc}") from None
    _emit(_dump({"loss": value if math.isfinite(value) else "inf"}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tubelink", description="Deformable action-tube linking toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def backend_opt(sp):
        sp.add_argument("--backend", choices=_backend.BACKENDS, default=None,
                        help=f"kernel backend (default: {_backend.NAME})")

    g = sub.add_parser("generate", help="write a synthetic proposals file")
    g.add_argument("--output", "-o")
    g.add_argument("--gt", help="also write ground-truth tubes here")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--t", type=int, default=5)
    g.add_argument("--actors", type=int, default=2)
    g.add_argument("--per-actor", type=int, default=4)
    g.add_argument("--background", type=int, default=20)
    g.add_argument("--motion-step", type=float, default=4.0)
    g.add_argument("--jitter", type=float, default=2.0)
    g.add_argument("--classes", type=int, default=1)
    g.add_argument("--video-id", default="synthetic")
    g.set_defaults(func=cmd_generate)

    ln = sub.add_parser("link", help="extract tubes from a proposals file")
    ln.add_argument("--input", "-i", required=True)
    ln.add_argument("--output", "-o")
    ln.add_argument("--tau", type=float, default=0.3)
    ln.add_argument("--k", type=int, default=10)
    ln.add_argument("--m", type=int, default=200)
    ln.add_argument("--algo", choices=sorted(ALGOS), default="ht-ts")
    ln.add_argument("--fill-illegal", action="store_true",
                    help="after legal tubes run out, add top-objectness tubes up to M")
    backend_opt(ln)
    ln.set_defaults(func=cmd_link)

    b = sub.add_parser("bench", help="runtime sweep over proposal counts (CSV)")
    b.add_argument("--n", type=_int_list, default=[300, 500, 700, 1000])
    b.add_argument("--t", type=int, default=5)
    b.add_argument("--m", type=int, default=200)
    b.add_argument("--k", type=int, default=10)
    b.add_argument("--tau", type=float, default=0.3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeat", type=int, default=5)
    b.add_argument("--csv", help="also write the CSV to this path")
    backend_opt(b)
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("eval", help="frame-mAP / video-mAP of labelled tubes")
    e.add_argument("--pred", nargs="+", required=True)
    e.add_argument("--gt", nargs="+", required=True)
    e.add_argument("--metric", choices=["frame-map", "video-map"], default="video-map")
    e.add_argument("--sigma", type=float, default=None)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("coselect", help="coselection rate between two tube sets")
    c.add_argument("--a", nargs="+", required=True, help="tubes linked with top-K selection")
    c.add_argument("--b", nargs="+", required=True, help="tubes linked without top-K selection")
    c.add_argument("--theta", type=float, default=0.7)
    c.add_argument("--n", type=int, default=50)
    c.set_defaults(func=cmd_coselect)

    s = sub.add_parser("sweep", help="coselection sweep on synthetic videos (CSV)")
    s.add_argument("--videos", type=int, default=20)
    s.add_argument("--proposals", type=int, default=250, help="proposals per frame")
    s.add_argument("--t", type=int, default=5)
    s.add_argument("--m", type=int, default=200)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--tau", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--thetas", type=_float_list, default=list(bench.THETAS))
    s.add_argument("--ns", type=_int_list, default=list(bench.TOP_NS))
    s.add_argument("--full-beam", action="store_true", help="use K = largest frame size")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--csv")
    backend_opt(s)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("assign", help="label tubes against ground truth and encode targets")
    a.add_argument("--tubes", required=True)
    a.add_argument("--gt", required=True)
    a.set_defaults(func=cmd_assign)

    lo = sub.add_parser("loss", help="multi-task tube loss from a JSON prediction")
    lo.add_argument("--input", "-i", required=True)
    lo.set_defaults(func=cmd_loss)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        err = {"error": str(exc)}
        err.update({k: v for k, v in exc.where.items() if v is not None})
        sys.stderr.write(json.dumps(err) + "\n")
        return EXIT_DATA
    except (UsageError, ValueError) as exc:
        sys.stderr.write(f"tubelink: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
