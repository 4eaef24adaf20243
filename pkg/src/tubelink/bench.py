"""
Benchmark harness: linking runtime sweep and coselection-rate sweep.

Runtime cells time ``extract_tubes`` only. Scenario generation and the
measurement of Q (mean legal successors per proposal) happen outside the
timed region. Each cell runs one discarded warm-up and then ``repeat`` timed
runs and reports the median.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .evaluation import CoselectionInput, coselection_rate
from .linker import LinkerConfig, extract_tubes, legal_successor_mean
from .proposals import SyntheticScenario, generate

log = logging.getLogger(__name__)

VARIANT_LABELS = {"exact": "exact", "ht": "ht", "ht_ts": "ht-ts"}
THETAS = (0.7, 0.8, 0.9, 1.0)
TOP_NS = (50, 100, 150, 200)


def runtime_scenario(n: int, T: int = 5, seed: int = 0) -> SyntheticScenario:
    """``n`` proposals per frame: 70% clustered on 10 actors, the rest background."""
    actors = 10
    per_actor = round(0.7 * n / actors)
    return SyntheticScenario(
        actors=actors,
        proposals_per_actor=per_actor,
        background_count=n - actors * per_actor,
        motion_step=4.0,
        jitter=8.0,
        T=T,
        seed=seed,
        frame_size=(640.0, 480.0),
        video_id=f"bench-n{n}-s{seed}",
    )


def smooth_scenario(index: int, n: int = 250, T: int = 5, seed: int = 0) -> SyntheticScenario:
    """Slow, low-jitter actors; used for the coselection sweep."""
    actors = 8
    per_actor = round(0.8 * n / actors)
    return SyntheticScenario(
        actors=actors,
        proposals_per_actor=per_actor,
        background_count=n - actors * per_actor,
        motion_step=3.0,
        jitter=3.0,
        T=T,
        seed=seed * 1000 + index,
        frame_size=(640.0, 480.0),
        video_id=f"smooth-{index:03d}",
    )


@dataclass(frozen=True)
class BenchRow:
    variant: str
    N: int
    seconds: float
    Q: float
    speedup: float
    M: int


def _signature(tubes):
    return tuple((t.proposal_ids, t.score) for t in tubes)


def time_variant(video, cfg: LinkerConfig, repeat: int, backend=None) -> tuple[float, list]:
    """Median wall time of ``extract_tubes`` over ``repeat`` runs after one warm-up."""
    tubes = extract_tubes(video, cfg, backend=backend)
    sig = _signature(tubes)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        again = extract_tubes(video, cfg, backend=backend)
        times.append(time.perf_counter() - t0)
        if _signature(again) != sig:
            raise RuntimeError(f"non-deterministic linking output for {cfg.variant}")
    return statistics.median(times), tubes


def run_runtime_bench(
    ns: Sequence[int] = (300, 500, 700, 1000),
    T: int = 5,
    M: int = 200,
    K: int = 10,
    tau: float = 0.3,
    seed: int = 0,
    repeat: int = 5,
    variants: Sequence[str] = ("exact", "ht", "ht_ts"),
    backend=None,
) -> list[BenchRow]:
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    rows = []
    for n in ns:
        if n < 1:
            raise ValueError("N must be positive")
        video, _ = generate(runtime_scenario(n, T, seed))
        q = legal_successor_mean(video, tau, backend=backend)
        secs = {}
        achieved = {}
        for v in variants:
            cfg = LinkerConfig(tau=tau, K=K, M=M, variant=v)
            secs[v], tubes = time_variant(video, cfg, repeat, backend)
            achieved[v] = len(tubes)
            log.info("N=%d %s %.4fs (%d tubes)", n, v, secs[v], len(tubes))
        base = secs.get("exact")
        for v in variants:
            speed = base / secs[v] if base is not None else math.nan
            rows.append(BenchRow(VARIANT_LABELS[v], n, secs[v], q, speed, achieved[v]))
    return rows


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "N", "seconds", "Q", "speedup", "M"])
    for r in rows:
        w.writerow([r.variant, r.N, repr(r.seconds), repr(r.Q), repr(r.speedup), r.M])
    return buf.getvalue()


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx = [math.log(x) for x in xs]
    ly = [math.log(y) for y in ys]
    mx, my = statistics.fmean(lx), statistics.fmean(ly)
    num = sum((a - mx) * (b - my) for a, b in zip(lx, ly))
    den = sum((a - mx) ** 2 for a in lx)
    return num / den


def _sweep_video(args):
    idx, n, T, M, K, tau, seed, full_beam, backend = args
    video, _ = generate(smooth_scenario(idx, n, T, seed))
    k = max(video.counts()) if full_beam else K
    without = extract_tubes(video, LinkerConfig(tau=tau, K=k, M=M, variant="ht", fill_illegal=True), backend=backend)
    with_ts = extract_tubes(video, LinkerConfig(tau=tau, K=k, M=M, variant="ht_ts", fill_illegal=True), backend=backend)
    return video.video_id, with_ts, without


def coselection_sweep(
    videos: int = 20,
    n_per_frame: int = 250,
    T: int = 5,
    M: int = 200,
    K: int = 10,
    tau: float = 0.3,
    seed: int = 0,
    thetas: Sequence[float] = THETAS,
    top_ns: Sequence[int] = TOP_NS,
    full_beam: bool = False,
    jobs: int = 1,
    backend=None,
) -> dict[tuple[float, int], float]:
    """Dataset-mean coselection rate for every (theta, n) cell.

    Each synthetic video is linked with ``ht`` (no top-K) and ``ht_ts``,
    both filling up to ``M`` tubes with top-objectness tubes once legal ones
    run out. ``full_beam`` sets K to the largest frame size, where the two
    tube sets must coincide.
    """
    work = [(i, n_per_frame, T, M, K, tau, seed, full_beam, backend) for i in range(videos)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_video, work))
    else:
        results = [_sweep_video(w) for w in work]
    table = {}
    for theta in thetas:
        for n in top_ns:
            rates = [coselection_rate(CoselectionInput(a, b, theta, n)) for _, a, b in results]
            table[(theta, n)] = sum(rates) / len(rates)
    return table


def sweep_to_csv(table: dict[tuple[float, int], float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "n", "gamma"])
    for (theta, n), g in table.items():
        w.writerow([repr(theta), n, repr(g)])
    return buf.getvalue()
