import csv
import io
import math

import pytest

from tubelink import bench
from tubelink.linker import LinkerConfig, extract_tubes
from tubelink.proposals import generate


def test_runtime_scenario_has_n_per_frame():
    for n in (37, 300, 1000):
        v, _ = generate(bench.runtime_scenario(n, T=3, seed=1))
        assert v.counts() == [n] * 3


def test_time_variant_repeats_identically():
    v, _ = generate(bench.runtime_scenario(80, T=5, seed=2))
    cfg = LinkerConfig(M=20)
    secs, tubes = bench.time_variant(v, cfg, repeat=3)
    assert secs > 0
    assert tubes == extract_tubes(v, cfg)


def test_runtime_rows_and_csv():
    rows = bench.run_runtime_bench(ns=(40, 80), M=15, repeat=3)
    assert [(r.variant, r.N) for r in rows] == [
        ("exact", 40), ("ht", 40), ("ht-ts", 40), ("exact", 80), ("ht", 80), ("ht-ts", 80)
    ]
    by = {(r.variant, r.N): r for r in rows}
    for r in rows:
        assert r.seconds > 0 and 0 <= r.Q <= r.N and r.M == 15
        assert r.speedup == pytest.approx(by["exact", r.N].seconds / r.seconds)
    parsed = list(csv.DictReader(io.StringIO(bench.rows_to_csv(rows))))
    assert len(parsed) == 6
    assert float(parsed[1]["seconds"]) == rows[1].seconds


def test_runtime_bench_validates():
    with pytest.raises(ValueError):
        bench.run_runtime_bench(ns=(10,), repeat=0)


def test_loglog_slope_recovers_exponent():
    xs = [300, 500, 700, 1000]
    assert bench.loglog_slope(xs, [3e-7 * x**2 for x in xs]) == pytest.approx(2.0)
    assert bench.loglog_slope(xs, [5.0 for _ in xs]) == pytest.approx(0.0)


def test_sweep_shape_and_full_beam():
    table = bench.coselection_sweep(videos=2, n_per_frame=60, M=40, top_ns=(10, 20))
    assert list(table) == [(th, n) for th in bench.THETAS for n in (10, 20)]
    assert all(0.0 <= g <= 1.0 for g in table.values())
    full = bench.coselection_sweep(videos=2, n_per_frame=60, M=40, top_ns=(10, 20), full_beam=True)
    assert all(g == 1.0 for g in full.values())
    text = bench.sweep_to_csv(table)
    assert text.splitlines()[0] == "theta,n,gamma"
    assert not any(math.isnan(float(r["gamma"])) for r in csv.DictReader(io.StringIO(text)))
