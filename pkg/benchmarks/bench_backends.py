"""Compare the compiled and pure-Python kernel backends.

For each N and linking variant, times ``extract_tubes`` on both backends
(median of ``--repeat`` runs after a warm-up), checks that both return the
same tubes, and prints a CSV:

    variant,N,backend,seconds,speedup_vs_python

Usage: python3 benchmarks/bench_backends.py [--n 100,300] [--repeat 3] [--m 50]
"""

import argparse
import csv
import sys

from tubelink import _backend, bench
from tubelink.linker import LinkerConfig
from tubelink.proposals import generate


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", default="100,300")
    p.add_argument("--t", type=int, default=5)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    backends = _backend.available()
    if "compiled" not in backends:
        print("compiled backend not built; only the python backend is available", file=sys.stderr)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["variant", "N", "backend", "seconds", "speedup_vs_python"])
    for n in (int(v) for v in args.n.split(",")):
        video, _ = generate(bench.runtime_scenario(n, args.t, args.seed))
        for variant in ("exact", "ht", "ht_ts"):
            cfg = LinkerConfig(tau=args.tau, K=args.k, M=args.m, variant=variant)
            secs, tubes = {}, {}
            for b in backends:
                secs[b], tubes[b] = bench.time_variant(video, cfg, args.repeat, backend=b)
            if len({tuple(t) for t in tubes.values()}) != 1:
                raise SystemExit(f"backends disagree on {variant} at N={n}")
            for b in backends:
                out.writerow([bench.VARIANT_LABELS[variant], n, b, repr(secs[b]), repr(secs["python"] / secs[b])])
            sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
