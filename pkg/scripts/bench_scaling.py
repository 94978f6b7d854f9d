"""Measure batch-streaming throughput across worker counts.

Generates (or reuses) a raw V3 corpus, registers it, then times full
minibatch assembly at each worker count and reports frames/second and the
speedup over one worker:

    python3 scripts/bench_scaling.py /tmp/bench --min-mib 100 \
        --workers 1 2 10 --batch-size 128 --seq-length 32
"""

import argparse
import json
import os
from pathlib import Path

from ttystream.catalog import Catalog
from ttystream.loader import LoaderConfig, benchmark_throughput
from ttystream.synth import SynthConfig, make_corpus


def parse_args() -> argparse.Namespace:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("root", type=Path,
                   help="scratch directory (corpus + catalog live here)")
    p.add_argument("--min-mib", type=float, default=100.0)
    p.add_argument("--games", type=int, default=150)
    p.add_argument("--steps", type=int, nargs=2, default=(400, 800),
                   metavar=("MIN", "MAX"))
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--workers", type=int, nargs="+", default=(1, 2, 10))
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seq-length", type=int, default=32)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--limit", type=int, default=40,
                   help="batches per timed run")
    p.add_argument("--json", action="store_true", dest="as_json")
    return p.parse_args()


def main() -> None:
    args = parse_args()
    corpus = args.root / "corpus"
    if not corpus.exists():
        config = SynthConfig(games=args.games, seed=args.seed,
                             steps_min=args.steps[0], steps_max=args.steps[1],
                             compressed=False,
                             min_total_bytes=int(args.min_mib * 2**20))
        make_corpus(corpus, config)
    total = sum(f.stat().st_size for f in corpus.iterdir() if f.is_file())

    catalog_path = args.root / "catalog.db"
    catalog = Catalog(catalog_path)
    if not any(name == "bench" for name, *_ in catalog.datasets()):
        catalog.add_v3_directory(corpus, "bench")

    results = []
    for workers in args.workers:
        config = LoaderConfig(dataset_name="bench",
                              batch_size=args.batch_size,
                              seq_length=args.seq_length,
                              workers=workers, seed=1)
        bench = benchmark_throughput(catalog, config, runs=args.runs,
                                     limit_batches=args.limit)
        results.append((workers, bench))
    catalog.close()

    base = results[0][1].mean_fps
    if args.as_json:
        print(json.dumps({
            "corpus_mib": total / 2**20,
            "cpus": os.cpu_count(),
            "results": [dict(workers=w, speedup=b.mean_fps / base,
                             **b.as_dict()) for w, b in results],
        }, indent=2))
        return
    print(f"corpus: {total / 2**20:.1f} MiB, {os.cpu_count()} cpus")
    print(f"{'workers':>8} {'mean fps':>10} {'std':>8} {'speedup':>8}")
    for workers, bench in results:
        print(f"{workers:>8} {bench.mean_fps:>10.0f} {bench.std_fps:>8.0f} "
              f"{bench.mean_fps / base:>8.2f}")


if __name__ == "__main__":
    main()
