"""Generate a synthetic recording corpus and optionally register it.

Produces a directory of .ttyrec/.ttyrec3 files plus a matching xlogfile,
ready for `ttystream register`.  Useful for benchmarks and demos:

    python3 scripts/make_corpus.py /tmp/corpus --games 50 --seed 7
    python3 scripts/make_corpus.py /tmp/big --min-mib 100 --raw \
        --steps 400 800 --catalog /tmp/cat.db --dataset bench
"""

import argparse
from pathlib import Path

from ttystream.catalog import Catalog
from ttystream.codec import TtyrecVersion
from ttystream.synth import SynthConfig, make_corpus


def parse_args() -> argparse.Namespace:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("root", type=Path, help="corpus directory to create")
    p.add_argument("--games", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--file-version", type=int, choices=(1, 3), default=3)
    p.add_argument("--steps", type=int, nargs=2, default=(8, 40),
                   metavar=("MIN", "MAX"), help="steps per episode")
    p.add_argument("--min-mib", type=float, default=0.0,
                   help="keep generating until the files reach this size")
    p.add_argument("--raw", action="store_true",
                   help="write uncompressed files instead of bzip2")
    p.add_argument("--scum-fraction", type=float, default=0.0,
                   help="fraction of episodes that are start-scums")
    p.add_argument("--catalog", type=Path, default=None,
                   help="also register the corpus into this catalog")
    p.add_argument("--dataset", default="synth",
                   help="dataset name used with --catalog")
    return p.parse_args()


def main() -> None:
    args = parse_args()
    config = SynthConfig(
        games=args.games,
        version=TtyrecVersion(args.file_version),
        seed=args.seed,
        steps_min=args.steps[0],
        steps_max=args.steps[1],
        scum_fraction=args.scum_fraction,
        compressed=not args.raw,
        min_total_bytes=int(args.min_mib * 2**20),
    )
    records = make_corpus(args.root, config)
    total = sum(f.stat().st_size for f in args.root.rglob("*") if f.is_file())
    print(f"wrote {len(records)} games, {total / 2**20:.1f} MiB "
          f"under {args.root}")
    if args.catalog is not None:
        catalog = Catalog(args.catalog)
        if config.version is TtyrecVersion.V3:
            report = catalog.add_v3_directory(args.root, args.dataset)
        else:
            report = catalog.add_v1_directory(args.root, args.dataset)
        for line in report.summary_lines():
            print(line)
        catalog.close()


if __name__ == "__main__":
    main()
