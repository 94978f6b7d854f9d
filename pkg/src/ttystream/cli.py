"""Command-line front end.

Subcommands:

* inspect    frame-level view of a single recording
* register   add a recorder directory to a catalog as a named dataset
* ls         list a catalog's datasets
* stats      metadata spread of a dataset
* match      dry-run the file-to-game matcher on an xlogfile plus files
* filter     dry-run the episode curation rules on an xlogfile
* dump       write a batch stream to a container file
* bench      measure batch throughput

Exit codes: 0 success, 1 usage or argument error, 2 malformed data
(archives, logs, filters, dumps), 3 I/O failure.  Errors print one line
to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .catalog import Catalog
from .codec import TtyrecVersion, iter_frames
from .dump import DumpWriter
from .errors import TtyrecError
from .loader import LoaderConfig, TrajectoryIterator, benchmark_throughput
from .matching import filter_bad_episodes, match_files_to_games
from .term import TerminalEmulator
from .xlog import parse_xlog_line

__all__ = ["main"]

_CHANNEL_NAMES = {0: "output", 1: "keypress", 2: "score", None: "output"}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for data
    errors, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _preview(payload: bytes, limit: int = 48) -> str:
    shown, tail = payload[:limit], "..." if len(payload) > limit else ""
    text = "".join(
        chr(b) if 32 <= b < 127 and b not in (0x5c, 0x7b, 0x7d)
        else f"\\x{b:02x}"
        for b in shown)
    return "{" + text + tail + "}"


def _read_xlog(path: Path):
    records = []
    with path.open("r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            if line.strip():
                records.append(parse_xlog_line(line))
    return records


# -- subcommand implementations ----------------------------------------------

def _cmd_inspect(args) -> int:
    path = Path(args.file)
    version = (TtyrecVersion.coerce(args.version) if args.version
               else TtyrecVersion.from_path(path))
    emu = TerminalEmulator() if args.render else None
    counts = {0: 0, 1: 0, 2: 0}
    total_bytes = 0
    first_ts = last_ts = None
    shown = 0
    for i, frame in enumerate(iter_frames(path, version)):
        counts[frame.channel or 0] += 1
        total_bytes += len(frame.payload)
        last_ts = frame.timestamp_us
        if first_ts is None:
            first_ts = frame.timestamp_us
        if args.limit is None or shown < args.limit:
            name = _CHANNEL_NAMES[frame.channel]
            print(f"[{i}] {frame.seconds}.{frame.microseconds:06d} "
                  f"{name} {len(frame.payload)}B "
                  f"{_preview(frame.payload)}")
            shown += 1
        if emu is not None and frame.channel in (None, 0):
            if version.has_channel:
                emu.feed(frame.payload)
            else:
                emu.feed_cropped(frame.payload)
    n = sum(counts.values())
    span = (last_ts - first_ts) / 1e6 if n else 0.0
    if version.has_channel:
        detail = (f" ({counts[0]} output, {counts[1]} keypress, "
                  f"{counts[2]} score)")
    else:
        detail = ""
    print(f"{path.name}: {n} frames{detail}, {total_bytes} payload bytes, "
          f"{span:.3f}s span")
    if emu is not None:
        print(emu.snapshot().render())
    return 0


def _cmd_register(args) -> int:
    with Catalog(args.catalog) as cat:
        version = TtyrecVersion.coerce(args.version)
        if version is TtyrecVersion.V3:
            report = cat.add_v3_directory(args.root, args.name)
        else:
            report = cat.add_v1_directory(args.root, args.name)
    for line in report.summary_lines():
        print(line)
    return 0


def _cmd_ls(args) -> int:
    with Catalog(args.catalog) as cat:
        rows = cat.datasets()
    for name, version, games, root in rows:
        print(f"{name}\tv{version}\t{games} games\t{root}")
    return 0


def _cmd_stats(args) -> int:
    with Catalog(args.catalog) as cat:
        stats = cat.stats(args.name, args.where)
    if args.json:
        payload = {
            "dataset": stats.dataset_name,
            "count": stats.count,
            "points": vars(stats.points),
            "turns": vars(stats.turns),
            "conducts": stats.conducts,
            "achievements": stats.achievements,
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    print(f"dataset {stats.dataset_name}: {stats.count} games")
    for label, summary in (("points", stats.points), ("turns", stats.turns)):
        print(f"{label}: min {summary.minimum:g} p25 {summary.p25:g} "
              f"median {summary.median:g} p75 {summary.p75:g} "
              f"max {summary.maximum:g} mean {summary.mean:g}")
    for label, table in (("conducts", stats.conducts),
                         ("achievements", stats.achievements)):
        nonzero = {k: v for k, v in table.items() if v > 0}
        if nonzero:
            body = ", ".join(f"{k} {v:.1f}%" for k, v in nonzero.items())
            print(f"{label}: {body}")
    return 0


def _cmd_match(args) -> int:
    records = _read_xlog(Path(args.xlog))
    files = []
    for name in args.files:
        path = Path(name)
        stem = path.name
        for suffix in (".bz2", ".ttyrec3", ".ttyrec"):
            if stem.endswith(suffix):
                stem = stem[: -len(suffix)]
        try:
            files.append((int(float(stem)), str(path)))
        except ValueError:
            print(f"error: no timestamp in filename: {name}",
                  file=sys.stderr)
            return 1
    result = match_files_to_games(records, files)
    if args.json:
        payload = {
            "assignments": [
                {"name": records[i].name, "starttime": records[i].starttime,
                 "endtime": records[i].endtime, "files": result.assignments[i]}
                for i in sorted(result.assignments)],
            "overlapping": [
                {"name": records[i].name, "starttime": records[i].starttime,
                 "endtime": records[i].endtime}
                for i in sorted(result.overlapping)],
            "dropped": list(result.dropped),
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    for i in sorted(result.assignments):
        rec = records[i]
        names = " ".join(Path(f).name for f in result.assignments[i])
        print(f"game {rec.name} {rec.starttime}..{rec.endtime}: "
              f"{names or '(no files)'}")
    for i in sorted(result.overlapping):
        rec = records[i]
        print(f"overlapping {rec.name} {rec.starttime}..{rec.endtime}")
    for f in result.dropped:
        print(f"dropped {Path(f).name}")
    return 0


def _cmd_filter(args) -> int:
    records = _read_xlog(Path(args.xlog))
    kept, removed = filter_bad_episodes(records)
    for rec, reason in removed:
        print(f"removed {rec.name} {rec.starttime}: {reason}")
    counts: dict[str, int] = {}
    for _, reason in removed:
        counts[reason] = counts.get(reason, 0) + 1
    detail = ", ".join(f"{r} {c}" for r, c in sorted(counts.items()))
    print(f"kept {len(kept)}")
    print(f"removed {len(removed)}" + (f" ({detail})" if detail else ""))
    return 0


def _loader_config(args) -> LoaderConfig:
    return LoaderConfig(
        dataset_name=args.name,
        batch_size=args.batch,
        seq_length=args.seq,
        workers=args.workers,
        shuffle=args.shuffle,
        seed=args.seed,
        where=args.where,
    )


def _cmd_dump(args) -> int:
    config = _loader_config(args)
    with Catalog(args.catalog) as cat:
        with TrajectoryIterator(cat, config) as stream:
            # Only stream-determining facts belong here: equal settings
            # must produce byte-identical dumps for any worker count.
            meta = {
                "dataset": args.name,
                "catalog": str(Path(args.catalog).resolve()),
                "seed": stream.seed,
                "shuffle": args.shuffle,
                "where": args.where,
            }
            written = 0
            with DumpWriter(args.out, config.batch_size, config.seq_length,
                            config.rows, config.cols, meta) as writer:
                for batch in stream:
                    writer.append(batch)
                    written += 1
                    if (args.limit_batches is not None
                            and written >= args.limit_batches):
                        break
    print(f"wrote {written} batches ({args.batch}x{args.seq}) to {args.out}, "
          f"seed {meta['seed']}")
    return 0


def _cmd_bench(args) -> int:
    config = _loader_config(args)
    limit_batches = None
    if args.frames is not None:
        # Frames are delivered in whole batches; loop so short corpora can
        # still supply the requested volume.
        per_batch = args.batch * args.seq
        limit_batches = -(-args.frames // per_batch)
        config = replace(config, loop_forever=limit_batches > 0)
    with Catalog(args.catalog) as cat:
        result = benchmark_throughput(cat, config, runs=args.runs,
                                      limit_batches=limit_batches)
    if args.json:
        print(json.dumps(result.as_dict(), indent=2, sort_keys=True))
        return 0
    for i, run in enumerate(result.runs, 1):
        print(f"run {i}: {run.seconds:.3f}s {run.batches} batches "
              f"{run.frames} frames {run.fps:.1f} fps")
    print(f"mean {result.mean_fps:.1f} fps, std {result.std_fps:.1f} "
          f"(batch {result.batch_size}x{result.seq_length}, "
          f"workers {result.workers})")
    return 0


# -- parser wiring ------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="ttystream",
                     description="Record, catalog, and stream terminal "
                                 "trajectory datasets.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress details to stderr")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("inspect", help="print a recording frame by frame")
    p.add_argument("file")
    p.add_argument("--file-version", dest="version", choices=("1", "3"),
                   help="override the version inferred from the filename")
    p.add_argument("--limit", type=int, default=10,
                   help="frame lines to print (default 10, -1 for all)")
    p.add_argument("--render", action="store_true",
                   help="draw the final screen state")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("register", help="add a recorder directory "
                                        "to a catalog")
    p.add_argument("--catalog", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--file-version", dest="version", choices=("1", "3"),
                   required=True)
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("ls", help="list datasets in a catalog")
    p.add_argument("--catalog", required=True)
    p.set_defaults(func=_cmd_ls)

    p = sub.add_parser("stats", help="metadata spread of a dataset")
    p.add_argument("--catalog", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--where", help="metadata filter expression")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("match", help="dry-run the file-to-game matcher")
    p.add_argument("--xlog", required=True)
    p.add_argument("files", nargs="*", metavar="FILE")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("filter", help="dry-run the episode curation rules")
    p.add_argument("--xlog", required=True)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("dump", help="write a batch stream to a file")
    p.add_argument("--catalog", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seq", type=int, default=32)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--shuffle", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--where")
    p.add_argument("--limit-batches", type=int)
    p.set_defaults(func=_cmd_dump)

    p = sub.add_parser("bench", help="measure batch throughput")
    p.add_argument("--catalog", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--seq", type=int, default=32)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--frames", type=int, default=None,
                   help="frames per timed run (default: one full pass)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bench)
    p.set_defaults(shuffle=False, seed=None, where=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "limit", None) is not None and args.limit < 0:
        args.limit = None
    try:
        return args.func(args)
    except TtyrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
