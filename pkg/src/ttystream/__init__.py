"""Recording, indexing, and batched streaming of terminal trajectories."""

from . import errors
from .catalog import Catalog, DatasetStats, FieldSummary, RegistrationReport
from .codec import (
    CHANNEL_KEYPRESS,
    CHANNEL_OUTPUT,
    CHANNEL_SCORE,
    Frame,
    FrameWriter,
    TtyrecVersion,
    iter_frames,
    open_compressed,
    read_frame,
    scan_stream,
    write_compressed,
    write_frame,
)
from .dump import DumpReader, DumpWriter, open_dump, read_dump, write_dump
from .loader import (
    BATCH_DTYPES,
    LoaderConfig,
    MiniBatch,
    TrajectoryIterator,
    benchmark_throughput,
    decode_game,
)
from .matching import filter_bad_episodes, match_files_to_games
from .predicate import Predicate, compile_predicate
from .term import ScreenSnapshot, TerminalEmulator
from .xlog import GameRecord, parse_xlog_line, pseudonymize, write_xlog_line

__version__ = "0.1.0"

__all__ = [
    "errors",
    "Catalog",
    "DatasetStats",
    "FieldSummary",
    "RegistrationReport",
    "CHANNEL_KEYPRESS",
    "CHANNEL_OUTPUT",
    "CHANNEL_SCORE",
    "Frame",
    "FrameWriter",
    "TtyrecVersion",
    "iter_frames",
    "open_compressed",
    "read_frame",
    "scan_stream",
    "write_compressed",
    "write_frame",
    "DumpReader",
    "DumpWriter",
    "open_dump",
    "read_dump",
    "write_dump",
    "BATCH_DTYPES",
    "LoaderConfig",
    "MiniBatch",
    "TrajectoryIterator",
    "benchmark_throughput",
    "decode_game",
    "filter_bad_episodes",
    "match_files_to_games",
    "Predicate",
    "compile_predicate",
    "ScreenSnapshot",
    "TerminalEmulator",
    "GameRecord",
    "parse_xlog_line",
    "pseudonymize",
    "write_xlog_line",
]
