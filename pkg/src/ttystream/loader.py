"""Fixed-shape minibatch streaming over recorded games.

A dataset is consumed as a queue of game ids.  Each game is decoded whole
(frames -> screen states -> per-step arrays) by a stateless worker, so
decoding can run in parallel processes, while batch assembly stays
single-threaded and consumes decoded games strictly in queue order.  The
emitted batches are therefore byte-identical for any worker count.

Batches are [batch_size, seq_length] grids of steps.  Every lane carries
consecutive games back to back: when one game ends the next one from the
queue continues at the following timestep, with done flagging each game's
first step.  Once the queue runs dry a lane pads with zeros (gameid 0), so
shapes never change; iteration stops at the first batch with no real steps.

Step semantics per stream revision:

* V3: one step per keypress frame, capturing the screen built from all
  output frames so far (the state the player saw when pressing the key),
  the key byte, and the most recent score-channel value.  If output frames
  trail the last keypress (or exist with no keypress at all), one closing
  step with keypress 0 captures the final screen at the last frame's
  timestamp.
* V1: one step per frame, capturing the screen after applying that frame.
  There is no key or score channel, so both stay 0.
"""

from __future__ import annotations

import random
import statistics
import time
import warnings
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .codec import (
    CHANNEL_OUTPUT,
    CHANNEL_SCORE,
    DEFAULT_MAX_FRAME_BYTES,
    Frame,
    TtyrecVersion,
    iter_frames,
)
from .errors import (
    BadKeypressPayload,
    BadScorePayload,
    SkippedGame,
    TtyrecError,
)
from .term import ScreenSnapshot, TerminalEmulator

__all__ = [
    "BATCH_DTYPES",
    "STEP_FIELDS",
    "LoaderConfig",
    "MiniBatch",
    "StepEvent",
    "TrajectoryIterator",
    "coalesce_v3",
    "step_v1",
    "decode_game",
    "field_shape",
    "BenchRun",
    "BenchResult",
    "benchmark_throughput",
]

_INT32_MIN = -(2 ** 31)
_INT32_MAX = 2 ** 31 - 1

# Field order here is the canonical serialization order for batch dumps.
BATCH_DTYPES: dict[str, np.dtype] = {
    "tty_chars": np.dtype(np.uint8),
    "tty_colors": np.dtype(np.int8),
    "tty_cursor": np.dtype(np.int16),
    "timestamps": np.dtype(np.int64),
    "done": np.dtype(np.uint8),
    "gameids": np.dtype(np.int32),
    "keypresses": np.dtype(np.uint8),
    "scores": np.dtype(np.int32),
}

# Per-step fields produced by decoding one game; done and gameids are
# assembled per batch.
STEP_FIELDS = ("tty_chars", "tty_colors", "tty_cursor", "timestamps",
               "keypresses", "scores")


def field_shape(name: str, rows: int, cols: int) -> tuple[int, ...]:
    """Trailing (per-step) dimensions of a batch field."""
    if name in ("tty_chars", "tty_colors"):
        return (rows, cols)
    if name == "tty_cursor":
        return (2,)
    if name in BATCH_DTYPES:
        return ()
    raise KeyError(name)


@dataclass(frozen=True)
class MiniBatch:
    """One [batch_size, seq_length] slab of steps (padding is all-zero)."""

    tty_chars: np.ndarray   # uint8 [B, T, rows, cols]
    tty_colors: np.ndarray  # int8  [B, T, rows, cols]
    tty_cursor: np.ndarray  # int16 [B, T, 2] as (row, col)
    timestamps: np.ndarray  # int64 [B, T] microseconds since the epoch
    done: np.ndarray        # uint8 [B, T], 1 on each game's first step
    gameids: np.ndarray     # int32 [B, T], 0 on padding
    keypresses: np.ndarray  # uint8 [B, T]
    scores: np.ndarray      # int32 [B, T]

    @property
    def batch_size(self) -> int:
        return self.tty_chars.shape[0]

    @property
    def seq_length(self) -> int:
        return self.tty_chars.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class LoaderConfig:
    """Everything that determines the batch stream for one dataset."""

    dataset_name: str
    batch_size: int = 32
    seq_length: int = 32
    rows: int = 24
    cols: int = 80
    workers: int = 1                 # decode processes; 1 decodes inline
    prefetch: int = 2                # decoded games buffered beyond workers
    shuffle: bool = False
    loop_forever: bool = False
    seed: "int | None" = None        # None draws a fresh seed (see .seed)
    gameids: "Sequence[int] | None" = None  # explicit queue, skips selection
    where: "str | None" = None       # metadata filter for game selection
    params: Sequence = ()
    max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.seq_length < 1:
            raise ValueError("seq_length must be >= 1")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.prefetch < 0:
            raise ValueError("prefetch must be >= 0")
        if self.gameids is not None and self.where is not None:
            raise ValueError("gameids and where are mutually exclusive")


# -- whole-game decoding ------------------------------------------------------

def _steps_v3(frames: Iterator[Frame], emu: TerminalEmulator):
    """Yield (score, keypress, timestamp_us) per step; screen lives in emu."""
    score = 0
    outputs_after_key = 0
    last_ts = None
    for fr in frames:
        last_ts = fr.timestamp_us
        if fr.channel == CHANNEL_OUTPUT:
            emu.feed(fr.payload)
            outputs_after_key += 1
        elif fr.channel == CHANNEL_SCORE:
            try:
                score = int(fr.payload.decode("ascii"))
            except (UnicodeDecodeError, ValueError):
                warnings.warn(
                    f"unreadable score payload {fr.payload[:16]!r}",
                    BadScorePayload, stacklevel=2)
        else:
            if len(fr.payload) != 1:
                warnings.warn(
                    f"keypress frame with {len(fr.payload)} bytes",
                    BadKeypressPayload, stacklevel=2)
            key = fr.payload[0] if fr.payload else 0
            yield score, key, fr.timestamp_us
            outputs_after_key = 0
    if outputs_after_key and last_ts is not None:
        yield score, 0, last_ts


def _steps_v1(frames: Iterator[Frame], emu: TerminalEmulator):
    for fr in frames:
        emu.feed_cropped(fr.payload)
        yield 0, 0, fr.timestamp_us


@dataclass(frozen=True)
class StepEvent:
    """One (state, score, action) step extracted from a frame stream.

    score and keypress are None for V1 streams, which carry neither.
    """

    snapshot: ScreenSnapshot
    timestamp: int                  # microseconds since the epoch
    score: "int | None"
    keypress: "int | None"


def coalesce_v3(frames: Iterator[Frame], rows: int = 24,
                cols: int = 80) -> Iterator[StepEvent]:
    """Group a V3 frame stream into steps, one per keypress frame.

    Output frames build up the screen; each keypress emits a StepEvent of
    the screen the player saw, the key, and the latest score (carried
    forward, initially 0).  Trailing output frames after the last keypress
    yield one closing event with keypress 0 at the last frame's timestamp.
    """
    emu = TerminalEmulator(rows, cols)
    for score, key, ts in _steps_v3(frames, emu):
        yield StepEvent(emu.snapshot(), ts, score, key)


def step_v1(frames: Iterator[Frame], rows: int = 24,
            cols: int = 80) -> Iterator[StepEvent]:
    """One StepEvent per V1 frame: the screen after applying it."""
    emu = TerminalEmulator(rows, cols)
    for _score, _key, ts in _steps_v1(frames, emu):
        yield StepEvent(emu.snapshot(), ts, None, None)


def _iter_parts(paths: Sequence["str | Path"], version: TtyrecVersion,
                max_frame_bytes: int) -> Iterator[Frame]:
    for path in paths:
        yield from iter_frames(path, version, max_frame_bytes=max_frame_bytes)


def decode_game(paths: Sequence["str | Path"], version: TtyrecVersion,
                rows: int = 24, cols: int = 80, *,
                max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES
                ) -> dict[str, np.ndarray]:
    """Decode one game's recording parts into per-step arrays.

    Returns {name: array} for STEP_FIELDS with leading dimension N (the
    step count).  One emulator spans all parts, so the screen carries over
    file splits.  Scores outside signed 32-bit range are clamped.
    """
    emu = TerminalEmulator(rows, cols)
    frames = _iter_parts(paths, version, max_frame_bytes)
    steps = _steps_v3(frames, emu) if version.has_channel \
        else _steps_v1(frames, emu)

    cap = 256
    out = {name: np.zeros((cap,) + field_shape(name, rows, cols),
                          BATCH_DTYPES[name]) for name in STEP_FIELDS}
    n = 0
    for score, key, ts in steps:
        if n == cap:
            cap *= 2
            for name, arr in out.items():
                bigger = np.zeros((cap,) + arr.shape[1:], arr.dtype)
                bigger[:n] = arr
                out[name] = bigger
        np.copyto(out["tty_chars"][n], emu.chars)
        np.copyto(out["tty_colors"][n], emu.colors)
        out["tty_cursor"][n] = emu.cursor
        out["timestamps"][n] = ts
        out["keypresses"][n] = key
        out["scores"][n] = min(max(score, _INT32_MIN), _INT32_MAX)
        n += 1
    return {name: arr[:n].copy() for name, arr in out.items()}


def _decode_task(paths: list[str], version_value: int, rows: int, cols: int,
                 max_frame_bytes: int) -> dict[str, np.ndarray]:
    """Process-pool entry point (primitive args so pickling stays cheap)."""
    return decode_game(paths, TtyrecVersion(version_value), rows, cols,
                       max_frame_bytes=max_frame_bytes)


# -- batch assembly -----------------------------------------------------------

class _Lane:
    __slots__ = ("gameid", "arrays", "pos", "fresh", "length")

    def __init__(self, gameid: int, arrays: dict[str, np.ndarray]) -> None:
        self.gameid = gameid
        self.arrays = arrays
        self.pos = 0
        self.fresh = True
        self.length = arrays["timestamps"].shape[0]


class TrajectoryIterator:
    """Iterator of MiniBatch over one dataset, per LoaderConfig.

    The game queue (selection order, or a seeded shuffle re-drawn each
    pass when loop_forever) fully determines the output; workers only
    parallelize decoding.  Games that fail to decode, or decode to zero
    steps, are skipped with a SkippedGame warning.
    """

    def __init__(self, catalog, config: LoaderConfig) -> None:
        config.validate()
        self._config = config
        self._version = catalog.dataset_version(config.dataset_name)
        if config.gameids is not None:
            ids = [int(g) for g in config.gameids]
        else:
            ids = catalog.select_gameids(config.dataset_name, config.where,
                                         config.params)
        self._ids = ids
        self._paths = {g: [str(p) for p in catalog.files_for_game(g)]
                       for g in ids}
        if config.seed is not None:
            self._seed = config.seed
        else:
            self._seed = random.SystemRandom().randrange(2 ** 32)
        self._rng = random.Random(self._seed)
        self._queue: deque[int] = deque(self._pass_order())
        self._pending: deque[tuple[int, object]] = deque()
        self._lanes: list[_Lane | None] = [None] * config.batch_size
        self._pool: ProcessPoolExecutor | None = None
        self._closed = False

    @property
    def seed(self) -> int:
        """The shuffle seed in effect (drawn at construction when unset)."""
        return self._seed

    @property
    def gameids(self) -> list[int]:
        return list(self._ids)

    def close(self) -> None:
        self._closed = True
        self._pending.clear()
        if self._pool is not None:
            self._pool.shutdown(wait=False, cancel_futures=True)
            self._pool = None

    def __enter__(self) -> "TrajectoryIterator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self) -> None:
        try:
            self.close()
        except Exception:
            pass

    def __iter__(self) -> "TrajectoryIterator":
        return self

    def _pass_order(self) -> list[int]:
        order = list(self._ids)
        if self._config.shuffle:
            self._rng.shuffle(order)
        return order

    def _fill_pending(self) -> None:
        cfg = self._config
        cap = 1 if cfg.workers == 1 else cfg.workers + cfg.prefetch
        while len(self._pending) < cap:
            if not self._queue:
                if cfg.loop_forever and self._ids:
                    self._queue.extend(self._pass_order())
                else:
                    return
            gameid = self._queue.popleft()
            if cfg.workers == 1:
                self._pending.append((gameid, None))
            else:
                if self._pool is None:
                    self._pool = ProcessPoolExecutor(max_workers=cfg.workers)
                future = self._pool.submit(
                    _decode_task, self._paths[gameid], self._version.value,
                    cfg.rows, cfg.cols, cfg.max_frame_bytes)
                self._pending.append((gameid, future))

    def _next_game(self) -> "_Lane | None":
        cfg = self._config
        while True:
            self._fill_pending()
            if not self._pending:
                return None
            gameid, future = self._pending.popleft()
            try:
                if future is None:
                    arrays = decode_game(
                        self._paths[gameid], self._version, cfg.rows,
                        cfg.cols, max_frame_bytes=cfg.max_frame_bytes)
                else:
                    arrays = future.result()
            except (TtyrecError, OSError) as exc:
                warnings.warn(f"skipping game {gameid}: {exc}", SkippedGame,
                              stacklevel=3)
                continue
            if arrays["timestamps"].shape[0] == 0:
                warnings.warn(f"skipping game {gameid}: no steps",
                              SkippedGame, stacklevel=3)
                continue
            return _Lane(gameid, arrays)

    def __next__(self) -> MiniBatch:
        if self._closed:
            raise StopIteration
        cfg = self._config
        batch_size, seq_length = cfg.batch_size, cfg.seq_length
        batch = {
            name: np.zeros(
                (batch_size, seq_length) + field_shape(name, cfg.rows,
                                                       cfg.cols),
                BATCH_DTYPES[name])
            for name in BATCH_DTYPES
        }
        any_data = False
        for b in range(batch_size):
            t = 0
            while t < seq_length:
                lane = self._lanes[b]
                if lane is None:
                    lane = self._next_game()
                    if lane is None:
                        break
                    self._lanes[b] = lane
                take = min(seq_length - t, lane.length - lane.pos)
                span = slice(t, t + take)
                src = slice(lane.pos, lane.pos + take)
                for name in STEP_FIELDS:
                    batch[name][b, span] = lane.arrays[name][src]
                batch["gameids"][b, span] = lane.gameid
                if lane.fresh:
                    batch["done"][b, t] = 1
                    lane.fresh = False
                lane.pos += take
                t += take
                any_data = True
                if lane.pos == lane.length:
                    self._lanes[b] = None
        if not any_data:
            self.close()
            raise StopIteration
        return MiniBatch(**batch)


# -- throughput measurement ---------------------------------------------------

@dataclass
class BenchRun:
    seconds: float
    batches: int
    frames: int

    @property
    def fps(self) -> float:
        return self.frames / self.seconds if self.seconds > 0 else 0.0


@dataclass
class BenchResult:
    batch_size: int
    seq_length: int
    workers: int
    runs: list[BenchRun] = field(default_factory=list)

    @property
    def mean_fps(self) -> float:
        return statistics.mean(r.fps for r in self.runs)

    @property
    def std_fps(self) -> float:
        if len(self.runs) < 2:
            return 0.0
        return statistics.stdev(r.fps for r in self.runs)

    def as_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "seq_length": self.seq_length,
            "workers": self.workers,
            "mean_fps": self.mean_fps,
            "std_fps": self.std_fps,
            "runs": [{"seconds": r.seconds, "batches": r.batches,
                      "frames": r.frames, "fps": r.fps} for r in self.runs],
        }


def benchmark_throughput(catalog, config: LoaderConfig, *, runs: int = 5,
                         limit_batches: "int | None" = None) -> BenchResult:
    """Time the full pipeline (read, decode, assemble) over several runs.

    Every emitted batch counts batch_size * seq_length frames, padding
    included, since the consumer pays for the fixed shape either way.
    """
    result = BenchResult(config.batch_size, config.seq_length, config.workers)
    for _ in range(runs):
        batches = 0
        start = time.perf_counter()
        if limit_batches is None or limit_batches > 0:
            with TrajectoryIterator(catalog, config) as stream:
                for _batch in stream:
                    batches += 1
                    if limit_batches is not None and batches >= limit_batches:
                        break
        elapsed = time.perf_counter() - start
        frames = batches * config.batch_size * config.seq_length
        result.runs.append(BenchRun(elapsed, batches, frames))
    return result
