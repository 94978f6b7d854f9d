"""Synthetic corpus generation for tests and benchmarks.

Produces recorder directories (recordings plus metadata log) whose episodes
are randomized within realistic distributions: frames are a mix of cursor
addressing, color runs, map-like text, and periodic full redraws; scores
grow over time; a configurable fraction of episodes exhibits the junk that
curation must handle (start-scumming, negative turn counters).

Generation is deterministic per seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .codec import (
    CHANNEL_KEYPRESS,
    CHANNEL_OUTPUT,
    CHANNEL_SCORE,
    Frame,
    FrameWriter,
    TtyrecVersion,
    write_compressed,
)
from .xlog import ALIGNMENTS, GENDERS, RACES, ROLES, GameRecord, write_xlog_line

__all__ = ["SynthConfig", "make_corpus"]

_USERS = ("alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi",
          "ivan", "judy", "mallory", "niaj", "olivia", "peggy", "rupert",
          "sybil", "trent", "victor", "wendy", "yolanda")

_DEATHS = ("killed by a newt", "killed by a jackal", "killed by a soldier ant",
           "poisoned by a rotted kobold corpse", "killed by a fire ant",
           "fell into a pit", "killed by a dwarf", "starvation",
           "killed by a gnome lord", "ascended")

_MAP_BYTES = b"#.-|+@dfKq{}<>^ ....### "
_PRINTABLE = bytes(0x20 + (b % 95) for b in range(256))


def _map_text(rng: random.Random, n: int) -> bytes:
    return bytes(rng.choices(_MAP_BYTES, k=n))


def _entropy_text(rng: random.Random, n: int) -> bytes:
    return rng.randbytes(n).translate(_PRINTABLE)


@dataclass
class SynthConfig:
    games: int = 20
    version: TtyrecVersion = TtyrecVersion.V3
    seed: int = 0
    rows: int = 24
    cols: int = 80
    steps_min: int = 8
    steps_max: int = 40
    users: int = 4                  # v1 only: player directories
    multipart_fraction: float = 0.3  # v1 only: games split across files
    scum_fraction: float = 0.0      # episodes that are start-scums
    negative_fraction: float = 0.0  # episodes with corrupt turn counters
    stray_files: int = 0            # files matching no game window
    orphan_files: int = 0           # files with unparseable names
    redraw_every: int = 12          # steps between full-screen redraws
    text_entropy: bool = False      # random payload text (hurts compression)
    compresslevel: int = 9
    compressed: bool = True
    min_total_bytes: int = 0        # v3 only: keep generating past `games`
                                    # until the files reach this size


def make_corpus(root: "str | Path", config: SynthConfig) -> list[GameRecord]:
    """Write a recorder directory under root; returns the log records in
    the order they were written."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(config.seed)
    if config.version is TtyrecVersion.V3:
        records = _make_v3(root, config, rng)
    else:
        records = _make_v1(root, config, rng)
    with (root / "xlogfile").open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(write_xlog_line(rec) + "\n")
    return records


def _suffix(config: SynthConfig) -> str:
    base = ".ttyrec3" if config.version is TtyrecVersion.V3 else ".ttyrec"
    return base + (".bz2" if config.compressed else "")


class _EpisodePainter:
    """Screen traffic for one episode.

    A fixed map layout is generated up front and repainted wholesale on
    every redraw with a few cells mutated in between; deltas scribble over
    it and vanish at the next repaint.  Real sessions repaint the same
    level constantly, which is what makes recordings so compressible.
    """

    def __init__(self, rng: random.Random, config: SynthConfig) -> None:
        self._rng = rng
        self._config = config
        self._text = _entropy_text if config.text_entropy else _map_text
        self._map = [bytearray(self._text(rng, config.cols - 2))
                     for _ in range(1, config.rows - 2)]

    def payload(self, step: int) -> bytes:
        rng, config = self._rng, self._config
        rows, cols = config.rows, config.cols
        out = bytearray()
        if step % max(config.redraw_every, 1) == 0:
            for _ in range(rng.randint(0, 4)):
                line = rng.choice(self._map)
                line[rng.randrange(len(line))] = self._text(rng, 1)[0]
            out += b"\x1b[2J\x1b[H"
            for r, line in enumerate(self._map, start=1):
                out += b"\x1b[%d;1H" % r
                out += line
        else:
            for _ in range(rng.randint(2, 8)):
                out += b"\x1b[%d;%dH" % (rng.randint(1, rows),
                                         rng.randint(1, cols - 20))
                out += b"\x1b[%dm" % rng.choice((0, 0, 1, 31, 32, 33, 36, 37))
                out += self._text(rng, rng.randint(1, 16))
            out += b"\x1b[%d;1H\x1b[mT:%d" % (rows, step)
        return bytes(out)


def _episode_frames(rng: random.Random, config: SynthConfig,
                    start_s: int) -> tuple[list[Frame], int, int]:
    """Frames for one game; returns (frames, end_second, score)."""
    steps = rng.randint(config.steps_min, config.steps_max)
    v3 = config.version is TtyrecVersion.V3
    ts = start_s * 1_000_000 + rng.randint(0, 500_000)
    painter = _EpisodePainter(rng, config)
    frames: list[Frame] = []
    score = 0

    def emit(channel: int | None, payload: bytes) -> None:
        nonlocal ts
        frames.append(Frame(ts // 1_000_000, ts % 1_000_000, payload,
                            channel if v3 else None))
        ts += rng.randint(5_000, 400_000)

    for step in range(steps):
        for _ in range(rng.randint(1, 2)):
            emit(CHANNEL_OUTPUT, painter.payload(step))
        if v3:
            if rng.random() < 0.7:
                score += rng.randint(0, 40)
                emit(CHANNEL_SCORE, str(score).encode())
            emit(CHANNEL_KEYPRESS, bytes([rng.randrange(0x20, 0x7F)]))
    if rng.random() < 0.4:
        emit(CHANNEL_OUTPUT, painter.payload(steps))
    # Slack after the last frame keeps multi-part filename stamps (which
    # must be distinct seconds) inside the game window.
    end_s = frames[-1].seconds + 4
    return frames, end_s, score


def _record_for(rng: random.Random, name: str, start_s: int, end_s: int,
                score: int, turns: int, death: str) -> GameRecord:
    return GameRecord(
        version="3.6.6",
        points=score,
        deathdnum=rng.randint(0, 3),
        deathlev=rng.randint(1, 10),
        maxlvl=rng.randint(1, 12),
        hp=rng.randint(-5, 80),
        maxhp=rng.randint(10, 90),
        deaths=0 if death == "ascended" else 1,
        deathdate=20200101,
        birthdate=20200101,
        uid=5,
        role=rng.choice(ROLES),
        race=rng.choice(RACES),
        gender=rng.choice(GENDERS),
        align=rng.choice(ALIGNMENTS),
        name=name,
        death=death,
        conduct=rng.getrandbits(12),
        turns=turns,
        achieve=rng.getrandbits(14),
        realtime=end_s - start_s,
        starttime=start_s,
        endtime=end_s,
        gender0=rng.choice(GENDERS),
        align0=rng.choice(ALIGNMENTS),
        flags=0x4,
    )


def _write_frames(path: Path, frames: list[Frame],
                  config: SynthConfig) -> None:
    sink = write_compressed(path, compresslevel=config.compresslevel)
    with FrameWriter(sink, config.version) as writer:
        for frame in frames:
            writer.write(frame)


def _episode_shape(rng: random.Random, config: SynthConfig):
    """Turn count and death string, honoring the junk fractions."""
    roll = rng.random()
    if roll < config.negative_fraction:
        return rng.randint(-5000, -1), rng.choice(_DEATHS)
    if roll < config.negative_fraction + config.scum_fraction:
        return rng.randint(0, 9), rng.choice(("quit", "escaped"))
    return rng.randint(10, 60_000), rng.choice(_DEATHS)


def _make_v3(root: Path, config: SynthConfig,
             rng: random.Random) -> list[GameRecord]:
    records = []
    start_s = 1_600_000_000
    total = 0
    made = 0
    while made < config.games or total < config.min_total_bytes:
        frames, end_s, score = _episode_frames(rng, config, start_s)
        turns, death = _episode_shape(rng, config)
        path = root / f"{start_s}{_suffix(config)}"
        _write_frames(path, frames, config)
        total += path.stat().st_size
        records.append(_record_for(rng, rng.choice(_USERS), start_s, end_s,
                                   score, turns, death))
        start_s = end_s + rng.randint(10, 2000)
        made += 1
    _write_strays(root, config, rng, start_s)
    rng.shuffle(records)  # log order is endtime-ish, never assume sorted
    return records


def _make_v1(root: Path, config: SynthConfig,
             rng: random.Random) -> list[GameRecord]:
    records = []
    users = list(_USERS[: max(1, config.users)])
    start_by_user = {u: 1_600_000_000 + i * 7 for i, u in enumerate(users)}
    for _ in range(config.games):
        user = rng.choice(users)
        start_s = start_by_user[user]
        frames, end_s, score = _episode_frames(rng, config, start_s)
        turns, death = _episode_shape(rng, config)
        userdir = root / user
        userdir.mkdir(exist_ok=True)
        parts = 1
        if rng.random() < config.multipart_fraction and len(frames) >= 6:
            parts = rng.randint(2, 3)
        bounds = [0]
        for p in range(1, parts):
            bounds.append(len(frames) * p // parts)
        bounds.append(len(frames))
        stamp = start_s
        for p in range(parts):
            chunk = frames[bounds[p]:bounds[p + 1]]
            if p > 0:
                stamp = max(chunk[0].seconds, stamp + 1)
            _write_frames(userdir / f"{stamp}{_suffix(config)}",
                          chunk, config)
        records.append(_record_for(rng, user, start_s, end_s, score,
                                   turns, death))
        start_by_user[user] = end_s + rng.randint(10, 2000)
    _write_strays(root / users[0], config, rng,
                  start_by_user[users[0]] + 10_000)
    rng.shuffle(records)
    return records


def _write_strays(root: Path, config: SynthConfig, rng: random.Random,
                  start_s: int) -> None:
    """Files that belong to no game: out-of-window and unparseable names."""
    root.mkdir(parents=True, exist_ok=True)
    for i in range(config.stray_files):
        frames, _, _ = _episode_frames(rng, config, start_s + 5000 * (i + 1))
        _write_frames(root / f"{start_s + 5000 * (i + 1)}{_suffix(config)}",
                      frames[:3], config)
    for i in range(config.orphan_files):
        frames, _, _ = _episode_frames(rng, config, start_s + 1)
        _write_frames(root / f"backup-{i}{_suffix(config)}", frames[:2],
                      config)
