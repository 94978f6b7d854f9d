"""Assigning recording files to games and weeding out junk episodes.

Legacy (v1) recorder directories contain one subdirectory per player, files
named by creation time, and a shared metadata log.  Nothing links a file to
a game explicitly; the only invariant is that a player completes one game
before starting another, so each game owns the time window
[starttime, endtime] and every file created in that window belongs to it.

The matcher is deliberately conservative: files it cannot place with
certainty are dropped, and games whose windows overlap (corrupt clocks,
merged logs) are excluded outright rather than guessed at.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from .xlog import GameRecord

__all__ = [
    "MatchResult",
    "match_files_to_games",
    "filter_bad_episodes",
    "REASON_NEGATIVE_TURNS",
    "REASON_START_SCUM",
]

REASON_NEGATIVE_TURNS = "negative-turns"
REASON_START_SCUM = "start-scumming"


@dataclass
class MatchResult:
    """Outcome of matching one player's files against their games.

    assignments maps an index into the input record list to that game's
    files in timestamp order.  Games excluded for window overlap never
    appear in assignments, even with zero files.
    """

    assignments: dict[int, list[Hashable]] = field(default_factory=dict)
    dropped: list[Hashable] = field(default_factory=list)
    overlapping: set[int] = field(default_factory=set)


def match_files_to_games(
        records: Sequence[GameRecord],
        files: Iterable[tuple[int, Hashable]]) -> MatchResult:
    """Assign files (timestamp, key) to the game active at that timestamp.

    Both interval ends are inclusive: a file stamped exactly at endtime
    belongs to the game (recorders flush on the final screen).  Files before
    the player's first game or between games are dropped.  Games whose
    windows intersect are all excluded and any file landing in their windows
    is dropped; sharing a single boundary second already counts as
    intersecting, because a file at that second would be ambiguous.

    The result is independent of the input file order, and every input file
    appears exactly once across assignments and dropped.
    """
    order = sorted(range(len(records)),
                   key=lambda i: (records[i].starttime, records[i].endtime, i))

    result = MatchResult()
    # Sweep in starttime order keeping the windows that can still intersect
    # the current one; every kept window with end >= current start overlaps.
    active: list[int] = []
    for i in order:
        start = records[i].starttime
        active = [j for j in active if records[j].endtime >= start]
        if active:
            result.overlapping.add(i)
            result.overlapping.update(active)
        active.append(i)

    valid = [i for i in order if i not in result.overlapping]
    starts = [records[i].starttime for i in valid]
    for i in valid:
        result.assignments[i] = []

    for ts, key in sorted(files, key=lambda f: (f[0], repr(f[1]))):
        pos = bisect_right(starts, ts) - 1
        if pos >= 0 and ts <= records[valid[pos]].endtime:
            result.assignments[valid[pos]].append(key)
        else:
            result.dropped.append(key)
    return result


def filter_bad_episodes(
        records: Sequence[GameRecord]
) -> tuple[list[GameRecord], list[tuple[GameRecord, str]]]:
    """Split records into (kept, removed) per the curation rules.

    Removal reasons, checked in order:
    * negative-turns: the turn counter is negative (corrupt log entry).
    * start-scumming: fewer than 10 turns ending in "quit" or "escaped",
      i.e. a player discarding a start they did not like.
    """
    kept = []
    removed = []
    for rec in records:
        if rec.turns < 0:
            removed.append((rec, REASON_NEGATIVE_TURNS))
        elif rec.turns < 10 and rec.death.strip() in ("quit", "escaped"):
            removed.append((rec, REASON_START_SCUM))
        else:
            kept.append(rec)
    return kept, removed
