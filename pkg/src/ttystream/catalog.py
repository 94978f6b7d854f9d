"""Single-file sqlite catalog of recordings, games, and named datasets.

Table layout:

* meta(ctime, mtime, schema_version, pseudokey): one row.  pseudokey is the
  per-catalog secret for player-name aliasing, so aliases are stable within
  a catalog and different across catalogs.
* roots(dataset_name, root, ttyrec_version): registration root per dataset.
* games(gameid, ...): one row per finished game with the full metadata
  record.  The conduct/achieve/flags bitfields are stored as hex TEXT in
  their original columns plus INTEGER mirrors (conduct_value, ...) and one
  0/1 column per decoded bit (conduct_foodless, achieve_ascended, ...) so
  selections stay plain SQL.  origin uniquely names the source episode so
  re-registration is idempotent; excluded_reason records why a game is not
  part of any dataset (no-files, overlap, start-scumming, negative-turns,
  duplicate).
* ttyrecs(path, part, size, mtime, gameid): recording files per game, path
  relative to the registration root, part numbering the multi-file order.
* datasets(gameids, dataset_name): membership; a game may belong to many
  datasets.  Only games with excluded_reason NULL are members.
"""

from __future__ import annotations

import json
import logging
import secrets
import sqlite3
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import TtyrecVersion
from .errors import (
    MissingXlog,
    OrphanFile,
    SchemaMismatch,
    UnknownDataset,
)
from .matching import filter_bad_episodes, match_files_to_games
from .predicate import Predicate, compile_predicate
from .xlog import (
    ACHIEVEMENT_BITS,
    CONDUCT_BITS,
    FIELD_ORDER,
    GAME_FLAG_BITS,
    GameRecord,
    parse_xlog_line,
    pseudonymize,
)

__all__ = [
    "Catalog",
    "create_catalog",
    "RegistrationReport",
    "DatasetStats",
    "FieldSummary",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_BITFIELDS = ("conduct", "achieve", "flags")
_TEXT_FIELDS = frozenset(
    ("version", "role", "race", "gender", "align", "name", "death",
     "gender0", "align0") + _BITFIELDS)
_SLUGS = tuple(slug for table in (CONDUCT_BITS, ACHIEVEMENT_BITS,
                                  GAME_FLAG_BITS) for _, _, slug in table)
_SLUG_BITS = {slug: mask for table in (CONDUCT_BITS, ACHIEVEMENT_BITS,
                                       GAME_FLAG_BITS)
              for mask, _, slug in table}
_SLUG_SOURCE = {slug: name for name, table in
                (("conduct", CONDUCT_BITS), ("achieve", ACHIEVEMENT_BITS),
                 ("flags", GAME_FLAG_BITS)) for _, _, slug in table}


def _games_columns() -> list[tuple[str, str]]:
    cols = [("origin", "TEXT UNIQUE NOT NULL"), ("excluded_reason", "TEXT")]
    for key in FIELD_ORDER:
        cols.append((key, "TEXT" if key in _TEXT_FIELDS else "INTEGER"))
    for bf in _BITFIELDS:
        cols.append((f"{bf}_value", "INTEGER NOT NULL"))
    cols.append(("extra", "TEXT NOT NULL"))
    for slug in _SLUGS:
        cols.append((slug, "INTEGER NOT NULL"))
    return cols


_GAMES_COLUMNS = _games_columns()

_SCHEMA = {
    "meta": "CREATE TABLE meta (ctime REAL NOT NULL, mtime REAL NOT NULL, "
            "schema_version INTEGER NOT NULL, pseudokey TEXT NOT NULL)",
    "roots": "CREATE TABLE roots (dataset_name TEXT PRIMARY KEY, "
             "root TEXT NOT NULL, ttyrec_version INTEGER NOT NULL)",
    "games": "CREATE TABLE games (gameid INTEGER PRIMARY KEY AUTOINCREMENT, "
             + ", ".join(f"{name} {decl}" for name, decl in _GAMES_COLUMNS)
             + ")",
    "ttyrecs": "CREATE TABLE ttyrecs (path TEXT NOT NULL, "
               "part INTEGER NOT NULL, size INTEGER NOT NULL, "
               "mtime REAL NOT NULL, gameid INTEGER NOT NULL)",
    "datasets": "CREATE TABLE datasets (gameids INTEGER NOT NULL, "
                "dataset_name TEXT NOT NULL, "
                "PRIMARY KEY (gameids, dataset_name))",
}

_INDEXES = (
    "CREATE INDEX IF NOT EXISTS ttyrecs_gameid ON ttyrecs (gameid)",
    "CREATE INDEX IF NOT EXISTS datasets_name ON datasets (dataset_name)",
    "CREATE INDEX IF NOT EXISTS games_origin ON games (origin)",
)


@dataclass
class RegistrationReport:
    """What one registration pass did."""

    dataset_name: str
    games_added: int = 0
    files_added: int = 0
    orphans: list[str] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)
    excluded: list[tuple[str, str]] = field(default_factory=list)

    def excluded_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for _, reason in self.excluded:
            counts[reason] = counts.get(reason, 0) + 1
        return counts

    def summary_lines(self) -> list[str]:
        lines = [f"added {self.games_added} games"]
        if self.files_added:
            lines.append(f"files {self.files_added}")
        if self.orphans:
            lines.append(f"orphans {len(self.orphans)}")
        if self.dropped:
            lines.append(f"dropped {len(self.dropped)}")
        for reason, count in sorted(self.excluded_counts().items()):
            lines.append(f"filtered {count} ({reason})")
        return lines


@dataclass
class FieldSummary:
    minimum: float
    p25: float
    median: float
    p75: float
    maximum: float
    mean: float

    @classmethod
    def of(cls, values: np.ndarray) -> "FieldSummary":
        if len(values) == 0:
            return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        lo, q1, med, q3, hi = np.percentile(values, (0, 25, 50, 75, 100))
        return cls(float(lo), float(q1), float(med), float(q3), float(hi),
                   float(values.mean()))


@dataclass
class DatasetStats:
    dataset_name: str
    count: int
    points: FieldSummary
    turns: FieldSummary
    conducts: dict[str, float]      # display name -> percent of games
    achievements: dict[str, float]  # display name -> percent of games


def create_catalog(path: "str | Path") -> "Catalog":
    """Create (or open) a catalog file; parent directory must exist."""
    return Catalog(path)


class Catalog:
    """Open a catalog, creating the schema when the file is new."""

    def __init__(self, path: "str | Path") -> None:
        self._path = Path(path)
        existed = self._path.exists()
        if not existed and not self._path.parent.is_dir():
            raise FileNotFoundError(
                f"catalog directory does not exist: {self._path.parent}")
        self._db = sqlite3.connect(self._path)
        self._db.execute("PRAGMA foreign_keys = ON")
        try:
            if existed and self._has_tables():
                self._check_schema()
            else:
                self._create_schema()
        except sqlite3.DatabaseError as exc:
            self._db.close()
            raise SchemaMismatch(f"{self._path}: not a catalog: {exc}") from exc
        except Exception:
            self._db.close()
            raise

    # -- lifecycle ----------------------------------------------------------

    @property
    def path(self) -> Path:
        return self._path

    def close(self) -> None:
        self._db.close()

    def __enter__(self) -> "Catalog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _has_tables(self) -> bool:
        row = self._db.execute(
            "SELECT count(*) FROM sqlite_master WHERE type = 'table'"
        ).fetchone()
        return row[0] > 0

    def _create_schema(self) -> None:
        with self._db:
            for ddl in _SCHEMA.values():
                self._db.execute(ddl)
            for ddl in _INDEXES:
                self._db.execute(ddl)
            now = time.time()
            self._db.execute(
                "INSERT INTO meta (ctime, mtime, schema_version, pseudokey) "
                "VALUES (?, ?, ?, ?)",
                (now, now, SCHEMA_VERSION, secrets.token_hex(16)))

    def _check_schema(self) -> None:
        for table in _SCHEMA:
            have = {row[1] for row in self._db.execute(
                f"PRAGMA table_info({table})")}
            if not have:
                raise SchemaMismatch(
                    f"{self._path}: missing table {table!r}")
            want = {"gameid", *(n for n, _ in _GAMES_COLUMNS)} \
                if table == "games" else None
            if table == "meta":
                want = {"ctime", "mtime", "schema_version", "pseudokey"}
            elif table == "roots":
                want = {"dataset_name", "root", "ttyrec_version"}
            elif table == "ttyrecs":
                want = {"path", "part", "size", "mtime", "gameid"}
            elif table == "datasets":
                want = {"gameids", "dataset_name"}
            missing = want - have
            if missing:
                raise SchemaMismatch(
                    f"{self._path}: table {table!r} lacks columns "
                    f"{sorted(missing)}")
        version = self._db.execute(
            "SELECT schema_version FROM meta").fetchone()
        if version is None or version[0] != SCHEMA_VERSION:
            raise SchemaMismatch(
                f"{self._path}: schema version "
                f"{None if version is None else version[0]} != "
                f"{SCHEMA_VERSION}")

    def _touch(self) -> None:
        self._db.execute("UPDATE meta SET mtime = ?", (time.time(),))

    @property
    def pseudokey(self) -> bytes:
        row = self._db.execute("SELECT pseudokey FROM meta").fetchone()
        return bytes.fromhex(row[0])

    # -- registration ---------------------------------------------------------

    def _read_xlog_records(self, root: Path) -> list[GameRecord]:
        logs = sorted(p for p in root.glob("xlogfile*") if p.is_file())
        if not logs:
            raise MissingXlog(f"no xlogfile in {root}")
        records = []
        for path in logs:
            with path.open("r", encoding="utf-8", errors="replace") as fh:
                for line in fh:
                    if line.strip():
                        records.append(parse_xlog_line(line))
        return records

    def _ensure_root(self, name: str, root: Path,
                     version: TtyrecVersion) -> None:
        row = self._db.execute(
            "SELECT root, ttyrec_version FROM roots WHERE dataset_name = ?",
            (name,)).fetchone()
        if row is None:
            self._db.execute(
                "INSERT INTO roots (dataset_name, root, ttyrec_version) "
                "VALUES (?, ?, ?)", (name, str(root), version.value))
        elif row[0] != str(root) or row[1] != version.value:
            raise ValueError(
                f"dataset {name!r} already registered from {row[0]} "
                f"(v{row[1]}); cannot re-register from {root} "
                f"(v{version.value})")

    def _game_for_origin(self, origin: str) -> tuple[int, str | None] | None:
        row = self._db.execute(
            "SELECT gameid, excluded_reason FROM games WHERE origin = ?",
            (origin,)).fetchone()
        return None if row is None else (row[0], row[1])

    def _insert_game(self, origin: str, rec: GameRecord,
                     excluded: str | None) -> int:
        names = ["origin", "excluded_reason"]
        values: list = [origin, excluded]
        for key in FIELD_ORDER:
            value = getattr(rec, key)
            if key in _BITFIELDS:
                value = f"0x{value:x}"
            names.append(key)
            values.append(value)
        for bf in _BITFIELDS:
            names.append(f"{bf}_value")
            values.append(getattr(rec, bf))
        names.append("extra")
        values.append(json.dumps(rec.extra, sort_keys=True))
        for slug in _SLUGS:
            names.append(slug)
            bits = getattr(rec, _SLUG_SOURCE[slug])
            values.append(1 if bits & _SLUG_BITS[slug] else 0)
        cursor = self._db.execute(
            f"INSERT INTO games ({', '.join(names)}) "
            f"VALUES ({', '.join('?' * len(names))})", values)
        return cursor.lastrowid

    def _add_membership(self, gameid: int, name: str) -> bool:
        cursor = self._db.execute(
            "INSERT OR IGNORE INTO datasets (gameids, dataset_name) "
            "VALUES (?, ?)", (gameid, name))
        return cursor.rowcount > 0

    def _add_files(self, gameid: int, root: Path,
                   paths: Sequence[Path]) -> int:
        added = 0
        for part, path in enumerate(paths):
            stat = path.stat()
            self._db.execute(
                "INSERT INTO ttyrecs (path, part, size, mtime, gameid) "
                "VALUES (?, ?, ?, ?, ?)",
                (str(path.relative_to(root)), part, stat.st_size,
                 stat.st_mtime, gameid))
            added += 1
        return added

    @staticmethod
    def _file_stamp(path: Path) -> int | None:
        """Creation timestamp encoded in the filename stem, if parseable."""
        stem = path.name
        for suffix in (".bz2", ".ttyrec3", ".ttyrec"):
            if stem.endswith(suffix):
                stem = stem[: -len(suffix)]
        try:
            return int(float(stem))
        except ValueError:
            return None

    def add_v3_directory(self, root: "str | Path", dataset_name: str
                         ) -> RegistrationReport:
        """Register a session-recorder directory: one .ttyrec3[.bz2] per
        game, linked to its log entry by the creation timestamp in the
        filename equalling the game's starttime."""
        root = Path(root).resolve()
        if not root.is_dir():
            raise FileNotFoundError(f"not a directory: {root}")
        records = self._read_xlog_records(root)
        records.sort(key=lambda r: (r.starttime, r.endtime, r.name))
        report = RegistrationReport(dataset_name)

        by_stamp: dict[int, Path] = {}
        for path in sorted(root.rglob("*.ttyrec3*")):
            if not (path.name.endswith(".ttyrec3")
                    or path.name.endswith(".ttyrec3.bz2")):
                continue
            stamp = self._file_stamp(path)
            if stamp is None or stamp in by_stamp:
                self._orphan(report, path, root,
                             "unparseable timestamp" if stamp is None
                             else "duplicate timestamp")
                continue
            by_stamp[stamp] = path

        with self._db:
            self._ensure_root(dataset_name, root, TtyrecVersion.V3)
            seen_origins: set[str] = set()
            for rec in records:
                origin = f"{root}::{rec.starttime}"
                label = f"starttime {rec.starttime}"
                if origin in seen_origins:
                    report.excluded.append((label, "duplicate"))
                    continue
                seen_origins.add(origin)
                path = by_stamp.pop(rec.starttime, None)
                known = self._game_for_origin(origin)
                if known is None:
                    reason = None if path is not None else "no-files"
                    gameid = self._insert_game(origin, rec, reason)
                    if path is not None:
                        report.files_added += self._add_files(
                            gameid, root, [path])
                    else:
                        report.excluded.append((label, "no-files"))
                        log.warning("game at %s has no recording", label)
                        continue
                else:
                    gameid, stored_reason = known
                    if stored_reason is not None:
                        report.excluded.append((label, stored_reason))
                        continue
                if self._add_membership(gameid, dataset_name):
                    report.games_added += 1
            for stamp in sorted(by_stamp):
                self._orphan(report, by_stamp[stamp], root, "no log entry")
            self._touch()
        return report

    def add_v1_directory(self, root: "str | Path", dataset_name: str
                         ) -> RegistrationReport:
        """Register a legacy per-player directory tree.

        Files are tied to games by the time-window match; episodes are then
        curated (negative turn counts, start-scumming) and player names are
        replaced with keyed aliases before anything is stored.
        """
        root = Path(root).resolve()
        if not root.is_dir():
            raise FileNotFoundError(f"not a directory: {root}")
        records = self._read_xlog_records(root)
        records.sort(key=lambda r: (r.starttime, r.endtime, r.name))
        report = RegistrationReport(dataset_name)
        key = self.pseudokey

        by_user: dict[str, list[GameRecord]] = {}
        for rec in records:
            by_user.setdefault(rec.name, []).append(rec)

        user_dirs = {p.name: p for p in sorted(root.iterdir()) if p.is_dir()}
        for username, directory in user_dirs.items():
            if username not in by_user:
                for path in sorted(directory.iterdir()):
                    if path.is_file():
                        self._orphan(report, path, root, "no games for user")

        with self._db:
            self._ensure_root(dataset_name, root, TtyrecVersion.V1)
            for username in sorted(by_user):
                self._register_v1_user(
                    report, dataset_name, root, username,
                    by_user[username], user_dirs.get(username), key)
            self._touch()
        return report

    def _register_v1_user(self, report: RegistrationReport, dataset_name: str,
                          root: Path, username: str,
                          records: list[GameRecord], directory: Path | None,
                          key: bytes) -> None:
        files: list[tuple[int, Path]] = []
        if directory is not None:
            for path in sorted(directory.iterdir()):
                if not path.is_file():
                    continue
                if not (path.name.endswith(".ttyrec")
                        or path.name.endswith(".ttyrec.bz2")):
                    self._orphan(report, path, root, "not a v1 recording")
                    continue
                stamp = self._file_stamp(path)
                if stamp is None:
                    self._orphan(report, path, root, "unparseable timestamp")
                    continue
                files.append((stamp, path))

        match = match_files_to_games(records, files)
        alias = pseudonymize(username, key)

        kept_indices = sorted(match.assignments)
        kept_records = [records[i] for i in kept_indices]
        _, removed = filter_bad_episodes(kept_records)
        removed_reasons = {id(rec): reason for rec, reason in removed}

        for path in match.dropped:
            report.dropped.append(str(path.relative_to(root)))

        seen_origins: set[str] = set()
        for i, rec in enumerate(records):
            origin = f"{root}::{alias}:{rec.starttime}"
            label = f"{alias}/{rec.starttime}"
            if origin in seen_origins:
                report.excluded.append((label, "duplicate"))
                continue
            seen_origins.add(origin)

            if i in match.overlapping:
                reason = "overlap"
                paths = []
            else:
                paths = match.assignments.get(i, [])
                reason = removed_reasons.get(id(rec))
                if reason is None and not paths:
                    reason = "no-files"

            stored = GameRecord(**{k: getattr(rec, k) for k in FIELD_ORDER},
                                extra=dict(rec.extra))
            stored.name = alias

            known = self._game_for_origin(origin)
            if known is None:
                gameid = self._insert_game(origin, stored, reason)
                if paths and reason is None:
                    report.files_added += self._add_files(gameid, root, paths)
            else:
                gameid, stored_reason = known
                reason = stored_reason
            if reason is not None:
                report.excluded.append((label, reason))
                continue
            if self._add_membership(gameid, dataset_name):
                report.games_added += 1

    def _orphan(self, report: RegistrationReport, path: Path, root: Path,
                why: str) -> None:
        rel = str(path.relative_to(root))
        report.orphans.append(rel)
        warnings.warn(f"orphan recording {rel}: {why}", OrphanFile,
                      stacklevel=3)

    # -- queries --------------------------------------------------------------

    def datasets(self) -> list[tuple[str, int, int, str]]:
        """(name, ttyrec_version, game count, root) for every dataset."""
        rows = self._db.execute(
            "SELECT r.dataset_name, r.ttyrec_version, "
            "  (SELECT count(*) FROM datasets d "
            "   WHERE d.dataset_name = r.dataset_name), r.root "
            "FROM roots r ORDER BY r.dataset_name").fetchall()
        return [tuple(row) for row in rows]

    def _require_dataset(self, name: str) -> None:
        row = self._db.execute(
            "SELECT 1 FROM roots WHERE dataset_name = ?", (name,)).fetchone()
        if row is None:
            raise UnknownDataset(f"no dataset named {name!r}")

    def _where(self, where: "str | Predicate | None",
               params: Sequence) -> tuple[str, list]:
        if where is None:
            if params:
                raise ValueError("params given without a filter expression")
            return "", []
        if not isinstance(where, Predicate):
            where = compile_predicate(where)
        if len(params) != where.param_count:
            raise ValueError(
                f"filter has {where.param_count} placeholders, "
                f"{len(params)} parameters given")
        return f" AND ({where.sql})", list(params)

    def select_gameids(self, dataset_name: str,
                       where: "str | Predicate | None" = None,
                       params: Sequence = ()) -> list[int]:
        """Game ids in a dataset, ascending, optionally filtered."""
        self._require_dataset(dataset_name)
        clause, bound = self._where(where, params)
        rows = self._db.execute(
            "SELECT g.gameid FROM games g "
            "JOIN datasets d ON d.gameids = g.gameid "
            f"WHERE d.dataset_name = ?{clause} ORDER BY g.gameid",
            [dataset_name] + bound).fetchall()
        return [row[0] for row in rows]

    def game(self, gameid: int) -> GameRecord:
        names = [key for key in FIELD_ORDER]
        row = self._db.execute(
            f"SELECT {', '.join(names)}, conduct_value, achieve_value, "
            "flags_value, extra FROM games WHERE gameid = ?",
            (gameid,)).fetchone()
        if row is None:
            raise ValueError(f"no game with id {gameid}")
        rec = GameRecord(gameid=gameid)
        for key, value in zip(names, row):
            if key in _BITFIELDS:
                continue
            setattr(rec, key, value)
        rec.conduct, rec.achieve, rec.flags = row[len(names):len(names) + 3]
        rec.extra = json.loads(row[len(names) + 3])
        return rec

    def files_for_game(self, gameid: int) -> list[Path]:
        """Absolute recording paths for a game, in part order."""
        root_row = self._db.execute(
            "SELECT r.root FROM roots r JOIN datasets d "
            "ON d.dataset_name = r.dataset_name WHERE d.gameids = ? "
            "LIMIT 1", (gameid,)).fetchone()
        if root_row is None:
            raise UnknownDataset(f"game {gameid} is not in any dataset")
        root = Path(root_row[0])
        rows = self._db.execute(
            "SELECT path FROM ttyrecs WHERE gameid = ? ORDER BY part",
            (gameid,)).fetchall()
        return [root / row[0] for row in rows]

    def dataset_version(self, dataset_name: str) -> TtyrecVersion:
        self._require_dataset(dataset_name)
        row = self._db.execute(
            "SELECT ttyrec_version FROM roots WHERE dataset_name = ?",
            (dataset_name,)).fetchone()
        return TtyrecVersion(row[0])

    def dataset_root(self, dataset_name: str) -> Path:
        self._require_dataset(dataset_name)
        row = self._db.execute(
            "SELECT root FROM roots WHERE dataset_name = ?",
            (dataset_name,)).fetchone()
        return Path(row[0])

    def stats(self, dataset_name: str,
              where: "str | Predicate | None" = None,
              params: Sequence = ()) -> DatasetStats:
        """Episode count, points/turns spread, and bitfield prevalence."""
        self._require_dataset(dataset_name)
        clause, bound = self._where(where, params)
        rows = self._db.execute(
            "SELECT g.points, g.turns, g.conduct_value, g.achieve_value "
            "FROM games g JOIN datasets d ON d.gameids = g.gameid "
            f"WHERE d.dataset_name = ?{clause}",
            [dataset_name] + bound).fetchall()
        data = np.asarray(rows, dtype=np.int64).reshape(len(rows), 4)
        count = len(rows)

        def prevalence(column: np.ndarray, table) -> dict[str, float]:
            out = {}
            for mask, name, _slug in table:
                if count == 0:
                    out[name] = 0.0
                else:
                    out[name] = float(
                        100.0 * ((column & mask) != 0).sum() / count)
            return out

        return DatasetStats(
            dataset_name=dataset_name,
            count=count,
            points=FieldSummary.of(data[:, 0]),
            turns=FieldSummary.of(data[:, 1]),
            conducts=prevalence(data[:, 2], CONDUCT_BITS),
            achievements=prevalence(data[:, 3], ACHIEVEMENT_BITS),
        )
