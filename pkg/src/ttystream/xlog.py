"""Per-game metadata log lines (xlogfile) and their bitfields.

Each line is one finished game as key=value pairs.  Legacy servers separate
pairs with ':' and escape nothing; the fields written today separate with
TAB and percent-escape the four bytes that would break framing.  The parser
accepts both; the writer only emits the TAB form.

Unknown keys survive a parse/write round trip verbatim, so logs from patched
game builds lose nothing.
"""

from __future__ import annotations

import hmac
import hashlib
from dataclasses import dataclass, field, fields as dc_fields

from .errors import FieldTypeError, MalformedLine

__all__ = [
    "GameRecord",
    "parse_xlog_line",
    "write_xlog_line",
    "CONDUCT_BITS",
    "ACHIEVEMENT_BITS",
    "GAME_FLAG_BITS",
    "decode_conducts",
    "decode_achievements",
    "decode_game_flags",
    "encode_conducts",
    "encode_achievements",
    "pseudonymize",
    "ROLES",
    "RACES",
    "GENDERS",
    "ALIGNMENTS",
]

# (mask, display name, column slug); order defines decode output order.
CONDUCT_BITS: tuple[tuple[int, str, str], ...] = (
    (0x001, "Foodless", "conduct_foodless"),
    (0x002, "Vegan", "conduct_vegan"),
    (0x004, "Vegetarian", "conduct_vegetarian"),
    (0x008, "Atheist", "conduct_atheist"),
    (0x010, "Weaponless", "conduct_weaponless"),
    (0x020, "Pacifist", "conduct_pacifist"),
    (0x040, "Illiterate", "conduct_illiterate"),
    (0x080, "Polypileless", "conduct_polypileless"),
    (0x100, "Polyselfless", "conduct_polyselfless"),
    (0x200, "Wishless", "conduct_wishless"),
    (0x400, "Artifact wishless", "conduct_artifact_wishless"),
    (0x800, "Genocideless", "conduct_genocideless"),
)

ACHIEVEMENT_BITS: tuple[tuple[int, str, str], ...] = (
    (0x0001, "Got the Bell of Opening", "achieve_bell"),
    (0x0002, "Entered Gehennom", "achieve_gehennom"),
    (0x0004, "Got the Candelabrum of Invocation", "achieve_candelabrum"),
    (0x0008, "Got the Book of the Dead", "achieve_book"),
    (0x0010, "Performed the Invocation", "achieve_invocation"),
    (0x0020, "Got the Amulet of Yendor", "achieve_amulet"),
    (0x0040, "Was in the End Game", "achieve_endgame"),
    (0x0080, "Was on the Astral Plane", "achieve_astral"),
    (0x0100, "Ascended", "achieve_ascended"),
    (0x0200, "Got the Luckstone at Mines' End", "achieve_luckstone"),
    (0x0400, "Finished Sokoban", "achieve_sokoban"),
    (0x0800, "Killed Medusa", "achieve_medusa"),
    (0x1000, "Zen conduct intact", "achieve_zen"),
    (0x2000, "Nudist conduct intact", "achieve_nudist"),
)

GAME_FLAG_BITS: tuple[tuple[int, str, str], ...] = (
    (0x1, "Wizard mode", "flags_wizard"),
    (0x2, "Discover mode", "flags_discover"),
    (0x4, "Never loaded a Bones file", "flags_bonesless"),
)

ROLES = ("Arc", "Bar", "Cav", "Hea", "Kni", "Mon", "Pri",
         "Ran", "Rog", "Sam", "Tou", "Val", "Wiz")
RACES = ("Dwa", "Elf", "Gno", "Hum", "Orc")
GENDERS = ("Fem", "Mal")
ALIGNMENTS = ("Cha", "Law", "Neu")


@dataclass
class GameRecord:
    """One finished game.  gameid is assigned by a catalog, never parsed."""

    gameid: int | None = None
    version: str = ""
    points: int = 0
    deathdnum: int = 0
    deathlev: int = 0
    maxlvl: int = 0
    hp: int = 0
    maxhp: int = 0
    deaths: int = 0
    deathdate: int = 0
    birthdate: int = 0
    uid: int = 0
    role: str = ""
    race: str = ""
    gender: str = ""
    align: str = ""
    name: str = ""
    death: str = ""
    conduct: int = 0
    turns: int = 0
    achieve: int = 0
    realtime: int = 0
    starttime: int = 0
    endtime: int = 0
    gender0: str = ""
    align0: str = ""
    flags: int = 0
    extra: dict[str, str] = field(default_factory=dict)


# Canonical key order for writing; also the catalog column order.
FIELD_ORDER = tuple(f.name for f in dc_fields(GameRecord)
                    if f.name not in ("gameid", "extra"))

_BITFIELD_KEYS = frozenset({"conduct", "achieve", "flags"})
_INT_KEYS = frozenset(
    f.name for f in dc_fields(GameRecord)
    if f.type == "int" and f.name != "gameid") - _BITFIELD_KEYS
_STR_KEYS = frozenset(
    f.name for f in dc_fields(GameRecord) if f.type == "str")

# TAB-form escaping: percent first on encode, last on decode.
_ESCAPES = (("%", "%25"), ("\t", "%09"), (":", "%3A"), ("\n", "%0A"))


def _escape(value: str) -> str:
    for raw, enc in _ESCAPES:
        value = value.replace(raw, enc)
    return value


def _unescape(value: str) -> str:
    for raw, enc in reversed(_ESCAPES):
        value = value.replace(enc, raw)
    return value


def _parse_bitfield(key: str, value: str) -> int:
    """Bitfields appear as hex with an 0x prefix or as plain decimal."""
    try:
        text = value.strip()
        if text.lower().startswith("0x"):
            return int(text, 16)
        return int(text, 10)
    except ValueError:
        raise FieldTypeError(
            f"field {key}={value!r} is not a hex or decimal bitfield",
            key=key, value=value) from None


def parse_xlog_line(line: str) -> GameRecord:
    """Parse one log line; separator is TAB when present, ':' otherwise.

    Raises MalformedLine when no key=value pair can be extracted, and
    FieldTypeError when a known numeric field fails to parse.  Unknown keys
    land in record.extra.
    """
    line = line.rstrip("\r\n")
    sep = "\t" if "\t" in line else ":"
    record = GameRecord()
    pairs = 0
    for chunk in line.split(sep):
        key, eq, value = chunk.partition("=")
        if not eq or not key:
            continue
        pairs += 1
        if sep == "\t":
            value = _unescape(value)
        if key in _BITFIELD_KEYS:
            setattr(record, key, _parse_bitfield(key, value))
        elif key in _INT_KEYS:
            try:
                setattr(record, key, int(value.strip(), 10))
            except ValueError:
                raise FieldTypeError(
                    f"field {key}={value!r} is not an integer",
                    key=key, value=value) from None
        elif key in _STR_KEYS:
            setattr(record, key, value)
        else:
            record.extra[key] = value
    if pairs == 0:
        raise MalformedLine(f"no key=value pairs in line: {line[:80]!r}")
    return record


def write_xlog_line(record: GameRecord) -> str:
    """Serialize with TAB separators and percent-escaped values.

    parse_xlog_line(write_xlog_line(r)) reproduces r apart from gameid,
    which is catalog-assigned state, not log content.
    """
    parts = []
    for key in FIELD_ORDER:
        value = getattr(record, key)
        if key in _BITFIELD_KEYS:
            text = f"0x{value:x}"
        else:
            text = str(value)
        parts.append(f"{key}={_escape(text)}")
    for key, value in record.extra.items():
        parts.append(f"{_escape(key)}={_escape(value)}")
    return "\t".join(parts)


def _decode(bits: int, table) -> list[str]:
    return [name for mask, name, _slug in table if bits & mask]


def _encode(names, table) -> int:
    lookup = {name: mask for mask, name, _slug in table}
    bits = 0
    for name in names:
        try:
            bits |= lookup[name]
        except KeyError:
            raise ValueError(f"unknown flag name: {name!r}") from None
    return bits


def decode_conducts(bits: int) -> list[str]:
    """Names of intact conducts, lowest bit first."""
    return _decode(bits, CONDUCT_BITS)


def decode_achievements(bits: int) -> list[str]:
    return _decode(bits, ACHIEVEMENT_BITS)


def decode_game_flags(bits: int) -> list[str]:
    return _decode(bits, GAME_FLAG_BITS)


def encode_conducts(names) -> int:
    return _encode(names, CONDUCT_BITS)


def encode_achievements(names) -> int:
    return _encode(names, ACHIEVEMENT_BITS)


def pseudonymize(name: str, key: bytes) -> str:
    """Stable 12-hex-digit alias for a player name under a secret key.

    Keyed hashing (HMAC-SHA256, truncated) keeps aliases consistent within
    one catalog while preventing dictionary recovery of the original names
    without the key.
    """
    digest = hmac.new(key, name.encode("utf-8"), hashlib.sha256)
    return digest.hexdigest()[:12]
