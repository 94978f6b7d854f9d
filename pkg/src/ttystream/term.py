"""Screen emulation for the VT100 subset found in terminal recordings.

The emulator keeps a fixed-size character grid (uint8 display codes, always
printable ASCII after charset translation) and a parallel color grid (int8
attribute per cell: ANSI color index 0-7 in the low bits, bold as bit 3).
Blank cells carry color 0; the drawing attribute resets to 7 (white).

Two ingestion modes cover the two recording generations:

* feed() treats the grid as the real terminal: printing past the last column
  wraps to the next line and line feeds on the bottom row scroll.

* feed_cropped() treats the grid as a fixed window onto a source terminal of
  unknown or different geometry.  The cursor is tracked virtually (possibly
  outside the window), writes outside the window are discarded, and no wrap
  or scroll is invented unless source_geometry says where the source wrapped.

Both modes are incremental: escape sequences may be split across calls at any
byte boundary, so feeding a recording in arbitrary chunks is equivalent to
feeding it whole.

The exact supported escape set and every tie-breaking rule is documented in
docs/terminal.md; the alternate-charset translation tables live in
data/graphics_tables.json so documentation, emulator, and tests share one
source of truth.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

import numpy as np

__all__ = [
    "CharsetMode",
    "ScreenSnapshot",
    "TerminalEmulator",
    "translate_graphics",
    "DEFAULT_ROWS",
    "DEFAULT_COLS",
]

DEFAULT_ROWS = 24
DEFAULT_COLS = 80

_BLANK_CHAR = 0x20
_BLANK_COLOR = 0
_DEFAULT_ATTR = 7
_BOLD = 8

# Grid coordinates must fit int16 snapshots with headroom.
_MAX_DIM = 4096

# Parser states.
_GROUND, _ESC, _CSI, _DESIGNATE_G0, _DESIGNATE_G1, _ESC_SKIP = range(6)

# Bytes that interrupt a printable run: C0 controls and DEL.  High bytes are
# printable through the cp437 table.
_SPECIAL = re.compile(rb"[\x00-\x1f\x7f]")
# Inside a CSI sequence: the final byte, or ESC aborting the sequence.
_CSI_END = re.compile(rb"[\x40-\x7e]|\x1b")
# A dispatchable parameter string: plain numeric, no private or intermediate
# markers.  Sequences that do not match are consumed and ignored.
_CSI_PARAMS = re.compile(rb"[0-9;]*$")

_MAX_CSI_BUFFER = 64
_MAX_PARAM = 32767

# A complete plain CSI sequence, matched in one step on the hot path.  The
# {0,64} bound mirrors _MAX_CSI_BUFFER; anything longer, split across feeds,
# aborted, or carrying private/intermediate bytes falls back to the
# byte-at-a-time state machine below.
_CSI_FAST = re.compile(rb"\x1b\[[0-9;]{0,64}[\x40-\x7e]")

# Parameter strings repeat heavily (cursor addresses, SGR codes), so parse
# results are memoized.  None marks a non-dispatchable (ignored) sequence.
_CSI_CACHE: dict[bytes, "tuple[int, ...] | None"] = {}
_CSI_CACHE_LIMIT = 4096
_MISS = object()


def _parse_csi(buf: bytes) -> "tuple[int, ...] | None":
    got = _CSI_CACHE.get(buf, _MISS)
    if got is _MISS:
        if _CSI_PARAMS.match(buf):
            got = tuple(min(int(p), _MAX_PARAM) if p else 0
                        for p in buf.split(b";")) if buf else ()
        else:
            got = None
        if len(_CSI_CACHE) >= _CSI_CACHE_LIMIT:
            _CSI_CACHE.clear()
        _CSI_CACHE[buf] = got
    return got


class CharsetMode(Enum):
    """Character interpretation for translate_graphics."""

    ASCII = "ascii"
    DEC_GRAPHICS = "dec"
    IBM_GRAPHICS = "ibm"


def _load_tables() -> dict:
    text = resources.files("ttystream").joinpath(
        "data/graphics_tables.json").read_text("utf-8")
    return json.loads(text)


def _build_translate_tables() -> tuple[bytes, bytes]:
    """256-byte tables for bytes.translate: one for an ASCII-designated
    charset, one for DEC special graphics.  Both map high bytes via cp437."""
    tables = _load_tables()
    ascii_tbl = bytearray(range(256))
    for b in range(0x80, 0x100):
        ascii_tbl[b] = ord("?")
    for key, repl in tables["cp437"].items():
        ascii_tbl[int(key, 16)] = ord(repl)
    dec_tbl = bytearray(ascii_tbl)
    for key, repl in tables["dec_special"].items():
        dec_tbl[int(key, 16)] = ord(repl)
    return bytes(ascii_tbl), bytes(dec_tbl)


_ASCII_TABLE, _DEC_TABLE = _build_translate_tables()


def translate_graphics(code: int, mode: CharsetMode = CharsetMode.ASCII) -> int:
    """Map one byte to its display byte under the given charset mode.

    ASCII mode leaves printable ASCII alone; DEC mode applies the special
    graphics table; IBM mode is ASCII plus cp437 high-byte glyphs.  All modes
    render unmapped high bytes as '?'.
    """
    if not 0 <= code <= 0xFF:
        raise ValueError(f"byte value {code} outside 0..255")
    if mode is CharsetMode.DEC_GRAPHICS:
        return _DEC_TABLE[code]
    return _ASCII_TABLE[code]


@dataclass
class ScreenSnapshot:
    """Copy of the visible screen: chars uint8 [rows, cols], colors int8
    [rows, cols], cursor (row, col) clamped into the visible grid."""

    chars: np.ndarray
    colors: np.ndarray
    cursor: tuple[int, int]

    @property
    def rows(self) -> int:
        return self.chars.shape[0]

    @property
    def cols(self) -> int:
        return self.chars.shape[1]

    def render(self) -> str:
        """Human-readable dump with a border, for inspection tools."""
        horiz = "+" + "-" * self.cols + "+"
        lines = [horiz]
        for r in range(self.rows):
            lines.append("|" + self.chars[r].tobytes().decode("ascii") + "|")
        lines.append(horiz)
        return "\n".join(lines)


class TerminalEmulator:
    """Fixed-geometry screen fed by raw terminal output bytes."""

    def __init__(self, rows: int = DEFAULT_ROWS, cols: int = DEFAULT_COLS) -> None:
        if not (1 <= rows <= _MAX_DIM and 1 <= cols <= _MAX_DIM):
            raise ValueError(f"geometry {rows}x{cols} outside 1..{_MAX_DIM}")
        self._rows = rows
        self._cols = cols
        self._chars = np.full((rows, cols), _BLANK_CHAR, np.uint8)
        self._colors = np.zeros((rows, cols), np.int8)
        self._vrows: int | None = rows
        self._vcols: int | None = cols
        self.reset()

    @property
    def rows(self) -> int:
        return self._rows

    @property
    def cols(self) -> int:
        return self._cols

    @property
    def cursor(self) -> tuple[int, int]:
        """Cursor clamped into the visible grid (the virtual position may lie
        outside it in cropped mode)."""
        return (min(self._row, self._rows - 1), min(self._col, self._cols - 1))

    @property
    def virtual_cursor(self) -> tuple[int, int]:
        return (self._row, self._col)

    def reset(self) -> None:
        """Restore the pristine initial state (geometry kept)."""
        self._chars.fill(_BLANK_CHAR)
        self._colors.fill(_BLANK_COLOR)
        self._row = 0
        self._col = 0
        self._attr = _DEFAULT_ATTR
        self._g0_dec = False
        self._g1_dec = False
        self._shift_out = False
        self._pending_wrap = False
        self._state = _GROUND
        self._csi = bytearray()

    @property
    def chars(self) -> np.ndarray:
        """Read-only view of the live cell-codes grid (mutates on feed)."""
        view = self._chars.view()
        view.flags.writeable = False
        return view

    @property
    def colors(self) -> np.ndarray:
        """Read-only view of the live color grid (mutates on feed)."""
        view = self._colors.view()
        view.flags.writeable = False
        return view

    def snapshot(self) -> ScreenSnapshot:
        return ScreenSnapshot(self._chars.copy(), self._colors.copy(),
                              self.cursor)

    def feed(self, data: bytes) -> None:
        """Interpret bytes with wrap and scroll at this grid's own edges."""
        self._process(data, self._rows, self._cols)

    def feed_cropped(self, data: bytes,
                     source_geometry: tuple[int, int] | None = None) -> None:
        """Interpret bytes as a window onto a source terminal.

        With source_geometry=(rows, cols), wrap and scroll happen at the
        source's edges.  Without it the source edges are unknown, so nothing
        wraps or scrolls; the virtual cursor simply runs off the window.
        """
        if source_geometry is None:
            self._process(data, None, None)
        else:
            srows, scols = source_geometry
            if srows < 1 or scols < 1:
                raise ValueError(f"bad source geometry {source_geometry}")
            self._process(data, srows, scols)

    # -- byte interpreter ---------------------------------------------------

    def _process(self, data: bytes, vrows: int | None, vcols: int | None) -> None:
        self._vrows = vrows
        self._vcols = vcols
        # A virtual cursor left beyond newly tightened bounds (callers mixing
        # modes) is pulled back in so the write loop cannot stall.
        if vrows is not None and self._row >= vrows:
            self._row = vrows - 1
        if vcols is not None and self._col >= vcols:
            self._col = vcols - 1
        pos = 0
        n = len(data)
        while pos < n:
            state = self._state
            if state == _GROUND:
                m = _SPECIAL.search(data, pos)
                end = m.start() if m else n
                if end > pos:
                    self._put_text(data[pos:end])
                    pos = end
                if m is None:
                    break
                if data[pos] == 0x1B:
                    fm = _CSI_FAST.match(data, pos)
                    if fm is not None:
                        end = fm.end()
                        self._dispatch_csi(data[pos + 2:end - 1],
                                           data[end - 1])
                        pos = end
                        continue
                self._control(data[pos])
                pos += 1
            elif state == _CSI:
                m = _CSI_END.search(data, pos)
                if m is None:
                    self._csi.extend(data[pos:])
                    if len(self._csi) > _MAX_CSI_BUFFER:
                        self._state = _GROUND
                    break
                self._csi.extend(data[pos:m.start()])
                pos = m.end()
                byte = m.group()[0]
                if byte == 0x1B:
                    # A new escape aborts the unfinished sequence.
                    self._state = _ESC
                    self._csi.clear()
                elif len(self._csi) > _MAX_CSI_BUFFER:
                    self._state = _GROUND
                    self._csi.clear()
                else:
                    self._state = _GROUND
                    self._dispatch_csi(bytes(self._csi), byte)
                    self._csi.clear()
            elif state == _ESC:
                self._escape(data[pos])
                pos += 1
            elif state == _DESIGNATE_G0:
                self._g0_dec = data[pos] == 0x30
                self._state = _GROUND
                pos += 1
            elif state == _DESIGNATE_G1:
                self._g1_dec = data[pos] == 0x30
                self._state = _GROUND
                pos += 1
            else:  # _ESC_SKIP: consume one byte, e.g. the 8 of ESC # 8
                self._state = _GROUND
                pos += 1

    def _control(self, byte: int) -> None:
        if byte == 0x1B:
            self._state = _ESC
        elif byte == 0x0D:  # CR
            self._col = 0
            self._pending_wrap = False
        elif byte in (0x0A, 0x0B, 0x0C):  # LF; VT and FF behave as LF
            self._linefeed()
        elif byte == 0x08:  # BS stops at the left margin
            if self._col > 0:
                self._col -= 1
            self._pending_wrap = False
        elif byte == 0x09:  # HT: fixed stops every 8 columns, no wrap
            col = (self._col // 8 + 1) * 8
            if self._vcols is not None:
                col = min(col, self._vcols - 1)
            self._col = col
            self._pending_wrap = False
        elif byte == 0x0E:  # SO selects G1
            self._shift_out = True
        elif byte == 0x0F:  # SI selects G0
            self._shift_out = False
        # BEL and all other C0 bytes (and DEL) are consumed with no effect.

    def _escape(self, byte: int) -> None:
        if byte == 0x5B:  # [
            self._state = _CSI
            self._csi.clear()
        elif byte == 0x28:  # (
            self._state = _DESIGNATE_G0
        elif byte == 0x29:  # )
            self._state = _DESIGNATE_G1
        elif byte == 0x63:  # c: full reset
            self.reset()
        elif byte == 0x23:  # #: one-byte family (alignment test), ignored
            self._state = _ESC_SKIP
        else:
            # Unsupported single-byte escapes are consumed and ignored.
            self._state = _GROUND
            return
        if byte == 0x63:
            self._state = _GROUND

    def _dispatch_csi(self, buf: bytes, final: int) -> None:
        params = _parse_csi(buf)
        if params is None:
            return  # private or intermediate markers: consumed, ignored
        if final == 0x6D:  # m: SGR
            self._sgr(params)
            return
        if final in (0x48, 0x66):  # H / f: absolute addressing, 1-indexed
            row = (params[0] if len(params) > 0 else 0) or 1
            col = (params[1] if len(params) > 1 else 0) or 1
            self._move_to(row - 1, col - 1)
            return
        if final in (0x41, 0x42, 0x43, 0x44):  # A B C D: relative moves
            n = max(params[0] if params else 1, 1)
            row, col = self._row, self._col
            if final == 0x41:
                row = max(row - n, 0)
            elif final == 0x42:
                row = row + n
                if self._vrows is not None:
                    row = min(row, self._vrows - 1)
            elif final == 0x43:
                col = col + n
                if self._vcols is not None:
                    col = min(col, self._vcols - 1)
            else:
                col = max(col - n, 0)
            self._row, self._col = row, col
            self._pending_wrap = False
            return
        if final == 0x4A:  # J: erase in display
            self._erase_display(params[0] if params else 0)
            return
        if final == 0x4B:  # K: erase in line
            self._erase_line(params[0] if params else 0)
            return
        # Everything else (scroll regions, modes, reports) is consumed and
        # ignored; the grids never see it.

    def _move_to(self, row: int, col: int) -> None:
        if self._vrows is not None:
            row = min(max(row, 0), self._vrows - 1)
        if self._vcols is not None:
            col = min(max(col, 0), self._vcols - 1)
        self._row, self._col = row, col
        self._pending_wrap = False

    def _sgr(self, params: list[int]) -> None:
        attr = self._attr
        for p in params or [0]:
            if p == 0:
                attr = _DEFAULT_ATTR
            elif p == 1:
                attr |= _BOLD
            elif 30 <= p <= 37:
                attr = (attr & _BOLD) | (p - 30)
            elif p == 39:
                attr = (attr & _BOLD) | _DEFAULT_ATTR
        self._attr = attr

    def _erase_display(self, mode: int) -> None:
        rows, cols = self._rows, self._cols
        row, col = self._row, self._col
        if mode == 0:  # cursor to end of screen
            if row < rows:
                self._blank(row, min(col, cols), cols)
                if row + 1 < rows:
                    self._chars[row + 1:].fill(_BLANK_CHAR)
                    self._colors[row + 1:].fill(_BLANK_COLOR)
        elif mode == 1:  # start of screen through cursor
            if row >= rows:
                self._chars.fill(_BLANK_CHAR)
                self._colors.fill(_BLANK_COLOR)
            else:
                if row > 0:
                    self._chars[:row].fill(_BLANK_CHAR)
                    self._colors[:row].fill(_BLANK_COLOR)
                self._blank(row, 0, min(col, cols - 1) + 1)
        elif mode == 2:  # whole screen, cursor unmoved
            self._chars.fill(_BLANK_CHAR)
            self._colors.fill(_BLANK_COLOR)

    def _erase_line(self, mode: int) -> None:
        row, col = self._row, self._col
        if row >= self._rows:
            return
        cols = self._cols
        if mode == 0:
            self._blank(row, min(col, cols), cols)
        elif mode == 1:
            self._blank(row, 0, min(col, cols - 1) + 1)
        elif mode == 2:
            self._blank(row, 0, cols)

    def _blank(self, row: int, start: int, end: int) -> None:
        if start >= end:
            return
        self._chars[row, start:end] = _BLANK_CHAR
        self._colors[row, start:end] = _BLANK_COLOR

    def _linefeed(self) -> None:
        self._pending_wrap = False
        vrows = self._vrows
        if vrows is None:
            self._row += 1
        elif self._row >= vrows - 1:
            self._scroll_up()
            self._row = vrows - 1
        else:
            self._row += 1

    def _scroll_up(self) -> None:
        # Scroll the source extent as far as it is visible.  When the source
        # is taller than the window the row entering from below is unknown,
        # so it appears blank.
        lim = self._rows if self._vrows is None else min(self._vrows, self._rows)
        if lim > 1:
            self._chars[:lim - 1] = self._chars[1:lim]
            self._colors[:lim - 1] = self._colors[1:lim]
        self._blank(lim - 1, 0, self._cols)

    def _put_text(self, raw: bytes) -> None:
        if self._g1_dec if self._shift_out else self._g0_dec:
            text = raw.translate(_DEC_TABLE)
        else:
            text = raw.translate(_ASCII_TABLE)
        arr = np.frombuffer(text, np.uint8)
        length = len(arr)
        rows, cols = self._rows, self._cols
        vcols = self._vcols
        chars, colors, attr = self._chars, self._colors, self._attr
        row, col = self._row, self._col
        end = col + length
        # Hot path: the run stays inside the current row with no wrap flag
        # change; one slice assignment per grid.
        if (not self._pending_wrap and row < rows and end <= cols
                and (vcols is None or end < vcols)):
            chars[row, col:end] = arr
            colors[row, col:end] = attr
            self._col = end
            return
        i = 0
        while i < length:
            if self._pending_wrap:
                self._linefeed()
                self._col = 0
            row, col = self._row, self._col
            take = length - i if vcols is None else min(length - i, vcols - col)
            if row < rows and col < cols:
                vis = min(take, cols - col)
                if vis == 1:
                    chars[row, col] = arr[i]
                    colors[row, col] = attr
                else:
                    chars[row, col:col + vis] = arr[i:i + vis]
                    colors[row, col:col + vis] = attr
            col += take
            i += take
            if vcols is not None and col >= vcols:
                col = vcols - 1
                self._pending_wrap = True
            self._col = col
