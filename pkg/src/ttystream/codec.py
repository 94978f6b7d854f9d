"""Frame codec for ttyrec (v1) and ttyrec3 streams.

Both formats are a flat sequence of frames with a little-endian header:

    offset 0..3   u32  seconds        (unix time of capture)
    offset 4..7   u32  microseconds   (sub-second part, < 1e6 when written)
    offset 8..11  u32  buffer_len     (payload byte count)
    offset 12     u8   channel        (v3 only: 0 output, 1 keypress, 2 score)

followed by exactly buffer_len payload bytes.  v1 headers are 12 bytes and
carry terminal output only; v3 headers are 13 bytes.

Readers are tolerant: they accept anything structurally sound and warn about
suspicious-but-usable content (timestamps running backwards).  Writers are
strict: out-of-range fields raise instead of producing ambiguous archives.
"""

from __future__ import annotations

import bz2
import struct
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Iterator

from .errors import (
    ChannelNotRepresentable,
    CorruptArchive,
    InvalidChannel,
    NonMonotonicTimestamp,
    OversizeFrame,
    TruncatedFrame,
    TtyrecError,
)

__all__ = [
    "TtyrecVersion",
    "Frame",
    "CHANNEL_OUTPUT",
    "CHANNEL_KEYPRESS",
    "CHANNEL_SCORE",
    "DEFAULT_MAX_FRAME_BYTES",
    "read_frame",
    "write_frame",
    "FrameWriter",
    "StreamScanner",
    "scan_stream",
    "open_compressed",
    "write_compressed",
]

_HEADER = struct.Struct("<III")
_U32_MAX = 0xFFFFFFFF

CHANNEL_OUTPUT = 0
CHANNEL_KEYPRESS = 1
CHANNEL_SCORE = 2
_CHANNELS = (CHANNEL_OUTPUT, CHANNEL_KEYPRESS, CHANNEL_SCORE)

# Cap on a single declared payload length.  A corrupt length field otherwise
# turns into an attempt to allocate gigabytes.
DEFAULT_MAX_FRAME_BYTES = 1 << 20


class TtyrecVersion(Enum):
    """Stream format revision: V1 is headerless output-only, V3 adds a
    channel byte per frame."""

    V1 = 1
    V3 = 3

    @property
    def header_size(self) -> int:
        return 13 if self is TtyrecVersion.V3 else 12

    @property
    def has_channel(self) -> bool:
        return self is TtyrecVersion.V3

    @classmethod
    def coerce(cls, value: "TtyrecVersion | int | str") -> "TtyrecVersion":
        if isinstance(value, cls):
            return value
        try:
            return cls(int(value))
        except (ValueError, TypeError):
            raise ValueError(f"unknown ttyrec version: {value!r}") from None

    @classmethod
    def from_path(cls, path: "str | Path") -> "TtyrecVersion":
        """Classify a recording by filename: *.ttyrec3[.bz2] is V3,
        *.ttyrec[.bz2] is V1."""
        name = Path(path).name
        if name.endswith(".bz2"):
            name = name[: -len(".bz2")]
        if name.endswith(".ttyrec3"):
            return cls.V3
        if name.endswith(".ttyrec"):
            return cls.V1
        raise ValueError(f"cannot infer ttyrec version from filename: {path}")


@dataclass(frozen=True, slots=True)
class Frame:
    """One timestamped event.  channel is None for v1 frames."""

    seconds: int
    microseconds: int
    payload: bytes
    channel: int | None = None

    @property
    def timestamp_us(self) -> int:
        """Capture time in integer microseconds since the epoch."""
        return self.seconds * 1_000_000 + self.microseconds

    @property
    def buffer_len(self) -> int:
        return len(self.payload)


def _safe_tell(stream) -> int | None:
    try:
        return stream.tell()
    except (AttributeError, OSError, ValueError):
        return None


def read_frame(stream: BinaryIO, version: "TtyrecVersion | int | str", *,
               max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES) -> Frame | None:
    """Read one frame, or return None at a clean end of stream.

    A clean end is zero bytes at a frame boundary.  Anything shorter than a
    full header or payload raises TruncatedFrame with the offset at which the
    broken frame starts.
    """
    version = TtyrecVersion.coerce(version)
    start = _safe_tell(stream)
    hsize = version.header_size
    head = stream.read(hsize)
    if not head:
        return None
    if len(head) < hsize:
        raise TruncatedFrame(
            f"stream ended inside a frame header ({len(head)} of {hsize} bytes)",
            offset=start)
    seconds, microseconds, buffer_len = _HEADER.unpack_from(head)
    channel: int | None = None
    if version.has_channel:
        channel = head[12]
        if channel not in _CHANNELS:
            raise InvalidChannel(
                f"channel byte {channel} outside {{0, 1, 2}}",
                channel=channel, offset=start)
    if buffer_len > max_frame_bytes:
        raise OversizeFrame(
            f"declared payload of {buffer_len} bytes exceeds cap of "
            f"{max_frame_bytes}", declared=buffer_len, limit=max_frame_bytes,
            offset=start)
    payload = stream.read(buffer_len)
    if len(payload) < buffer_len:
        raise TruncatedFrame(
            f"stream ended inside a frame payload ({len(payload)} of "
            f"{buffer_len} bytes)", offset=start)
    return Frame(seconds, microseconds, payload, channel)


def _validate_for_write(frame: Frame, version: TtyrecVersion) -> int:
    """Writer-side strictness: range-check every header field.

    Returns the channel byte to emit (meaningless for v1).
    """
    if not 0 <= frame.seconds <= _U32_MAX:
        raise ValueError(f"seconds {frame.seconds} outside u32 range")
    if not 0 <= frame.microseconds < 1_000_000:
        raise ValueError(
            f"microseconds {frame.microseconds} outside [0, 1e6)")
    if len(frame.payload) > _U32_MAX:
        raise ValueError("payload too large for u32 length field")
    channel = frame.channel
    if version.has_channel:
        if channel is None:
            channel = CHANNEL_OUTPUT
        if channel not in _CHANNELS:
            raise ValueError(f"channel {channel} outside {{0, 1, 2}}")
        if channel == CHANNEL_KEYPRESS and not frame.payload:
            raise ValueError("keypress frame requires a nonempty payload")
        return channel
    if channel not in (None, CHANNEL_OUTPUT):
        raise ChannelNotRepresentable(
            f"channel {channel} cannot be stored in a v1 stream; "
            "v1 frames are terminal output only")
    return 0


def write_frame(stream: BinaryIO, frame: Frame,
                version: "TtyrecVersion | int | str") -> int:
    """Serialize one frame; returns the byte count written."""
    version = TtyrecVersion.coerce(version)
    channel = _validate_for_write(frame, version)
    head = _HEADER.pack(frame.seconds, frame.microseconds, len(frame.payload))
    if version.has_channel:
        head += bytes((channel,))
    stream.write(head)
    stream.write(frame.payload)
    return len(head) + len(frame.payload)


class FrameWriter:
    """Strict sequential writer: enforces non-decreasing timestamps.

    Readers tolerate clock skew in the wild, but archives we produce should
    never contain it.
    """

    def __init__(self, sink: BinaryIO,
                 version: "TtyrecVersion | int | str") -> None:
        self._sink = sink
        self._version = TtyrecVersion.coerce(version)
        self._last_ts: int | None = None
        self.frames_written = 0
        self.bytes_written = 0

    @property
    def version(self) -> TtyrecVersion:
        return self._version

    def write(self, frame: Frame) -> int:
        ts = frame.timestamp_us
        if self._last_ts is not None and ts < self._last_ts:
            raise ValueError(
                f"timestamp went backwards: {ts} after {self._last_ts}")
        n = write_frame(self._sink, frame, self._version)
        self._last_ts = ts
        self.frames_written += 1
        self.bytes_written += n
        return n

    def close(self) -> None:
        self._sink.close()

    def __enter__(self) -> "FrameWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class StreamScanner:
    """Iterate frames while keeping per-channel counts.

    Tolerant-reader behaviour: timestamps running backwards produce a
    NonMonotonicTimestamp warning, not an error.  Structural errors from
    read_frame propagate with the 1-based index of the failing frame
    attached, so callers can report "frame 3 of foo.ttyrec3".
    """

    def __init__(self, source: BinaryIO, version: "TtyrecVersion | int | str",
                 *, max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES) -> None:
        self._source = source
        self._version = TtyrecVersion.coerce(version)
        self._max_frame_bytes = max_frame_bytes
        self._counts = [0, 0, 0]
        self._last_ts: int | None = None
        self.frames_scanned = 0

    @property
    def version(self) -> TtyrecVersion:
        return self._version

    @property
    def counts(self) -> tuple[int, int, int]:
        """(output, keypress, score) frame counts; v1 counts as all output."""
        return tuple(self._counts)

    def __iter__(self) -> "StreamScanner":
        return self

    def __next__(self) -> Frame:
        try:
            frame = read_frame(self._source, self._version,
                               max_frame_bytes=self._max_frame_bytes)
        except TtyrecError as exc:
            if getattr(exc, "frame_index", None) is None:
                exc.frame_index = self.frames_scanned + 1
            raise
        if frame is None:
            raise StopIteration
        ts = frame.timestamp_us
        if self._last_ts is not None and ts < self._last_ts:
            warnings.warn(
                f"frame {self.frames_scanned + 1} timestamp {ts} earlier than "
                f"previous {self._last_ts}", NonMonotonicTimestamp,
                stacklevel=2)
        self._last_ts = ts
        self._counts[frame.channel or 0] += 1
        self.frames_scanned += 1
        return frame


def scan_stream(source, version: "TtyrecVersion | int | str", *,
                max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES) -> StreamScanner:
    """Build a StreamScanner from an open binary stream or a path.

    Paths are opened with open_compressed, so *.bz2 just works.
    """
    if not hasattr(source, "read"):
        source = open_compressed(source)
    return StreamScanner(source, version, max_frame_bytes=max_frame_bytes)


class _Bz2Source:
    """Incremental bzip2 reader that reports damage as CorruptArchive.

    Decompression is streaming (constant memory); tell() reports the position
    in the decompressed byte sequence so frame offsets stay meaningful, while
    CorruptArchive captures the offset in the compressed file, which is where
    a salvage attempt has to look.
    """

    def __init__(self, raw: BinaryIO, path: Path) -> None:
        self._raw = raw
        self._path = path
        self._bz = bz2.BZ2File(raw)

    def read(self, size: int = -1) -> bytes:
        try:
            return self._bz.read(size)
        except (OSError, EOFError, ValueError) as exc:
            raise CorruptArchive(
                f"{self._path}: {exc}", path=str(self._path),
                compressed_offset=_safe_tell(self._raw)) from exc

    def tell(self) -> int:
        return self._bz.tell()

    def close(self) -> None:
        try:
            self._bz.close()
        finally:
            self._raw.close()

    @property
    def closed(self) -> bool:
        return self._bz.closed

    def __enter__(self) -> "_Bz2Source":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_compressed(path: "str | Path") -> BinaryIO:
    """Open a recording for reading, decompressing transparently when the
    filename ends in .bz2."""
    path = Path(path)
    raw = path.open("rb")
    if path.suffix == ".bz2":
        return _Bz2Source(raw, path)
    return raw


def write_compressed(path: "str | Path", *, compresslevel: int = 9) -> BinaryIO:
    """Open a recording for writing, compressing transparently when the
    filename ends in .bz2.  An immediately closed file is a valid empty
    stream for open_compressed."""
    path = Path(path)
    if path.suffix == ".bz2":
        return bz2.open(path, "wb", compresslevel=compresslevel)
    return path.open("wb")


def iter_frames(path: "str | Path", version: "TtyrecVersion | int | str | None" = None,
                *, max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES) -> Iterator[Frame]:
    """Convenience: stream every frame of a file, closing it afterwards."""
    if version is None:
        version = TtyrecVersion.from_path(path)
    source = open_compressed(path)
    try:
        yield from StreamScanner(source, version,
                                 max_frame_bytes=max_frame_bytes)
    finally:
        source.close()
