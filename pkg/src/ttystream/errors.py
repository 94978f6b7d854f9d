"""Exception and warning taxonomy for trajectory data handling.

Environmental failures (missing files, permissions, full disks) stay in the
builtin OSError family so callers can separate "bad data" from "bad machine".
Everything raised here means the bytes or records themselves are wrong.

Recoverable oddities found while *reading* third-party data are reported as
warnings (DataWarning subclasses), never exceptions: real archives contain
clock skew and stray bytes, and a reader that refuses them is useless.
Writers are strict and raise instead.
"""

from __future__ import annotations


class TtyrecError(Exception):
    """Base class for data-format, catalog, and query errors."""


class TruncatedFrame(TtyrecError):
    """A frame header or payload ended before its declared length.

    offset is the byte offset (in the decompressed stream) at which the
    truncated frame begins; frame_index is the 1-based index of the frame
    within its stream when known.
    """

    def __init__(self, message: str, *, offset: int | None = None,
                 frame_index: int | None = None) -> None:
        super().__init__(message)
        self.offset = offset
        self.frame_index = frame_index

    def __str__(self) -> str:
        parts = [super().__str__()]
        if self.offset is not None:
            parts.append(f"at offset {self.offset}")
        if self.frame_index is not None:
            parts.append(f"(frame {self.frame_index})")
        return " ".join(parts)


class InvalidChannel(TtyrecError):
    """A frame carried a channel byte outside the defined set {0, 1, 2}."""

    def __init__(self, message: str, *, channel: int | None = None,
                 offset: int | None = None,
                 frame_index: int | None = None) -> None:
        super().__init__(message)
        self.channel = channel
        self.offset = offset
        self.frame_index = frame_index


class OversizeFrame(TtyrecError):
    """A frame declared a payload length above the configured cap.

    Huge declared lengths are almost always stream corruption; refusing them
    keeps a corrupt length field from turning into a multi-gigabyte read.
    """

    def __init__(self, message: str, *, declared: int | None = None,
                 limit: int | None = None, offset: int | None = None,
                 frame_index: int | None = None) -> None:
        super().__init__(message)
        self.declared = declared
        self.limit = limit
        self.offset = offset
        self.frame_index = frame_index


class ChannelNotRepresentable(TtyrecError):
    """Tried to write a multi-channel frame into the headerless v1 format."""


class CorruptArchive(TtyrecError):
    """The compressed container itself is damaged (bad bzip2 data).

    compressed_offset is the byte position in the *compressed* file at the
    time the damage was detected, which is where a salvage tool should look.
    """

    def __init__(self, message: str, *, path: str | None = None,
                 compressed_offset: int | None = None) -> None:
        super().__init__(message)
        self.path = path
        self.compressed_offset = compressed_offset


class DumpFormatError(TtyrecError):
    """A batch-dump container is malformed or truncated."""


class MalformedLine(TtyrecError):
    """A metadata log line had no parseable key=value pairs."""


class FieldTypeError(TtyrecError):
    """A metadata field failed to parse as its declared type."""

    def __init__(self, message: str, *, key: str | None = None,
                 value: str | None = None) -> None:
        super().__init__(message)
        self.key = key
        self.value = value


class MissingXlog(TtyrecError):
    """A recorder directory offered for registration has no metadata log."""


class SchemaMismatch(TtyrecError):
    """An existing catalog file does not match the expected table layout."""


class UnknownDataset(TtyrecError):
    """A dataset name was requested that the catalog has never seen."""


class PredicateError(TtyrecError):
    """A filter expression failed to parse or validate.

    position is the character offset of the offending token.
    """

    def __init__(self, message: str, *, position: int | None = None) -> None:
        super().__init__(message)
        self.position = position

    def __str__(self) -> str:
        base = super().__str__()
        if self.position is not None:
            return f"{base} (at position {self.position})"
        return base


class DataWarning(UserWarning):
    """Base class for recoverable oddities met while reading archives."""


class NonMonotonicTimestamp(DataWarning):
    """Frame timestamps went backwards; real recorders do this on clock skew."""


class BadScorePayload(DataWarning):
    """A score frame payload was not ASCII decimal; previous score kept."""


class BadKeypressPayload(DataWarning):
    """A keypress frame payload was not exactly one byte; first byte used."""


class SkippedGame(DataWarning):
    """A game could not be decoded and was left out of the batch stream."""


class OrphanFile(DataWarning):
    """A recording file could not be tied to any metadata entry."""
