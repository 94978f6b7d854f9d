"""Self-describing on-disk container for batch streams.

A dump freezes the exact MiniBatch sequence an iterator produced, so the
same data can be replayed without the source archives, compared across
implementations, or shipped to another machine.  The layout (documented
byte-exactly in docs/dump-format.md) is little-endian throughout:

* 8-byte magic "TTYBATCH", then format version (u16) and flags (u16, zero).
* batch count (u64); all-ones while unknown, patched on close when the
  sink is seekable, otherwise left for the reader to infer from EOF.
* batch_size (u32), seq_length (u32).
* field count (u16), then one descriptor per field: name (u8 length +
  ascii), dtype (u8 length + numpy dtype string), per-step dims (u8 count
  + u32 each beyond the leading [batch, time] axes).
* metadata JSON (u32 length + UTF-8), free-form provenance.
* batch records: u32 sequence number (0, 1, ...) followed by each field's
  raw C-order bytes in descriptor order.

Readers validate magic, version, descriptor sanity, sequence continuity,
and record completeness, raising DumpFormatError on any violation.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import DumpFormatError
from .loader import BATCH_DTYPES, MiniBatch, field_shape

__all__ = [
    "DUMP_MAGIC",
    "DUMP_VERSION",
    "DumpInfo",
    "DumpWriter",
    "DumpReader",
    "open_dump",
    "write_dump",
    "read_dump",
]

DUMP_MAGIC = b"TTYBATCH"
DUMP_VERSION = 1
_UNKNOWN_COUNT = 0xFFFF_FFFF_FFFF_FFFF

_HEAD = struct.Struct("<8sHHQII")   # magic, version, flags, count, B, T
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_COUNT_OFFSET = 12                  # where the u64 batch count lives


@dataclass(frozen=True)
class DumpInfo:
    """Shape contract and provenance of one dump file."""

    batch_size: int
    seq_length: int
    batch_count: "int | None"       # None when the writer could not patch it
    fields: tuple[tuple[str, np.dtype, tuple[int, ...]], ...]
    meta: dict

    @property
    def rows(self) -> int:
        return dict((n, d) for n, _, d in self.fields)["tty_chars"][0]

    @property
    def cols(self) -> int:
        return dict((n, d) for n, _, d in self.fields)["tty_chars"][1]


def _field_layout(rows: int, cols: int):
    return tuple((name, BATCH_DTYPES[name], field_shape(name, rows, cols))
                 for name in BATCH_DTYPES)


class DumpWriter:
    """Append MiniBatch records to a stream; use as a context manager."""

    def __init__(self, sink: "str | Path | BinaryIO", batch_size: int,
                 seq_length: int, rows: int = 24, cols: int = 80,
                 meta: "dict | None" = None) -> None:
        if isinstance(sink, (str, Path)):
            self._stream: BinaryIO = open(sink, "wb")
            self._owns = True
        else:
            self._stream = sink
            self._owns = False
        self._batch_size = batch_size
        self._seq_length = seq_length
        self._fields = _field_layout(rows, cols)
        self._count = 0
        self._closed = False

        self._stream.write(_HEAD.pack(DUMP_MAGIC, DUMP_VERSION, 0,
                                      _UNKNOWN_COUNT, batch_size, seq_length))
        self._stream.write(_U16.pack(len(self._fields)))
        for name, dtype, dims in self._fields:
            encoded = name.encode("ascii")
            self._stream.write(_U8.pack(len(encoded)) + encoded)
            dstr = dtype.str.encode("ascii")
            self._stream.write(_U8.pack(len(dstr)) + dstr)
            self._stream.write(_U8.pack(len(dims)))
            for dim in dims:
                self._stream.write(_U32.pack(dim))
        blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
        self._stream.write(_U32.pack(len(blob)) + blob)

    @property
    def batches_written(self) -> int:
        return self._count

    def append(self, batch: MiniBatch) -> None:
        if self._closed:
            raise ValueError("writer is closed")
        self._stream.write(_U32.pack(self._count))
        for name, dtype, dims in self._fields:
            arr = getattr(batch, name)
            want = (self._batch_size, self._seq_length) + dims
            if arr.shape != want or arr.dtype != dtype:
                raise ValueError(
                    f"{name}: expected {want} {dtype}, "
                    f"got {arr.shape} {arr.dtype}")
            self._stream.write(np.ascontiguousarray(arr).tobytes())
        self._count += 1

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._stream.seekable():
            end = self._stream.tell()
            self._stream.seek(_COUNT_OFFSET)
            self._stream.write(struct.pack("<Q", self._count))
            self._stream.seek(end)
        if self._owns:
            self._stream.close()
        else:
            self._stream.flush()

    def __enter__(self) -> "DumpWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise DumpFormatError(
            f"truncated dump: expected {n} bytes of {what}, "
            f"got {len(data)}")
    return data


class DumpReader:
    """Iterate the MiniBatch records of a dump; use as a context manager."""

    def __init__(self, source: "str | Path | BinaryIO") -> None:
        if isinstance(source, (str, Path)):
            self._stream: BinaryIO = open(source, "rb")
            self._owns = True
        else:
            self._stream = source
            self._owns = False
        try:
            self.info = self._read_header()
        except Exception:
            if self._owns:
                self._stream.close()
            raise
        self._next_index = 0

    def _read_header(self) -> DumpInfo:
        magic, version, flags, count, batch_size, seq_length = _HEAD.unpack(
            _read_exact(self._stream, _HEAD.size, "header"))
        if magic != DUMP_MAGIC:
            raise DumpFormatError(f"bad magic {magic!r}")
        if version != DUMP_VERSION:
            raise DumpFormatError(f"unsupported dump version {version}")
        if flags != 0:
            raise DumpFormatError(f"unknown header flags 0x{flags:x}")
        if batch_size < 1 or seq_length < 1:
            raise DumpFormatError(
                f"bad batch geometry {batch_size}x{seq_length}")
        (n_fields,) = _U16.unpack(
            _read_exact(self._stream, 2, "field count"))
        fields = []
        for _ in range(n_fields):
            (nlen,) = _U8.unpack(_read_exact(self._stream, 1, "name length"))
            name = _read_exact(self._stream, nlen, "field name")
            (dlen,) = _U8.unpack(_read_exact(self._stream, 1, "dtype length"))
            dstr = _read_exact(self._stream, dlen, "dtype")
            (ndim,) = _U8.unpack(_read_exact(self._stream, 1, "dim count"))
            dims = tuple(
                _U32.unpack(_read_exact(self._stream, 4, "dimension"))[0]
                for _ in range(ndim))
            try:
                dtype = np.dtype(dstr.decode("ascii"))
            except (TypeError, UnicodeDecodeError) as exc:
                raise DumpFormatError(f"bad dtype {dstr!r}") from exc
            fields.append((name.decode("ascii", "replace"), dtype, dims))
        (mlen,) = _U32.unpack(_read_exact(self._stream, 4, "metadata length"))
        try:
            meta = json.loads(_read_exact(self._stream, mlen, "metadata"))
        except ValueError as exc:
            raise DumpFormatError(f"bad metadata JSON: {exc}") from exc

        names = tuple(name for name, _, _ in fields)
        if names != tuple(BATCH_DTYPES):
            raise DumpFormatError(
                f"field set {names} does not match the batch contract")
        return DumpInfo(batch_size, seq_length,
                        None if count == _UNKNOWN_COUNT else count,
                        tuple(fields), meta)

    def close(self) -> None:
        if self._owns:
            self._stream.close()

    def __enter__(self) -> "DumpReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __iter__(self) -> Iterator[MiniBatch]:
        return self

    def __next__(self) -> MiniBatch:
        head = self._stream.read(4)
        if len(head) == 0:
            if (self.info.batch_count is not None
                    and self._next_index != self.info.batch_count):
                raise DumpFormatError(
                    f"dump ends after {self._next_index} of "
                    f"{self.info.batch_count} batches")
            raise StopIteration
        if len(head) != 4:
            raise DumpFormatError("truncated batch record header")
        (index,) = _U32.unpack(head)
        if index != self._next_index:
            raise DumpFormatError(
                f"batch {self._next_index} carries sequence number {index}")
        arrays = {}
        for name, dtype, dims in self.info.fields:
            shape = (self.info.batch_size, self.info.seq_length) + dims
            n_bytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
            raw = _read_exact(self._stream, n_bytes, f"batch field {name}")
            arrays[name] = np.frombuffer(raw, dtype).reshape(shape)
        self._next_index += 1
        return MiniBatch(**arrays)


def open_dump(source: "str | Path | BinaryIO") -> DumpReader:
    return DumpReader(source)


def write_dump(sink: "str | Path | BinaryIO", batches: Iterable[MiniBatch],
               batch_size: int, seq_length: int, rows: int = 24,
               cols: int = 80, meta: "dict | None" = None) -> int:
    """Write every batch; returns how many were written."""
    with DumpWriter(sink, batch_size, seq_length, rows, cols, meta) as w:
        for batch in batches:
            w.append(batch)
        return w.batches_written


def read_dump(source: "str | Path | BinaryIO") -> list[MiniBatch]:
    """Load a whole dump into memory (convenience for small files)."""
    with open_dump(source) as reader:
        return list(reader)
