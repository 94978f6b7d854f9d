"""Frame codec: golden byte fixtures, round-trips, and failure modes."""

import bz2
import io
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttystream.codec import (
    CHANNEL_KEYPRESS,
    CHANNEL_OUTPUT,
    CHANNEL_SCORE,
    DEFAULT_MAX_FRAME_BYTES,
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
from ttystream.errors import (
    ChannelNotRepresentable,
    CorruptArchive,
    InvalidChannel,
    NonMonotonicTimestamp,
    OversizeFrame,
    TruncatedFrame,
)

# Golden v1 frame, assembled by hand: seconds=1 -> 01 00 00 00,
# microseconds=500000=0x07A120 -> 20 A1 07 00, len=3 -> 03 00 00 00, "abc".
GOLDEN_V1 = bytes.fromhex("0100000020A107000300000061 6263".replace(" ", ""))

# Same fields as v3 with channel byte 0 spliced in before the payload.
GOLDEN_V3 = GOLDEN_V1[:12] + b"\x00" + GOLDEN_V1[12:]


def frames_bytes(frames, version):
    sink = io.BytesIO()
    for f in frames:
        write_frame(sink, f, version)
    return sink.getvalue()


class TestGoldenBytes:
    def test_v1_read(self):
        frame = read_frame(io.BytesIO(GOLDEN_V1), 1)
        assert frame == Frame(1, 500000, b"abc", None)
        assert frame.timestamp_us == 1_500_000
        assert frame.buffer_len == 3

    def test_v1_write(self):
        out = io.BytesIO()
        n = write_frame(out, Frame(1, 500000, b"abc"), TtyrecVersion.V1)
        assert out.getvalue() == GOLDEN_V1
        assert n == len(GOLDEN_V1) == 15

    def test_v3_read(self):
        frame = read_frame(io.BytesIO(GOLDEN_V3), 3)
        assert frame == Frame(1, 500000, b"abc", CHANNEL_OUTPUT)

    def test_v3_score_frame_layout(self):
        # 12 zero-ish header bytes, channel byte 0x02, then ASCII "0".
        out = io.BytesIO()
        n = write_frame(out, Frame(0, 0, b"0", channel=CHANNEL_SCORE), 3)
        assert n == 14
        expected = struct.pack("<III", 0, 0, 1) + b"\x02" + b"0"
        assert out.getvalue() == expected

    def test_header_sizes(self):
        assert TtyrecVersion.V1.header_size == 12
        assert TtyrecVersion.V3.header_size == 13

    def test_clean_eof(self):
        assert read_frame(io.BytesIO(b""), 1) is None
        assert read_frame(io.BytesIO(b""), 3) is None


class TestVersionHandling:
    def test_coerce(self):
        assert TtyrecVersion.coerce(1) is TtyrecVersion.V1
        assert TtyrecVersion.coerce("3") is TtyrecVersion.V3
        assert TtyrecVersion.coerce(TtyrecVersion.V1) is TtyrecVersion.V1
        with pytest.raises(ValueError):
            TtyrecVersion.coerce(2)

    def test_from_path(self):
        assert TtyrecVersion.from_path("a/123.ttyrec") is TtyrecVersion.V1
        assert TtyrecVersion.from_path("a/123.ttyrec.bz2") is TtyrecVersion.V1
        assert TtyrecVersion.from_path("123.ttyrec3") is TtyrecVersion.V3
        assert TtyrecVersion.from_path("123.ttyrec3.bz2") is TtyrecVersion.V3
        with pytest.raises(ValueError):
            TtyrecVersion.from_path("notes.txt")

    def test_invalid_channel_read(self):
        bad = GOLDEN_V3[:12] + b"\x05" + GOLDEN_V3[13:]
        with pytest.raises(InvalidChannel) as exc:
            read_frame(io.BytesIO(bad), 3)
        assert exc.value.channel == 5
        assert exc.value.offset == 0

    def test_v1_stream_opened_as_v3_reports_channel(self):
        # The 13th byte of a v1 stream is payload, usually not in {0,1,2}.
        data = frames_bytes([Frame(10, 0, b"xyz")], 1)
        with pytest.raises(InvalidChannel):
            read_frame(io.BytesIO(data), 3)

    def test_channel_not_representable_in_v1(self):
        with pytest.raises(ChannelNotRepresentable):
            write_frame(io.BytesIO(), Frame(0, 0, b"a", channel=1), 1)

    def test_channel_none_writes_as_output_in_v3(self):
        data = frames_bytes([Frame(0, 0, b"a", channel=None)], 3)
        assert data[12] == CHANNEL_OUTPUT


class TestTruncation:
    def test_mid_header(self):
        with pytest.raises(TruncatedFrame) as exc:
            read_frame(io.BytesIO(GOLDEN_V1[:7]), 1)
        assert exc.value.offset == 0

    def test_mid_payload(self):
        with pytest.raises(TruncatedFrame) as exc:
            read_frame(io.BytesIO(GOLDEN_V1[:13]), 1)
        assert exc.value.offset == 0

    def test_second_frame_truncated_offset(self):
        data = GOLDEN_V1 + GOLDEN_V1[:5]
        stream = io.BytesIO(data)
        assert read_frame(stream, 1) is not None
        with pytest.raises(TruncatedFrame) as exc:
            read_frame(stream, 1)
        assert exc.value.offset == len(GOLDEN_V1)

    def test_scanner_attaches_frame_index(self):
        # Three whole frames, then a payload cut mid-way through frame 4.
        whole = frames_bytes(
            [Frame(i, 0, b"pay") for i in range(3)], 3)
        cut = frames_bytes([Frame(3, 0, b"payload")], 3)[:-4]
        scanner = scan_stream(io.BytesIO(whole + cut), 3)
        seen = []
        with pytest.raises(TruncatedFrame) as exc:
            for frame in scanner:
                seen.append(frame)
        assert len(seen) == 3
        assert exc.value.frame_index == 4

    def test_oversize_declared_length(self):
        head = struct.pack("<III", 0, 0, DEFAULT_MAX_FRAME_BYTES + 1)
        with pytest.raises(OversizeFrame) as exc:
            read_frame(io.BytesIO(head + b"x"), 1)
        assert exc.value.declared == DEFAULT_MAX_FRAME_BYTES + 1

    def test_oversize_cap_configurable(self):
        data = frames_bytes([Frame(0, 0, b"x" * 100)], 1)
        with pytest.raises(OversizeFrame):
            read_frame(io.BytesIO(data), 1, max_frame_bytes=99)
        frame = read_frame(io.BytesIO(data), 1, max_frame_bytes=100)
        assert frame.payload == b"x" * 100


class TestWriterStrictness:
    def test_microseconds_range(self):
        with pytest.raises(ValueError):
            write_frame(io.BytesIO(), Frame(0, 1_000_000, b""), 1)

    def test_seconds_range(self):
        with pytest.raises(ValueError):
            write_frame(io.BytesIO(), Frame(-1, 0, b""), 1)
        with pytest.raises(ValueError):
            write_frame(io.BytesIO(), Frame(2**32, 0, b""), 1)

    def test_empty_keypress_rejected(self):
        with pytest.raises(ValueError):
            write_frame(io.BytesIO(), Frame(0, 0, b"", channel=1), 3)

    def test_writer_rejects_backwards_timestamps(self):
        w = FrameWriter(io.BytesIO(), 3)
        w.write(Frame(5, 500, b"a", channel=0))
        with pytest.raises(ValueError):
            w.write(Frame(5, 499, b"b", channel=0))

    def test_writer_accepts_equal_timestamps(self):
        w = FrameWriter(io.BytesIO(), 3)
        w.write(Frame(5, 500, b"a", channel=0))
        w.write(Frame(5, 500, b"b", channel=0))
        assert w.frames_written == 2

    def test_reader_tolerates_backwards_timestamps(self):
        data = frames_bytes([Frame(5, 0, b"a"), Frame(4, 0, b"b")], 1)
        scanner = scan_stream(io.BytesIO(data), 1)
        with pytest.warns(NonMonotonicTimestamp):
            frames = list(scanner)
        assert [f.seconds for f in frames] == [5, 4]


class TestScanner:
    def test_channel_counts(self):
        frames = [
            Frame(0, 0, b"out", channel=0),
            Frame(0, 1, b"k", channel=1),
            Frame(0, 2, b"12", channel=2),
            Frame(0, 3, b"more", channel=0),
        ]
        scanner = scan_stream(io.BytesIO(frames_bytes(frames, 3)), 3)
        assert len(list(scanner)) == 4
        assert scanner.counts == (2, 1, 1)
        assert scanner.frames_scanned == 4

    def test_v1_counts_as_output(self):
        frames = [Frame(0, i, b"x") for i in range(3)]
        scanner = scan_stream(io.BytesIO(frames_bytes(frames, 1)), 1)
        list(scanner)
        assert scanner.counts == (3, 0, 0)

    def test_empty_payload_roundtrip(self):
        data = frames_bytes([Frame(1, 2, b"", channel=0)], 3)
        frame = read_frame(io.BytesIO(data), 3)
        assert frame.payload == b""


class TestCompressedIO:
    def test_plain_file_roundtrip(self, tmp_path):
        path = tmp_path / "rec.ttyrec3"
        with write_compressed(path) as sink:
            write_frame(sink, Frame(7, 8, b"hello", channel=0), 3)
        assert list(iter_frames(path)) == [Frame(7, 8, b"hello", 0)]

    def test_bz2_roundtrip_and_transparency(self, tmp_path):
        frames = [Frame(i, i % 1000, bytes([65 + i % 26]) * 40, channel=0)
                  for i in range(200)]
        plain = tmp_path / "rec.ttyrec3"
        packed = tmp_path / "rec2.ttyrec3.bz2"
        with write_compressed(plain) as sink:
            for f in frames:
                write_frame(sink, f, 3)
        with write_compressed(packed) as sink:
            for f in frames:
                write_frame(sink, f, 3)
        assert list(iter_frames(plain)) == list(iter_frames(packed))
        # The .bz2 payload really is bzip2 on disk.
        assert packed.read_bytes()[:3] == b"BZh"

    def test_empty_bz2_is_clean_eof(self, tmp_path):
        path = tmp_path / "empty.ttyrec.bz2"
        write_compressed(path).close()
        with open_compressed(path) as source:
            assert read_frame(source, 1) is None

    def test_corrupt_bz2_reports_compressed_offset(self, tmp_path):
        path = tmp_path / "bad.ttyrec.bz2"
        good = bz2.compress(frames_bytes(
            [Frame(i, 0, b"q" * 300) for i in range(500)], 1))
        # Flip bytes just past the block magic so the coding tables are
        # structurally invalid rather than decoding to garbage.
        bad = bytearray(good)
        for i in range(14, 22):
            bad[i] ^= 0xFF
        path.write_bytes(bytes(bad))
        source = open_compressed(path)
        with pytest.raises(CorruptArchive) as exc:
            while read_frame(source, 1) is not None:
                pass
        assert exc.value.compressed_offset is not None
        assert 0 < exc.value.compressed_offset <= len(bad)

    def test_truncated_bz2_reports_corrupt_archive(self, tmp_path):
        path = tmp_path / "cut.ttyrec.bz2"
        good = bz2.compress(frames_bytes(
            [Frame(i, 0, b"data" * 100) for i in range(200)], 1))
        path.write_bytes(good[: len(good) // 2])
        source = open_compressed(path)
        with pytest.raises(CorruptArchive):
            while read_frame(source, 1) is not None:
                pass

    def test_missing_file_is_oserror(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            open_compressed(tmp_path / "nope.ttyrec.bz2")


@st.composite
def frame_strategy(draw, version):
    channel = draw(st.sampled_from([0, 1, 2])) if version == 3 else None
    if channel == 1:
        payload = draw(st.binary(min_size=1, max_size=64))
    else:
        payload = draw(st.binary(max_size=64))
    return Frame(
        seconds=draw(st.integers(0, 2**32 - 1)),
        microseconds=draw(st.integers(0, 999_999)),
        payload=payload,
        channel=channel,
    )


@pytest.mark.filterwarnings("ignore::ttystream.errors.NonMonotonicTimestamp")
class TestRoundTripProperties:
    @settings(max_examples=200)
    @given(st.lists(frame_strategy(version=1), max_size=20))
    def test_v1_roundtrip(self, frames):
        data = frames_bytes(frames, 1)
        assert list(scan_stream(io.BytesIO(data), 1)) == frames

    @settings(max_examples=200)
    @given(st.lists(frame_strategy(version=3), max_size=20))
    def test_v3_roundtrip(self, frames):
        data = frames_bytes(frames, 3)
        assert list(scan_stream(io.BytesIO(data), 3)) == frames

    @settings(max_examples=100)
    @given(frame_strategy(version=3))
    def test_v3_header_is_13_bytes(self, frame):
        data = frames_bytes([frame], 3)
        assert len(data) == 13 + len(frame.payload)
        assert data[12] == frame.channel
