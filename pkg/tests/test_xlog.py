"""Metadata log parsing, writing, bitfields, and pseudonymization."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttystream.errors import FieldTypeError, MalformedLine
from ttystream.xlog import (
    ACHIEVEMENT_BITS,
    CONDUCT_BITS,
    GAME_FLAG_BITS,
    GameRecord,
    decode_achievements,
    decode_conducts,
    decode_game_flags,
    encode_achievements,
    encode_conducts,
    parse_xlog_line,
    pseudonymize,
    write_xlog_line,
)

SAMPLE_COLON = (
    "version=3.6.6:points=1204:deathdnum=0:deathlev=4:maxlvl=5:hp=-2:maxhp=45"
    ":deaths=1:deathdate=20200117:birthdate=20200115:uid=5:role=Val:race=Dwa"
    ":gender=Fem:align=Law:name=alice:death=killed by a soldier ant"
    ":conduct=0x800:turns=3123:achieve=0x0:realtime=4580:starttime=1579042140"
    ":endtime=1579128540:gender0=Fem:align0=Law:flags=0x4"
)


class TestParsing:
    def test_colon_separated(self):
        rec = parse_xlog_line(SAMPLE_COLON)
        assert rec.version == "3.6.6"
        assert rec.points == 1204
        assert rec.hp == -2
        assert rec.role == "Val"
        assert rec.death == "killed by a soldier ant"
        assert rec.conduct == 0x800
        assert rec.starttime == 1579042140
        assert rec.endtime == 1579128540
        assert rec.flags == 0x4
        assert rec.extra == {}
        assert rec.gameid is None

    def test_tab_separated_with_escapes(self):
        line = "name=ka\tdeath=caught by%3A a trap%09door\tpoints=7"
        rec = parse_xlog_line(line)
        assert rec.name == "ka"
        assert rec.death == "caught by: a trap\tdoor"
        assert rec.points == 7

    def test_percent_escape_order(self):
        # %2509 unescapes to %09 (literal), not to a TAB.
        rec = parse_xlog_line("death=x%2509y\tpoints=1")
        assert rec.death == "x%09y"

    def test_unknown_keys_preserved(self):
        rec = parse_xlog_line("points=3:futurefield=hello:name=bob")
        assert rec.extra == {"futurefield": "hello"}

    def test_bitfield_hex_and_decimal(self):
        assert parse_xlog_line("conduct=0x021").conduct == 33
        assert parse_xlog_line("conduct=33").conduct == 33
        assert parse_xlog_line("achieve=0X0410").achieve == 0x0410

    def test_bad_int_field(self):
        with pytest.raises(FieldTypeError) as exc:
            parse_xlog_line("points=lots:name=x")
        assert exc.value.key == "points"

    def test_bad_bitfield(self):
        with pytest.raises(FieldTypeError):
            parse_xlog_line("conduct=0xZZ")

    def test_no_pairs_is_malformed(self):
        with pytest.raises(MalformedLine):
            parse_xlog_line("this line has no pairs")
        with pytest.raises(MalformedLine):
            parse_xlog_line("")

    def test_chunks_without_equals_skipped(self):
        rec = parse_xlog_line("junk:points=5:alsojunk")
        assert rec.points == 5

    def test_negative_turns_parse(self):
        assert parse_xlog_line("turns=-3").turns == -3

    @settings(max_examples=300)
    @given(st.text(max_size=200))
    def test_fuzz_never_crashes_unexpectedly(self, line):
        try:
            parse_xlog_line(line)
        except (MalformedLine, FieldTypeError):
            pass


class TestWriting:
    def test_writer_emits_tabs_and_hex_bitfields(self):
        rec = GameRecord(points=10, conduct=0x21, name="bob")
        line = write_xlog_line(rec)
        assert "\t" in line and ":" not in line.replace("%3A", "")
        assert "conduct=0x21" in line
        assert "achieve=0x0" in line

    def test_writer_escapes_separator_bytes(self):
        rec = GameRecord(death="killed by: a %\ttricky\nname")
        line = write_xlog_line(rec)
        assert "\t".join(line.split("\t")) == line
        assert "death=killed by%3A a %25%09tricky%0Aname" in line

    def test_roundtrip_preserves_everything_but_gameid(self):
        rec = parse_xlog_line(SAMPLE_COLON)
        rec.gameid = 42
        again = parse_xlog_line(write_xlog_line(rec))
        rec.gameid = None
        assert again == rec

    def test_roundtrip_unknown_keys(self):
        rec = GameRecord(extra={"newkey": "va:l\tue"})
        assert parse_xlog_line(write_xlog_line(rec)).extra == rec.extra


record_strategy = st.builds(
    GameRecord,
    points=st.integers(-10, 10**9),
    turns=st.integers(-5, 10**6),
    hp=st.integers(-200, 500),
    conduct=st.integers(0, 0xFFF),
    achieve=st.integers(0, 0x3FFF),
    flags=st.integers(0, 7),
    starttime=st.integers(0, 2**31),
    endtime=st.integers(0, 2**31),
    role=st.sampled_from(["Arc", "Val", "Wiz"]),
    name=st.text(
        st.characters(codec="utf-8", exclude_characters="\r"), max_size=12),
    death=st.text(
        st.characters(codec="utf-8", exclude_characters="\r"), max_size=40),
)


class TestRoundTripProperty:
    @settings(max_examples=250)
    @given(record_strategy)
    def test_write_parse_identity(self, rec):
        assert parse_xlog_line(write_xlog_line(rec)) == rec


class TestBitfields:
    def test_conduct_table_shape(self):
        assert len(CONDUCT_BITS) == 12
        assert [m for m, _, _ in CONDUCT_BITS] == [1 << i for i in range(12)]

    def test_achievement_table_shape(self):
        assert len(ACHIEVEMENT_BITS) == 14
        assert [m for m, _, _ in ACHIEVEMENT_BITS] == [
            1 << i for i in range(14)]

    def test_conduct_33(self):
        # 33 == 0x021: bits 0x001 and 0x020.
        assert decode_conducts(33) == ["Foodless", "Pacifist"]
        assert decode_conducts(0x021) == ["Foodless", "Pacifist"]

    def test_achieve_0x0410(self):
        assert decode_achievements(0x0410) == [
            "Performed the Invocation", "Finished Sokoban"]

    def test_zero_decodes_empty(self):
        assert decode_conducts(0) == []
        assert decode_achievements(0) == []
        assert decode_game_flags(0) == []

    def test_game_flags(self):
        assert decode_game_flags(0x7) == [
            "Wizard mode", "Discover mode", "Never loaded a Bones file"]

    def test_ascended_bit(self):
        assert "Ascended" in decode_achievements(0x100)

    def test_encode_decode_identity_sampled(self):
        for bits in (0, 1, 0x21, 0x800, 0xFFF):
            assert encode_conducts(decode_conducts(bits)) == bits
        for bits in (0, 0x0410, 0x2000, 0x3FFF):
            assert encode_achievements(decode_achievements(bits)) == bits

    def test_encode_unknown_name(self):
        with pytest.raises(ValueError):
            encode_conducts(["Notathing"])

    def test_ignored_high_bits_decode_without_error(self):
        assert decode_conducts(0x1000 | 0x1) == ["Foodless"]


class TestPseudonymize:
    def test_shape_and_stability(self):
        alias = pseudonymize("alice", b"k1")
        assert len(alias) == 12
        assert all(c in "0123456789abcdef" for c in alias)
        assert pseudonymize("alice", b"k1") == alias

    def test_distinct_names_and_keys(self):
        assert pseudonymize("alice", b"k1") != pseudonymize("bob", b"k1")
        assert pseudonymize("alice", b"k1") != pseudonymize("alice", b"k2")
