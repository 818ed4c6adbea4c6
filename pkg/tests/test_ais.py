import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oceanforge import ais
from oceanforge.errors import (
    EmptyPayload,
    FieldOutOfRange,
    InvalidArmorChar,
    MalformedSentence,
    MalformedTimestamp,
    MmsiOutOfRange,
    TruncatedBitstream,
    UnrepresentableValue,
    UnsupportedMsgType,
)

REFERENCE_REPORT = ais.PositionReport(
    msg_type=3, lon_raw=-74070840, lat_raw=29261820, sog_raw=0, cog_raw=186, true_heading=285
)


def days_from_civil(y, m, d):
    # Howard Hinnant's proleptic Gregorian day count, independent of datetime
    y -= m <= 2
    era = (y if y >= 0 else y - 399) // 400
    yoe = y - era * 400
    doy = (153 * (m + (-3 if m > 2 else 9)) + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


class TestSixbit:
    def test_origin_and_endpoint(self):
        assert str(ais.decode_sixbit("0")) == "000000"
        assert str(ais.decode_sixbit("w")) == "111111"

    @pytest.mark.parametrize("bad", ["X", " ", "0,1", "`" + "\x7f", "é"])
    def test_rejects_outside_alphabet(self, bad):
        with pytest.raises(InvalidArmorChar):
            ais.decode_sixbit(bad)

    def test_empty(self):
        with pytest.raises(EmptyPayload):
            ais.decode_sixbit("")

    def test_every_legal_char_maps_to_its_value(self):
        legal = [chr(c) for c in range(0x30, 0x58)] + [chr(c) for c in range(0x60, 0x78)]
        assert len(legal) == 64
        values = [ais.decode_sixbit(ch).uint(0, 6) for ch in legal]
        assert values == list(range(64))

    @given(st.text(alphabet=[chr(c) for c in range(0x30, 0x58)] + [chr(c) for c in range(0x60, 0x78)],
                   min_size=1, max_size=80))
    def test_length_and_repack(self, payload):
        bits = ais.decode_sixbit(payload)
        assert len(bits) == 6 * len(payload)
        assert bits.to_payload() == (payload, 0)

    def test_fill_bits_trimmed(self):
        assert len(ais.decode_sixbit("w0", fill_bits=2)) == 10


class TestPositionReport:
    def test_reference_record(self):
        rep = ais.decode_position_report(ais.encode_position_report(REFERENCE_REPORT))
        assert rep.x == pytest.approx(-123.4514, abs=1e-4)
        assert rep.y == pytest.approx(48.7697, abs=1e-4)
        assert rep.sog == 0.0
        assert rep.cog == pytest.approx(18.6)
        assert rep.true_heading == 285
        assert rep.msg_type == 3

    def test_from_values_matches_raw(self):
        r = ais.PositionReport.from_values(x=-123.4514, y=48.7697, sog=0.0, cog=18.6,
                                           true_heading=285, msg_type=3)
        assert r == REFERENCE_REPORT

    def test_all_zero_stream(self):
        bits = bytearray(168)
        bits[5] = 1  # type 1
        rep = ais.decode_position_report(ais.BitStream(bytes(bits)))
        assert (rep.mmsi, rep.sog, rep.cog, rep.x, rep.y) == (0, 0.0, 0.0, 0.0, 0.0)

    def test_zero_record_encodes_to_zero_fields(self):
        bits = ais.encode_position_report(ais.PositionReport(msg_type=1))
        assert str(bits)[6:] == "0" * 162

    def test_truncated(self):
        bits = bytearray(100)
        bits[5] = 1
        with pytest.raises(TruncatedBitstream):
            ais.decode_position_report(ais.BitStream(bytes(bits)))

    def test_144_bit_stream_accepted(self):
        full = ais.encode_position_report(REFERENCE_REPORT)
        rep = ais.decode_position_report(ais.BitStream(full.bits[:144]))
        assert rep.lon_raw == REFERENCE_REPORT.lon_raw and rep.true_heading == 285

    def test_unsupported_type(self):
        with pytest.raises(UnsupportedMsgType):
            ais.decode_position_report(ais.encode_static_report(1, 70))

    @pytest.mark.parametrize("field,value", [("lat_raw", 91 * 600000), ("lon_raw", 181 * 600000),
                                             ("cog_raw", 3700), ("true_heading", 400)])
    def test_out_of_range_raises(self, field, value):
        buf = bytearray(ais.encode_position_report(REFERENCE_REPORT).bits)
        layout = {n: (s, w, sg) for n, s, w, sg in ais.POSITION_LAYOUT}
        start, width, _ = layout[field]
        ais._put(buf, start, width, value, layout[field][2], field)
        with pytest.raises(FieldOutOfRange):
            ais.decode_position_report(ais.BitStream(bytes(buf)))

    def test_sentinels(self):
        r = ais.PositionReport(msg_type=1, sog_raw=1023, cog_raw=3600, true_heading=511)
        back = ais.decode_position_report(ais.encode_position_report(r))
        assert back.sog is None and back.cog is None and back.true_heading == 511

    def test_unrepresentable(self):
        with pytest.raises(UnrepresentableValue):
            ais.PositionReport.from_values(x=0, y=0, sog=102.3)
        with pytest.raises(UnrepresentableValue):
            ais.encode_position_report(ais.PositionReport(mmsi=1 << 30))


position_reports = st.builds(
    ais.PositionReport,
    msg_type=st.sampled_from([1, 2, 3]),
    repeat=st.integers(0, 3),
    mmsi=st.integers(0, (1 << 30) - 1),
    nav_status=st.integers(0, 15),
    rot=st.integers(-128, 127),
    sog_raw=st.integers(0, 1023),
    accuracy=st.integers(0, 1),
    lon_raw=st.integers(-180 * 600000, 180 * 600000),
    lat_raw=st.integers(-90 * 600000, 90 * 600000),
    cog_raw=st.integers(0, 3600),
    true_heading=st.one_of(st.integers(0, 359), st.just(511)),
    second=st.integers(0, 63),
    maneuver=st.integers(0, 3),
    spare=st.integers(0, 7),
    raim=st.integers(0, 1),
    radio=st.integers(0, (1 << 19) - 1),
)


@settings(max_examples=1000, deadline=None)
@given(position_reports)
def test_round_trip_property(report):
    bits = ais.encode_position_report(report)
    assert len(bits) == 168
    assert ais.decode_position_report(bits) == report
    payload, fill = bits.to_payload()
    assert ais.decode_position_report(ais.decode_sixbit(payload, fill)) == report


@settings(max_examples=200, deadline=None)
@given(position_reports)
def test_decoded_coordinates_in_bounds(report):
    rep = ais.decode_position_report(ais.encode_position_report(report))
    assert -180 <= rep.x <= 180 and -90 <= rep.y <= 90


class TestStaticReport:
    @pytest.mark.parametrize("code", [70, 0, 255, 52])
    def test_ship_type(self, code):
        assert ais.decode_static_report(ais.encode_static_report(316001234, code)) == code

    def test_offsets_against_manual_layout(self):
        bits = ais.encode_static_report(0, 70)
        s = str(bits)
        assert s[:6] == "000101"
        assert s[232:240] == format(70, "08b")
        assert set(s[240:]) == {"0"}

    def test_wrong_type(self):
        with pytest.raises(UnsupportedMsgType):
            ais.decode_static_report(ais.encode_position_report(REFERENCE_REPORT))

    def test_truncated(self):
        with pytest.raises(TruncatedBitstream):
            ais.decode_static_report(ais.BitStream(ais.encode_static_report(1, 70).bits[:200]))

    def test_armored_round_trip(self):
        payload, fill = ais.encode_static_report(123456789, 80).to_payload()
        st_ = ais.parse_static_report(ais.decode_sixbit(payload, fill))
        assert st_ == ais.StaticReport(123456789, 80)


class TestAnonymize:
    def test_deterministic(self):
        assert ais.anonymize_mmsi(316001234, b"s") == ais.anonymize_mmsi(316001234, b"s")

    def test_salt_dependence(self):
        assert ais.anonymize_mmsi(316001234, b"a") != ais.anonymize_mmsi(316001234, b"b")

    def test_distinct(self):
        ids, _ = ais.build_id_map([316001234, 316001235], b"s")
        assert len(set(ids.values())) == 2

    def test_range(self):
        with pytest.raises(MmsiOutOfRange):
            ais.anonymize_mmsi(10**9, b"s")
        with pytest.raises(MmsiOutOfRange):
            ais.anonymize_mmsi(-1, b"s")

    def test_injective_on_1e5_random_mmsis(self):
        r = random.Random(7)
        mmsis = r.sample(range(10**9), 100_000)
        ids, salt = ais.build_id_map(mmsis, b"corpus")
        assert len(set(ids.values())) == len(mmsis)
        assert all(ids[m] == ais.anonymize_mmsi(m, salt) for m in mmsis[:100])

    def test_resalt_on_forced_collision(self, monkeypatch):
        real = ais.anonymize_mmsi

        def colliding(mmsi, salt):
            return 0 if salt == b"s" else real(mmsi, salt)

        monkeypatch.setattr(ais, "anonymize_mmsi", colliding)
        ids, salt = ais.build_id_map([1, 2, 3], b"s")
        assert salt != b"s" and len(set(ids.values())) == 3


class TestTimestamp:
    def test_origin(self):
        assert ais.parse_ais_timestamp("19700101T000000.000Z") == 0

    def test_reference_timestamp_against_calendar_oracle(self):
        expected = (days_from_civil(2020, 7, 15) * 86400) * 1000 + 36
        assert expected == 1594771200036
        assert ais.parse_ais_timestamp("20200715T000000.036Z") == expected

    @pytest.mark.parametrize("bad", ["2020-07-15", "20200715 000000.036Z", "20200715T000000.036",
                                     "20200715T0000a0.036Z", "20201315T000000.036Z", ""])
    def test_malformed(self, bad):
        with pytest.raises(MalformedTimestamp):
            ais.parse_ais_timestamp(bad)

    @given(st.integers(0, 4102444800000))
    def test_format_round_trip(self, ms):
        assert ais.parse_ais_timestamp(ais.format_ais_timestamp(ms)) == ms

    @settings(max_examples=300)
    @given(st.datetimes(min_value=__import__("datetime").datetime(1970, 1, 1),
                        max_value=__import__("datetime").datetime(2100, 1, 1)))
    def test_against_day_count_oracle(self, dt):
        s = dt.strftime("%Y%m%dT%H%M%S") + f".{dt.microsecond // 1000:03d}Z"
        expected = ((days_from_civil(dt.year, dt.month, dt.day) * 24 + dt.hour) * 60 + dt.minute) * 60 + dt.second
        assert ais.parse_ais_timestamp(s) == expected * 1000 + dt.microsecond // 1000


class TestNmea:
    def test_single_sentence(self):
        payload, fill = ais.encode_position_report(REFERENCE_REPORT).to_payload()
        line = ais.format_nmea_sentence(payload, fill)
        frag = ais.parse_nmea_sentence(line)
        assert frag.payload == payload and frag.count == 1

    def test_known_checksum(self):
        # widely published example sentence
        line = "!AIVDM,1,1,,B,177KQJ5000G?tO`K>RA1wUbN0TKH,0*5C"
        frag = ais.parse_nmea_sentence(line)
        rep = ais.decode_position_report(ais.decode_sixbit(frag.payload, frag.fill_bits))
        assert rep.mmsi == 477553000
        assert rep.sog == 0.0 and rep.true_heading == 181

    def test_bad_checksum(self):
        with pytest.raises(MalformedSentence):
            ais.parse_nmea_sentence("!AIVDM,1,1,,B,177KQJ5000G?tO`K>RA1wUbN0TKH,0*5D")

    def test_multipart(self):
        payload, fill = ais.encode_static_report(316001234, 70).to_payload()
        a, b = payload[:40], payload[40:]
        asm = ais.FragmentAssembler()
        assert asm.push(ais.NmeaFragment(2, 1, "3", "A", a, 0)) is None
        bits = asm.push(ais.NmeaFragment(2, 2, "3", "A", b, fill))
        assert ais.decode_static_report(bits) == 70


class TestDecodeLines:
    def test_bare_and_nmea_lines(self):
        pos_payload, _ = ais.encode_position_report(
            ais.PositionReport(msg_type=3, mmsi=316001234, lon_raw=-74070840, lat_raw=29261820,
                               cog_raw=186, true_heading=285)).to_payload()
        st_payload, fill = ais.encode_static_report(316001234, 70).to_payload()
        lines = [
            f"{pos_payload}\t20200715T000000.036Z",
            f"{ais.format_nmea_sentence(st_payload, fill)}\t20200715T000001.000Z",
            "34cG;tE000o:pUBKt00hf's l0Drb,024\t20200715T000000.036Z",
            "garbage",
        ]
        records, summary = ais.decode_lines(lines, b"salt")
        assert len(records) == 1
        rec = records[0]
        assert rec.x == pytest.approx(-123.4514) and rec.ship_type_code == 70
        assert rec.id == ais.anonymize_mmsi(316001234, b"salt")
        assert "mmsi" not in rec.to_dict()
        assert summary.skipped == 2 and summary.statics == 1
