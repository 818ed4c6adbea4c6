"""AIS payload decoding: 6-bit armoring, position (types 1-3) and static (type 5) reports.

Field layouts follow ITU-R M.1371. Raw MMSIs only live inside the transient
``PositionReport``/``StaticReport`` objects; records written out carry an
anonymized vessel id instead.
"""

from __future__ import annotations

import calendar
import hashlib
import hmac
import re
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Iterable, Iterator

from . import kernels
from .errors import (
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

POSITION_TYPES = (1, 2, 3)
STATIC_TYPE = 5
MIN_POSITION_BITS = 144
POSITION_BITS = 168
MIN_STATIC_BITS = 240
STATIC_BITS = 424

COORD_SCALE = 600_000  # 1/10000 minute
SOG_NOT_AVAILABLE = 1023
COG_NOT_AVAILABLE = 3600
HEADING_NOT_AVAILABLE = 511

# (name, start, width, signed) for message types 1/2/3
POSITION_LAYOUT = (
    ("msg_type", 0, 6, False),
    ("repeat", 6, 2, False),
    ("mmsi", 8, 30, False),
    ("nav_status", 38, 4, False),
    ("rot", 42, 8, True),
    ("sog_raw", 50, 10, False),
    ("accuracy", 60, 1, False),
    ("lon_raw", 61, 28, True),
    ("lat_raw", 89, 27, True),
    ("cog_raw", 116, 12, False),
    ("true_heading", 128, 9, False),
    ("second", 137, 6, False),
    ("maneuver", 143, 2, False),
    ("spare", 145, 3, False),
    ("raim", 148, 1, False),
    ("radio", 149, 19, False),
)

SHIP_TYPE_OFFSET = 232


@dataclass(frozen=True)
class BitStream:
    """MSB-first bit sequence, one byte (0 or 1) per bit."""

    bits: bytes

    def __len__(self) -> int:
        return len(self.bits)

    def uint(self, start: int, width: int) -> int:
        return kernels.read_uint(self.bits, start, width)

    def int(self, start: int, width: int) -> int:
        return kernels.read_int(self.bits, start, width)

    @property
    def msg_type(self) -> int:
        if len(self.bits) < 6:
            raise TruncatedBitstream(f"{len(self.bits)} bits cannot hold a message type")
        return self.uint(0, 6)

    def to_payload(self) -> tuple[str, int]:
        """Armor back to text; returns (payload, fill_bits)."""
        fill = (-len(self.bits)) % 6
        return kernels.sixbit_pack(self.bits).decode("ascii"), fill

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_string(cls, s: str) -> "BitStream":
        return cls(bytes(1 if c == "1" else 0 for c in s if c in "01"))


def decode_sixbit(payload: str, fill_bits: int = 0) -> BitStream:
    if not payload:
        raise EmptyPayload("AIS payload is empty")
    try:
        raw = payload.encode("ascii")
    except UnicodeEncodeError as exc:
        raise InvalidArmorChar(payload[exc.start], exc.start) from None
    try:
        bits = kernels.sixbit_unpack(raw)
    except ValueError as exc:
        i = exc.args[0]
        raise InvalidArmorChar(payload[i], i) from None
    if fill_bits:
        bits = bits[:-fill_bits]
    return BitStream(bits)


@dataclass(frozen=True)
class PositionReport:
    """Raw integer fields of a type 1/2/3 message, exactly as transmitted."""

    msg_type: int = 1
    repeat: int = 0
    mmsi: int = 0
    nav_status: int = 0
    rot: int = 0
    sog_raw: int = 0
    accuracy: int = 0
    lon_raw: int = 0
    lat_raw: int = 0
    cog_raw: int = 0
    true_heading: int = 0
    second: int = 0
    maneuver: int = 0
    spare: int = 0
    raim: int = 0
    radio: int = 0

    @property
    def x(self) -> float:
        return self.lon_raw / COORD_SCALE

    @property
    def y(self) -> float:
        return self.lat_raw / COORD_SCALE

    @property
    def sog(self) -> float | None:
        return None if self.sog_raw == SOG_NOT_AVAILABLE else self.sog_raw / 10

    @property
    def cog(self) -> float | None:
        return None if self.cog_raw == COG_NOT_AVAILABLE else self.cog_raw / 10

    @classmethod
    def from_values(
        cls,
        *,
        x: float,
        y: float,
        sog: float | None = 0.0,
        cog: float | None = 0.0,
        true_heading: int = HEADING_NOT_AVAILABLE,
        mmsi: int = 0,
        msg_type: int = 1,
    ) -> "PositionReport":
        """Quantize engineering values to the wire resolution."""
        if sog is None:
            sog_raw = SOG_NOT_AVAILABLE
        else:
            sog_raw = round(sog * 10)
            if not 0 <= sog_raw <= 1022:
                raise UnrepresentableValue(f"sog {sog} kn outside 0..102.2")
        if cog is None:
            cog_raw = COG_NOT_AVAILABLE
        else:
            cog_raw = round(cog * 10)
            if not 0 <= cog_raw < 3600:
                raise UnrepresentableValue(f"cog {cog} outside [0, 360)")
        return cls(
            msg_type=msg_type,
            mmsi=mmsi,
            sog_raw=sog_raw,
            lon_raw=round(x * COORD_SCALE),
            lat_raw=round(y * COORD_SCALE),
            cog_raw=cog_raw,
            true_heading=true_heading,
        )


def _validate_position(r: PositionReport, exc: type[Exception]) -> None:
    if abs(r.lon_raw) > 180 * COORD_SCALE:
        raise exc(f"longitude {r.x} outside [-180, 180]")
    if abs(r.lat_raw) > 90 * COORD_SCALE:
        raise exc(f"latitude {r.y} outside [-90, 90]")
    if r.cog_raw > COG_NOT_AVAILABLE:
        raise exc(f"course field {r.cog_raw} outside 0..3600")
    if not (0 <= r.true_heading <= 359 or r.true_heading == HEADING_NOT_AVAILABLE):
        raise exc(f"heading {r.true_heading} neither 0..359 nor 511")


def decode_position_report(bits: BitStream) -> PositionReport:
    msg_type = bits.msg_type
    if msg_type not in POSITION_TYPES:
        raise UnsupportedMsgType(f"message type {msg_type} is not a position report")
    if len(bits) < MIN_POSITION_BITS:
        raise TruncatedBitstream(f"position report needs {MIN_POSITION_BITS} bits, got {len(bits)}")
    fields = {}
    for name, start, width, signed in POSITION_LAYOUT:
        if start + width > len(bits):
            # short (144..167 bit) streams lose the trailing radio fields only
            fields[name] = 0
        elif signed:
            fields[name] = bits.int(start, width)
        else:
            fields[name] = bits.uint(start, width)
    report = PositionReport(**fields)
    _validate_position(report, FieldOutOfRange)
    return report


def _put(buf: bytearray, start: int, width: int, value: int, signed: bool, name: str) -> None:
    if signed:
        lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    else:
        lo, hi = 0, (1 << width) - 1
    if not lo <= value <= hi:
        raise UnrepresentableValue(f"{name}={value} does not fit {width} bits")
    value &= (1 << width) - 1
    for i in range(width):
        buf[start + i] = (value >> (width - 1 - i)) & 1


def encode_position_report(report: PositionReport) -> BitStream:
    """Bit-level inverse of ``decode_position_report`` (used as a test oracle)."""
    if report.msg_type not in POSITION_TYPES:
        raise UnrepresentableValue(f"message type {report.msg_type} is not a position report")
    if report.sog_raw > SOG_NOT_AVAILABLE:
        raise UnrepresentableValue(f"sog field {report.sog_raw} exceeds 1023")
    _validate_position(report, UnrepresentableValue)
    buf = bytearray(POSITION_BITS)
    for name, start, width, signed in POSITION_LAYOUT:
        _put(buf, start, width, getattr(report, name), signed, name)
    return BitStream(bytes(buf))


@dataclass(frozen=True)
class StaticReport:
    mmsi: int
    ship_type: int


def parse_static_report(bits: BitStream) -> StaticReport:
    msg_type = bits.msg_type
    if msg_type != STATIC_TYPE:
        raise UnsupportedMsgType(f"message type {msg_type} is not a static report")
    if len(bits) < MIN_STATIC_BITS:
        raise TruncatedBitstream(f"static report needs {MIN_STATIC_BITS} bits, got {len(bits)}")
    return StaticReport(mmsi=bits.uint(8, 30), ship_type=bits.uint(SHIP_TYPE_OFFSET, 8))


def decode_static_report(bits: BitStream) -> int:
    """Ship-type code (0-255) of a type 5 message."""
    return parse_static_report(bits).ship_type


def encode_static_report(mmsi: int, ship_type: int) -> BitStream:
    """Minimal type 5 message; everything but MMSI and ship type left zero."""
    buf = bytearray(STATIC_BITS)
    _put(buf, 0, 6, STATIC_TYPE, False, "msg_type")
    _put(buf, 8, 30, mmsi, False, "mmsi")
    _put(buf, SHIP_TYPE_OFFSET, 8, ship_type, False, "ship_type")
    return BitStream(bytes(buf))


# --- anonymization -----------------------------------------------------------

def anonymize_mmsi(mmsi: int, salt: bytes) -> int:
    """Keyed 32-bit vessel id; deterministic for a given (mmsi, salt)."""
    if not 0 <= mmsi < 10**9:
        raise MmsiOutOfRange(f"MMSI {mmsi} outside 0..999999999")
    digest = hmac.new(salt, b"%09d" % mmsi, hashlib.sha256).digest()
    return int.from_bytes(digest[:4], "big")


def build_id_map(mmsis: Iterable[int], salt: bytes, max_attempts: int = 64) -> tuple[dict[int, int], bytes]:
    """Injective mmsi -> id map over a corpus, re-salting on any collision.

    Returns the map and the salt that produced it.
    """
    unique = sorted(set(mmsis))
    for attempt in range(max_attempts):
        s = salt if attempt == 0 else salt + b"/resalt/%d" % attempt
        ids = {m: anonymize_mmsi(m, s) for m in unique}
        if len(set(ids.values())) == len(ids):
            return ids, s
    raise RuntimeError(f"no collision-free salt after {max_attempts} attempts")


# --- timestamps ----------------------------------------------------------------

_TS_RE = re.compile(r"(\d{4})(\d{2})(\d{2})T(\d{2})(\d{2})(\d{2})\.(\d{3})Z")


def parse_ais_timestamp(s: str) -> int:
    """``YYYYMMDDTHHMMSS.mmmZ`` (UTC) -> epoch milliseconds."""
    m = _TS_RE.fullmatch(s.strip())
    if m is None:
        raise MalformedTimestamp(f"expected YYYYMMDDTHHMMSS.mmmZ, got {s!r}")
    year, month, day, hh, mm, ss, ms = map(int, m.groups())
    try:
        dt = datetime(year, month, day, hh, mm, ss, tzinfo=timezone.utc)
    except ValueError as exc:
        raise MalformedTimestamp(f"{s!r}: {exc}") from None
    return calendar.timegm(dt.timetuple()) * 1000 + ms


def format_ais_timestamp(epoch_ms: int) -> str:
    secs, ms = divmod(epoch_ms, 1000)
    dt = datetime.fromtimestamp(secs, tz=timezone.utc)
    return dt.strftime("%Y%m%dT%H%M%S") + f".{ms:03d}Z"


# --- NMEA framing ----------------------------------------------------------------

@dataclass(frozen=True)
class NmeaFragment:
    count: int
    index: int
    seq_id: str
    channel: str
    payload: str
    fill_bits: int


def nmea_checksum(body: str) -> str:
    acc = 0
    for ch in body:
        acc ^= ord(ch)
    return f"{acc:02X}"


def parse_nmea_sentence(line: str, verify: bool = True) -> NmeaFragment:
    line = line.strip()
    if not line.startswith("!") or "*" not in line:
        raise MalformedSentence(f"not an NMEA AIS sentence: {line!r}")
    body, _, check = line[1:].partition("*")
    if verify and nmea_checksum(body) != check.strip().upper()[:2]:
        raise MalformedSentence(f"checksum mismatch in {line!r}")
    parts = body.split(",")
    if len(parts) != 7 or not parts[0].endswith(("VDM", "VDO")):
        raise MalformedSentence(f"unexpected AIS sentence layout: {line!r}")
    try:
        return NmeaFragment(
            count=int(parts[1]),
            index=int(parts[2]),
            seq_id=parts[3],
            channel=parts[4],
            payload=parts[5],
            fill_bits=int(parts[6] or 0),
        )
    except ValueError:
        raise MalformedSentence(f"non-numeric fragment fields in {line!r}") from None


def format_nmea_sentence(payload: str, fill_bits: int = 0, channel: str = "A") -> str:
    body = f"AIVDM,1,1,,{channel},{payload},{fill_bits}"
    return f"!{body}*{nmea_checksum(body)}"


class FragmentAssembler:
    """Joins multipart sentences; ``push`` returns a BitStream once complete."""

    def __init__(self) -> None:
        self._pending: dict[tuple[str, str], list[NmeaFragment]] = {}

    def push(self, frag: NmeaFragment) -> BitStream | None:
        if frag.count == 1:
            return decode_sixbit(frag.payload, frag.fill_bits)
        key = (frag.seq_id, frag.channel)
        parts = self._pending.setdefault(key, [])
        if frag.index == 1:
            parts.clear()
        elif len(parts) != frag.index - 1:
            self._pending.pop(key, None)
            raise MalformedSentence(f"fragment {frag.index}/{frag.count} out of order")
        parts.append(frag)
        if len(parts) < frag.count:
            return None
        del self._pending[key]
        return decode_sixbit("".join(p.payload for p in parts), parts[-1].fill_bits)


# --- records ---------------------------------------------------------------------

@dataclass(frozen=True)
class DecodedAisRecord:
    x: float
    y: float
    sog: float | None
    cog: float | None
    true_heading: int
    ais_timestamp: int
    id: int
    msg_type: int
    ship_type_code: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DecodedAisRecord":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


def to_record(report: PositionReport, vessel_id: int, ais_timestamp: int,
              ship_type_code: int | None = None) -> DecodedAisRecord:
    return DecodedAisRecord(
        x=report.x,
        y=report.y,
        sog=report.sog,
        cog=report.cog,
        true_heading=report.true_heading,
        ais_timestamp=ais_timestamp,
        id=vessel_id,
        msg_type=report.msg_type,
        ship_type_code=ship_type_code,
    )


@dataclass
class DecodeSummary:
    lines: int = 0
    positions: int = 0
    statics: int = 0
    skipped: int = 0
    errors: dict | None = None


def iter_messages(lines: Iterable[str], summary: DecodeSummary | None = None,
                  verify_checksum: bool = True) -> Iterator[tuple[BitStream, int]]:
    """Yield (bitstream, epoch_ms) from ``payload<TAB>timestamp`` or NMEA lines.

    NMEA lines carry their timestamp in a trailing tab-separated column.
    Undecodable lines are counted in ``summary.errors`` and skipped.
    """
    summary = summary if summary is not None else DecodeSummary()
    if summary.errors is None:
        summary.errors = {}
    assembler = FragmentAssembler()
    for line in lines:
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        summary.lines += 1
        try:
            head, sep, ts = line.partition("\t")
            if not sep:
                raise MalformedTimestamp(f"line has no timestamp column: {line!r}")
            stamp = parse_ais_timestamp(ts)
            head = head.strip()
            if head.startswith("!"):
                bits = assembler.push(parse_nmea_sentence(head, verify=verify_checksum))
                if bits is None:
                    continue
            else:
                bits = decode_sixbit(head)
            yield bits, stamp
        except (ValueError, IndexError) as exc:
            summary.skipped += 1
            name = type(exc).__name__
            summary.errors[name] = summary.errors.get(name, 0) + 1


def decode_lines(lines: Iterable[str], salt: bytes,
                 verify_checksum: bool = True) -> tuple[list[DecodedAisRecord], DecodeSummary]:
    """Decode a message log into time-sorted, anonymized position records.

    Static (type 5) reports only contribute ship types, joined by MMSI.
    """
    summary = DecodeSummary(errors={})
    positions: list[tuple[PositionReport, int]] = []
    ship_types: dict[int, int] = {}
    for bits, stamp in iter_messages(lines, summary, verify_checksum):
        try:
            mt = bits.msg_type
            if mt in POSITION_TYPES:
                report = decode_position_report(bits)
                if report.mmsi >= 10**9:
                    raise MmsiOutOfRange(f"MMSI {report.mmsi} has more than 9 digits")
                positions.append((report, stamp))
                summary.positions += 1
            elif mt == STATIC_TYPE:
                st = parse_static_report(bits)
                ship_types[st.mmsi] = st.ship_type
                summary.statics += 1
            else:
                raise UnsupportedMsgType(f"message type {mt}")
        except (ValueError, IndexError) as exc:
            summary.skipped += 1
            name = type(exc).__name__
            summary.errors[name] = summary.errors.get(name, 0) + 1
    id_map, _ = build_id_map((r.mmsi for r, _ in positions), salt)
    records = [
        to_record(r, id_map[r.mmsi], stamp, ship_types.get(r.mmsi))
        for r, stamp in positions
    ]
    records.sort(key=lambda rec: rec.ais_timestamp)
    return records, summary
