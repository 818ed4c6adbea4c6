"""Audio-text pair construction: ship-type taxonomy, AIS/audio pairing, captions, stats."""

from __future__ import annotations

import bisect
import csv
import hashlib
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ais import HEADING_NOT_AVAILABLE, DecodedAisRecord
from .errors import CodeOutOfRange, IndeterminateCategory, InputError, NegativeSkew, UnsortedInput

INDETERMINATE = "Indeterminate"

# retrieval query set, in the published order (25 names; a 26th is configurable)
QUERY_LIST = (
    "Fishing", "Motorboat", "Port Tender", "Spare", "Trawler", "Diving ship", "Dredging",
    "Towing", "Search and Rescue vessel", "Cargo", "Pilot Vessel", "Tanker", "Pleasure Craft",
    "Passenger", "RORO", "Sailboat", "Military ship", "Tug", "Ocean liner", "Mussel boat",
    "Law Enforcement", "Anti-pollution equipment", "Medical Transport", "Natural ambient noise",
    "Sailing",
)

_SINGLE_CODES = {
    30: "Fishing",
    31: "Towing",
    32: "Towing",
    33: "Dredging",
    34: "Diving ship",
    35: "Military ship",
    36: "Sailing",
    37: "Pleasure Craft",
    50: "Pilot Vessel",
    51: "Search and Rescue vessel",
    52: "Tug",
    53: "Port Tender",
    54: "Anti-pollution equipment",
    55: "Law Enforcement",
    56: "Spare",
    57: "Spare",
    58: "Medical Transport",
}
_DECADE_CODES = {6: "Passenger", 7: "Cargo", 8: "Tanker"}

CATEGORIES = (
    "Cargo", "Tanker", "Passenger", "Fishing", "Tug", "Towing", "Dredging", "Diving ship",
    "Military ship", "Sailing", "Pleasure Craft", "Pilot Vessel", "Search and Rescue vessel",
    "Port Tender", "Anti-pollution equipment", "Law Enforcement", "Spare", "Medical Transport",
)


def query_list(extra: str | None = None) -> list[str]:
    return list(QUERY_LIST) + ([extra] if extra else [])


def map_shiptype(code: int) -> str:
    if not 0 <= code <= 255:
        raise CodeOutOfRange(f"ship type code {code} outside 0..255")
    if code in _SINGLE_CODES:
        return _SINGLE_CODES[code]
    return _DECADE_CODES.get(code // 10, INDETERMINATE)


def record_category(record: DecodedAisRecord) -> str:
    if record.ship_type_code is None:
        return INDETERMINATE
    return map_shiptype(record.ship_type_code)


# --- captions -------------------------------------------------------------------

FINE_TEMPLATE = "A {category} vessel at longitude {x:.4f}, latitude {y:.4f}, {heading}, {speed}."

_FINE_RE = re.compile(
    r"A (?P<category>.+) vessel at longitude (?P<x>-?\d+\.\d{4}), latitude (?P<y>-?\d+\.\d{4}), "
    r"(?:heading (?P<heading>\d+) degrees|heading unavailable), "
    r"(?:speed (?P<sog>\d+\.\d) knots|speed unavailable)\."
)


def render_caption(record: DecodedAisRecord, granularity: str, category: str | None = None) -> str:
    category = category or record_category(record)
    if category == INDETERMINATE:
        raise IndeterminateCategory("cannot caption a record of indeterminate type")
    if granularity == "coarse":
        return category
    if granularity != "fine":
        raise InputError(f"granularity must be coarse or fine, got {granularity!r}")
    heading = ("heading unavailable" if record.true_heading == HEADING_NOT_AVAILABLE
               else f"heading {record.true_heading} degrees")
    speed = "speed unavailable" if record.sog is None else f"speed {record.sog:.1f} knots"
    return FINE_TEMPLATE.format(category=category, x=record.x, y=record.y, heading=heading, speed=speed)


def parse_caption(text: str) -> dict:
    """Invert ``render_caption``; coarse captions yield only the category."""
    m = _FINE_RE.fullmatch(text)
    if m is None:
        return {"category": text}
    return {
        "category": m["category"],
        "x": float(m["x"]),
        "y": float(m["y"]),
        "true_heading": HEADING_NOT_AVAILABLE if m["heading"] is None else int(m["heading"]),
        "sog": None if m["sog"] is None else float(m["sog"]),
    }


# --- pairing --------------------------------------------------------------------

@dataclass(frozen=True)
class AudioSegmentRef:
    file_path: str
    start: int  # epoch ms
    duration: int = 5000  # ms
    sample_rate: int = 16000
    hydrophone_id: str = "H0"

    def __post_init__(self):
        if self.duration <= 0 or self.sample_rate <= 0:
            raise InputError(f"segment {self.file_path}: duration and sample_rate must be positive")

    @property
    def end(self) -> int:
        return self.start + self.duration

    @property
    def segment_id(self) -> str:
        return f"{self.hydrophone_id}:{self.start}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AudioSegmentRef":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class Pairing:
    record: DecodedAisRecord
    segment: AudioSegmentRef
    category: str


@dataclass
class SkipReport:
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, reason: str, n: int = 1) -> None:
        self.counts[reason] += n


def _index_segments(audio_index: Iterable[AudioSegmentRef]) -> dict[str, tuple[list[int], list[AudioSegmentRef]]]:
    by_hyd: dict[str, list[AudioSegmentRef]] = defaultdict(list)
    for seg in audio_index:
        by_hyd[seg.hydrophone_id].append(seg)
    index = {}
    for hyd in sorted(by_hyd):
        segs = sorted(by_hyd[hyd], key=lambda s: s.start)
        for a, b in zip(segs, segs[1:]):
            if b.start < a.end:
                raise InputError(f"overlapping segments on hydrophone {hyd}: {a.segment_id}, {b.segment_id}")
        index[hyd] = ([s.start for s in segs], segs)
    return index


def _nearest_segment(index, t: int, max_skew_ms: int) -> AudioSegmentRef | None:
    best, best_key = None, None
    for hyd, (starts, segs) in index.items():
        i = bisect.bisect_right(starts, t) - 1
        for j in (i, i + 1):
            if 0 <= j < len(segs):
                seg = segs[j]
                gap = 0 if seg.start <= t < seg.end else min(abs(t - seg.start), abs(t - (seg.end - 1)))
                key = (gap, hyd, seg.start)
                if gap <= max_skew_ms and (best_key is None or key < best_key):
                    best, best_key = seg, key
    return best


def pair_audio_with_ais(
    records: Sequence[DecodedAisRecord],
    audio_index: Iterable[AudioSegmentRef],
    max_skew_ms: int = 2000,
    keep_ambiguous: bool = False,
) -> tuple[list[Pairing], SkipReport]:
    """Attach each record to the segment containing (or nearest to) its timestamp.

    One pair per (segment, vessel): repeat reports of the same vessel in a
    segment are skipped as ``duplicate``. Segments heard by more than one
    vessel are dropped as ``ambiguous`` unless ``keep_ambiguous``.
    """
    if max_skew_ms < 0:
        raise NegativeSkew(f"max_skew_ms must be >= 0, got {max_skew_ms}")
    for a, b in zip(records, records[1:]):
        if b.ais_timestamp < a.ais_timestamp:
            raise UnsortedInput("records must be sorted by ais_timestamp")
    index = _index_segments(audio_index)
    skips = SkipReport()
    by_segment: dict[str, list[Pairing]] = defaultdict(list)
    order: list[str] = []
    for rec in records:
        category = record_category(rec)
        if category == INDETERMINATE:
            skips.add("indeterminate")
            continue
        seg = _nearest_segment(index, rec.ais_timestamp, max_skew_ms)
        if seg is None:
            skips.add("no_segment")
            continue
        if seg.segment_id not in by_segment:
            order.append(seg.segment_id)
        by_segment[seg.segment_id].append(Pairing(rec, seg, category))

    pairs: list[Pairing] = []
    for seg_id in order:
        group = by_segment[seg_id]
        vessels = {p.record.id for p in group}
        if len(vessels) > 1 and not keep_ambiguous:
            skips.add("ambiguous", len(group))
            continue
        seen = set()
        for p in group:
            if p.record.id in seen:
                skips.add("duplicate")
            else:
                seen.add(p.record.id)
                pairs.append(p)
    return pairs, skips


# --- manifests ------------------------------------------------------------------

def assign_split(segment_id: str, seed: int = 0, eval_fraction: float = 0.1) -> str:
    digest = hashlib.sha256(f"{seed}:{segment_id}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    return "eval" if u < eval_fraction else "train"


@dataclass(frozen=True)
class AudioTextPair:
    segment: AudioSegmentRef
    caption: str
    category: str
    granularity: str
    source_record: DecodedAisRecord | None = None
    split: str = "train"
    corpus_id: str = "default"

    def to_dict(self) -> dict:
        return {
            "segment": self.segment.to_dict(),
            "segment_id": self.segment.segment_id,
            "caption": self.caption,
            "category": self.category,
            "granularity": self.granularity,
            "source_record": None if self.source_record is None else self.source_record.to_dict(),
            "split": self.split,
            "corpus_id": self.corpus_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AudioTextPair":
        src = d.get("source_record")
        return cls(
            segment=AudioSegmentRef.from_dict(d["segment"]),
            caption=d["caption"],
            category=d["category"],
            granularity=d.get("granularity", "coarse"),
            source_record=None if src is None else DecodedAisRecord.from_dict(src),
            split=d.get("split", "train"),
            corpus_id=d.get("corpus_id", "default"),
        )


def build_manifest(pairs: Sequence[Pairing], granularity: str = "both", corpus_id: str = "default",
                   seed: int = 0, eval_fraction: float = 0.1) -> list[AudioTextPair]:
    if granularity not in ("coarse", "fine", "both"):
        raise InputError(f"granularity must be coarse, fine or both, got {granularity!r}")
    levels = ("coarse", "fine") if granularity == "both" else (granularity,)
    rows = []
    for level in levels:
        for p in pairs:
            rows.append(AudioTextPair(
                segment=p.segment,
                caption=render_caption(p.record, level, p.category),
                category=p.category,
                granularity=level,
                source_record=p.record,
                split=assign_split(p.segment.segment_id, seed, eval_fraction),
                corpus_id=corpus_id,
            ))
    return rows


# --- statistics -----------------------------------------------------------------

def quantiles(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    """(min, Q1, median, Q3, max) with Weibull (type 6) plotting positions."""
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="weibull")
    return float(v.min()), float(q1), float(med), float(q3), float(v.max())


def tukey_outliers(values: Sequence[float], q1: float, q3: float) -> list[float]:
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return [float(v) for v in values if v < lo or v > hi]


@dataclass
class CategoryStats:
    category: str
    count: int = 0
    duration_ms: int = 0
    freqs: list = field(default_factory=list)

    def merge(self, other: "CategoryStats") -> "CategoryStats":
        return CategoryStats(self.category, self.count + other.count,
                             self.duration_ms + other.duration_ms, self.freqs + other.freqs)

    @property
    def duration_h(self) -> float:
        return self.duration_ms / 3_600_000

    def summary(self) -> dict:
        row = {"category": self.category, "count": self.count, "duration_h": self.duration_h}
        if not self.freqs:
            row.update(min=None, q1=None, median=None, q3=None, max=None, n_outliers=None)
            return row
        lo, q1, med, q3, hi = quantiles(self.freqs)
        row.update(min=lo, q1=q1, median=med, q3=q3, max=hi,
                   n_outliers=len(tukey_outliers(self.freqs, q1, q3)))
        return row


@dataclass
class StatsReport:
    categories: dict[str, CategoryStats]

    @property
    def empty_frequency_summaries(self) -> list[str]:
        return [c for c, s in self.categories.items() if not s.freqs]

    @property
    def total_count(self) -> int:
        return sum(s.count for s in self.categories.values())

    @property
    def total_duration_ms(self) -> int:
        return sum(s.duration_ms for s in self.categories.values())

    def merge(self, other: "StatsReport") -> "StatsReport":
        merged = dict(self.categories)
        for name, s in other.categories.items():
            merged[name] = merged[name].merge(s) if name in merged else s
        return StatsReport(dict(sorted(merged.items())))

    def rows(self) -> list[dict]:
        return [s.summary() for s in self.categories.values()]

    def write_csv(self, path) -> None:
        cols = ["category", "count", "duration_h", "min", "q1", "median", "q3", "max", "n_outliers"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for row in self.rows():
                w.writerow({k: "" if row[k] is None else row[k] for k in cols})


def corpus_stats(manifest: Iterable[AudioTextPair],
                 dominant_freqs: Mapping[str, float | None] | None = None) -> StatsReport:
    """Per-category segment counts, exact durations (ms) and dominant-frequency spread.

    Each distinct segment counts once per category, so a manifest carrying both
    caption granularities does not double its audio time. Shards passed to
    ``StatsReport.merge`` must partition the segments.
    """
    dominant_freqs = dominant_freqs or {}
    cats: dict[str, CategoryStats] = {}
    seen: set[tuple[str, str]] = set()
    for row in manifest:
        s = cats.setdefault(row.category, CategoryStats(row.category))
        key = (row.category, row.segment.segment_id)
        if key in seen:
            continue
        seen.add(key)
        s.count += 1
        s.duration_ms += row.segment.duration
        f = dominant_freqs.get(row.segment.segment_id)
        if f is not None:
            s.freqs.append(float(f))
    return StatsReport(dict(sorted(cats.items())))
