"""Featurize manifest segments into a single log-mel container file."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .artifacts import FEATURES_MAGIC, config_hash, load_audio, read_container, write_container
from .corpus import AudioSegmentRef
from .dsp import DspConfig, log_mel
from .errors import InputError, MalformedArtifact, SampleRateMismatch


@dataclass
class FeatureSet:
    """Log-mel spectrograms (T, F) keyed by segment id, in manifest order."""

    segment_ids: list
    specs: list
    n_frames: list
    dsp_config: DspConfig
    header: dict

    def __len__(self) -> int:
        return len(self.segment_ids)

    def as_mapping(self) -> dict:
        return {s: (spec, nf) for s, spec, nf in zip(self.segment_ids, self.specs, self.n_frames)}

    @property
    def config_hash(self) -> str:
        return self.header["config_hash"]


def dsp_hash(config: DspConfig) -> str:
    return config_hash({"dsp": config.to_dict()})


def segment_samples(seg: AudioSegmentRef) -> np.ndarray:
    """The segment's samples; the referenced file begins at ``seg.start``."""
    samples, rate = load_audio(seg.file_path)
    if rate != seg.sample_rate:
        raise SampleRateMismatch(f"{seg.file_path}: file is {rate} Hz, index says {seg.sample_rate} Hz")
    n = seg.duration * rate // 1000
    return samples[:n]


def _featurize_one(args) -> tuple[np.ndarray, int]:
    seg_dict, cfg_dict = args
    seg = AudioSegmentRef.from_dict(seg_dict)
    spec = log_mel(segment_samples(seg), DspConfig(**cfg_dict), sample_rate=seg.sample_rate)
    return spec.values.astype(np.float32), spec.n_frames


def unique_segments(rows: Sequence[dict]) -> list[dict]:
    seen, out = set(), []
    for row in rows:
        seg = row["segment"]
        sid = row.get("segment_id") or AudioSegmentRef.from_dict(seg).segment_id
        if sid not in seen:
            seen.add(sid)
            out.append(seg)
    return out


def featurize(rows: Sequence[dict], config: DspConfig, jobs: int = 1, profile: str = "") -> FeatureSet:
    segments = unique_segments(rows)
    if not segments:
        raise InputError("manifest has no segments to featurize")
    work = [(seg, config.to_dict()) for seg in segments]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_featurize_one, work, chunksize=4))
    else:
        results = [_featurize_one(w) for w in work]
    ids = [AudioSegmentRef.from_dict(s).segment_id for s in segments]
    header = {
        "T": config.target_frames,
        "F": config.n_mels,
        "count": len(ids),
        "segment_ids": ids,
        "n_frames": [nf for _, nf in results],
        "dsp_config": config.to_dict(),
        "profile": profile,
        "config_hash": dsp_hash(config),
    }
    return FeatureSet(ids, [r[0] for r in results], header["n_frames"], config, header)


def write_features(path, fs: FeatureSet) -> None:
    write_container(path, FEATURES_MAGIC, fs.header, fs.specs)


def read_features(path) -> FeatureSet:
    header, payload = read_container(path, FEATURES_MAGIC)
    t, f, count = header["T"], header["F"], header["count"]
    if len(payload) != count * t * f * 4:
        raise MalformedArtifact(f"{path}: payload has {len(payload)} bytes, header implies {count * t * f * 4}")
    data = np.frombuffer(payload, dtype="<f4").reshape(count, t, f)
    cfg = DspConfig(**header["dsp_config"])
    if dsp_hash(cfg) != header["config_hash"]:
        raise MalformedArtifact(f"{path}: config hash does not match the embedded DSP config")
    return FeatureSet(list(header["segment_ids"]), [data[i].copy() for i in range(count)],
                      list(header["n_frames"]), cfg, header)
