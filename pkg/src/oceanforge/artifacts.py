"""On-disk formats: JSONL manifests, config hashes and the binary tensor container.

Binary container layout (all little-endian)::

    magic      8 bytes
    hdr_len    uint64
    header     hdr_len bytes of UTF-8 JSON (sorted keys)
    payload    float32 data, offsets given in the header
"""

from __future__ import annotations

import hashlib
import json
import struct
import wave
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import MalformedArtifact

FEATURES_MAGIC = b"OFFEAT01"
CHECKPOINT_MAGIC = b"OFCKPT01"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedArtifact(f"{path}:{lineno}: {exc}") from None


def write_jsonl(path, rows: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
            n += 1
    return n


def write_container(path, magic: bytes, header: dict, arrays: Iterable[np.ndarray]) -> None:
    blobs = [np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays]
    hdr = canonical_json(header).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(hdr)))
        fh.write(hdr)
        for blob in blobs:
            fh.write(blob)


def read_container(path, magic: bytes) -> tuple[dict, memoryview]:
    data = Path(path).read_bytes()
    if data[:8] != magic:
        raise MalformedArtifact(f"{path}: bad magic {data[:8]!r}, expected {magic!r}")
    (hdr_len,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16 : 16 + hdr_len])
    except json.JSONDecodeError as exc:
        raise MalformedArtifact(f"{path}: unreadable header: {exc}") from None
    return header, memoryview(data)[16 + hdr_len :]


def load_audio(path) -> tuple[np.ndarray, int]:
    """Mono float64 samples and sample rate from a 16-bit PCM WAV or a .npy file."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64), 16000
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise MalformedArtifact(f"{path}: only 16-bit PCM WAV is supported")
        raw = np.frombuffer(wf.readframes(wf.getnframes()), dtype="<i2")
        channels, rate = wf.getnchannels(), wf.getframerate()
    samples = raw.reshape(-1, channels).mean(axis=1) / 32768.0
    return samples.astype(np.float64), rate


def write_wav(path, samples: np.ndarray, sample_rate: int = 16000) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())
