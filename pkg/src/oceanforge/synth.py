"""Synthetic vessel corpus: tone bands plus noise per class, with matching AIS traffic."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import ais
from .artifacts import write_jsonl, write_wav
from .dsp import DspConfig, log_mel
from .model import ModelConfig
from .train import PairDataset, TrainConfig

TOY_TONES = {"Cargo": 500.0, "Tanker": 1500.0, "Tug": 3000.0}
TOY_SHIP_CODES = {"Cargo": 70, "Tanker": 80, "Tug": 52}
EPOCH0 = 1_594_771_200_000  # 2020-07-15T00:00:00Z

# Toy-scale training preset. With a random (not pretrained) text trunk and only
# three distinct captions, a trainable text head folds the unseen prompts onto
# the trained ones; keeping it fixed leaves prompt geometry to the text LoRA.
TOY_MODEL = {"tau_init": 1.0, "trainable_heads": ["audio"]}
TOY_TRAIN = {"base_lr": 3e-3, "max_steps": 300, "epochs": 1000}


def toy_model_config(seed: int = 0, **overrides) -> ModelConfig:
    return ModelConfig(**{**TOY_MODEL, "seed": seed, **overrides})


def toy_train_config(seed: int = 0, **overrides) -> TrainConfig:
    return TrainConfig(**{**TOY_TRAIN, "seed": seed, **overrides})


def tone_clip(center_hz: float, rng: np.random.Generator, seconds: float = 5.0, sample_rate: int = 16000,
              band_hz: float = 60.0, n_tones: int = 3, noise: float = 0.3) -> np.ndarray:
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    x = np.zeros_like(t)
    for f in center_hz + rng.uniform(-band_hz / 2, band_hz / 2, n_tones):
        x += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x = x / n_tones + noise * rng.standard_normal(t.size)
    return 0.5 * x / np.max(np.abs(x))


def toy_dataset(n_per_class: int, seed: int, dsp_config: DspConfig = DspConfig(),
                seconds: float = 5.0, tones: dict = TOY_TONES) -> PairDataset:
    """Class-interleaved in-memory dataset with coarse (class-name) captions."""
    rng = np.random.default_rng(seed)
    specs, frames, cats, ids = [], [], [], []
    for i in range(n_per_class):
        for cat, hz in tones.items():
            spec = log_mel(tone_clip(hz, rng, seconds, dsp_config.sample_rate), dsp_config)
            specs.append(spec.values.astype(np.float32))
            frames.append(spec.n_frames)
            cats.append(cat)
            ids.append(f"toy{seed}:{cat}:{i}")
    return PairDataset(specs, frames, list(cats), cats, ids)


def write_toy_corpus(out_dir, n_per_class: int, seed: int, seconds: float = 5.0,
                     hydrophone: str = "H0", start_ms: int = EPOCH0, mmsi_base: int = 316_000_000) -> dict:
    """Write WAV clips, an AIS message log and an audio index for the CLI pipeline.

    Every clip gets its own vessel: one static report (ship type) and one
    position report one second into the clip. Returns the written paths.
    """
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ais_lines, index = [], []
    clip_ms = int(seconds * 1000)
    k = 0
    for i in range(n_per_class):
        for cat, hz in TOY_TONES.items():
            start = start_ms + k * (clip_ms + 1000)
            wav = out / "audio" / f"{hydrophone}_{start}.wav"
            write_wav(wav, tone_clip(hz, rng, seconds))
            index.append({"file_path": str(wav.resolve()), "start": start, "duration": clip_ms,
                          "sample_rate": 16000, "hydrophone_id": hydrophone})
            mmsi = mmsi_base + seed * 10_000 + k
            static, fill = ais.encode_static_report(mmsi, TOY_SHIP_CODES[cat]).to_payload()
            ais_lines.append(f"{ais.format_nmea_sentence(static, fill)}\t{ais.format_ais_timestamp(start + 500)}")
            report = ais.PositionReport.from_values(
                x=-123.45 + 0.001 * k, y=48.77, sog=round(rng.uniform(0, 12), 1),
                cog=round(rng.uniform(0, 359), 1), true_heading=int(rng.integers(0, 360)), mmsi=mmsi,
            )
            payload, _ = ais.encode_position_report(report).to_payload()
            ais_lines.append(f"{payload}\t{ais.format_ais_timestamp(start + 1000)}")
            k += 1
    (out / "ais.txt").write_text("\n".join(ais_lines) + "\n")
    write_jsonl(out / "audio_index.jsonl", index)
    return {"ais": out / "ais.txt", "audio_index": out / "audio_index.jsonl", "audio_dir": out / "audio"}
