"""Log-mel spectrograms and ViT-style patch extraction."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import EmptySignal, InputError, InvalidBandEdges, PatchLargerThanInput, SampleRateMismatch


@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = 16000
    win_length: int = 1024
    hop: int = 240
    n_mels: int = 64
    target_frames: int = 1024
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if not 0 < self.hop <= self.win_length:
            raise InputError(f"hop {self.hop} must be in 1..win_length")
        if not 0 < self.n_mels < self.win_length // 2 + 1:
            raise InputError(f"n_mels {self.n_mels} must be below {self.win_length // 2 + 1}")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise InvalidBandEdges(f"need 0 <= fmin < fmax <= {self.sample_rate / 2}")
        if self.target_frames <= 0 or self.log_floor <= 0:
            raise InputError("target_frames and log_floor must be positive")

    @property
    def n_freqs(self) -> int:
        return self.win_length // 2 + 1

    def to_dict(self) -> dict:
        return asdict(self)


PROFILES = {
    "default": DspConfig(),
    "imagebind128": DspConfig(n_mels=128),
}


def get_profile(name: str) -> DspConfig:
    try:
        return PROFILES[name]
    except KeyError:
        raise InputError(f"unknown DSP profile {name!r}; choose from {sorted(PROFILES)}") from None


def hann_window(n: int) -> np.ndarray:
    # periodic Hann, the usual choice for STFT analysis
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def frame_signal(samples: np.ndarray, config: DspConfig) -> np.ndarray:
    """Centered, reflect-padded frames of length ``win_length``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise EmptySignal("expected a non-empty 1-D signal")
    if not np.all(np.isfinite(x)):
        raise InputError("signal contains non-finite samples")
    pad = config.win_length // 2
    x = np.pad(x, pad, mode="reflect" if x.size > 1 else "constant")
    n_frames = 1 + (x.size - config.win_length) // config.hop
    return np.lib.stride_tricks.sliding_window_view(x, config.win_length)[:: config.hop][:n_frames]


def stft_magnitude(samples: np.ndarray, config: DspConfig = DspConfig()) -> np.ndarray:
    """|STFT| with shape (frames, win_length // 2 + 1)."""
    frames = frame_signal(samples, config) * hann_window(config.win_length)
    return np.abs(np.fft.rfft(frames, axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(config: DspConfig) -> np.ndarray:
    """n_mels + 2 frequencies (Hz): lower edge, centers, upper edge."""
    mels = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(config: DspConfig = DspConfig()) -> np.ndarray:
    """Triangular HTK-scale filters, shape (n_mels, n_freqs), unit peak."""
    edges = mel_band_edges(config)
    fft_freqs = np.linspace(0, config.sample_rate / 2, config.n_freqs)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs - lower) / (center - lower)
    falling = (upper - fft_freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    if np.any(fb.sum(axis=1) <= 0):
        raise InvalidBandEdges("a mel band covers no FFT bin; lower n_mels or widen the band")
    return fb


@dataclass
class MelSpectrogram:
    """Log-mel values (T, F); ``n_frames`` leading rows are real, the rest padding."""

    values: np.ndarray
    n_frames: int
    config: DspConfig = field(default_factory=DspConfig)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.values.shape[0], dtype=bool)
        m[: self.n_frames] = True
        return m


def mel_power(samples: np.ndarray, config: DspConfig = DspConfig()) -> np.ndarray:
    """Unpadded mel power, shape (frames, n_mels)."""
    power = stft_magnitude(samples, config) ** 2
    return power @ mel_filterbank(config).T


def log_mel(samples: np.ndarray, config: DspConfig = DspConfig(),
            sample_rate: int | None = None) -> MelSpectrogram:
    if sample_rate is not None and sample_rate != config.sample_rate:
        raise SampleRateMismatch(f"audio at {sample_rate} Hz, config expects {config.sample_rate} Hz")
    mel = mel_power(samples, config)
    n_real = min(mel.shape[0], config.target_frames)
    out = np.zeros((config.target_frames, config.n_mels))
    out[:n_real] = mel[:n_real]
    return MelSpectrogram(np.log(out + config.log_floor), n_real, config)


def mel_center_frequencies(config: DspConfig = DspConfig()) -> np.ndarray:
    return mel_band_edges(config)[1:-1]


def dominant_frequency(samples: np.ndarray, config: DspConfig = DspConfig()) -> float:
    """Center frequency (Hz) of the mel band with the most energy over the segment."""
    mel = mel_power(samples, config)
    return float(mel_center_frequencies(config)[int(np.argmax(mel.sum(axis=0)))])


@dataclass
class PatchSequence:
    patches: np.ndarray  # (N, P*P)
    grid: tuple[int, int]
    patch_size: int
    stride: int
    valid: np.ndarray  # (N,) patch touches at least one real frame

    @property
    def count(self) -> int:
        return self.patches.shape[0]


def patch_grid(h: int, w: int, patch_size: int, stride: int) -> tuple[int, int]:
    if h < patch_size or w < patch_size:
        raise PatchLargerThanInput(f"patch {patch_size} larger than input {h}x{w}")
    if stride <= 0:
        raise InputError("stride must be positive")
    return (h - patch_size) // stride + 1, (w - patch_size) // stride + 1


def extract_patches(spec, patch_size: int = 16, stride: int = 10,
                    n_frames: int | None = None) -> PatchSequence:
    """Row-major sliding P x P windows over a (H, W) spectrogram, each flattened."""
    if isinstance(spec, MelSpectrogram):
        n_frames = spec.n_frames if n_frames is None else n_frames
        spec = spec.values
    spec = np.asarray(spec)
    h, w = spec.shape
    nh, nw = patch_grid(h, w, patch_size, stride)
    windows = np.lib.stride_tricks.sliding_window_view(spec, (patch_size, patch_size))
    patches = windows[::stride, ::stride][:nh, :nw].reshape(nh * nw, patch_size * patch_size)
    n_frames = h if n_frames is None else n_frames
    row_valid = np.arange(nh) * stride < n_frames
    valid = np.repeat(row_valid, nw)
    return PatchSequence(np.ascontiguousarray(patches), (nh, nw), patch_size, stride, valid)


def reassemble_patches(seq: PatchSequence) -> np.ndarray:
    """Inverse of ``extract_patches`` for non-overlapping tilings (stride == patch)."""
    if seq.stride != seq.patch_size:
        raise InputError("reassembly needs stride == patch_size")
    nh, nw = seq.grid
    p = seq.patch_size
    tiles = seq.patches.reshape(nh, nw, p, p)
    return tiles.transpose(0, 2, 1, 3).reshape(nh * p, nw * p)


def with_overrides(config: DspConfig, **kw) -> DspConfig:
    return replace(config, **kw)
