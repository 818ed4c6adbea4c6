"""Dual encoder: frozen transformer trunks with LoRA on the attention q/v projections,
two-layer ReLU projection heads and a learnable temperature."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import bpe
from .dsp import patch_grid
from .errors import DimMismatch, EmptyPatchSequence, EmptyTokens, InputError

TAU_MIN, TAU_MAX = 1e-3, 100.0


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    mlp_ratio: int = 4
    embed_dim: int = 32
    head_hidden: int = 32
    lora_rank: int = 4
    lora_alpha: float = 8.0
    lora_targets: tuple = ("q", "v")
    vocab_size: int = 512
    max_len: int = bpe.DEFAULT_MAX_LEN
    spec_frames: int = 1024
    spec_mels: int = 64
    patch_size: int = 16
    patch_stride: int = 10
    train_patch_embed: bool = False
    trainable_heads: tuple = ("audio", "text")
    tau_init: float = 0.07
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise InputError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 1 <= self.lora_rank <= self.d_model // 2:
            raise InputError(f"lora_rank must be in 1..{self.d_model // 2} (r << min(d, k))")
        if not TAU_MIN <= self.tau_init <= TAU_MAX:
            raise InputError(f"tau_init outside [{TAU_MIN}, {TAU_MAX}]")
        if not set(self.trainable_heads) <= {"audio", "text"}:
            raise InputError(f"trainable_heads must be drawn from ('audio', 'text'), got {self.trainable_heads}")
        object.__setattr__(self, "lora_targets", tuple(self.lora_targets))
        object.__setattr__(self, "trainable_heads", tuple(self.trainable_heads))

    @property
    def patch_grid(self) -> tuple[int, int]:
        return patch_grid(self.spec_frames, self.spec_mels, self.patch_size, self.patch_stride)

    @property
    def n_patches(self) -> int:
        nh, nw = self.patch_grid
        return nh * nw

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lora_targets"] = list(self.lora_targets)
        d["trainable_heads"] = list(self.trainable_heads)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def lora_dense(x, W0, A, B, alpha: float):
    """y = W0 x + (alpha / r) B (A x), batched over leading dims of ``x``."""
    x, W0, A, B = (torch.as_tensor(t) for t in (x, W0, A, B))
    d, k = W0.shape
    r = A.shape[0]
    if x.shape[-1] != k or A.shape != (r, k) or B.shape != (d, r):
        raise DimMismatch(f"x {tuple(x.shape)}, W0 {tuple(W0.shape)}, A {tuple(A.shape)}, B {tuple(B.shape)}")
    return x @ W0.T + (alpha / r) * ((x @ A.T) @ B.T)


class LoraDense(nn.Module):
    """Frozen ``nn.Linear`` plus a trainable low-rank update; B starts at zero."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float, generator: torch.Generator | None = None):
        super().__init__()
        d, k = base.weight.shape
        if not 1 <= rank <= min(d, k) // 2:
            raise DimMismatch(f"rank {rank} must satisfy 1 <= r <= min(d, k) / 2 = {min(d, k) // 2}")
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.rank = rank
        self.alpha = alpha
        bound = 1.0 / math.sqrt(k)
        self.A = nn.Parameter(torch.empty(rank, k).uniform_(-bound, bound, generator=generator))
        self.B = nn.Parameter(torch.zeros(d, rank))
        self.enabled = True

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.base(x)
        if not self.enabled:
            return y
        return y + self.scale * F.linear(F.linear(x, self.A), self.B)

    def merged_weight(self) -> torch.Tensor:
        return self.base.weight + self.scale * self.B @ self.A


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig, g: torch.Generator):
        super().__init__()
        d = cfg.d_model
        self.n_heads = cfg.n_heads
        self.ln1 = nn.LayerNorm(d)
        self.ln2 = nn.LayerNorm(d)
        proj = {name: _linear(d, d, g) for name in ("q", "k", "v", "o")}
        for name in cfg.lora_targets:
            proj[name] = LoraDense(proj[name], cfg.lora_rank, cfg.lora_alpha, g)
        self.q, self.k, self.v, self.o = proj["q"], proj["k"], proj["v"], proj["o"]
        self.fc1 = _linear(d, d * cfg.mlp_ratio, g)
        self.fc2 = _linear(d * cfg.mlp_ratio, d, g)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        h = self.ln1(x)
        split = lambda t: t.view(b, n, self.n_heads, d // self.n_heads).transpose(1, 2)  # noqa: E731
        q, k, v = split(self.q(h)), split(self.k(h)), split(self.v(h))
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(d // self.n_heads)
        scores = scores.masked_fill(~mask, float("-inf"))
        attn = torch.softmax(scores, dim=-1) @ v
        x = x + self.o(attn.transpose(1, 2).reshape(b, n, d))
        return x + self.fc2(F.gelu(self.fc1(self.ln2(x))))


def _linear(n_in: int, n_out: int, g: torch.Generator) -> nn.Linear:
    lin = nn.Linear(n_in, n_out)
    with torch.no_grad():
        lin.weight.normal_(0.0, 1.0 / math.sqrt(n_in), generator=g)
        lin.bias.zero_()
    return lin


class Trunk(nn.Module):
    def __init__(self, cfg: ModelConfig, n_positions: int, g: torch.Generator):
        super().__init__()
        self.pos = nn.Parameter(torch.empty(n_positions, cfg.d_model).normal_(0.0, 0.02, generator=g))
        self.blocks = nn.ModuleList(Block(cfg, g) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.d_model)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + self.pos[: x.shape[1]]
        for blk in self.blocks:
            x = blk(x, mask)
        return self.ln_f(x)


class ProjectionHead(nn.Sequential):
    def __init__(self, d_in: int, hidden: int, d_out: int, g: torch.Generator):
        super().__init__(_linear(d_in, hidden, g), nn.ReLU(), _linear(hidden, d_out, g))


class TextEncoder(nn.Module):
    """Causal trunk over BPE ids, read out at the [EOS] position."""

    def __init__(self, cfg: ModelConfig, g: torch.Generator):
        super().__init__()
        self.tok = nn.Embedding(cfg.vocab_size, cfg.d_model)
        with torch.no_grad():
            self.tok.weight.normal_(0.0, 1.0, generator=g)
        self.trunk = Trunk(cfg, cfg.max_len, g)

    def hidden_states(self, tokens: torch.Tensor) -> torch.Tensor:
        n = tokens.shape[1]
        causal = torch.tril(torch.ones(n, n, dtype=torch.bool, device=tokens.device))
        return self.trunk(self.tok(tokens), causal)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.ndim != 2 or tokens.shape[1] == 0:
            raise EmptyTokens("token batch must be (B, L) with L >= 1")
        h = self.hidden_states(tokens)
        is_eos = tokens == bpe.EOS
        # first [EOS] per row; fall back to the last position when absent
        pos = torch.where(is_eos.any(dim=1), is_eos.int().argmax(dim=1),
                          torch.full_like(tokens[:, 0], tokens.shape[1] - 1))
        return h[torch.arange(tokens.shape[0]), pos]


class AudioEncoder(nn.Module):
    """Linear patch projection, bidirectional trunk, mean over valid patches."""

    def __init__(self, cfg: ModelConfig, g: torch.Generator):
        super().__init__()
        self.patch_embed = _linear(cfg.patch_size * cfg.patch_size, cfg.d_model, g)
        self.trunk = Trunk(cfg, cfg.n_patches, g)

    def forward(self, patches: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        if patches.ndim != 3 or patches.shape[1] == 0:
            raise EmptyPatchSequence("patch batch must be (B, N, P*P) with N >= 1")
        b, n, _ = patches.shape
        if valid is None:
            valid = torch.ones(b, n, dtype=torch.bool, device=patches.device)
        if not bool(valid.any(dim=1).all()):
            raise EmptyPatchSequence("every item needs at least one valid patch")
        # trailing all-padding patches are masked out anyway; drop them to save compute
        keep = int(valid.any(dim=0).nonzero().max()) + 1
        patches, valid = patches[:, :keep], valid[:, :keep]
        mask = valid[:, None, None, :]
        h = self.trunk(self.patch_embed(patches), mask)
        w = valid.to(h.dtype)[..., None]
        return (h * w).sum(dim=1) / w.sum(dim=1).clamp_min(1.0)


class DualEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        g = torch.Generator().manual_seed(cfg.seed)
        self.text = TextEncoder(cfg, g)
        self.audio = AudioEncoder(cfg, g)
        self.text_head = ProjectionHead(cfg.d_model, cfg.head_hidden, cfg.embed_dim, g)
        self.audio_head = ProjectionHead(cfg.d_model, cfg.head_hidden, cfg.embed_dim, g)
        self.log_tau = nn.Parameter(torch.tensor(math.log(cfg.tau_init)))
        self._set_trainable()

    def _set_trainable(self) -> None:
        for name, p in self.named_parameters():
            p.requires_grad_(is_trainable_name(name, self.cfg))

    @property
    def tau(self) -> torch.Tensor:
        return torch.exp(self.log_tau.clamp(math.log(TAU_MIN), math.log(TAU_MAX)))

    def encode_text(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.text_head(self.text(tokens))

    def encode_audio(self, patches: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        return self.audio_head(self.audio(patches, valid))

    def lora_modules(self) -> list[LoraDense]:
        return [m for m in self.modules() if isinstance(m, LoraDense)]

    def set_lora_enabled(self, enabled: bool) -> None:
        for m in self.lora_modules():
            m.enabled = enabled

    def trainable_parameters(self) -> list[tuple[str, nn.Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    def frozen_parameters(self) -> list[tuple[str, nn.Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if not p.requires_grad]

    def parameter_counts(self) -> dict:
        trainable = sum(p.numel() for _, p in self.trainable_parameters())
        frozen = sum(p.numel() for _, p in self.frozen_parameters())
        return {"trainable": trainable, "frozen": frozen, "total": trainable + frozen,
                "ratio": trainable / (trainable + frozen)}


def is_trainable_name(name: str, cfg: ModelConfig) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    if name == "log_tau":
        return True
    if name.startswith(("text_head.", "audio_head.")):
        return name.split("_head.", 1)[0] in cfg.trainable_heads
    if leaf in ("A", "B") and ".base." not in name:
        return True
    return cfg.train_patch_embed and name.startswith("audio.patch_embed.")


def standardize_spectrogram(values: np.ndarray, n_frames: int) -> np.ndarray:
    """Zero-mean/unit-variance over the real frames; padded frames become 0."""
    out = np.zeros_like(values, dtype=np.float64)
    real = values[:n_frames]
    mu, sd = real.mean(), real.std()
    out[:n_frames] = (real - mu) / (sd if sd > 1e-8 else 1.0)
    return out


def audio_inputs(specs, n_frames, cfg: ModelConfig, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack spectrograms (T, F) into model patch batches ``(B, N, P*P)`` and validity masks."""
    from .dsp import extract_patches

    patches, valid = [], []
    for spec, nf in zip(specs, n_frames):
        seq = extract_patches(standardize_spectrogram(np.asarray(spec), nf), cfg.patch_size, cfg.patch_stride, nf)
        if seq.count != cfg.n_patches:
            raise DimMismatch(f"spectrogram gives {seq.count} patches, model expects {cfg.n_patches}")
        patches.append(seq.patches)
        valid.append(seq.valid)
    return (torch.as_tensor(np.stack(patches), dtype=dtype),
            torch.as_tensor(np.stack(valid), dtype=torch.bool))


def text_inputs(texts, vocab: bpe.BpeVocab) -> torch.Tensor:
    return torch.as_tensor(vocab.encode_batch(texts), dtype=torch.long)
