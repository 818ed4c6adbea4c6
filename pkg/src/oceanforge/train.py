"""Symmetric contrastive training of the LoRA adapters, heads and temperature."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterator, Sequence

import numpy as np
import torch

from .bpe import BpeVocab
from .errors import DegenerateBatch, DimMismatch, InputError, NonFiniteLoss, ZeroEpsilon, ZeroNormRow
from .model import DualEncoder, audio_inputs, text_inputs


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    base_lr: float = 1e-5
    min_lr: float = 0.0
    betas: tuple = (0.99, 0.9)
    eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 200
    max_steps: int | None = None
    warmup_steps: int = 0
    seed: int = 0
    unique_captions: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise InputError("batch_size must be >= 2 for a contrastive loss")
        if self.base_lr < 0 or self.min_lr < 0:
            raise InputError("learning rates must be >= 0")
        object.__setattr__(self, "betas", tuple(self.betas))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InputError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def contrastive_loss(audio_emb: torch.Tensor, text_emb: torch.Tensor, tau, diagnostic: bool = False) -> torch.Tensor:
    """Symmetric InfoNCE over cosine similarities; row i of each input is a matched pair.

    ``diagnostic=True`` permits N=1, where the loss is identically zero.
    """
    if audio_emb.shape != text_emb.shape or audio_emb.ndim != 2:
        raise DimMismatch(f"embedding shapes differ: {tuple(audio_emb.shape)} vs {tuple(text_emb.shape)}")
    n = audio_emb.shape[0]
    if n < 2 and not (diagnostic and n == 1):
        raise DegenerateBatch(f"contrastive loss needs N >= 2, got {n}")
    na, nt = audio_emb.norm(dim=1, keepdim=True), text_emb.norm(dim=1, keepdim=True)
    if bool((na == 0).any() or (nt == 0).any()):
        raise ZeroNormRow("an embedding row has zero norm")
    logits = (audio_emb / na) @ (text_emb / nt).T / tau
    a2t = _log_softmax_diag(logits)
    t2a = _log_softmax_diag(logits.T)
    return -(a2t.sum() + t2a.sum()) / (2 * n)


def _log_softmax_diag(logits: torch.Tensor) -> torch.Tensor:
    shifted = logits - logits.max(dim=1, keepdim=True).values.detach()
    return shifted.diagonal() - torch.log(torch.exp(shifted).sum(dim=1))


def finite_diff_check(loss_fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], eps: float = 1e-5,
                      max_coords: int | None = 64, seed: int = 0, floor: float = 1e-6) -> float:
    """Max relative error between autograd and central differences.

    Up to ``max_coords`` coordinates are sampled per tensor (all if None).
    Relative error is |g - n| / max(|g|, |n|, floor).
    """
    if eps <= 0:
        raise ZeroEpsilon("finite-difference step must be positive")
    params = list(params)
    grads = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            g = torch.zeros_like(p) if g is None else g
            flat, gflat = p.view(-1), g.reshape(-1)
            idx = np.arange(flat.numel())
            if max_coords is not None and idx.size > max_coords:
                idx = rng.choice(idx, size=max_coords, replace=False)
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                num = (up - down) / (2 * eps)
                ana = gflat[i].item()
                worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
    return worst


def cosine_lr(step: int, total: int, base_lr: float, min_lr: float = 0.0, warmup: int = 0) -> float:
    if warmup and step < warmup:
        return base_lr * (step + 1) / warmup
    span = max(total - warmup, 1)
    progress = min(max(step - warmup, 0) / span, 1.0)
    return min_lr + 0.5 * (base_lr - min_lr) * (1 + math.cos(math.pi * progress))


@dataclass
class PairDataset:
    """In-memory training view: spectrograms (T, F) with real-frame counts, captions, labels."""

    specs: list
    n_frames: list
    captions: list
    categories: list
    segment_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.captions)

    def subset(self, idx: Sequence[int]) -> "PairDataset":
        pick = lambda xs: [xs[i] for i in idx] if xs else []  # noqa: E731
        return PairDataset(pick(self.specs), pick(self.n_frames), pick(self.captions),
                           pick(self.categories), pick(self.segment_ids))


def iter_batches(captions: Sequence[str], batch_size: int, rng: np.random.Generator,
                 unique_captions: bool = True) -> Iterator[list[int]]:
    """One epoch of shuffled batches; with ``unique_captions`` no caption repeats inside a batch.

    Batches with fewer than two rows are dropped.
    """
    queue = list(rng.permutation(len(captions)))
    while queue:
        batch, seen, deferred = [], set(), []
        pos = 0
        while pos < len(queue) and len(batch) < batch_size:
            i = queue[pos]
            if unique_captions and captions[i] in seen:
                deferred.append(i)
            else:
                batch.append(int(i))
                seen.add(captions[i])
            pos += 1
        queue = deferred + queue[pos:]
        if len(batch) >= 2:
            yield batch
        elif len(set(captions[i] for i in queue)) < 2:
            break


@dataclass
class EpochLog:
    epoch: int
    loss: float
    lr: float
    tau: float


@dataclass
class TrainResult:
    steps: int
    history: list[EpochLog]
    step_losses: list[float]

    @property
    def initial_loss(self) -> float:
        return self.step_losses[0]

    @property
    def final_loss(self) -> float:
        return self.step_losses[-1]


class Trainer:
    """Single-writer AdamW loop over caption-unique batches with cosine LR decay."""

    def __init__(self, model: DualEncoder, vocab: BpeVocab, cfg: TrainConfig):
        self.model = model
        self.vocab = vocab
        self.cfg = cfg
        decay, no_decay = [], []
        for name, p in model.trainable_parameters():
            (no_decay if p.ndim < 2 else decay).append(p)
        self.optimizer = torch.optim.AdamW(
            [{"params": decay, "weight_decay": cfg.weight_decay}, {"params": no_decay, "weight_decay": 0.0}],
            lr=cfg.base_lr, betas=cfg.betas, eps=cfg.eps,
        )
        self.step = 0

    def batch_tensors(self, data: PairDataset, idx: Sequence[int]):
        dtype = next(self.model.parameters()).dtype
        patches, valid = audio_inputs([data.specs[i] for i in idx], [data.n_frames[i] for i in idx],
                                      self.model.cfg, dtype=dtype)
        tokens = text_inputs([data.captions[i] for i in idx], self.vocab)
        return patches, valid, tokens

    def loss(self, patches, valid, tokens) -> torch.Tensor:
        ea = self.model.encode_audio(patches, valid)
        et = self.model.encode_text(tokens)
        return contrastive_loss(ea, et, self.model.tau)

    def backward_and_step(self, patches, valid, tokens, lr: float) -> float:
        loss = self.loss(patches, valid, tokens)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss.item()} at step {self.step} (tau={self.model.tau.item():.4g})")
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.optimizer.step()
        self.step += 1
        return loss.item()

    def total_steps(self, n_rows: int) -> int:
        per_epoch = max(1, math.ceil(n_rows / self.cfg.batch_size))
        total = per_epoch * self.cfg.epochs
        return min(total, self.cfg.max_steps) if self.cfg.max_steps else total

    def fit(self, data: PairDataset, on_epoch: Callable[[EpochLog], None] | None = None) -> TrainResult:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        total = self.total_steps(len(data))
        history, step_losses = [], []
        self.model.train()
        for epoch in range(cfg.epochs):
            losses, lr = [], cfg.base_lr
            for idx in iter_batches(data.captions, cfg.batch_size, rng, cfg.unique_captions):
                if self.step >= total:
                    break
                lr = cosine_lr(self.step, total, cfg.base_lr, cfg.min_lr, cfg.warmup_steps)
                losses.append(self.backward_and_step(*self.batch_tensors(data, idx), lr))
            if not losses:
                break
            step_losses.extend(losses)
            log = EpochLog(epoch, float(np.mean(losses)), lr, float(self.model.tau.item()))
            history.append(log)
            if on_epoch:
                on_epoch(log)
            if self.step >= total:
                break
        self.model.eval()
        if not step_losses:
            raise DegenerateBatch("no batch with two distinct captions could be formed")
        return TrainResult(self.step, history, step_losses)
