"""Audio-to-text retrieval (Recall@K) and nearest-prompt classification."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from . import kernels
from .bpe import BpeVocab
from .errors import CorpusOverlapInZeroShot, DimMismatch, EmptyPromptSet, InputError, MissingGroundTruth, ZeroVector
from .model import DualEncoder, audio_inputs, text_inputs

MODES = ("supervised", "zero_shot", "retrieval")
DEFAULT_KS = (1, 3, 5)


def cosine_similarity(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _unit_rows(x: np.ndarray, what: str) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroVector(f"{what}: row {int(np.argmin(norms[:, 0]))} has zero norm")
    return x / norms


def cosine_matrix(queries, targets) -> np.ndarray:
    q, t = _unit_rows(queries, "queries"), _unit_rows(targets, "targets")
    if q.shape[1] != t.shape[1]:
        raise DimMismatch(f"embedding widths differ: {q.shape[1]} vs {t.shape[1]}")
    return np.clip(q @ t.T, -1.0, 1.0)


@dataclass
class SimilarityMatrix:
    """Query-by-target scores with a boolean ground-truth match map."""

    scores: np.ndarray
    query_ids: list
    target_ids: list
    correct: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.correct = np.asarray(self.correct, dtype=bool)
        if self.scores.ndim != 2 or self.scores.shape != self.correct.shape:
            raise DimMismatch(f"scores {self.scores.shape} and match map {self.correct.shape} disagree")
        if len(self.query_ids) != self.scores.shape[0] or len(self.target_ids) != self.scores.shape[1]:
            raise DimMismatch("id lists do not match the score matrix")

    @classmethod
    def from_labels(cls, scores, query_labels: Sequence[str], target_labels: Sequence[str],
                    query_ids=None, target_ids=None) -> "SimilarityMatrix":
        correct = np.asarray(query_labels, dtype=object)[:, None] == np.asarray(target_labels, dtype=object)[None, :]
        return cls(scores, list(query_ids if query_ids is not None else range(len(query_labels))),
                   list(target_ids if target_ids is not None else target_labels), correct)

    @classmethod
    def from_embeddings(cls, query_emb, target_emb, query_labels, target_labels,
                        query_ids=None, target_ids=None) -> "SimilarityMatrix":
        return cls.from_labels(cosine_matrix(query_emb, target_emb), query_labels, target_labels,
                               query_ids, target_ids)

    def ranks(self) -> np.ndarray:
        """Pessimistic rank of the best correct target per query (ties count against it)."""
        ranks = kernels.pessimistic_ranks(np.ascontiguousarray(self.scores),
                                          np.ascontiguousarray(self.correct, dtype=np.uint8))
        missing = np.flatnonzero(np.asarray(ranks) == 0)
        if missing.size:
            raise MissingGroundTruth(f"query {self.query_ids[missing[0]]!r} has no correct target")
        return np.asarray(ranks)


def recall_at_k(sim: SimilarityMatrix, ks: Sequence[int] = DEFAULT_KS) -> dict:
    """R@K in percent for each K."""
    if sim.scores.shape[0] == 0:
        raise InputError("no queries")
    ranks = sim.ranks()
    return {f"R@{k}": _percent(ranks <= k) for k in ks}


def _percent(hits: np.ndarray) -> float:
    return 100.0 * int(np.count_nonzero(hits)) / len(hits)


def zero_shot_classify(audio_emb, class_prompts: Sequence[str],
                       encoder: Callable[[Sequence[str]], np.ndarray]):
    """Nearest prompt by cosine; the lowest prompt index wins ties.

    ``encoder`` maps a list of prompts to their embeddings and is called once.
    Returns one prompt for a single embedding, a list for a batch.
    """
    if len(class_prompts) == 0:
        raise EmptyPromptSet("no class prompts")
    return classify_with_prompts(audio_emb, class_prompts, encoder(list(class_prompts)))


def classify_with_prompts(audio_emb, class_prompts: Sequence[str], prompt_emb):
    if len(class_prompts) == 0:
        raise EmptyPromptSet("no class prompts")
    single = np.ndim(audio_emb) == 1
    idx = np.argmax(cosine_matrix(audio_emb, prompt_emb), axis=1)
    preds = [class_prompts[i] for i in idx]
    return preds[0] if single else preds


@dataclass(frozen=True)
class EvalProtocol:
    train_corpus_id: str
    test_corpus_id: str
    mode: str = "retrieval"
    targets: str = "prompts"

    def __post_init__(self):
        mode = self.mode.replace("-", "_").replace("zeroshot", "zero_shot")
        object.__setattr__(self, "mode", mode)
        if mode not in MODES:
            raise InputError(f"unknown eval mode {self.mode!r}; expected one of {MODES}")
        if self.targets not in ("prompts", "captions"):
            raise InputError(f"unknown retrieval targets {self.targets!r}")
        if mode == "zero_shot" and self.train_corpus_id == self.test_corpus_id:
            raise CorpusOverlapInZeroShot(
                f"zero-shot needs disjoint corpora; train and test are both {self.train_corpus_id!r}")


@dataclass
class EvalReport:
    mode: str
    n_queries: int
    recall: dict
    top1: float
    per_category: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = [self.recall[k] for k in sorted(self.recall, key=lambda s: int(s[2:]))]
        if any(a > b for a, b in zip(vals, vals[1:])) or (vals and vals[-1] > 100.0):
            raise InputError(f"recall values are not monotone in K: {self.recall}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "n_queries": self.n_queries, **self.recall, "top1": self.top1,
                "top1_averaging": "micro", "per_category": self.per_category}


def evaluate_embeddings(audio_emb, categories: Sequence[str], target_emb, target_labels: Sequence[str],
                        prompts: Sequence[str], prompt_emb, mode: str = "retrieval",
                        query_ids=None, ks: Sequence[int] = DEFAULT_KS) -> EvalReport:
    """Metrics from precomputed embeddings; categories are the queries' ground-truth labels."""
    sim = SimilarityMatrix.from_embeddings(audio_emb, target_emb, categories, target_labels, query_ids)
    recall = recall_at_k(sim, ks)
    preds = classify_with_prompts(np.atleast_2d(audio_emb), prompts, prompt_emb)
    hits = np.array([p == c for p, c in zip(preds, categories)])
    ranks = sim.ranks()
    per_cat = defaultdict(list)
    for i, c in enumerate(categories):
        per_cat[c].append(i)
    per_category = {
        c: {"n": len(ix), "top1": _percent(hits[ix]), **{f"R@{k}": _percent(ranks[ix] <= k) for k in ks}}
        for c, ix in sorted(per_cat.items())
    }
    return EvalReport(mode, len(categories), recall, _percent(hits), per_category)


@torch.no_grad()
def embed_audio(model: DualEncoder, specs, n_frames, batch_size: int = 32) -> np.ndarray:
    model.eval()
    dtype = next(model.parameters()).dtype
    out = []
    for s in range(0, len(specs), batch_size):
        patches, valid = audio_inputs(specs[s:s + batch_size], n_frames[s:s + batch_size], model.cfg, dtype=dtype)
        out.append(model.encode_audio(patches, valid).double().numpy())
    return np.concatenate(out) if out else np.zeros((0, model.cfg.embed_dim))


@torch.no_grad()
def embed_text(model: DualEncoder, vocab: BpeVocab, texts: Sequence[str]) -> np.ndarray:
    model.eval()
    return model.encode_text(text_inputs(list(texts), vocab)).double().numpy()


def select_queries(rows: Sequence[dict], protocol: EvalProtocol) -> list[dict]:
    """One row per segment; same-corpus protocols keep only the held-out split."""
    held_out = protocol.test_corpus_id == protocol.train_corpus_id
    seen, picked = set(), []
    for row in rows:
        seg = row["segment_id"]
        if seg in seen:
            continue
        if held_out and protocol.mode != "zero_shot" and row.get("split", "eval") != "eval":
            continue
        seen.add(seg)
        picked.append(row)
    return picked


def run_protocol(protocol: EvalProtocol, model: DualEncoder, vocab: BpeVocab, rows: Sequence[dict],
                 features: dict, prompts: Sequence[str], ks: Sequence[int] = DEFAULT_KS) -> EvalReport:
    """Evaluate manifest rows; ``features`` maps segment_id -> (spectrogram, n_frames)."""
    if len(prompts) == 0:
        raise EmptyPromptSet("no class prompts")
    queries = select_queries(rows, protocol)
    if not queries:
        raise InputError("no evaluation rows after applying the protocol")
    missing = [q["segment_id"] for q in queries if q["segment_id"] not in features]
    if missing:
        raise InputError(f"{len(missing)} segments have no features, e.g. {missing[0]!r}")
    specs = [features[q["segment_id"]][0] for q in queries]
    frames = [features[q["segment_id"]][1] for q in queries]
    categories = [q["category"] for q in queries]
    audio = embed_audio(model, specs, frames)
    prompt_emb = embed_text(model, vocab, prompts)
    if protocol.mode == "retrieval" and protocol.targets == "captions":
        captions = list(dict.fromkeys(r["caption"] for r in rows if r["segment_id"] in {q["segment_id"] for q in queries}))
        cat_of = {r["caption"]: r["category"] for r in rows}
        target_emb, target_labels = embed_text(model, vocab, captions), [cat_of[c] for c in captions]
    else:
        target_emb, target_labels = prompt_emb, list(prompts)
    return evaluate_embeddings(audio, categories, target_emb, target_labels, prompts, prompt_emb,
                               protocol.mode, [q["segment_id"] for q in queries], ks)
