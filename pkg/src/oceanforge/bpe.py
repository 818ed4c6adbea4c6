"""Lower-cased byte-level BPE tokenizer with [SOS]/[EOS]/[PAD] specials."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .errors import VocabTooSmall

SOS, EOS, PAD = 256, 257, 258
N_BASE = 259
DEFAULT_MAX_LEN = 77

# words keep their leading space so decode(encode(s)) restores s exactly
_PRETOKEN = re.compile(r" ?[^\W\d_]+| ?\d+| ?[^\s\w]+|\s+(?!\S)|\s+|_+")


def pretokenize(text: str) -> list[bytes]:
    return [m.group().encode("utf-8") for m in _PRETOKEN.finditer(text)]


def _merge_word(word: tuple[int, ...], pair: tuple[int, int], new_id: int) -> tuple[int, ...]:
    out, i = [], 0
    while i < len(word):
        if i + 1 < len(word) and word[i] == pair[0] and word[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


@dataclass
class BpeVocab:
    merges: list[tuple[int, int]]
    vocab_size: int = 512
    max_len: int = DEFAULT_MAX_LEN
    _ranks: dict = field(init=False, repr=False)
    _bytes: list = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        if N_BASE + len(self.merges) > self.vocab_size:
            raise VocabTooSmall(f"{len(self.merges)} merges do not fit vocab_size {self.vocab_size}")
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._bytes = [bytes([i]) for i in range(256)] + [b"", b"", b""]
        for a, b in self.merges:
            self._bytes.append(self._bytes[a] + self._bytes[b])
        self._cache = {}

    def token_bytes(self, token_id: int) -> bytes:
        return self._bytes[token_id]

    def _encode_word(self, word: bytes) -> tuple[int, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        ids = tuple(word)
        while len(ids) > 1:
            ranked = [(self._ranks.get(p, len(self._ranks)), p) for p in zip(ids, ids[1:])]
            rank, pair = min(ranked)
            if rank == len(self._ranks):
                break
            ids = _merge_word(ids, pair, N_BASE + rank)
        self._cache[word] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        body: list[int] = []
        for word in pretokenize(text.lower()):
            body.extend(self._encode_word(word))
        body = body[: self.max_len - 2]
        return [SOS, *body, EOS]

    def decode(self, ids: Iterable[int]) -> str:
        raw = b"".join(self._bytes[i] for i in ids if i not in (SOS, EOS, PAD))
        return raw.decode("utf-8", errors="replace")

    def encode_batch(self, texts: Iterable[str]) -> list[list[int]]:
        """Encode and right-pad with [PAD] to ``max_len``."""
        return [ids + [PAD] * (self.max_len - len(ids)) for ids in map(self.encode, texts)]

    def to_dict(self) -> dict:
        return {"merges": [list(m) for m in self.merges], "vocab_size": self.vocab_size, "max_len": self.max_len}

    @classmethod
    def from_dict(cls, d: dict) -> "BpeVocab":
        return cls([tuple(m) for m in d["merges"]], d["vocab_size"], d.get("max_len", DEFAULT_MAX_LEN))


def bpe_train(corpus: Iterable[str], vocab_size: int = 512, max_len: int = DEFAULT_MAX_LEN) -> BpeVocab:
    """Greedy BPE: merge the most frequent adjacent pair until the budget is spent.

    Ties go to the lexicographically smallest pair of token byte strings.
    Training stops early when no pair occurs at least twice.
    """
    if vocab_size < N_BASE:
        raise VocabTooSmall(f"vocab_size {vocab_size} below the {N_BASE} base tokens (256 bytes + 3 specials)")
    words: Counter = Counter()
    for line in corpus:
        for w in pretokenize(line.lower()):
            words[tuple(w)] += 1
    token_bytes = [bytes([i]) for i in range(256)] + [b"", b"", b""]
    merges: list[tuple[int, int]] = []
    for new_id in range(N_BASE, vocab_size):
        pair_counts: Counter = Counter()
        for word, freq in words.items():
            for pair in zip(word, word[1:]):
                pair_counts[pair] += freq
        if not pair_counts:
            break
        best = min(pair_counts, key=lambda p: (-pair_counts[p], token_bytes[p[0]], token_bytes[p[1]]))
        if pair_counts[best] < 2 and merges:
            break
        merges.append(best)
        token_bytes.append(token_bytes[best[0]] + token_bytes[best[1]])
        words = Counter({_merge_word(w, best, new_id): f for w, f in words.items()})
    return BpeVocab(merges, vocab_size, max_len)
