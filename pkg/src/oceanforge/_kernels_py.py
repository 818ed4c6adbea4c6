"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def sixbit_unpack(payload: bytes) -> bytes:
    out = bytearray(6 * len(payload))
    for i, c in enumerate(payload):
        if c < 48 or c > 119 or 87 < c < 96:
            raise ValueError(i)
        v = c - 48
        if v > 40:
            v -= 8
        for j in range(6):
            out[6 * i + j] = (v >> (5 - j)) & 1
    return bytes(out)


def sixbit_pack(bits: bytes) -> bytes:
    nbits = len(bits)
    out = bytearray((nbits + 5) // 6)
    for i in range(len(out)):
        v = 0
        for j in range(6):
            k = 6 * i + j
            v = (v << 1) | (1 if k < nbits and bits[k] else 0)
        out[i] = v + 48 if v < 40 else v + 56
    return bytes(out)


def read_uint(bits: bytes, start: int, width: int) -> int:
    if width > 64 or start < 0 or start + width > len(bits):
        raise IndexError("bit field outside stream")
    acc = 0
    for i in range(start, start + width):
        acc = (acc << 1) | (bits[i] & 1)
    return acc


def read_int(bits: bytes, start: int, width: int) -> int:
    u = read_uint(bits, start, width)
    if width > 0 and (u >> (width - 1)) & 1:
        return u - (1 << width)
    return u


def pessimistic_ranks(scores: np.ndarray, correct: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    ranks = np.zeros(scores.shape[0], dtype=np.int64)
    for q in range(scores.shape[0]):
        row, hit = scores[q], correct[q]
        if not hit.any():
            continue
        best = row[hit].max()
        ranks[q] = int(np.count_nonzero(~hit & (row >= best))) + 1
    return ranks
