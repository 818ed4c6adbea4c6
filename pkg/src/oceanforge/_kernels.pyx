# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Must stay behaviour-identical to ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def sixbit_unpack(const unsigned char[:] payload):
    cdef Py_ssize_t n = payload.shape[0]
    cdef Py_ssize_t i, j
    cdef int c, v
    out = bytearray(6 * n)
    cdef unsigned char[:] bits = out
    for i in range(n):
        c = payload[i]
        if c < 48 or c > 119 or (87 < c < 96):
            raise ValueError(i)
        v = c - 48
        if v > 40:
            v -= 8
        for j in range(6):
            bits[6 * i + j] = (v >> (5 - j)) & 1
    return bytes(out)


def sixbit_pack(const unsigned char[:] bits):
    cdef Py_ssize_t nbits = bits.shape[0]
    cdef Py_ssize_t nchars = (nbits + 5) // 6
    cdef Py_ssize_t i, j, k
    cdef int v
    out = bytearray(nchars)
    cdef unsigned char[:] chars = out
    for i in range(nchars):
        v = 0
        for j in range(6):
            k = 6 * i + j
            v <<= 1
            if k < nbits and bits[k]:
                v |= 1
        chars[i] = v + 48 if v < 40 else v + 56
    return bytes(out)


def read_uint(const unsigned char[:] bits, Py_ssize_t start, Py_ssize_t width):
    cdef unsigned long long acc = 0
    cdef Py_ssize_t i
    if width > 64 or start < 0 or start + width > bits.shape[0]:
        raise IndexError("bit field outside stream")
    for i in range(start, start + width):
        acc = (acc << 1) | (bits[i] & 1)
    return acc


def read_int(const unsigned char[:] bits, Py_ssize_t start, Py_ssize_t width):
    cdef unsigned long long u = read_uint(bits, start, width)
    if width > 0 and (u >> (width - 1)) & 1:
        return <long long>u - (<long long>1 << width)
    return <long long>u


def pessimistic_ranks(const double[:, :] scores, const unsigned char[:, :] correct):
    cdef Py_ssize_t nq = scores.shape[0]
    cdef Py_ssize_t nt = scores.shape[1]
    cdef Py_ssize_t q, t
    cdef double best
    cdef int found
    cdef long long above
    out = np.zeros(nq, dtype=np.int64)
    cdef long long[:] ranks = out
    for q in range(nq):
        found = 0
        best = 0.0
        for t in range(nt):
            if correct[q, t] and (not found or scores[q, t] > best):
                best = scores[q, t]
                found = 1
        if not found:
            continue
        above = 0
        for t in range(nt):
            if not correct[q, t] and scores[q, t] >= best:
                above += 1
        ranks[q] = above + 1
    return out
