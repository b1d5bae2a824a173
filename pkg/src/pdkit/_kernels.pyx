# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: bit statistics, WOM page coding, flash program checks.

Mirrors pdkit._kernels_py exactly; pdkit.kernels picks one at import.
"""
import numpy as np

from libc.stdint cimport uint64_t
from libc.string cimport memcpy

cdef unsigned char ENC1[4]
cdef unsigned char ENC2[4]
cdef signed char DEC1[8]
cdef signed char DEC2[8]
cdef unsigned char POP8[256]

# 3-cell codewords packed as c0<<2 | c1<<1 | c2
ENC1[:] = [0b000, 0b100, 0b010, 0b001]
ENC2[:] = [0b111, 0b011, 0b101, 0b110]
DEC1[:] = [0, 3, 2, -1, 1, -1, -1, -1]
DEC2[:] = [-1, -1, -1, 1, -1, 2, 3, 0]

cdef int _i
for _i in range(256):
    POP8[_i] = (_i & 1) + ((_i >> 1) & 1) + ((_i >> 2) & 1) + ((_i >> 3) & 1) \
        + ((_i >> 4) & 1) + ((_i >> 5) & 1) + ((_i >> 6) & 1) + ((_i >> 7) & 1)


def popcount(const unsigned char[::1] buf):
    cdef Py_ssize_t i, n = buf.shape[0]
    cdef long long total = 0
    for i in range(n):
        total += POP8[buf[i]]
    return total


def byte_histogram(const unsigned char[::1] buf):
    out = np.zeros(256, dtype=np.int64)
    cdef long long[::1] h = out
    cdef Py_ssize_t i, n = buf.shape[0]
    for i in range(n):
        h[buf[i]] += 1
    return out


def pattern_counts(const unsigned char[::1] buf, int m):
    """Counts of overlapping m-bit patterns, MSB-first, wrapping at the end."""
    if m < 1 or m > 16:
        raise ValueError("m must be in [1, 16]")
    out = np.zeros(1 << m, dtype=np.int64)
    cdef long long[::1] h = out
    cdef Py_ssize_t nbits = buf.shape[0] * 8
    if nbits == 0:
        return out
    cdef unsigned int mask = (1u << m) - 1
    cdef unsigned int window = 0
    cdef Py_ssize_t i, j
    cdef int bit
    # prime the window with the first m-1 bits
    for i in range(m - 1):
        j = i % nbits
        bit = (buf[j >> 3] >> (7 - (j & 7))) & 1
        window = ((window << 1) | bit) & mask
    for i in range(m - 1, nbits + m - 1):
        j = i % nbits
        bit = (buf[j >> 3] >> (7 - (j & 7))) & 1
        window = ((window << 1) | bit) & mask
        h[window] += 1
    return out


def wom_encode(const unsigned char[::1] symbols, int gen):
    cdef Py_ssize_t i, n = symbols.shape[0]
    out = np.empty(3 * n, dtype=np.uint8)
    cdef unsigned char[::1] c = out
    cdef unsigned char w
    if gen != 1 and gen != 2:
        raise ValueError("generation must be 1 or 2")
    for i in range(n):
        if symbols[i] > 3:
            raise ValueError("symbol out of range")
        w = ENC1[symbols[i]] if gen == 1 else ENC2[symbols[i]]
        c[3 * i] = (w >> 2) & 1
        c[3 * i + 1] = (w >> 1) & 1
        c[3 * i + 2] = w & 1
    return out


def wom_decode(const unsigned char[::1] cells, int gen):
    cdef Py_ssize_t i, n = cells.shape[0] // 3
    if cells.shape[0] % 3:
        raise ValueError("cell count must be a multiple of 3")
    out = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] s = out
    cdef unsigned int w, weight
    cdef signed char v
    for i in range(n):
        w = (cells[3 * i] << 2) | (cells[3 * i + 1] << 1) | cells[3 * i + 2]
        weight = cells[3 * i] + cells[3 * i + 1] + cells[3 * i + 2]
        if gen == 1 or weight <= 1:
            v = DEC1[w]
        else:
            v = DEC2[w]
        if v < 0 or (gen == 1 and weight > 1):
            raise ValueError(f"invalid generation-{gen} codeword at group {i}")
        s[i] = v
    return out


def wom_convert(const unsigned char[::1] cells, const unsigned char[::1] symbols):
    cdef Py_ssize_t i, n = symbols.shape[0]
    if cells.shape[0] != 3 * n:
        raise ValueError("cells/symbols length mismatch")
    out = np.empty(3 * n, dtype=np.uint8)
    cdef unsigned char[::1] c = out
    cdef unsigned int cur, target
    cdef signed char old
    for i in range(n):
        cur = (cells[3 * i] << 2) | (cells[3 * i + 1] << 1) | cells[3 * i + 2]
        old = DEC1[cur]
        if old < 0 or symbols[i] > 3:
            raise ValueError(f"group {i} is not a generation-1 codeword")
        if old == symbols[i]:
            target = cur
        else:
            target = ENC2[symbols[i]]
            if cur & ~target & 7:
                raise ValueError(f"group {i}: conversion would clear a cell")
        c[3 * i] = (target >> 2) & 1
        c[3 * i + 1] = (target >> 1) & 1
        c[3 * i + 2] = target & 1
    return out


def first_clear_violation(const unsigned char[::1] current, const unsigned char[::1] requested):
    """Index of the first cell that would go 1 -> 0, or -1."""
    cdef Py_ssize_t i, n = current.shape[0]
    cdef uint64_t a, b
    if requested.shape[0] != n:
        raise ValueError("length mismatch")
    if n == 0:
        return -1
    i = 0
    # eight cells per step; cells are 0/1 so the low bit of each byte is the cell
    while i + 8 <= n:
        memcpy(&a, &current[i], 8)
        memcpy(&b, &requested[i], 8)
        if a & ~b & 0x0101010101010101ULL:
            break
        i += 8
    while i < n:
        if current[i] & ~requested[i] & 1:
            return i
        i += 1
    return -1
