"""Pure numpy fallback for the compiled kernels in _kernels.pyx."""
import numpy as np

# 3-cell codewords as (c0, c1, c2) rows
ENC1 = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.uint8)
ENC2 = 1 - ENC1
DEC1 = np.array([0, 3, 2, -1, 1, -1, -1, -1], dtype=np.int8)
DEC2 = np.array([-1, -1, -1, 1, -1, 2, 3, 0], dtype=np.int8)
_WEIGHTS = np.array([0, 1, 1, 2, 1, 2, 2, 3], dtype=np.uint8)


def _as_u8(buf):
    return np.frombuffer(buf, dtype=np.uint8) if isinstance(buf, (bytes, bytearray, memoryview)) \
        else np.ascontiguousarray(buf, dtype=np.uint8)


def popcount(buf):
    return int(np.unpackbits(_as_u8(buf)).sum(dtype=np.int64))


def byte_histogram(buf):
    return np.bincount(_as_u8(buf), minlength=256).astype(np.int64)


def pattern_counts(buf, m):
    if m < 1 or m > 16:
        raise ValueError("m must be in [1, 16]")
    bits = np.unpackbits(_as_u8(buf)).astype(np.int64)
    n = bits.size
    if n == 0:
        return np.zeros(1 << m, dtype=np.int64)
    ext = np.concatenate([bits, np.resize(bits, m - 1)]) if m > 1 else bits
    idx = np.zeros(n, dtype=np.int64)
    for k in range(m):
        idx = (idx << 1) | ext[k:k + n]
    return np.bincount(idx, minlength=1 << m).astype(np.int64)


def _packed(cells):
    c = _as_u8(cells)
    if c.size % 3:
        raise ValueError("cell count must be a multiple of 3")
    g = c.reshape(-1, 3).astype(np.int64)
    return (g[:, 0] << 2) | (g[:, 1] << 1) | g[:, 2]


def wom_encode(symbols, gen):
    s = _as_u8(symbols)
    if gen not in (1, 2):
        raise ValueError("generation must be 1 or 2")
    if s.size and s.max() > 3:
        raise ValueError("symbol out of range")
    table = ENC1 if gen == 1 else ENC2
    return table[s].reshape(-1).copy()


def wom_decode(cells, gen):
    w = _packed(cells)
    weight = _WEIGHTS[w]
    if gen == 1:
        if np.any(weight > 1):
            bad = int(np.argmax(weight > 1))
            raise ValueError(f"invalid generation-{gen} codeword at group {bad}")
        v = DEC1[w]
    else:
        v = np.where(weight <= 1, DEC1[w], DEC2[w])
    if np.any(v < 0):
        raise ValueError(f"invalid generation-{gen} codeword at group {int(np.argmax(v < 0))}")
    return v.astype(np.uint8)


def wom_convert(cells, symbols):
    s = _as_u8(symbols)
    cur = _packed(cells)
    if cur.size != s.size:
        raise ValueError("cells/symbols length mismatch")
    old = DEC1[cur]
    if np.any(old < 0) or (s.size and s.max() > 3):
        raise ValueError("group is not a generation-1 codeword")
    target_rows = ENC2[s]
    target = (target_rows[:, 0].astype(np.int64) << 2) | (target_rows[:, 1] << 1) | target_rows[:, 2]
    keep = old == s
    final = np.where(keep, cur, target)
    if np.any(cur & ~final & 7):
        raise ValueError("conversion would clear a cell")
    out = np.empty((s.size, 3), dtype=np.uint8)
    out[:, 0] = (final >> 2) & 1
    out[:, 1] = (final >> 1) & 1
    out[:, 2] = final & 1
    return out.reshape(-1)


def first_clear_violation(current, requested):
    a, b = _as_u8(current), _as_u8(requested)
    if a.size != b.size:
        raise ValueError("length mismatch")
    bad = np.flatnonzero(a & ~b & 1)
    return int(bad[0]) if bad.size else -1
