"""Two-generation write-once-memory code: 2-bit symbols in 3 cells.

Generation 1 codewords have weight <= 1, generation 2 codewords are their
bitwise complements (weight >= 2), so any first-generation codeword can be
turned into any second-generation one by setting cells only. Rewriting the
same symbol keeps the first-generation codeword; the caller records the
generation in the page's spare area.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError

CELLS_PER_SYMBOL = 3
BITS_PER_SYMBOL = 2


def _word(cells) -> tuple[int, int, int]:
    return tuple(int(c) for c in cells)


@dataclass(frozen=True)
class WomCode:
    enc1: tuple = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))
    enc2: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "enc2", tuple(tuple(1 - c for c in w) for w in self.enc1))

    @property
    def rate(self) -> float:
        """Logical bits stored per cell in one generation."""
        return math.log2(len(self.enc1)) / CELLS_PER_SYMBOL

    def encode(self, s: int, gen: int) -> tuple[int, int, int]:
        if not 0 <= s < 4:
            raise DomainError(f"symbol {s} outside 0..3")
        if gen == 1:
            return self.enc1[s]
        if gen == 2:
            return self.enc2[s]
        raise DomainError(f"generation must be 1 or 2, got {gen}")

    def decode(self, cells, gen: int) -> int:
        w = _word(cells)
        if gen == 2 and sum(w) >= 2:
            table = self.enc2
        elif sum(w) <= 1:
            table = self.enc1
        else:
            raise DomainError(f"{w} is not a generation-{gen} codeword")
        return table.index(w)

    def convert(self, current, s_new: int) -> tuple[int, int, int]:
        """Second-generation codeword for ``s_new`` reachable from ``current`` by setting cells."""
        cur = _word(current)
        if cur not in self.enc1:
            raise DomainError(f"{cur} is not a generation-1 codeword")
        if self.enc1.index(cur) == s_new:
            return cur
        target = self.encode(s_new, 2)
        if any(c > t for c, t in zip(cur, target)):
            raise DomainError(f"{cur} -> {target} would clear a cell")
        return target


DEFAULT_CODE = WomCode()


def bytes_to_symbols(data: bytes) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    return (bits[0::2] << 1 | bits[1::2]).astype(np.uint8)


def symbols_to_bytes(symbols) -> bytes:
    s = np.asarray(symbols, dtype=np.uint8)
    bits = np.empty(s.size * 2, dtype=np.uint8)
    bits[0::2] = s >> 1
    bits[1::2] = s & 1
    return np.packbits(bits).tobytes()


def encode_page(data: bytes, gen: int, cells_per_page: int) -> np.ndarray:
    """Encode ``data`` and zero-pad to a full page of cells."""
    cells = kernels.wom_encode(bytes_to_symbols(data), gen)
    if cells.size > cells_per_page:
        raise DomainError(f"{len(data)} bytes need {cells.size} cells, page has {cells_per_page}")
    out = np.zeros(cells_per_page, dtype=np.uint8)
    out[:cells.size] = cells
    return out


def decode_page(cells, gen: int, nbytes: int) -> bytes:
    used = nbytes * 8 // BITS_PER_SYMBOL * CELLS_PER_SYMBOL
    return symbols_to_bytes(kernels.wom_decode(np.asarray(cells)[:used], gen))


def convert_page(cells, data: bytes) -> np.ndarray:
    """Rewrite a generation-1 page so it decodes (as generation 2) to ``data``."""
    cells = np.asarray(cells, dtype=np.uint8)
    syms = bytes_to_symbols(data)
    used = syms.size * CELLS_PER_SYMBOL
    out = cells.copy()
    out[:used] = kernels.wom_convert(cells[:used], syms)
    return out


def page_bytes(cells_per_page: int) -> int:
    """Whole bytes one generation of a page can hold."""
    return cells_per_page // CELLS_PER_SYMBOL * BITS_PER_SYMBOL // 8
