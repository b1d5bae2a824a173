"""Simulated storage media, snapshots and operation traces.

Two media are modelled: a block device (random-access, rewritable) and a NAND
flash array (set-only cells, block erase). Every physical operation is appended
to the device's trace; ``wonly`` projects a trace onto the operations that
leave marks on the medium.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .crypto import SeededRng
from .errors import BadLength, ConfigError, OutOfRange, WriteOnceViolation

READ = "Read"
WRITE = "Write"
ERASE = "Erase"
KINDS = (READ, WRITE, ERASE)

# spare-area flag slots per flash page
SPARE_GEN = 0
SPARE_INVALID = 1
SPARE_FLAGS = 2

DEFAULT_BLOCKS = 256
DEFAULT_BLOCK_SIZE = 4096
DEFAULT_ERASE_BLOCKS = 64
DEFAULT_PAGES_PER_BLOCK = 16
DEFAULT_CELLS_PER_PAGE = 96


@dataclass(frozen=True)
class OpEntry:
    kind: str
    location: int
    data: bytes | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operation kind {self.kind!r}")
        if self.kind == WRITE and self.data is None:
            raise ValueError("Write entries carry a payload")
        if self.kind != WRITE and self.data is not None:
            raise ValueError(f"{self.kind} entries carry no payload")

    def payload_digest(self) -> str | None:
        return None if self.data is None else hashlib.sha256(self.data).hexdigest()


@dataclass
class OpTrace:
    entries: list[OpEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[OpEntry]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __add__(self, other: "OpTrace") -> "OpTrace":
        return OpTrace(self.entries + other.entries)

    def append(self, entry: OpEntry) -> None:
        self.entries.append(entry)

    def locations(self, kind: str | None = None) -> list[int]:
        return [e.location for e in self.entries if kind is None or e.kind == kind]

    def count(self, kind: str) -> int:
        return sum(1 for e in self.entries if e.kind == kind)


def wonly(trace: OpTrace | Iterable[OpEntry]) -> OpTrace:
    """Drop Read entries; Write and Erase both mutate the medium and are kept."""
    return OpTrace([e for e in trace if e.kind != READ])


@dataclass(frozen=True)
class Snapshot:
    image: bytes
    meta: dict

    def digest(self) -> str:
        return hashlib.sha256(self.image).hexdigest()

    def blocks(self) -> np.ndarray:
        if self.meta["kind"] != "block":
            raise TypeError("not a block-device snapshot")
        return np.frombuffer(self.image, dtype=np.uint8).reshape(
            self.meta["num_blocks"], self.meta["block_size"])

    def _flash_split(self):
        if self.meta["kind"] != "flash":
            raise TypeError("not a flash snapshot")
        pages = self.meta["num_erase_blocks"] * self.meta["pages_per_block"]
        raw = np.frombuffer(self.image, dtype=np.uint8)
        ncell = pages * self.meta["cells_per_page"]
        return raw[:ncell].reshape(pages, -1), raw[ncell:].reshape(pages, SPARE_FLAGS)

    def cells(self) -> np.ndarray:
        return self._flash_split()[0]

    def spare(self) -> np.ndarray:
        return self._flash_split()[1]


class BlockDevice:
    def __init__(self, num_blocks: int = DEFAULT_BLOCKS, block_size: int = DEFAULT_BLOCK_SIZE,
                 rng: SeededRng | None = None):
        if num_blocks < 1 or block_size < 1:
            raise ConfigError("device needs at least one block of at least one byte")
        self.num_blocks = num_blocks
        self.block_size = block_size
        self.cells = np.zeros((num_blocks, block_size), dtype=np.uint8)
        self.trace = OpTrace()
        if rng is not None:
            self.randomize(rng)

    @property
    def capacity(self) -> int:
        return self.num_blocks * self.block_size

    def geometry(self) -> dict:
        return {"kind": "block", "num_blocks": self.num_blocks, "block_size": self.block_size}

    def randomize(self, rng: SeededRng) -> None:
        # initialisation, not an operation: nothing is traced
        raw = np.frombuffer(rng.bytes(self.capacity), dtype=np.uint8)
        self.cells[:] = raw.reshape(self.num_blocks, self.block_size)

    def _check(self, addr: int) -> None:
        if not 0 <= addr < self.num_blocks:
            raise OutOfRange(f"block {addr} outside [0, {self.num_blocks})")

    def read_block(self, addr: int) -> bytes:
        self._check(addr)
        self.trace.append(OpEntry(READ, addr))
        return self.cells[addr].tobytes()

    def write_block(self, addr: int, data: bytes) -> None:
        self._check(addr)
        if len(data) != self.block_size:
            raise BadLength(f"expected {self.block_size} bytes, got {len(data)}")
        data = bytes(data)
        self.cells[addr] = np.frombuffer(data, dtype=np.uint8)
        self.trace.append(OpEntry(WRITE, addr, data))

    def snapshot(self) -> Snapshot:
        return Snapshot(self.cells.tobytes(), self.geometry())

    def take_trace(self) -> OpTrace:
        trace, self.trace = self.trace, OpTrace()
        return trace


class FlashDevice:
    """NAND array: erased cells are 0, programming may only set 0 -> 1."""

    def __init__(self, num_erase_blocks: int = DEFAULT_ERASE_BLOCKS,
                 pages_per_block: int = DEFAULT_PAGES_PER_BLOCK,
                 cells_per_page: int = DEFAULT_CELLS_PER_PAGE):
        if min(num_erase_blocks, pages_per_block, cells_per_page) < 1:
            raise ConfigError("flash geometry must be positive")
        self.num_erase_blocks = num_erase_blocks
        self.pages_per_block = pages_per_block
        self.cells_per_page = cells_per_page
        self.num_pages = num_erase_blocks * pages_per_block
        self.cells = np.zeros((self.num_pages, cells_per_page), dtype=np.uint8)
        self.spare = np.zeros((self.num_pages, SPARE_FLAGS), dtype=np.uint8)
        self.erase_counts = np.zeros(num_erase_blocks, dtype=np.int64)
        self.trace = OpTrace()

    def geometry(self) -> dict:
        return {"kind": "flash", "num_erase_blocks": self.num_erase_blocks,
                "pages_per_block": self.pages_per_block, "cells_per_page": self.cells_per_page}

    def _check_page(self, page: int) -> None:
        if not 0 <= page < self.num_pages:
            raise OutOfRange(f"page {page} outside [0, {self.num_pages})")

    def read_page(self, page: int) -> tuple[np.ndarray, np.ndarray]:
        self._check_page(page)
        self.trace.append(OpEntry(READ, page))
        return self.cells[page].copy(), self.spare[page].copy()

    def program_page(self, page: int, cellbits, spare=None) -> None:
        """Program the page to ``cellbits`` (and ``spare``, default unchanged).

        Cells can only go 0 -> 1, so the request must cover every cell already set.
        """
        self._check_page(page)
        bits = np.ascontiguousarray(cellbits, dtype=np.uint8)
        flags = self.spare[page].copy() if spare is None \
            else np.ascontiguousarray(spare, dtype=np.uint8)
        if bits.shape != (self.cells_per_page,) or flags.shape != (SPARE_FLAGS,):
            raise BadLength("cellbits/spare do not match the page geometry")
        if np.any(bits > 1) or np.any(flags > 1):
            raise ValueError("cell values must be 0 or 1")
        bad = kernels.first_clear_violation(self.cells[page], bits)
        if bad >= 0:
            raise WriteOnceViolation(f"page {page} cell {bad} would go 1 -> 0")
        bad = kernels.first_clear_violation(self.spare[page], flags)
        if bad >= 0:
            raise WriteOnceViolation(f"page {page} spare flag {bad} would go 1 -> 0")
        self.cells[page] |= bits
        self.spare[page] |= flags
        self.trace.append(OpEntry(WRITE, page, bits.tobytes() + flags.tobytes()))

    def erase_block(self, eb: int) -> None:
        if not 0 <= eb < self.num_erase_blocks:
            raise OutOfRange(f"erase block {eb} outside [0, {self.num_erase_blocks})")
        lo, hi = eb * self.pages_per_block, (eb + 1) * self.pages_per_block
        self.cells[lo:hi] = 0
        self.spare[lo:hi] = 0
        self.erase_counts[eb] += 1
        self.trace.append(OpEntry(ERASE, eb))

    def snapshot(self) -> Snapshot:
        return Snapshot(self.cells.tobytes() + self.spare.tobytes(), self.geometry())

    def take_trace(self) -> OpTrace:
        trace, self.trace = self.trace, OpTrace()
        return trace


# free-function forms of the device operations
def read_block(dev: BlockDevice, addr: int) -> bytes:
    return dev.read_block(addr)


def write_block(dev: BlockDevice, addr: int, data: bytes) -> None:
    dev.write_block(addr, data)


def program_page(dev: FlashDevice, page: int, cellbits, spare=None) -> None:
    dev.program_page(page, cellbits, spare)


def erase_block(dev: FlashDevice, eb: int) -> None:
    dev.erase_block(eb)


def snapshot(dev) -> Snapshot:
    return dev.snapshot()


def take_trace(dev) -> OpTrace:
    return dev.take_trace()


# ---------------------------------------------------------------------------
# export formats
#
# trace: JSON Lines, one object per entry:
#   {"seq": int, "kind": "Read"|"Write"|"Erase", "location": int, "payload_digest": hex|null}
# snapshot: <stem>.img holds the raw image; <stem>.json holds
#   {"geometry": {...}, "seed": int|null, "scheme": str|null, "image_sha256": hex}

def trace_records(trace: OpTrace) -> list[dict]:
    return [{"seq": i, "kind": e.kind, "location": e.location, "payload_digest": e.payload_digest()}
            for i, e in enumerate(trace)]


def dump_trace(trace: OpTrace, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for rec in trace_records(trace):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def load_trace(path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def export_snapshot(snap: Snapshot, stem, seed: int | None = None, scheme: str | None = None):
    stem = Path(stem)
    img, side = stem.with_suffix(".img"), stem.with_suffix(".json")
    img.write_bytes(snap.image)
    side.write_text(json.dumps({"geometry": snap.meta, "seed": seed, "scheme": scheme,
                                "image_sha256": snap.digest()}, indent=2, sort_keys=True))
    return img, side


def load_snapshot(stem) -> tuple[Snapshot, dict]:
    stem = Path(stem)
    side = json.loads(stem.with_suffix(".json").read_text())
    snap = Snapshot(stem.with_suffix(".img").read_bytes(), side["geometry"])
    if snap.digest() != side["image_sha256"]:
        raise ValueError("snapshot image does not match its sidecar digest")
    return snap, side
