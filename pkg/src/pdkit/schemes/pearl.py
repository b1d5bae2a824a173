"""Flash scheme hiding data in second-generation WOM rewrites of invalid pages.

Public records are AEAD-encrypted and WOM-encoded (generation 1) into fresh
pages. Superseded public pages get the spare-area invalid flag and join the
pool of pages eligible for a second-generation write. Hidden records, and a
configurable share of public writes used as cover, are written by converting
an invalid page to the second-generation encoding of a new ciphertext.
"""
from __future__ import annotations

import struct

import numpy as np

from ..core import Layer, Level, Op, Pattern, PdScheme, generates_invalid_pages, last_unmount
from ..crypto import OVERHEAD, encrypt, try_decrypt
from ..device import DEFAULT_ERASE_BLOCKS, DEFAULT_PAGES_PER_BLOCK, SPARE_GEN, SPARE_INVALID, FlashDevice
from ..errors import ConfigError, DeviceFull, NoInvalidPages, NotFound
from ..wom import DEFAULT_CODE, convert_page, decode_page, encode_page, page_bytes

DEFAULT_PEARL_CELLS = 1536

_HEADER = struct.Struct("<BxxxIQ")  # kind, logical address (or chunk number), sequence
_KIND_PUB, _KIND_HID, _KIND_INDEX, _KIND_FILLER = 1, 2, 3, 4
_INDEX_ENTRY = struct.Struct("<II")

# in-memory page states; liveness of a used page comes from the maps
FREE, GEN1, INVALID1, GEN2 = 0, 1, 2, 3


class Pearl(PdScheme):
    scheme_id = "pearl"
    layer = Layer.FTL
    trace_oriented = False
    vocabulary = frozenset({Op.READ, Op.WRITE, Op.DELETE, Op.DUMMY, Op.UNMOUNT})

    def __init__(self, num_erase_blocks: int = DEFAULT_ERASE_BLOCKS,
                 pages_per_block: int = DEFAULT_PAGES_PER_BLOCK,
                 cells_per_page: int = DEFAULT_PEARL_CELLS, rewrite_prob: float = 0.25,
                 pub_pages: int | None = None, hid_pages: int | None = None, cover_pages: int | None = None,
                 seed: int = 0, rng=None):
        super().__init__(seed, rng)
        self.num_erase_blocks = num_erase_blocks
        self.pages_per_block = pages_per_block
        self.cells_per_page = cells_per_page
        self.num_pages = num_erase_blocks * pages_per_block
        if self.num_pages < 4:
            raise ConfigError("flash too small for pearl")
        if not 0.0 <= rewrite_prob <= 1.0:
            raise ConfigError("rewrite_prob must be in [0, 1]")
        self.rewrite_prob = rewrite_prob
        self.record_size = page_bytes(cells_per_page)
        self.payload_size = self.record_size - OVERHEAD - _HEADER.size
        if self.payload_size < _INDEX_ENTRY.size + 4:
            raise ConfigError(f"pages of {cells_per_page} cells cannot hold an encrypted record")
        self.pub_capacity = self.num_pages // 2 if pub_pages is None else pub_pages
        self.hid_capacity = self.num_pages // 8 if hid_pages is None else hid_pages
        if self.pub_capacity < 1 or self.hid_capacity < 1 or self.pub_capacity >= self.num_pages:
            raise ConfigError("volume capacities must be positive and leave spare pages")
        self.cover_pages = self.num_pages // 8 if cover_pages is None else cover_pages
        if not 0 <= self.cover_pages <= self.num_pages - self.pub_capacity:
            raise ConfigError("cover pages must fit beside the public volume")
        self._pub_opt, self._hid_opt, self._cover_opt = pub_pages, hid_pages, cover_pages
        self.index_per_page = (self.payload_size - 4) // _INDEX_ENTRY.size
        self.code = DEFAULT_CODE
        self._place_rng = self.rng.child(2)
        self.rule1 = last_unmount()
        self.rule2 = generates_invalid_pages()

    def options(self) -> dict:
        return {"num_erase_blocks": self.num_erase_blocks, "pages_per_block": self.pages_per_block,
                "cells_per_page": self.cells_per_page, "rewrite_prob": self.rewrite_prob,
                "pub_pages": self._pub_opt, "hid_pages": self._hid_opt, "cover_pages": self._cover_opt}

    def space_utilization(self) -> float:
        """Encodable logical bits per raw cell in one generation of a page."""
        return self.record_size * 8 / self.cells_per_page

    def _make_device(self):
        return FlashDevice(self.num_erase_blocks, self.pages_per_block, self.cells_per_page)

    # -- state -------------------------------------------------------------
    def _setup(self) -> None:
        self.state = np.full(self.num_pages, FREE, dtype=np.int8)
        self.page_table: dict[int, int] = {}
        self.pub_seq = 0
        self._cursor = 0
        self._clear_hidden()
        # a used device: superseded public pages already wait in the invalid pool
        for _ in range(self.cover_pages):
            record = self._record(self.keys.k_pub, _KIND_FILLER, 0, 0, self._content_rng.bytes(self.payload_size))
            self._invalidate(self._program_fresh(record))

    def _clear_hidden(self) -> None:
        self.hid_index: dict[int, int] = {}
        self.hid_mounted = False
        self.hid_dirty = False
        self.hid_seq = 0

    def invalid_pool(self) -> np.ndarray:
        return np.flatnonzero(self.state == INVALID1)

    def free_pages(self) -> int:
        return int(np.count_nonzero(self.state == FREE))

    def erase_counts(self) -> np.ndarray:
        return self.device.erase_counts.copy()

    # -- page primitives -----------------------------------------------------
    def _alloc_fresh(self, avoid: range | None = None) -> int:
        free = np.flatnonzero(self.state == FREE)
        if avoid is not None:
            free = free[(free < avoid.start) | (free >= avoid.stop)]
        if free.size == 0:
            raise DeviceFull("no erased pages left; run garbage collection")
        ahead = free[free >= self._cursor]
        page = int(ahead[0] if ahead.size else free[0])
        self._cursor = page + 1
        return page

    def _pick_invalid(self, avoid: range | None = None) -> int:
        pool = self.invalid_pool()
        if avoid is not None:
            pool = pool[(pool < avoid.start) | (pool >= avoid.stop)]
        if pool.size == 0:
            raise NoInvalidPages("no first-generation invalid page available")
        return int(pool[self._place_rng.randrange(pool.size)])

    def _record(self, key: bytes, kind: int, addr: int, seq: int, data: bytes) -> bytes:
        return encrypt(key, _HEADER.pack(kind, addr, seq) + data, self._content_rng)

    def _program_fresh(self, record: bytes, avoid: range | None = None) -> int:
        page = self._alloc_fresh(avoid)
        self.device.program_page(page, encode_page(record, 1, self.cells_per_page))
        self.state[page] = GEN1
        return page

    def _program_rewrite(self, record: bytes, avoid: range | None = None) -> int:
        page = self._pick_invalid(avoid)
        cells, flags = self.device.read_page(page)
        flags[SPARE_GEN] = 1
        self.device.program_page(page, convert_page(cells, record), flags)
        self.state[page] = GEN2
        return page

    def _invalidate(self, page: int) -> None:
        # a generation-2 page already carries the invalid flag from its first life
        if self.state[page] == GEN1:
            flags = self.device.spare[page].copy()
            flags[SPARE_INVALID] = 1
            self.device.program_page(page, self.device.cells[page], flags)
            self.state[page] = INVALID1

    def _load(self, page: int) -> tuple[bytes, int]:
        cells, spare = self.device.read_page(page)
        gen = 2 if spare[SPARE_GEN] else 1
        return decode_page(cells, gen, self.record_size), gen

    def _open(self, page: int, key: bytes):
        raw, _ = self._load(page)
        plain = try_decrypt(key, raw)
        if plain is None:
            return None
        kind, addr, seq = _HEADER.unpack_from(plain)
        return kind, addr, seq, plain[_HEADER.size:]

    # -- public volume -------------------------------------------------------
    def _write_public(self, addr: int, data: bytes, avoid: range | None = None, cover: bool = True) -> None:
        record = self._record(self.keys.k_pub, _KIND_PUB, addr, self.pub_seq, data)
        self.pub_seq += 1
        page = None
        if cover and self.rewrite_prob > 0 and self.invalid_pool().size \
                and self._place_rng.random() < self.rewrite_prob:
            page = self._program_rewrite(record, avoid)
        if page is None:
            page = self._program_fresh(record, avoid)
        old = self.page_table.get(addr)
        self.page_table[addr] = page
        if old is not None and avoid is None:
            self._invalidate(old)

    def _delete_public(self, addr: int) -> None:
        old = self.page_table.pop(addr, None)
        if old is None:
            raise NotFound(f"public page {addr} was never written")
        self._invalidate(old)

    def _read_public(self, addr: int) -> bytes:
        page = self.page_table.get(addr)
        if page is None:
            raise NotFound(f"public page {addr} was never written")
        return self._open(page, self.keys.k_pub)[3]

    # -- hidden volume -------------------------------------------------------
    def mount_hidden(self) -> None:
        """Rebuild the hidden index by trial-decrypting every second-generation page."""
        if self.hid_mounted:
            return
        self._clear_hidden()
        records: dict[int, tuple[int, int]] = {}
        chunks: dict[int, dict[int, bytes]] = {}
        top = -1
        for page in np.flatnonzero(self.state == GEN2).tolist():
            opened = self._open(page, self.keys.k_hid)
            if opened is None:
                continue
            kind, addr, seq, body = opened
            top = max(top, seq)
            if kind == _KIND_HID and (addr not in records or seq > records[addr][0]):
                records[addr] = (seq, page)
            elif kind == _KIND_INDEX:
                chunks.setdefault(seq, {})[addr] = body
        index, epoch = self._latest_index(chunks)
        if index is not None:
            # data pages newer than the last flushed index take precedence
            for addr, (seq, page) in records.items():
                if seq > epoch:
                    index[addr] = page
            self.hid_index = index
        else:
            self.hid_index = {addr: page for addr, (_, page) in records.items()}
        self.hid_seq = top + 1
        self.hid_mounted = True

    def _latest_index(self, chunks: dict[int, dict[int, bytes]]):
        for epoch in sorted(chunks, reverse=True):
            parts = chunks[epoch]
            total = struct.unpack_from("<H", parts[min(parts)])[0]
            if sorted(parts) != list(range(total)):
                continue
            index = {}
            for n in range(total):
                for addr, page in self._index_entries(parts[n]):
                    index[addr] = page
            return index, epoch
        return None, -1

    def _index_entries(self, body: bytes):
        _, count = struct.unpack_from("<HH", body)
        for i in range(count):
            yield _INDEX_ENTRY.unpack_from(body, 4 + i * _INDEX_ENTRY.size)

    def _write_hidden(self, addr: int, data: bytes, avoid: range | None = None) -> None:
        self.mount_hidden()
        record = self._record(self.keys.k_hid, _KIND_HID, addr, self.hid_seq, data)
        page = self._program_rewrite(record, avoid)
        self.hid_seq += 1
        self.hid_index[addr] = page
        self.hid_dirty = True

    def _read_hidden(self, addr: int) -> bytes:
        self.mount_hidden()
        page = self.hid_index.get(addr)
        if page is None:
            raise NotFound(f"hidden page {addr} was never written")
        return self._open(page, self.keys.k_hid)[3]

    def _delete_hidden(self, addr: int) -> None:
        self.mount_hidden()
        if self.hid_index.pop(addr, None) is None:
            raise NotFound(f"hidden page {addr} was never written")
        self.hid_dirty = True

    def unmount(self) -> None:
        """Flush the hidden index into disguised second-generation pages and forget it."""
        if self.hid_mounted and self.hid_dirty:
            entries = sorted(self.hid_index.items())
            per = self.index_per_page
            chunks = [entries[i:i + per] for i in range(0, len(entries), per)] or [[]]
            if self.invalid_pool().size < len(chunks):
                raise NoInvalidPages("not enough invalid pages to hold the hidden index")
            epoch = self.hid_seq
            for n, chunk in enumerate(chunks):
                body = struct.pack("<HH", len(chunks), len(chunk)) + b"".join(
                    _INDEX_ENTRY.pack(a, p) for a, p in chunk)
                body = body.ljust(self.payload_size, b"\0")
                self._program_rewrite(self._record(self.keys.k_hid, _KIND_INDEX, n, epoch, body))
        self._clear_hidden()

    # -- Oper ------------------------------------------------------------------
    def _run(self, pattern: Pattern) -> None:
        unmount = False
        for req in pattern:
            hid = req.level is Level.HID
            if req.op is Op.UNMOUNT:
                unmount = True  # applied once the whole pattern has run
            elif req.op is Op.WRITE:
                (self._write_hidden if hid else self._write_public)(req.addr, req.data)
            elif req.op is Op.READ:
                data = self._read_hidden(req.addr) if hid else self._read_public(req.addr)
                self.read_results.append((req, data))
            elif req.op is Op.DELETE:
                (self._delete_hidden if hid else self._delete_public)(req.addr)
        if unmount:
            self.unmount()

    # -- public remount and garbage collection --------------------------------
    def mount(self) -> None:
        """Rebuild public state from the flash contents; the hidden volume stays unmounted."""
        cells_state = np.full(self.num_pages, FREE, dtype=np.int8)
        best: dict[int, tuple[int, int]] = {}
        top = -1
        for page in range(self.num_pages):
            cells, spare = self.device.cells[page], self.device.spare[page]
            if spare[SPARE_GEN]:
                cells_state[page] = GEN2
            elif spare[SPARE_INVALID]:
                cells_state[page] = INVALID1
            elif cells.any():
                cells_state[page] = GEN1
            else:
                continue
            if cells_state[page] == INVALID1:
                continue
            opened = self._open(page, self.keys.k_pub)
            if opened is None or opened[0] != _KIND_PUB:
                continue
            _, addr, seq, _ = opened
            top = max(top, seq)
            if addr not in best or seq > best[addr][0]:
                best[addr] = (seq, page)
        self.state = cells_state
        self.page_table = {addr: page for addr, (_, page) in best.items()}
        self.pub_seq = top + 1
        self._cursor = 0
        self._clear_hidden()

    def gc(self, target_free: int | None = None) -> int:
        """Erase blocks holding superseded pages, relocating their live records first.

        The hidden volume is mounted so its records survive relocation. Returns
        the number of erase blocks reclaimed.
        """
        self.mount_hidden()
        target = self.num_pages // 4 if target_free is None else target_free
        ppb = self.pages_per_block
        live = set(self.page_table.values()) | set(self.hid_index.values())
        order = []
        for eb in range(self.num_erase_blocks):
            pages = range(eb * ppb, (eb + 1) * ppb)
            used = [p for p in pages if self.state[p] != FREE]
            n_live = sum(p in live for p in used)
            if len(used) > n_live:
                order.append((n_live, eb))
        erased = 0
        for _, eb in sorted(order):
            if self.free_pages() >= target:
                break
            span = range(eb * ppb, (eb + 1) * ppb)
            try:
                self._evacuate(span)
            except (DeviceFull, NoInvalidPages):
                break
            self.device.erase_block(eb)
            self.state[span.start:span.stop] = FREE
            erased += 1
        if erased:
            self.hid_dirty = True  # an erased block may have held index pages
        return erased

    def _evacuate(self, span: range) -> None:
        pub = [(a, p) for a, p in self.page_table.items() if p in span]
        hid = [(a, p) for a, p in self.hid_index.items() if p in span]
        fresh_needed = len(pub)
        outside_free = np.count_nonzero(self.state == FREE) - np.count_nonzero(
            self.state[span.start:span.stop] == FREE)
        pool = self.invalid_pool()
        outside_pool = np.count_nonzero((pool < span.start) | (pool >= span.stop))
        if outside_free < fresh_needed or outside_pool < len(hid):
            raise DeviceFull("not enough room outside the block to relocate live records")
        for addr, page in pub:
            self._write_public(addr, self._open(page, self.keys.k_pub)[3], avoid=span, cover=False)
        for addr, page in hid:
            self._write_hidden(addr, self._open(page, self.keys.k_hid)[3], avoid=span)
