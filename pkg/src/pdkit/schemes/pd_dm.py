"""Canonical-form PD: a circular log of (public block, payload slot) pairs.

Every append writes physical blocks ``2h`` and ``2h+1`` in that order. The
payload slot carries the next queued hidden block under the hidden key, or
fresh random bytes. Each record embeds its own map delta (sequence number and
logical address), so the maps can be rebuilt by replaying the log.
"""
from __future__ import annotations

import math
import struct
from collections import OrderedDict

import numpy as np

from ..core import Layer, Level, Op, Pattern, PdScheme, min_pub_writes, pub2_empty
from ..crypto import OVERHEAD, decrypt, encrypt, try_decrypt
from ..device import DEFAULT_BLOCK_SIZE, DEFAULT_BLOCKS, BlockDevice
from ..errors import ConfigError, LogFull, NotFound, QueueOverflow

_HEADER = struct.Struct("<QI")  # sequence number, logical address


class PdDm(PdScheme):
    scheme_id = "pd_dm"
    layer = Layer.BD
    trace_oriented = True

    def __init__(self, num_blocks: int = DEFAULT_BLOCKS, block_size: int = DEFAULT_BLOCK_SIZE,
                 phi: float = 1.0, queue_bound: int = 128, segment_pairs: int | None = None,
                 pub_blocks: int | None = None, hid_blocks: int | None = None, seed: int = 0, rng=None):
        super().__init__(seed, rng)
        if num_blocks < 2 or num_blocks % 2:
            raise ConfigError("pd_dm needs an even, non-zero number of blocks")
        if phi <= 0:
            raise ConfigError("phi must be positive")
        if block_size <= OVERHEAD + _HEADER.size:
            raise ConfigError("block size too small for ciphertext overhead and record header")
        self.num_blocks = num_blocks
        self.block_size = block_size
        self.phi = phi
        self.queue_bound = queue_bound
        self.pairs = num_blocks // 2
        self.segment_pairs = segment_pairs or max(1, self.pairs // 32)
        if not 1 <= self.segment_pairs <= self.pairs:
            raise ConfigError("segment size must be within the log")
        half = max(1, (self.pairs - self.segment_pairs) // 2)
        self.pub_capacity = half if pub_blocks is None else pub_blocks
        self.hid_capacity = half if hid_blocks is None else hid_blocks
        if self.pub_capacity > self.pairs or self.pub_capacity < 1 or self.hid_capacity < 1:
            raise ConfigError("volumes must be non-empty and the public one must fit in the log")
        self._pub_opt, self._hid_opt, self._seg_opt = pub_blocks, hid_blocks, segment_pairs
        self.payload_size = block_size - OVERHEAD - _HEADER.size
        self.rule1 = min_pub_writes(phi)
        self.rule2 = pub2_empty()

    def options(self) -> dict:
        return {"num_blocks": self.num_blocks, "block_size": self.block_size, "phi": self.phi,
                "queue_bound": self.queue_bound, "segment_pairs": self._seg_opt,
                "pub_blocks": self._pub_opt, "hid_blocks": self._hid_opt}

    def space_utilization(self) -> float:
        return (self.pub_capacity + self.hid_capacity) / self.num_blocks

    def _make_device(self):
        return BlockDevice(self.num_blocks, self.block_size)

    # -- state -------------------------------------------------------------
    def _reset_state(self) -> None:
        self.head = 0
        self.tail = 0
        self.used = 0
        self.seq = 0
        self.pub_map: dict[int, int] = {}
        self.hid_map: dict[int, int] = {}
        self.pair_pub = np.full(self.pairs, -1, dtype=np.int64)
        self.pair_hid = np.full(self.pairs, -1, dtype=np.int64)
        self.hid_queue: OrderedDict[int, bytes] = OrderedDict()

    def _setup(self) -> None:
        self.device.randomize(self._content_rng)
        self._reset_state()

    def free_pairs(self) -> int:
        return self.pairs - self.used

    # -- log append ----------------------------------------------------------
    def _append(self, pub_addr: int, pub_data: bytes) -> None:
        if self.used == self.pairs:
            self._gc_until_free(superseded=pub_addr)
        pair = self.head
        if self.hid_queue:
            haddr, hdata = self.hid_queue.popitem(last=False)
            payload = encrypt(self.keys.k_hid, _HEADER.pack(self.seq, haddr) + hdata, self._content_rng)
            old = self.hid_map.get(haddr)
            if old is not None and self.pair_hid[old] == haddr:
                self.pair_hid[old] = -1
            self.hid_map[haddr] = pair
            self.pair_hid[pair] = haddr
        else:
            payload = self._content_rng.bytes(self.block_size)
            self.pair_hid[pair] = -1
        block = encrypt(self.keys.k_pub, _HEADER.pack(self.seq, pub_addr) + pub_data, self._content_rng)
        old = self.pub_map.get(pub_addr)
        if old is not None:
            self.pair_pub[old] = -1
        self.pub_map[pub_addr] = pair
        self.pair_pub[pair] = pub_addr
        self.device.write_block(2 * pair, block)
        self.device.write_block(2 * pair + 1, payload)
        self.head = (self.head + 1) % self.pairs
        self.used += 1
        self.seq += 1

    def _read_record(self, phys: int, key: bytes) -> tuple[int, int, bytes]:
        plain = decrypt(key, self.device.read_block(phys))
        seq, addr = _HEADER.unpack_from(plain)
        return seq, addr, plain[_HEADER.size:]

    def _rescue(self, haddr: int, data: bytes) -> None:
        if len(self.hid_queue) >= self.queue_bound:
            raise QueueOverflow(f"hidden queue is full ({self.queue_bound})")
        self.hid_queue[haddr] = data
        self.hid_queue.move_to_end(haddr, last=False)

    def gc(self, superseded: int | None = None) -> int:
        """Reclaim the oldest segment; live public records are re-appended at the head.

        Hidden records in the segment go back to the front of the hidden queue
        and ride the next appends. A public record for ``superseded`` (an
        address about to be overwritten) is dropped rather than moved. Returns
        the number of pairs reclaimed.
        """
        if self.used == 0:
            raise LogFull("log is empty, nothing to reclaim")
        seg = min(self.segment_pairs, self.used)
        live = []
        for i in range(seg):
            pair = (self.tail + i) % self.pairs
            addr = int(self.pair_pub[pair])
            if addr >= 0:
                _, _, data = self._read_record(2 * pair, self.keys.k_pub)
                if addr != superseded:
                    live.append((addr, data))
                self.pair_pub[pair] = -1
                del self.pub_map[addr]
            haddr = int(self.pair_hid[pair])
            if haddr >= 0:
                self.pair_hid[pair] = -1
                del self.hid_map[haddr]
                if haddr not in self.hid_queue:
                    _, _, hdata = self._read_record(2 * pair + 1, self.keys.k_hid)
                    self._rescue(haddr, hdata)
        self.tail = (self.tail + seg) % self.pairs
        self.used -= seg
        for addr, data in live:
            self._append(addr, data)
        return seg - len(live)

    def _gc_until_free(self, superseded: int | None = None) -> None:
        for _ in range(math.ceil(self.pairs / self.segment_pairs) + 1):
            self.gc(superseded)
            if self.used < self.pairs:
                return
        raise LogFull("no reclaimable pairs in the log")

    # -- Oper ------------------------------------------------------------------
    def _read(self, level: Level, addr: int) -> bytes:
        if level is Level.HID:
            if addr in self.hid_queue:
                return self.hid_queue[addr]
            pair = self.hid_map.get(addr)
            if pair is None:
                raise NotFound(f"hidden block {addr} was never written")
            return self._read_record(2 * pair + 1, self.keys.k_hid)[2]
        pair = self.pub_map.get(addr)
        if pair is None:
            raise NotFound(f"public block {addr} was never written")
        return self._read_record(2 * pair, self.keys.k_pub)[2]

    def _run(self, pattern: Pattern) -> None:
        # challenger order: hidden requests first so they ride this pattern's public appends
        ordered = [r for r in pattern if r.level is Level.HID] + [r for r in pattern if r.level is Level.PUB]
        for req in ordered:
            if req.op is Op.READ:
                self.read_results.append((req, self._read(req.level, req.addr)))
            elif req.op is Op.WRITE:
                if req.level is Level.PUB:
                    self._append(req.addr, req.data)
                else:
                    if req.addr not in self.hid_queue and len(self.hid_queue) >= self.queue_bound:
                        raise QueueOverflow(f"hidden queue is full ({self.queue_bound})")
                    self.hid_queue[req.addr] = req.data

    # -- mount by log replay -------------------------------------------------
    def mount(self) -> None:
        """Rebuild maps, head and tail by replaying every pair's embedded map delta."""
        pub_best: dict[int, tuple[int, int]] = {}
        hid_best: dict[int, tuple[int, int]] = {}
        max_seq, max_pair = -1, -1
        for pair in range(self.pairs):
            raw = self.device.read_block(2 * pair)
            plain = try_decrypt(self.keys.k_pub, raw)
            if plain is None:
                continue
            seq, addr = _HEADER.unpack_from(plain)
            if seq > max_seq:
                max_seq, max_pair = seq, pair
            if addr not in pub_best or seq > pub_best[addr][0]:
                pub_best[addr] = (seq, pair)
            hplain = try_decrypt(self.keys.k_hid, self.device.read_block(2 * pair + 1))
            if hplain is not None:
                hseq, haddr = _HEADER.unpack_from(hplain)
                if haddr not in hid_best or hseq > hid_best[haddr][0]:
                    hid_best[haddr] = (hseq, pair)
        queue = self.hid_queue if hasattr(self, "hid_queue") else OrderedDict()
        self._reset_state()
        self.hid_queue = queue
        if max_seq < 0:
            return
        self.seq = max_seq + 1
        self.head = (max_pair + 1) % self.pairs
        for addr, (_, pair) in pub_best.items():
            self.pub_map[addr] = pair
            self.pair_pub[pair] = addr
        for haddr, (_, pair) in hid_best.items():
            if haddr not in self.hid_queue:
                self.hid_map[haddr] = pair
                self.pair_hid[pair] = haddr
        live = np.flatnonzero((self.pair_pub >= 0) | (self.pair_hid >= 0))
        back = [(self.head - 1 - p) % self.pairs for p in live.tolist()]
        self.used = (max(back) + 1) if back else 0
        self.tail = (self.head - self.used) % self.pairs

