"""HIVE-style write-only ORAM over a block device.

Both volumes share one data region. A write step samples ``beta`` uniform
data blocks. A free sampled block receives the next pending item (hidden stash
first) or fresh random bytes. An occupied block is re-encrypted in place. The
physical write sequence depends only on the number of steps.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..core import Layer, Level, Op, Pattern, PdScheme, Request, equal_length_pub1_hid, \
    equal_length_pub2_hid, no_restriction, pub2_empty
from ..crypto import OVERHEAD, decrypt, encrypt, try_decrypt
from ..device import DEFAULT_BLOCK_SIZE, DEFAULT_BLOCKS, BlockDevice
from ..errors import AuthFail, ConfigError, NotFound, StashOverflow

PUB, HID = 0, 1
_LEVELS = (Level.PUB, Level.HID)

PLACE, REENCRYPT, RANDOMIZE = "place", "reencrypt", "randomize"


@dataclass(frozen=True)
class Placement:
    action: str
    slot: int
    vol: int = -1
    addr: int = -1
    released: int = -1


@dataclass
class WoramState:
    position: list[np.ndarray]          # per volume: logical -> data slot, -1 unmapped
    owner_vol: np.ndarray               # per data slot: -1 free, else volume
    owner_addr: np.ndarray
    stash: list[OrderedDict]
    stash_capacity: int

    def occupancy(self) -> set[int]:
        return set(np.flatnonzero(self.owner_vol >= 0).tolist())


def allocate(state: WoramState, sampled) -> list[Placement]:
    """Plan one write step over ``sampled`` data slots without touching the state.

    A placement releases the logical's previous slot, and a later sample in the
    same step may reuse that slot. Live blocks are only ever re-encrypted.
    """
    owner_vol = state.owner_vol.copy()
    position = [p.copy() for p in state.position]
    pending = [list(state.stash[HID].keys()), list(state.stash[PUB].keys())]
    order = (HID, PUB)
    plan = []
    for slot in sampled:
        if owner_vol[slot] >= 0:
            plan.append(Placement(REENCRYPT, slot))
            continue
        vol = next((v for v, q in zip(order, pending) if q), None)
        if vol is None:
            plan.append(Placement(RANDOMIZE, slot))
            continue
        addr = pending[order.index(vol)].pop(0)
        old = int(position[vol][addr])
        if old >= 0:
            owner_vol[old] = -1
        position[vol][addr] = slot
        owner_vol[slot] = vol
        plan.append(Placement(PLACE, slot, vol, addr, old))
    return plan


class Hive(PdScheme):
    scheme_id = "hive"
    layer = Layer.BD
    trace_oriented = True

    def __init__(self, num_blocks: int = DEFAULT_BLOCKS, block_size: int = DEFAULT_BLOCK_SIZE,
                 beta: int = 3, stash_capacity: int = 64, pub_blocks: int | None = None,
                 hid_blocks: int | None = None, variant: str = "hive", seed: int = 0, rng=None):
        super().__init__(seed, rng)
        if beta < 1:
            raise ConfigError("beta must be at least 1")
        if stash_capacity < 1:
            raise ConfigError("stash capacity must be at least 1")
        if variant not in ("hive", "hive_b"):
            raise ConfigError(f"unknown HIVE variant {variant!r}")
        if block_size <= OVERHEAD + 4:
            raise ConfigError("block size too small for ciphertext overhead")
        self.num_blocks = num_blocks
        self.block_size = block_size
        self.beta = beta
        self.stash_capacity = stash_capacity
        self.variant = variant
        self.scheme_id = variant
        self.payload_size = block_size - OVERHEAD
        self._pub_opt, self._hid_opt = pub_blocks, hid_blocks
        self.map_blocks, self.data_blocks, self.pub_capacity, self.hid_capacity = \
            self._layout(num_blocks, self.payload_size, pub_blocks, hid_blocks)
        if self.variant == "hive":
            self.rule1, self.rule2 = equal_length_pub1_hid(), pub2_empty()
        else:
            self.rule1, self.rule2 = no_restriction(), equal_length_pub2_hid()
        self._place_rng = self.rng.child(2)
        self.state: WoramState | None = None

    @staticmethod
    def _layout(n: int, payload: int, pub: int | None, hid: int | None):
        for per_volume in range(1, n):
            m = 2 * per_volume
            d = n - m
            if d < 4:
                break
            if pub is None and hid is None and d % 4:
                continue
            lp = d // 4 if pub is None else pub
            lh = d // 4 if hid is None else hid
            if 4 * max(lp, lh, 1) > per_volume * payload:
                continue
            if lp < 1 or lh < 1 or lp > d // 2 or lh > d // 2 or lp + lh > d:
                raise ConfigError(f"logical volumes {lp}+{lh} blocks exceed the {d}-block data region")
            return m, d, lp, lh
        raise ConfigError(f"{n} blocks cannot hold a map region and a data region")

    def options(self) -> dict:
        return {"num_blocks": self.num_blocks, "block_size": self.block_size, "beta": self.beta,
                "stash_capacity": self.stash_capacity, "pub_blocks": self._pub_opt,
                "hid_blocks": self._hid_opt, "variant": self.variant}

    def space_utilization(self) -> float:
        return (self.pub_capacity + self.hid_capacity) / self.data_blocks

    def _make_device(self):
        return BlockDevice(self.num_blocks, self.block_size)

    def _key(self, vol: int) -> bytes:
        return self.keys.k_pub if vol == PUB else self.keys.k_hid

    # -- setup / map persistence -------------------------------------------
    def _fresh_state(self) -> WoramState:
        return WoramState(
            position=[np.full(self.pub_capacity, -1, dtype=np.int64),
                      np.full(self.hid_capacity, -1, dtype=np.int64)],
            owner_vol=np.full(self.data_blocks, -1, dtype=np.int64),
            owner_addr=np.full(self.data_blocks, -1, dtype=np.int64),
            stash=[OrderedDict(), OrderedDict()],
            stash_capacity=self.stash_capacity,
        )

    def _setup(self) -> None:
        self.device.randomize(self._content_rng)
        self.state = self._fresh_state()
        self.flush_maps()

    def _map_range(self, vol: int) -> range:
        per = self.map_blocks // 2
        return range(vol * per, (vol + 1) * per)

    def flush_maps(self) -> None:
        """Write both position maps, encrypted, to the fixed map region."""
        for vol in (PUB, HID):
            blocks = self._map_range(vol)
            raw = self.state.position[vol].astype("<i4").tobytes()
            raw = raw.ljust(len(blocks) * self.payload_size, b"\0")
            for i, phys in enumerate(blocks):
                chunk = raw[i * self.payload_size:(i + 1) * self.payload_size]
                self.device.write_block(phys, encrypt(self._key(vol), chunk, self._content_rng))

    def mount(self) -> None:
        """Rebuild in-memory maps from the map region; pending stash items are not persisted.

        A hidden map that does not decrypt (wrong or absent k_hid) mounts as empty.
        """
        state = self._fresh_state()
        for vol in (PUB, HID):
            parts = [try_decrypt(self._key(vol), self.device.read_block(p)) for p in self._map_range(vol)]
            if any(part is None for part in parts):
                if vol == PUB:
                    raise AuthFail("public map does not decrypt under k_pub")
                continue
            raw = b"".join(parts)
            cap = len(state.position[vol])
            pos = np.frombuffer(raw[:4 * cap], dtype="<i4").astype(np.int64)
            state.position[vol][:] = pos
            live = pos >= 0
            state.owner_vol[pos[live]] = vol
            state.owner_addr[pos[live]] = np.flatnonzero(live)
        self.state = state

    # -- write steps -------------------------------------------------------
    def _enqueue(self, vol: int, addr: int, data: bytes) -> None:
        stash = self.state.stash[vol]
        if addr not in stash and len(stash) >= self.stash_capacity:
            raise StashOverflow(f"{_LEVELS[vol].value} stash is full ({self.stash_capacity} items)")
        stash[addr] = data

    def sample_slots(self) -> list[int]:
        return [int(s) for s in self._place_rng.integers(0, self.data_blocks, size=self.beta)]

    def _apply(self, plan: list[Placement]) -> None:
        st, dev = self.state, self.device
        for p in plan:
            phys = self.map_blocks + p.slot
            if p.action == PLACE:
                data = st.stash[p.vol].pop(p.addr)
                if p.released >= 0:
                    st.owner_vol[p.released] = -1
                    st.owner_addr[p.released] = -1
                st.position[p.vol][p.addr] = p.slot
                st.owner_vol[p.slot] = p.vol
                st.owner_addr[p.slot] = p.addr
                dev.write_block(phys, encrypt(self._key(p.vol), data, self._content_rng))
            elif p.action == REENCRYPT:
                vol = int(st.owner_vol[p.slot])
                plain = decrypt(self._key(vol), dev.read_block(phys))
                dev.write_block(phys, encrypt(self._key(vol), plain, self._content_rng))
            else:
                dev.write_block(phys, self._content_rng.bytes(self.block_size))

    def step(self) -> list[Placement]:
        plan = allocate(self.state, self.sample_slots())
        self._apply(plan)
        return plan

    # -- Oper --------------------------------------------------------------
    def _interleave(self, pattern: Pattern) -> list[Request]:
        """Challenger order: the i-th hidden request runs just before the i-th public request."""
        pub = [r for r in pattern if r.level is Level.PUB]
        hid = [r for r in pattern if r.level is Level.HID]
        out = []
        for i in range(max(len(pub), len(hid))):
            if i < len(hid):
                out.append(hid[i])
            if i < len(pub):
                out.append(pub[i])
        return out

    def _read(self, req: Request) -> bytes:
        vol = PUB if req.level is Level.PUB else HID
        stash = self.state.stash[vol]
        if req.addr in stash:
            return stash[req.addr]
        slot = int(self.state.position[vol][req.addr])
        if slot < 0:
            raise NotFound(f"{req.level.value} block {req.addr} was never written")
        return decrypt(self._key(vol), self.device.read_block(self.map_blocks + slot))

    def _run(self, pattern: Pattern) -> None:
        for req in self._interleave(pattern):
            vol = PUB if req.level is Level.PUB else HID
            if req.op is Op.WRITE:
                self._enqueue(vol, req.addr, req.data)
            elif req.op is Op.READ:
                self.read_results.append((req, self._read(req)))
            elif req.op is Op.UNMOUNT:
                self.flush_maps()
                continue
            if self.variant == "hive":
                # only public writes drive steps; hidden items ride them via the stash
                if req.op is Op.WRITE and vol == PUB:
                    self.step()
            elif req.op in (Op.READ, Op.WRITE):
                # HIVE-B: one step per access of either volume
                self.step()

    # -- introspection used by tests and the game --------------------------
    def check_invariants(self) -> None:
        st = self.state
        for vol in (PUB, HID):
            pos = st.position[vol]
            live = pos[pos >= 0]
            assert len(set(live.tolist())) == live.size, "position map not injective"
            assert np.all(st.owner_vol[live] == vol)
            assert np.all(st.owner_addr[live] == np.flatnonzero(pos >= 0))
            assert len(st.stash[vol]) <= self.stash_capacity
        occupied = set(np.flatnonzero(st.owner_vol >= 0).tolist())
        mapped = set(st.position[PUB][st.position[PUB] >= 0].tolist()) | \
            set(st.position[HID][st.position[HID] >= 0].tolist())
        assert occupied == mapped, "occupancy differs from the union of map images"


__all__ = ["Hive", "WoramState", "Placement", "allocate"]
