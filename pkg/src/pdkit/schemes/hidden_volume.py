"""Single-snapshot hidden volume: hidden data lives in randomized public free space."""
from __future__ import annotations

from ..core import Layer, Level, Op, PdScheme, no_restriction, pub2_empty
from ..crypto import OVERHEAD, encrypt, try_decrypt
from ..device import DEFAULT_BLOCK_SIZE, DEFAULT_BLOCKS, BlockDevice
from ..errors import ConfigError, NotFound


class HiddenVolume(PdScheme):
    """Fixed 50/50 split: public volume in the lower half, hidden in the upper half.

    Logical address ``a`` maps to physical ``a`` (public) or ``N_pub + a``
    (hidden), so no map ever reaches the disk. Every block starts as RNG
    output, and ciphertexts are the same size as a block.
    """

    scheme_id = "hidden_volume"
    layer = Layer.BD
    trace_oriented = False

    def __init__(self, num_blocks: int = DEFAULT_BLOCKS, block_size: int = DEFAULT_BLOCK_SIZE,
                 seed: int = 0, rng=None):
        super().__init__(seed, rng)
        if num_blocks < 2:
            raise ConfigError("hidden volume needs at least two blocks")
        if block_size <= OVERHEAD:
            raise ConfigError(f"block size must exceed the {OVERHEAD}-byte ciphertext overhead")
        self.num_blocks = num_blocks
        self.block_size = block_size
        self.n_pub = num_blocks // 2
        self.payload_size = block_size - OVERHEAD
        self.pub_capacity = self.n_pub
        self.hid_capacity = num_blocks - self.n_pub
        self.rule1 = no_restriction()
        self.rule2 = pub2_empty()

    def options(self) -> dict:
        return {"num_blocks": self.num_blocks, "block_size": self.block_size}

    def space_utilization(self) -> float:
        return (self.pub_capacity + self.hid_capacity) / self.num_blocks

    def _make_device(self):
        return BlockDevice(self.num_blocks, self.block_size)

    def physical(self, level: Level, addr: int) -> int:
        return addr if level is Level.PUB else self.n_pub + addr

    def _setup(self) -> None:
        self.device.randomize(self._content_rng)

    def _key(self, level: Level) -> bytes:
        return self.keys.k_pub if level is Level.PUB else self.keys.k_hid

    def _run(self, pattern) -> None:
        dev = self.device
        for req in pattern:
            if req.op is Op.WRITE:
                ct = encrypt(self._key(req.level), req.data, self._content_rng)
                dev.write_block(self.physical(req.level, req.addr), ct)
            elif req.op is Op.READ:
                raw = dev.read_block(self.physical(req.level, req.addr))
                plain = try_decrypt(self._key(req.level), raw)
                if plain is None:
                    raise NotFound(f"{req.level.value} block {req.addr} was never written")
                self.read_results.append((req, plain))
            # Dummy and Unmount leave the medium untouched
