"""Deliberately broken hidden volume: hidden blocks are stored in plaintext.

Used as a harness sanity fixture; any adversary that looks for its own
hidden payload on the medium should win every trial.
"""
from __future__ import annotations

from ..core import Level, Op
from ..errors import NotFound
from .hidden_volume import HiddenVolume


class LeakyHiddenVolume(HiddenVolume):
    scheme_id = "leaky"

    def _run(self, pattern) -> None:
        hidden = [r for r in pattern if r.level is Level.HID and r.op in (Op.WRITE, Op.READ)]
        super()._run([r for r in pattern if r not in hidden])
        for req in hidden:
            phys = self.physical(Level.HID, req.addr)
            if req.op is Op.WRITE:
                self.device.write_block(phys, req.data.ljust(self.block_size, b"\0"))
            else:
                if phys not in self._written:
                    raise NotFound(f"hidden block {req.addr} was never written")
                self.read_results.append((req, self.device.read_block(phys)[:self.payload_size]))
            self._written.add(phys)

    def _setup(self) -> None:
        super()._setup()
        self._written: set[int] = set()
