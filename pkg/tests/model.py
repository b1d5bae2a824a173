"""Reference-model fuzzing shared by the scheme tests and the acceptance suite."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from pdkit import Level, Op, Request, make_scheme
from pdkit.errors import (DeviceFull, LogFull, NoInvalidPages, NotFound, QueueOverflow,
                          StashOverflow)

CAPACITY_ERRORS = (StashOverflow, QueueOverflow, LogFull, NoInvalidPages, DeviceFull)


@dataclass
class DurabilityReport:
    scheme: str
    ops: int
    writes: int = 0
    reads: int = 0
    deletes: int = 0
    unmounts: int = 0
    capacity_errors: int = 0
    gc_runs: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _reclaim(scheme) -> bool:
    gc = getattr(scheme, "gc", None)
    if gc is None:
        return False
    try:
        gc()
    except CAPACITY_ERRORS:
        return False
    return True


def durability_run(scheme_id: str, ops: int = 10_000, seed: int = 0, span: int = 24,
                   **options) -> DurabilityReport:
    """Random writes, reads, deletes and unmounts checked against a dict.

    Capacity errors are counted and the write is dropped from the model;
    DeviceFull additionally triggers the scheme's garbage collector. Every
    surviving entry is read back at the end.
    """
    scheme = make_scheme(scheme_id, seed=seed, **options)
    scheme.setup()
    rnd = random.Random(seed)
    rep = DurabilityReport(scheme_id, ops)
    model: dict[tuple[Level, int], bytes] = {}
    can_delete = Op.DELETE in scheme.vocabulary
    size = scheme.payload_size

    def check(level, addr):
        try:
            got = scheme.read(level, addr)
        except NotFound:
            got = None
        want = model.get((level, addr))
        if got != want:
            rep.mismatches.append((level.value, addr, "missing" if got is None else "wrong"))

    for _ in range(ops):
        level = Level.HID if rnd.random() < 0.4 else Level.PUB
        addr = rnd.randrange(min(span, scheme.capacity(level)))
        roll = rnd.random()
        try:
            if roll < 0.5:
                data = rnd.randbytes(size)
                scheme.write(level, addr, data)
                model[(level, addr)] = data
                rep.writes += 1
            elif roll < 0.9:
                check(level, addr)
                rep.reads += 1
            elif roll < 0.96 and can_delete:
                try:
                    scheme.oper(scheme.device, [Request.delete(addr, level)], scheme.keys)
                except NotFound:
                    if (level, addr) in model:
                        rep.mismatches.append((level.value, addr, "delete lost"))
                model.pop((level, addr), None)
                rep.deletes += 1
            else:
                scheme.oper(scheme.device, [Request.unmount()], scheme.keys)
                rep.unmounts += 1
        except CAPACITY_ERRORS as exc:
            rep.capacity_errors += 1
            if isinstance(exc, DeviceFull) and _reclaim(scheme):
                rep.gc_runs += 1

    for level, addr in sorted(model, key=lambda k: (k[0].value, k[1])):
        check(level, addr)
    return rep
