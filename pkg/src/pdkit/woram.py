"""Write-only ORAM built from a trace-oriented PD scheme.

Every data request becomes a hidden pattern padded to ``n`` requests. A read
runs beside a single public dummy request, and a write beside a fixed
universal public pattern. The observable write trace therefore depends only
on how many writes were issued.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from . import stats
from .core import Level, Op, Pattern, Request
from .crypto import SeededRng
from .device import OpTrace, wonly
from .errors import ConfigError, Precondition
from .schemes import make_scheme


@dataclass(frozen=True)
class DataRequest:
    op: Op
    addr: int
    data: bytes | None = None

    def __post_init__(self):
        op = Op(self.op)
        object.__setattr__(self, "op", op)
        if op is Op.READ and self.data is not None:
            raise ValueError("a read request carries no data")
        if op is Op.WRITE and self.data is None:
            raise ValueError("a write request needs data")
        if op not in (Op.READ, Op.WRITE):
            raise ValueError(f"data requests are reads or writes, not {op.value}")

    @classmethod
    def read(cls, addr: int) -> "DataRequest":
        return cls(Op.READ, addr)

    @classmethod
    def write(cls, addr: int, data: bytes) -> "DataRequest":
        return cls(Op.WRITE, addr, bytes(data))

    def as_hidden(self) -> Request:
        if self.op is Op.READ:
            return Request.read(self.addr, Level.HID)
        return Request.write(self.addr, self.data, Level.HID)


def hidden_gen(n: int, req: DataRequest) -> Pattern:
    """``req`` as a hidden request followed by ``n - 1`` hidden dummies."""
    if n < 1:
        raise ConfigError("pad length n must be at least 1")
    return Pattern([req.as_hidden()] + [Request.dummy(Level.HID)] * (n - 1))


@dataclass(frozen=True)
class AdapterParams:
    n: int
    scratch_addr: int
    universal_writes: int


class WoramAdapter:
    """ORAM interface (setup/access) over a trace-oriented scheme.

    The universal public pattern is ``universal_writes`` public writes of
    fresh random data to one reserved scratch address, sized so the wrapped
    scheme's first rule holds for any ``n``-request hidden pattern.
    """

    def __init__(self, backend: str = "pd_dm", n: int = 1, seed: int = 0, lam: int = 256,
                 scheme_options: dict | None = None):
        if n < 1:
            raise ConfigError("pad length n must be at least 1")
        self.backend = backend
        self.n = n
        self.seed = seed
        self.lam = lam
        self.scheme_options = dict(scheme_options or {})
        probe = make_scheme(backend, **self.scheme_options)
        if not probe.trace_oriented:
            raise ConfigError(f"{backend} is not trace-oriented and cannot back a write-only ORAM")
        self.scheme = None

    def setup(self, lam: int | None = None) -> "WoramAdapter":
        """Fresh scheme, device and keys; any earlier state is discarded."""
        rng = SeededRng(self.seed)
        self.scheme = make_scheme(self.backend, rng=rng.child(0), **self.scheme_options)
        self._data_rng = rng.child(1)
        self.device, self.keys = self.scheme.setup(self.lam if lam is None else lam)
        self.device.take_trace()
        rule = self.scheme.rule1
        count = math.ceil(rule.params[0] * self.n) if rule.kind == "min_pub_writes" else self.n
        self.params = AdapterParams(self.n, self.scheme.pub_capacity - 1, count)
        self.last_read: bytes | None = None
        return self

    @property
    def capacity(self) -> int:
        return self.scheme.hid_capacity

    @property
    def block_size(self) -> int:
        return self.scheme.payload_size

    def universal_public(self) -> Pattern:
        size = self.scheme.payload_size
        return Pattern(Request.write(self.params.scratch_addr, self._data_rng.bytes(size))
                       for _ in range(self.params.universal_writes))

    def access(self, req: DataRequest) -> OpTrace:
        """Serve one data request and return the physical trace it caused."""
        if self.scheme is None:
            raise ConfigError("setup() has not run")
        if req.op is Op.READ:
            pattern = Pattern([Request.dummy()]) + hidden_gen(self.n, req)
        else:
            pattern = self.universal_public() + hidden_gen(self.n, req)
        self.scheme.oper(self.device, pattern, self.keys)
        if req.op is Op.READ:
            self.last_read = self.scheme.read_results[-1][1]
        return self.device.take_trace()

    def read(self, addr: int) -> bytes:
        self.access(DataRequest.read(addr))
        return self.last_read

    def write(self, addr: int, data: bytes) -> OpTrace:
        return self.access(DataRequest.write(addr, data))

    def run(self, requests) -> OpTrace:
        out = OpTrace()
        for req in requests:
            out = out + self.access(req)
        return out


@dataclass(frozen=True)
class PairReport:
    writes: int
    wonly_len0: int
    wonly_len1: int
    addr_p: float
    bytes_p: float
    alpha: float

    @property
    def lengths_equal(self) -> bool:
        return self.wonly_len0 == self.wonly_len1

    @property
    def passed(self) -> bool:
        return self.lengths_equal and self.addr_p > self.alpha and self.bytes_p > self.alpha

    def as_dict(self) -> dict:
        return {"writes": self.writes, "wonly_len0": self.wonly_len0, "wonly_len1": self.wonly_len1,
                "addr_p": self.addr_p, "bytes_p": self.bytes_p, "alpha": self.alpha, "pass": self.passed}


def count_writes(seq) -> int:
    return sum(1 for r in seq if r.op is Op.WRITE)


def check_write_oblivious(y0, y1, backend: str = "pd_dm", n: int = 1, seed: int = 0,
                          alpha: float = 0.01, scheme_options: dict | None = None) -> PairReport:
    """Run two request sequences with equal write counts on fresh adapters and compare WOnly outputs.

    Passing means equal WOnly lengths and no detectable difference in write
    addresses or written bytes at level ``alpha``.
    """
    w0, w1 = count_writes(y0), count_writes(y1)
    if w0 != w1:
        raise Precondition(f"sequences issue {w0} and {w1} writes")
    outs = []
    for seq in (y0, y1):
        adapter = WoramAdapter(backend, n, seed, scheme_options=scheme_options).setup()
        outs.append(wonly(adapter.run(seq)))
    t0, t1 = outs
    units = adapter.device.geometry()["num_blocks"]
    addr_p = stats.two_sample_addresses_p(t0.locations(), t1.locations(), units) if len(t0) else 1.0
    d0 = b"".join(e.data for e in t0)
    d1 = b"".join(e.data for e in t1)
    bytes_p = stats.two_sample_bytes_p(d0, d1) if d0 and d1 else 1.0
    return PairReport(w0, len(t0), len(t1), addr_p, bytes_p, alpha)


def random_sequence_pair(rng: SeededRng, capacity: int, block: int, max_writes: int = 8,
                         max_reads: int = 8) -> tuple[list[DataRequest], list[DataRequest]]:
    """Two request sequences with the same number of writes and independent reads.

    Reads only target addresses the same sequence already wrote.
    """
    writes = int(rng.integers(1, max_writes + 1))

    def one():
        ops = [Op.WRITE] * writes + [Op.READ] * int(rng.integers(0, max_reads + 1))
        rng.shuffle(ops)
        seq, written = [], []
        for op in ops:
            if op is Op.READ and written:
                seq.append(DataRequest.read(rng.choice(written)))
            elif op is Op.WRITE:
                addr = rng.randrange(capacity)
                written.append(addr)
                seq.append(DataRequest.write(addr, rng.bytes(block)))
        return seq

    return one(), one()


def oblivious_sweep(backend: str, pairs: int = 50, seed: int = 0, n: int = 1, alpha: float = 0.01,
                    scheme_options: dict | None = None) -> list[PairReport]:
    """check_write_oblivious over ``pairs`` random matched-write sequence pairs.

    Each pair is tested at ``alpha / pairs`` so the family-wise false alarm
    rate stays at ``alpha``.
    """
    probe = WoramAdapter(backend, n, seed, scheme_options=scheme_options).setup()
    rng = SeededRng(seed).child(7)
    reports = []
    for i in range(pairs):
        y0, y1 = random_sequence_pair(rng, probe.capacity, probe.block_size)
        reports.append(check_write_oblivious(y0, y1, backend, n, seed + i, alpha / pairs, scheme_options))
    return reports
