"""Request/pattern model, challenge validation, rule constraints and the scheme base class."""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, ClassVar, Iterable

from .crypto import KeyPair, SeededRng
from .errors import BadLength, ConfigError, DomainError, InvalidPattern, OutOfRange, RuleViolation, VolumeFull


class Op(str, Enum):
    READ = "Read"
    WRITE = "Write"
    UNMOUNT = "Unmount"
    DUMMY = "Dummy"
    DELETE = "Delete"


class Level(str, Enum):
    PUB = "pub"
    HID = "hid"


class Layer(str, Enum):
    FS = "FS"
    BD = "BD"
    FTL = "FTL"


@dataclass(frozen=True)
class Request:
    op: Op
    addr: int | None = None
    data: bytes | None = None
    level: Level = Level.PUB

    def __post_init__(self):
        op = Op(self.op)
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "level", Level(self.level))
        if op is Op.WRITE:
            if self.data is None or self.addr is None:
                raise ValueError("Write needs an address and data")
        elif self.data is not None:
            raise ValueError(f"{op.value} carries no data")
        if op in (Op.READ, Op.DELETE) and self.addr is None:
            raise ValueError(f"{op.value} needs an address")
        if op is Op.UNMOUNT and self.level is Level.HID:
            raise ValueError("Unmount is a public request")

    @classmethod
    def write(cls, addr: int, data: bytes, level=Level.PUB) -> "Request":
        return cls(Op.WRITE, addr, bytes(data), level)

    @classmethod
    def read(cls, addr: int, level=Level.PUB) -> "Request":
        return cls(Op.READ, addr, None, level)

    @classmethod
    def delete(cls, addr: int, level=Level.PUB) -> "Request":
        return cls(Op.DELETE, addr, None, level)

    @classmethod
    def unmount(cls) -> "Request":
        return cls(Op.UNMOUNT)

    @classmethod
    def dummy(cls, level=Level.PUB) -> "Request":
        return cls(Op.DUMMY, None, None, level)


class Pattern(tuple):
    """Ordered request sequence; ``+`` and ``|`` both concatenate."""

    def __new__(cls, requests: Iterable[Request] = ()):
        return super().__new__(cls, tuple(requests))

    def __add__(self, other):
        return Pattern(tuple(self) + tuple(other))

    __or__ = __add__

    def __repr__(self):
        return f"Pattern({list(self)!r})"

    def count(self, op: Op | None = None, level: Level | None = None) -> int:  # type: ignore[override]
        return sum(1 for r in self if (op is None or r.op is op) and (level is None or r.level is level))

    def writes(self, level: Level | None = None) -> int:
        return self.count(Op.WRITE, level)


@dataclass(frozen=True)
class ChallengePair:
    pat_pub1: Pattern
    pat_pub2: Pattern
    pat_hid: Pattern

    def __post_init__(self):
        for name in ("pat_pub1", "pat_pub2", "pat_hid"):
            object.__setattr__(self, name, Pattern(getattr(self, name)))

    @property
    def pat0(self) -> Pattern:
        return self.pat_pub1 + self.pat_pub2

    @property
    def pat1(self) -> Pattern:
        return self.pat_pub1 + self.pat_hid

    def select(self, b: int) -> Pattern:
        return self.pat1 if b else self.pat0


# ---------------------------------------------------------------------------
# rule constraints

RuleCheck = Callable[[Pattern, Pattern, Pattern], "str | None"]


@dataclass(frozen=True)
class RuleValidator:
    """A scheme-specific restriction on the public parts of a challenge.

    ``check`` returns None when the patterns comply, else a description of the
    violation. ``kind``/``params`` let challenge builders construct compliant
    patterns without parsing ``text``.
    """

    name: str
    text: str
    kind: str
    check: RuleCheck = field(compare=False)
    params: tuple = ()

    def __call__(self, pub1, pub2, hid) -> str | None:
        return self.check(Pattern(pub1), Pattern(pub2), Pattern(hid))


def no_restriction(name: str = "none") -> RuleValidator:
    return RuleValidator(name, "no restrictions", "none", lambda p1, p2, h: None)


def pub2_empty(name: str = "pub2_empty") -> RuleValidator:
    return RuleValidator(name, "Pat2_pub must be an empty pattern", "empty",
                         lambda p1, p2, h: None if len(p2) == 0 else f"Pat2_pub has {len(p2)} requests")


def equal_length_pub1_hid(name: str = "equal_length") -> RuleValidator:
    def check(p1, p2, h):
        if len(p1) != len(h):
            return f"|Pat1_pub|={len(p1)} but |Pat_hid|={len(h)}"
        return None
    return RuleValidator(name, "Pat1_pub and Pat_hid must be of equal length", "equal_length", check)


def equal_length_pub2_hid(name: str = "equal_length_pub2") -> RuleValidator:
    def check(p1, p2, h):
        if len(p2) != len(h):
            return f"|Pat2_pub|={len(p2)} but |Pat_hid|={len(h)}"
        return None
    return RuleValidator(name, "Pat2_pub and Pat_hid must be of equal length", "equal_length", check)


def min_pub_writes(phi: float, name: str = "min_pub_writes") -> RuleValidator:
    if phi <= 0:
        raise DomainError("phi must be positive")

    def check(p1, p2, h):
        need = math.ceil(phi * len(h))
        have = p1.writes(Level.PUB)
        if have < need:
            return f"Pat1_pub has {have} public writes, needs {need} (deficit {need - have})"
        return None
    return RuleValidator(name, f"Pat1_pub must contain at least phi*k public Write operations (phi={phi})",
                         "min_pub_writes", check, (phi,))


def last_unmount(name: str = "last_unmount") -> RuleValidator:
    def check(p1, p2, h):
        if not p1 or p1[-1].op is not Op.UNMOUNT:
            return "last operation of Pat1_pub is not Unmount"
        return None
    return RuleValidator(name, "the last operation in Pat1_pub must be Unmount", "last_unmount", check)


def some_public_then_unmount(name: str = "some_public_then_unmount") -> RuleValidator:
    base = last_unmount()

    def check(p1, p2, h):
        if len(p1) < 2:
            return "Pat1_pub must contain public operations before the Unmount"
        return base.check(p1, p2, h)
    return RuleValidator(name, "Pat1_pub should contain some public operations, and the last operation "
                         "in Pat1_pub must be Unmount", "last_unmount", check)


def _invalidated_pages(p1: Pattern, p2: Pattern, with_overwrites: bool = True) -> int:
    """Pages of Pat2_pub that supersede or delete a previously written public page."""
    written = {r.addr for r in p1 if r.op is Op.WRITE}
    count = 0
    for r in p2:
        if r.op is Op.WRITE:
            if with_overwrites and r.addr in written:
                count += 1
            written.add(r.addr)
        elif r.op is Op.DELETE and r.addr in written:
            count += 1
            written.discard(r.addr)
    return count


def generates_invalid_pages(name: str = "invalid_pages") -> RuleValidator:
    def check(p1, p2, h):
        made = _invalidated_pages(p1, p2)
        if made < len(h):
            return f"Pat2_pub generates {made} 1st-invalid pages, needs {len(h)}"
        return None
    return RuleValidator(name, "Pat2_pub needs to generate k 1st invalid pages where k is the length of Pat_hid",
                         "invalid_pages", check)


def covers_deleted_pages(name: str = "deleted_pages") -> RuleValidator:
    def check(p1, p2, h):
        made = _invalidated_pages(p1, p2)
        need = h.writes()
        if made < need:
            return f"Pat2_pub deletes {made} pages, hidden accesses need {need}"
        return None
    return RuleValidator(name, "Pat2_pub should contain public accesses that generate enough deleted pages "
                         "to cover accesses in Pat_hid", "invalid_pages", check)


def mobiceal_dummy_rule(rate: float = 1.0, name: str = "mobiceal_dummy") -> RuleValidator:
    # behavioural: constrains what the scheme adds, not what the adversary sends
    return RuleValidator(name, "For each public write in Pat1_pub, also perform a dummy write with a certain "
                         "probability; it contributes m = floor(-ln(1-f)/lambda) dummy block writes",
                         "none", lambda p1, p2, h: None, (rate,))


def datalair_rule(phi: float) -> Callable[[Pattern, Pattern, Pattern], "str | None"]:
    """Combined DataLair check: enough public writes in Pat1_pub and an empty Pat2_pub."""
    r1, r2 = min_pub_writes(phi), pub2_empty()

    def check(pub1, pub2, hid):
        return r1(pub1, pub2, hid) or r2(pub1, pub2, hid)
    return check


def exp_dummy_count(f: float, rate: float) -> int:
    """Number of dummy block writes for a uniform draw ``f``: floor(-ln(1-f)/rate)."""
    if not 0.0 <= f < 1.0:
        raise DomainError(f"f must lie in [0, 1), got {f}")
    if rate <= 0:
        raise DomainError(f"rate must be positive, got {rate}")
    # math.log1p keeps precision near f=0; the tiny epsilon absorbs rounding at exact integers
    return int(math.floor(-math.log1p(-f) / rate + 1e-12))


def validate_challenge(scheme, pair: ChallengePair) -> None:
    """Raise RuleViolation unless ``pair`` meets requirements (a)-(d) for ``scheme``."""
    for name in ("pat_pub1", "pat_pub2"):
        bad = [r for r in getattr(pair, name) if r.level is not Level.PUB]
        if bad:
            raise RuleViolation("a", f"{name} contains a hidden request {bad[0]!r}")
    bad = [r for r in pair.pat_hid if r.level is not Level.HID]
    if bad:
        raise RuleViolation("b", f"pat_hid contains a public request {bad[0]!r}")
    if not pair.pat_hid and pair.pat_pub2:
        raise RuleViolation("c", "pat_pub2 must be empty when pat_hid is empty")
    for label, rule in (("rule1", scheme.rule1), ("rule2", scheme.rule2)):
        msg = rule(pair.pat_pub1, pair.pat_pub2, pair.pat_hid)
        if msg:
            raise RuleViolation(label, f"{rule.name}: {msg}")


# ---------------------------------------------------------------------------
# scheme base

@dataclass(frozen=True)
class SchemeProfile:
    """What a Kerckhoffs adversary may know about a scheme instance: everything but the hidden key."""

    scheme_id: str
    layer: Layer
    trace_oriented: bool
    rule1: RuleValidator
    rule2: RuleValidator
    payload_size: int
    pub_capacity: int
    hid_capacity: int
    geometry: dict
    options: dict


class PdScheme(abc.ABC):
    """A (Setup, Oper) pair plus its rule constraints.

    Subclasses implement ``_make_device``, ``_setup`` and ``_run``; Oper's
    bookkeeping (vocabulary checks, read results) lives here.
    """

    scheme_id: ClassVar[str]
    layer: ClassVar[Layer]
    trace_oriented: ClassVar[bool]
    vocabulary: ClassVar[frozenset] = frozenset({Op.READ, Op.WRITE, Op.DUMMY, Op.UNMOUNT})

    rule1: RuleValidator
    rule2: RuleValidator

    def __init__(self, seed: int = 0, rng: SeededRng | None = None):
        self.rng = rng if rng is not None else SeededRng(seed)
        self._key_rng = self.rng.child(0)
        self._content_rng = self.rng.child(1)
        self.device = None
        self.keys: KeyPair | None = None
        self.read_results: list[tuple[Request, bytes]] = []

    # -- geometry ---------------------------------------------------------
    payload_size: int
    pub_capacity: int
    hid_capacity: int

    def capacity(self, level: Level) -> int:
        return self.pub_capacity if level is Level.PUB else self.hid_capacity

    @abc.abstractmethod
    def space_utilization(self) -> float:
        """Max logical pub+hid storage over raw capacity, per-record metadata excluded."""

    @abc.abstractmethod
    def options(self) -> dict:
        """Constructor keyword arguments that reproduce this instance's geometry."""

    def profile(self) -> SchemeProfile:
        dev = self._make_device()
        return SchemeProfile(self.scheme_id, self.layer, self.trace_oriented, self.rule1, self.rule2,
                             self.payload_size, self.pub_capacity, self.hid_capacity,
                             dev.geometry(), self.options())

    # -- Setup / Oper -----------------------------------------------------
    @abc.abstractmethod
    def _make_device(self):
        ...

    @abc.abstractmethod
    def _setup(self) -> None:
        ...

    @abc.abstractmethod
    def _run(self, pattern: Pattern) -> None:
        ...

    def setup(self, lam: int = 256, device=None, keys: KeyPair | None = None):
        """Initialize ``device`` (a fresh one by default); ``keys`` overrides key generation."""
        dev = self._make_device() if device is None else device
        if dev.geometry() != self._make_device().geometry():
            raise ConfigError("device geometry does not match the scheme configuration")
        self.device = dev
        self.keys = KeyPair.generate(self._key_rng, lam) if keys is None else keys
        self._setup()
        return self.device, self.keys

    def attach(self, device, keys: KeyPair):
        """Adopt an already initialized device without running Setup, then mount it."""
        if device.geometry() != self._make_device().geometry():
            raise ConfigError("device geometry does not match the scheme configuration")
        self.device, self.keys = device, keys
        self.mount()
        return self.device

    def mount(self) -> None:
        """Rebuild in-memory state from the medium; schemes without state keep nothing."""

    def oper(self, device, pattern: Iterable[Request], keys: KeyPair):
        if self.device is None:
            raise ConfigError("setup() has not run")
        if device is not self.device:
            raise ConfigError("oper() must be given the device this scheme was set up on")
        if keys != self.keys:
            raise ConfigError("key pair does not belong to this scheme instance")
        pattern = Pattern(pattern)
        for r in pattern:
            if r.op not in self.vocabulary:
                raise InvalidPattern(f"{self.scheme_id} does not accept {r.op.value} requests")
            if r.addr is not None:
                if r.addr < 0:
                    raise OutOfRange(f"negative logical address {r.addr}")
                if r.addr >= self.capacity(r.level):
                    raise VolumeFull(f"{r.level.value} address {r.addr} beyond volume capacity "
                                     f"{self.capacity(r.level)}")
            if r.op is Op.WRITE and len(r.data) != self.payload_size:
                raise BadLength(f"logical blocks hold {self.payload_size} bytes, got {len(r.data)}")
        self.read_results = []
        self._run(pattern)
        return self.device

    def check_rules(self, pair: ChallengePair) -> None:
        validate_challenge(self, pair)

    # -- convenience wrappers over oper ------------------------------------
    def write(self, level: Level, addr: int, data: bytes) -> None:
        self.oper(self.device, [Request.write(addr, data, level)], self.keys)

    def read(self, level: Level, addr: int) -> bytes:
        self.oper(self.device, [Request.read(addr, level)], self.keys)
        return self.read_results[-1][1]


def space_utilization(scheme: PdScheme) -> float:
    return scheme.space_utilization()


# ---------------------------------------------------------------------------
# comparison catalog, implemented schemes and data-only rows alike

@dataclass(frozen=True)
class CatalogRow:
    name: str
    year: int
    snapshot: str
    security: str
    layer: str
    io_perf: str
    space_util: str
    rule1: RuleValidator
    rule2: RuleValidator
    implemented_as: str | None = None


CATALOG: tuple[CatalogRow, ...] = (
    CatalogRow("StegFS98", 1998, "Sin", "device", "FS", "-", "~15%", no_restriction(), pub2_empty()),
    CatalogRow("StegFS99", 1999, "Sin", "device", "FS", "0.86/0.06", "-", no_restriction(), pub2_empty()),
    CatalogRow("StegFS03", 2003, "Sin", "device", "FS", "0.06", ">80%", no_restriction(), pub2_empty()),
    CatalogRow("TrueCrypt", 2004, "Sin", "device", "BD", "-", "100%", no_restriction(), pub2_empty(),
               "hidden_volume"),
    CatalogRow("MobiFlage", 2013, "Sin", "device", "BD", "0.95", "100%", no_restriction(), pub2_empty()),
    CatalogRow("MobiPluto", 2015, "Sin", "device", "BD", "-", "100%", no_restriction(), pub2_empty()),
    CatalogRow("DEFTL", 2017, "Sin", "device", "FTL", "-", "100%", last_unmount(), pub2_empty()),
    CatalogRow("DEFY", 2015, "Mul", "device", "FS", "-", "100%", some_public_then_unmount(),
               covers_deleted_pages()),
    CatalogRow("MobiCeal", 2018, "Mul", "device", "BD", "0.78", "-", mobiceal_dummy_rule(), pub2_empty()),
    CatalogRow("INFUSE", 2020, "Mul", "device", "FS", "0.94/0.03", ">100%", last_unmount(), pub2_empty()),
    CatalogRow("PEARL", 2021, "Mul", "device", "FTL", "0.6/0.15", "80%", last_unmount(),
               generates_invalid_pages(), "pearl"),
    CatalogRow("HIVE", 2014, "Mul", "trace", "BD", "-", "50%", equal_length_pub1_hid(), pub2_empty(), "hive"),
    CatalogRow("HIVE-B", 2014, "Mul", "trace", "BD", "0.004", "50%", no_restriction(), equal_length_pub2_hid(),
               "hive_b"),
    CatalogRow("DataLair", 2017, "Mul", "trace", "BD", "0.19/0.01", "50%", min_pub_writes(1.0), pub2_empty()),
    CatalogRow("ECD", 2017, "Mul", "trace", "FTL", "*", "52.5%", no_restriction(), pub2_empty()),
    CatalogRow("PD-DM", 2019, "Mul", "trace", "BD", "0.10/0.07", "~50%", min_pub_writes(1.0), pub2_empty(),
               "pd_dm"),
)


def catalog_row(name: str) -> CatalogRow:
    for row in CATALOG:
        if row.name.lower() == name.lower() or row.implemented_as == name:
            return row
    raise KeyError(name)
