"""Security game: challenger, adversary interface and Monte-Carlo advantage estimate.

Each trial sets up a fresh device, draws the challenge bit ``b`` and runs
``rounds`` rounds. In every round the adversary proposes a ChallengePair, the
challenger checks it against the scheme's rules, executes ``Pat_b`` and hands
back a view: the device snapshot, the write-only trace, or both.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .core import ChallengePair, Level, Request, SchemeProfile
from .crypto import KeyPair, SeededRng, try_decrypt
from .device import SPARE_GEN, OpTrace, Snapshot, wonly
from .errors import AdversaryInvalid, ConfigError, RuleViolation
from .schemes import REGISTRY, make_scheme
from .wom import decode_page, page_bytes

ORIENTATIONS = ("device", "trace", "both")


@dataclass(frozen=True)
class GameConfig:
    scheme: str
    orientation: str = "device"
    rounds: int = 1
    trials: int = 1000
    seed: int = 0
    epsilon: float = 0.05
    lam: int = 256
    scheme_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in REGISTRY:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.orientation not in ORIENTATIONS:
            raise ConfigError(f"orientation must be one of {ORIENTATIONS}")
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 < self.epsilon < 0.5:
            raise ConfigError("epsilon must lie in (0, 0.5)")

    def make_scheme(self, rng: SeededRng):
        return make_scheme(self.scheme, rng=rng, **self.scheme_options)


@dataclass(frozen=True)
class View:
    round: int
    snapshot: Snapshot | None
    trace: OpTrace | None

    def digest(self) -> str:
        h = hashlib.sha256(str(self.round).encode())
        if self.snapshot is not None:
            h.update(self.snapshot.digest().encode())
        if self.trace is not None:
            for e in self.trace:
                h.update(f"{e.kind}:{e.location}:{e.payload_digest()};".encode())
        return h.hexdigest()


class UnitCodec:
    """Splits snapshots and trace entries into storage units and tests them with k_pub.

    A unit is a block on a block device and a page (cells plus spare flags)
    on flash; the bytes match what a Write trace entry carries.
    """

    def __init__(self, geometry: dict, k_pub: bytes):
        self.geometry = geometry
        self.k_pub = k_pub
        self.flash = geometry["kind"] == "flash"
        if self.flash:
            self.num_units = geometry["num_erase_blocks"] * geometry["pages_per_block"]
            self.cells_per_page = geometry["cells_per_page"]
            self.record_size = page_bytes(self.cells_per_page)
        else:
            self.num_units = geometry["num_blocks"]

    def units(self, snap: Snapshot) -> list[bytes]:
        if not self.flash:
            return [row.tobytes() for row in snap.blocks()]
        cells, spare = snap.cells(), snap.spare()
        return [cells[i].tobytes() + spare[i].tobytes() for i in range(self.num_units)]

    def content(self, unit: bytes) -> bytes | None:
        """Stored record bytes, or None when the unit does not decode."""
        if not self.flash:
            return unit
        cells = np.frombuffer(unit[:self.cells_per_page], dtype=np.uint8)
        gen = 2 if unit[self.cells_per_page + SPARE_GEN] else 1
        try:
            return decode_page(cells, gen, self.record_size)
        except ValueError:
            return None

    def is_blank(self, unit: bytes) -> bool:
        return not any(unit)

    def is_public(self, unit: bytes) -> bool:
        body = self.content(unit)
        return body is not None and try_decrypt(self.k_pub, body) is not None


@dataclass
class AdversaryContext:
    """Everything the adversary is entitled to: public parameters, k_pub and its own coins."""

    config: GameConfig
    profile: SchemeProfile
    k_pub: bytes
    rng: SeededRng
    codec: UnitCodec

    def simulate(self, pairs: list[ChallengePair], b: int = 0) -> list[View]:
        """Run the public algorithm on ``pairs`` under k_pub and a hidden key of the adversary's own."""
        scheme = self.config.make_scheme(SeededRng(self.rng.randrange(2 ** 63)))
        keys = KeyPair(self.k_pub, self.rng.bytes(len(self.k_pub)))
        device, keys = scheme.setup(self.config.lam, keys=keys)
        device.take_trace()
        return [_execute_round(scheme, device, keys, i, pair.select(b), self.config.orientation)
                for i, pair in enumerate(pairs)]


def _execute_round(scheme, device, keys, i: int, pattern, orientation: str) -> View:
    scheme.oper(device, pattern, keys)
    trace = device.take_trace()
    snap = device.snapshot() if orientation in ("device", "both") else None
    return View(i, snap, wonly(trace) if orientation in ("trace", "both") else None)


def build_challenge(profile: SchemeProfile, rng: SeededRng, k: int | None = None, max_k: int = 4,
                    payload=None) -> ChallengePair:
    """A random ChallengePair that satisfies ``profile``'s rules by construction.

    ``k`` hidden writes are drawn first; the public parts are then sized from
    the rule kinds. ``payload(level, i)`` overrides the random write contents.
    """
    if k is None:
        k = int(rng.integers(1, max_k + 1))

    def data(level, i):
        return payload(level, i) if payload is not None else rng.bytes(profile.payload_size)

    def writes(level, n, addrs=None):
        cap = profile.hid_capacity if level is Level.HID else profile.pub_capacity
        if addrs is None:
            addrs = [rng.randrange(cap) for _ in range(n)]
        return [Request.write(a, data(level, i), level) for i, a in enumerate(addrs)]

    hid = writes(Level.HID, k)
    r1, r2 = profile.rule1, profile.rule2
    n1 = math.ceil(r1.params[0] * k) if r1.kind == "min_pub_writes" else k
    pub1 = writes(Level.PUB, n1)
    if r1.kind == "last_unmount":
        pub1.append(Request.unmount())
    if r2.kind == "empty" or not hid:
        pub2 = []
    elif r2.kind == "equal_length":
        pub2 = writes(Level.PUB, k)
    elif r2.kind == "invalid_pages":
        written = [r.addr for r in pub1 if r.addr is not None]
        pub2 = writes(Level.PUB, k, [written[i % len(written)] for i in range(k)])
    else:
        pub2 = []
    return ChallengePair(pub1, pub2, hid)


class Adversary:
    """Base adversary: proposes random rule-valid challenges and records its views.

    ``setup`` is called at the start of every trial and must reset all state.
    """

    name = "base"

    def setup(self, ctx: AdversaryContext) -> None:
        self.ctx = ctx
        self.rng = ctx.rng
        self.pairs: list[ChallengePair] = []
        self.views: list[View] = []

    def propose(self, i: int, k_pub: bytes, history: tuple) -> ChallengePair:
        pair = build_challenge(self.ctx.profile, self.rng)
        self.pairs.append(pair)
        return pair

    def observe(self, i: int, view: View) -> None:
        self.views.append(view)

    def guess(self) -> int:
        raise NotImplementedError

    # helpers shared by the statistical adversaries
    def coin(self) -> int:
        return self.rng.bit()

    def reference(self) -> list[View]:
        return self.ctx.simulate(self.pairs, b=0)


def _changed_units(codec: UnitCodec, views: list[View]) -> list[tuple[int, bytes]] | None:
    """(unit index, new contents) for every write the views reveal, None if they reveal none.

    Traces give each write directly; snapshots only reveal the units that
    differ between consecutive rounds.
    """
    if views and views[0].trace is not None:
        return [(e.location, e.data) for v in views for e in v.trace if e.kind == "Write"]
    if len(views) < 2:
        return None
    out = []
    prev = codec.units(views[0].snapshot)
    for v in views[1:]:
        cur = codec.units(v.snapshot)
        out.extend((i, cur[i]) for i in range(len(cur)) if cur[i] != prev[i])
        prev = cur
    return out


class RandomGuess(Adversary):
    name = "random_guess"

    def guess(self) -> int:
        return self.coin()


class FreeSpaceDiff(Adversary):
    """Counts written units that k_pub cannot explain and compares with a b=0 simulation."""

    name = "free_space_diff"

    def _unexplained(self, views):
        changed = _changed_units(self.ctx.codec, views)
        if changed is None:
            return None
        return sum(1 for _, unit in changed if not self.ctx.codec.is_public(unit))

    def guess(self) -> int:
        seen = self._unexplained(self.views)
        if seen is None:
            return self.coin()
        return int(seen > self._unexplained(self.reference()))


class TraceLength(Adversary):
    """Compares the total WOnly trace length with a b=0 simulation."""

    name = "trace_length"

    def guess(self) -> int:
        if self.views[0].trace is None:
            return self.coin()
        seen = sum(len(v.trace) for v in self.views)
        expected = sum(len(v.trace) for v in self.reference())
        return int(seen > expected)


class AddrDistribution(Adversary):
    """Two-sample chi-square between observed and simulated write locations."""

    name = "addr_dist"
    alpha = 0.01

    def guess(self) -> int:
        seen = _changed_units(self.ctx.codec, self.views)
        if not seen:
            return self.coin()
        ref = _changed_units(self.ctx.codec, self.reference()) or []
        p = stats.two_sample_addresses_p([i for i, _ in seen], [i for i, _ in ref],
                                         self.ctx.codec.num_units)
        return int(p < self.alpha)


class PayloadEntropy(Adversary):
    """Randomness battery over written units that do not decrypt under k_pub."""

    name = "payload_entropy"
    alpha = 0.01
    max_bytes = 1 << 16

    def guess(self) -> int:
        codec = self.ctx.codec
        changed = _changed_units(codec, self.views)
        units = [u for _, u in changed] if changed is not None else codec.units(self.views[-1].snapshot)
        sample, size = [], 0
        for unit in units:
            if size >= self.max_bytes:
                break
            if codec.is_blank(unit) or codec.is_public(unit):
                continue
            body = codec.content(unit)
            if body is None:
                return 1  # not even a valid codeword: something else wrote it
            sample.append(body)
            size += len(body)
        if not sample:
            return self.coin()
        return int(not stats.passes_battery(b"".join(sample), self.alpha))


MARKER = b"HIDDEN-MARKER-7f3a"


class MarkerAdversary(Adversary):
    """Hides a known marker and looks for it on the medium or in written payloads."""

    name = "marker"

    def propose(self, i, k_pub, history):
        size = self.ctx.profile.payload_size
        fill = (MARKER * (size // len(MARKER) + 1))[:size]
        pair = build_challenge(self.ctx.profile, self.rng,
                               payload=lambda level, j: fill if level is Level.HID else self.rng.bytes(size))
        self.pairs.append(pair)
        return pair

    def guess(self) -> int:
        for v in self.views:
            if v.snapshot is not None and MARKER in v.snapshot.image:
                return 1
            if v.trace is not None and any(MARKER in e.data for e in v.trace if e.data):
                return 1
        return 0


BATTERY = {cls.name: cls for cls in (RandomGuess, FreeSpaceDiff, TraceLength, AddrDistribution, PayloadEntropy)}
ADVERSARIES = {**BATTERY, MarkerAdversary.name: MarkerAdversary}


def builtin_adversaries() -> dict[str, type[Adversary]]:
    return dict(BATTERY)


def make_adversary(name: str) -> Adversary:
    try:
        return ADVERSARIES[name]()
    except KeyError:
        raise ConfigError(f"unknown adversary {name!r}; choose from {sorted(ADVERSARIES)}") from None


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    b: int
    guess: int | None
    win: bool
    invalid: bool
    digest: str
    detail: str = ""

    def as_dict(self) -> dict:
        return {"trial": self.trial, "b": self.b, "guess": self.guess, "win": self.win,
                "invalid": self.invalid, "digest": self.digest, "detail": self.detail}


def run_trial(config: GameConfig, adversary: Adversary, rng: SeededRng, trial: int = 0) -> TrialRecord:
    """One game execution; raises AdversaryInvalid if a proposed pair breaks the rules."""
    scheme = config.make_scheme(rng.child(0))
    device, keys = scheme.setup(config.lam)
    device.take_trace()
    b = rng.child(1).bit()
    ctx = AdversaryContext(config, scheme.profile(), keys.k_pub, rng.child(2),
                           UnitCodec(device.geometry(), keys.k_pub))
    adversary.setup(ctx)
    h = hashlib.sha256(f"{trial}:{b}".encode())
    history: list[View] = []
    for i in range(config.rounds):
        pair = adversary.propose(i, keys.k_pub, tuple(history))
        try:
            scheme.check_rules(pair)
        except RuleViolation as exc:
            raise AdversaryInvalid(f"round {i}: requirement {exc.requirement}: {exc.message}") from exc
        view = _execute_round(scheme, device, keys, i, pair.select(b), config.orientation)
        h.update(view.digest().encode())
        history.append(view)
        adversary.observe(i, view)
    guess = int(adversary.guess())
    return TrialRecord(trial, b, guess, guess == b, False, h.hexdigest())


@dataclass(frozen=True)
class GameOutcome:
    scheme: str
    adversary: str
    orientation: str
    rounds: int
    trials: int
    wins: int
    invalid: int
    advantage: float
    ci95: float
    epsilon: float
    digest: str
    records: tuple = field(default=(), repr=False, compare=False)

    @property
    def valid(self) -> int:
        return self.trials - self.invalid

    @property
    def win_rate(self) -> float:
        return self.wins / self.valid if self.valid else float("nan")

    @property
    def passed(self) -> bool:
        return self.valid > 0 and self.advantage <= self.epsilon

    def summary(self) -> dict:
        return {"scheme": self.scheme, "adversary": self.adversary, "orientation": self.orientation,
                "rounds": self.rounds, "trials": self.trials, "valid_trials": self.valid, "wins": self.wins,
                "invalid": self.invalid, "advantage": self.advantage, "ci95": self.ci95,
                "epsilon": self.epsilon, "pass": self.passed, "digest": self.digest}


def estimate_advantage(config: GameConfig, adversary: Adversary, progress=None) -> GameOutcome:
    """Run ``config.trials`` seeded trials; trial t uses the stream seeded with ``seed ^ t``."""
    records = []
    for t in range(config.trials):
        rng = SeededRng(config.seed ^ t)
        try:
            rec = run_trial(config, adversary, rng, t)
        except AdversaryInvalid as exc:
            rec = TrialRecord(t, -1, None, False, True, "", str(exc))
        records.append(rec)
        if progress is not None:
            progress(rec)
    valid = [r for r in records if not r.invalid]
    wins = sum(r.win for r in valid)
    n = len(valid)
    rate = wins / n if n else 0.5
    advantage = abs(rate - 0.5)
    ci95 = 1.96 * math.sqrt(rate * (1 - rate) / n) if n else float("nan")
    h = hashlib.sha256()
    for r in records:
        h.update(f"{r.trial}:{r.b}:{r.guess}:{r.digest};".encode())
    return GameOutcome(config.scheme, getattr(adversary, "name", type(adversary).__name__),
                       config.orientation, config.rounds, config.trials, wins, len(records) - n,
                       advantage, ci95, config.epsilon, h.hexdigest(), tuple(records))
