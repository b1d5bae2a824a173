import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdkit.crypto import SeededRng
from pdkit.device import (ERASE, READ, WRITE, BlockDevice, FlashDevice, OpEntry, OpTrace, dump_trace,
                          export_snapshot, load_snapshot, load_trace, wonly)
from pdkit.errors import BadLength, OutOfRange, WriteOnceViolation
from pdkit.stats import monobit_p


@pytest.fixture
def dev():
    d = BlockDevice(16, 64)
    d.randomize(SeededRng(1))
    return d


def test_read_after_init_and_roundtrip(dev):
    before = dev.cells[0].tobytes()
    assert dev.read_block(0) == before
    data = bytes(range(64))
    dev.write_block(5, data)
    assert dev.read_block(5) == data
    dev.write_block(0, bytes(64))
    assert dev.read_block(0) == bytes(64)


def test_bounds_and_lengths(dev):
    with pytest.raises(OutOfRange):
        dev.read_block(16)
    with pytest.raises(OutOfRange):
        dev.write_block(-1, bytes(64))
    with pytest.raises(BadLength):
        dev.write_block(0, bytes(63))


def test_trace_counts_and_take(dev):
    dev.take_trace()
    dev.write_block(0, bytes(64))
    dev.write_block(0, bytes(64))
    dev.read_block(0)
    t = dev.take_trace()
    assert [e.kind for e in t] == [WRITE, WRITE, READ]
    assert t.locations(WRITE) == [0, 0]
    assert len(dev.take_trace()) == 0


def test_randomize_is_untraced_and_random():
    d = BlockDevice()
    d.randomize(SeededRng(3))
    assert len(d.take_trace()) == 0
    assert monobit_p(d.snapshot().image) > 0.01


def test_snapshot_purity(dev):
    s1 = dev.snapshot()
    s2 = dev.snapshot()
    assert s1.image == s2.image and s1.digest() == s2.digest()
    dev.write_block(3, bytes(64))
    assert s1.image == s2.image
    assert dev.snapshot().digest() != s1.digest()
    assert len(dev.take_trace()) == 1  # snapshots are not operations


def test_flash_program_rules():
    f = FlashDevice(2, 2, 3)
    f.program_page(0, [1, 0, 0])
    with pytest.raises(WriteOnceViolation):
        f.program_page(0, [0, 1, 1])
    f.program_page(0, [1, 1, 0])
    assert list(f.read_page(0)[0]) == [1, 1, 0]
    f.program_page(0, [1, 1, 0], [1, 0])
    with pytest.raises(WriteOnceViolation):
        f.program_page(0, [1, 1, 0], [0, 1])
    f.program_page(0, [1, 1, 1])  # spare left as is
    assert list(f.read_page(0)[1]) == [1, 0]
    with pytest.raises(BadLength):
        f.program_page(0, [1, 1])
    with pytest.raises(OutOfRange):
        f.program_page(4, [0, 0, 0])


def test_flash_erase():
    f = FlashDevice(2, 2, 3)
    f.program_page(1, [1, 1, 1], [1, 1])
    f.take_trace()
    f.erase_block(0)
    cells, spare = f.read_page(1)
    assert not cells.any() and not spare.any()
    assert f.erase_counts[0] == 1
    with pytest.raises(OutOfRange):
        f.erase_block(2)
    f.program_page(0, [0, 1, 0])
    f.erase_block(1)
    assert [e.kind for e in f.take_trace()] == [ERASE, READ, WRITE, ERASE]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.lists(st.integers(0, 1), min_size=6, max_size=6),
                          st.booleans()), max_size=40))
def test_flash_monotone_between_erases(ops):
    f = FlashDevice(2, 2, 6)
    for page, bits, erase in ops:
        before = f.cells.copy()
        if erase:
            f.erase_block(page // 2)
            continue
        try:
            f.program_page(page, bits)
        except WriteOnceViolation:
            assert np.array_equal(f.cells, before)  # a refused program changes nothing
            continue
        assert np.all(f.cells >= before)


def test_wonly_examples():
    t = OpTrace([OpEntry(READ, 1), OpEntry(WRITE, 1, b"d1"), OpEntry(WRITE, 2, b"d2")])
    assert list(wonly(t)) == [OpEntry(WRITE, 1, b"d1"), OpEntry(WRITE, 2, b"d2")]
    assert len(wonly(OpTrace([OpEntry(READ, 0), OpEntry(READ, 3)]))) == 0
    assert len(wonly(OpTrace())) == 0
    e = OpTrace([OpEntry(ERASE, 0), OpEntry(READ, 0)])
    assert [x.kind for x in wonly(e)] == [ERASE]


@given(st.lists(st.sampled_from([READ, WRITE, ERASE]), max_size=30))
def test_wonly_idempotent(kinds):
    t = OpTrace([OpEntry(k, i, b"x" if k == WRITE else None) for i, k in enumerate(kinds)])
    assert list(wonly(wonly(t))) == list(wonly(t))
    assert all(e.kind != READ for e in wonly(t))


def test_opentry_validation():
    with pytest.raises(ValueError):
        OpEntry(WRITE, 0)
    with pytest.raises(ValueError):
        OpEntry(READ, 0, b"x")
    with pytest.raises(ValueError):
        OpEntry("Trim", 0)


def test_trace_and_snapshot_export(tmp_path, dev):
    dev.take_trace()
    dev.write_block(2, bytes(64))
    dev.read_block(2)
    path = dump_trace(dev.take_trace(), tmp_path / "t.jsonl")
    recs = load_trace(path)
    assert [(r["seq"], r["kind"], r["location"]) for r in recs] == [(0, WRITE, 2), (1, READ, 2)]
    assert recs[1]["payload_digest"] is None
    assert all(set(json.loads(line)) == {"seq", "kind", "location", "payload_digest"}
               for line in path.read_text().splitlines())
    snap = dev.snapshot()
    export_snapshot(snap, tmp_path / "s", seed=1, scheme="x")
    back, side = load_snapshot(tmp_path / "s")
    assert back.image == snap.image and side["seed"] == 1 and side["scheme"] == "x"
    (tmp_path / "s.img").write_bytes(b"tampered")
    with pytest.raises(ValueError):
        load_snapshot(tmp_path / "s")
