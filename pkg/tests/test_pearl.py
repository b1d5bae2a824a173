import numpy as np
import pytest

from pdkit import Level, Request, make_scheme
from pdkit.crypto import KeyPair
from pdkit.device import SPARE_GEN, SPARE_INVALID, wonly
from pdkit.errors import ConfigError, NoInvalidPages, NotFound
from pdkit.schemes.pearl import GEN2, INVALID1
from pdkit.stats import chi2_two_sample_p

from model import durability_run
from oracles import pearl_utilization

GEOM = {"num_erase_blocks": 16, "pages_per_block": 8}


def fresh(seed=0, **extra):
    s = make_scheme("pearl", seed=seed, **{**GEOM, **extra})
    s.setup()
    s.device.take_trace()
    return s


def data(s, tag: int) -> bytes:
    return bytes([tag]) * s.payload_size


def test_setup_leaves_cover_pages_in_the_pool():
    s = fresh()
    assert s.invalid_pool().size == s.cover_pages
    assert np.all(s.device.spare[s.invalid_pool(), SPARE_INVALID] == 1)


def test_overwrite_flags_old_page_invalid():
    s = fresh(rewrite_prob=0.0)
    s.write(Level.PUB, 3, data(s, 1))
    old = s.page_table[3]
    s.write(Level.PUB, 3, data(s, 2))
    assert s.page_table[3] != old
    assert s.device.spare[old, SPARE_INVALID] == 1 and s.state[old] == INVALID1
    assert old in s.invalid_pool()
    assert s.read(Level.PUB, 3) == data(s, 2)


def test_hidden_write_consumes_one_pool_page_with_one_program():
    s = fresh()
    pool = set(s.invalid_pool().tolist())
    s.write(Level.HID, 0, data(s, 7))
    writes = wonly(s.device.take_trace())
    assert len(writes) == 1
    page = writes[0].location
    assert page in pool
    assert set(s.invalid_pool().tolist()) == pool - {page}
    assert s.state[page] == GEN2 and s.device.spare[page, SPARE_GEN] == 1
    assert s.read(Level.HID, 0) == data(s, 7)


def _triples(s, pages) -> np.ndarray:
    groups = s.device.cells[pages, : (s.cells_per_page // 3) * 3].reshape(-1, 3)
    return np.bincount(groups @ np.array([4, 2, 1]), minlength=8)


def test_hidden_and_cover_rewrites_look_alike():
    hid, cover = fresh(seed=1, cover_pages=40), fresh(seed=2, cover_pages=40, rewrite_prob=1.0)
    for i in range(30):
        hid.write(Level.HID, i % hid.hid_capacity, data(hid, i))
        cover.write(Level.PUB, i, data(cover, i))
    pages_h = np.flatnonzero(hid.state == GEN2)
    pages_c = np.flatnonzero(cover.state == GEN2)
    assert len(pages_h) == len(pages_c) == 30
    assert chi2_two_sample_p(_triples(hid, pages_h), _triples(cover, pages_c)) > 0.01


def test_unmount_then_remount_recovers_index():
    s = fresh(seed=3)
    for i in range(12):
        s.write(Level.HID, i % 9, data(s, i))
    s.oper(s.device, [Request.delete(4, Level.HID)], s.keys)
    before = dict(s.hid_index)
    s.oper(s.device, [Request.unmount()], s.keys)
    assert not s.hid_mounted and s.hid_index == {}
    s.mount_hidden()
    assert s.hid_index == before
    with pytest.raises(NotFound):
        s.read(Level.HID, 4)


def test_fresh_instance_mounts_both_volumes():
    s = fresh(seed=4)
    s.write(Level.PUB, 1, data(s, 11))
    s.write(Level.HID, 2, data(s, 22))
    s.oper(s.device, [Request.unmount()], s.keys)

    again = make_scheme("pearl", **GEOM)
    again.attach(s.device, s.keys)
    assert again.read(Level.PUB, 1) == data(s, 11)
    assert again.read(Level.HID, 2) == data(s, 22)

    stranger = make_scheme("pearl", **GEOM)
    stranger.attach(s.device, KeyPair(s.keys.k_pub, b"\x03" * 32))
    assert stranger.read(Level.PUB, 1) == data(s, 11)
    stranger.mount_hidden()
    assert stranger.hid_index == {}


def test_hidden_data_without_index_flush_is_found_by_scan():
    s = fresh(seed=5)
    s.write(Level.HID, 6, data(s, 66))
    s._clear_hidden()  # forget the index without flushing it
    assert s.read(Level.HID, 6) == data(s, 66)


def test_double_unmount_is_idempotent():
    s = fresh(seed=6)
    s.write(Level.HID, 0, data(s, 1))
    s.oper(s.device, [Request.unmount()], s.keys)
    snap = s.device.snapshot().digest()
    s.device.take_trace()
    s.oper(s.device, [Request.unmount()], s.keys)
    assert len(wonly(s.device.take_trace())) == 0
    assert s.device.snapshot().digest() == snap


def test_unmount_is_applied_after_the_whole_pattern():
    s = fresh(seed=7)
    s.oper(s.device, [Request.unmount(), Request.write(0, data(s, 5), Level.HID)], s.keys)
    assert not s.hid_mounted
    assert s.read(Level.HID, 0) == data(s, 5)


def test_no_invalid_pages():
    s = fresh(cover_pages=0)
    with pytest.raises(NoInvalidPages):
        s.write(Level.HID, 0, data(s, 0))


def test_gc_reclaims_blocks_and_keeps_data():
    s = fresh(seed=8, rewrite_prob=0.5)
    rnd = np.random.default_rng(8)
    want_pub, want_hid = {}, {}
    for i in range(60):
        a = int(rnd.integers(0, 10))
        want_pub[a] = data(s, i)
        s.write(Level.PUB, a, want_pub[a])
        if i % 3 == 0 and s.invalid_pool().size:
            h = int(rnd.integers(0, 5))
            want_hid[h] = data(s, 200 + i)
            s.write(Level.HID, h, want_hid[h])
    free = s.free_pages()
    erased = s.gc(target_free=s.num_pages)
    assert erased > 0 and s.free_pages() > free
    assert s.device.erase_counts.sum() == erased
    for a, d in want_pub.items():
        assert s.read(Level.PUB, a) == d
    for h, d in want_hid.items():
        assert s.read(Level.HID, h) == d


@pytest.mark.parametrize("opts", [{"num_erase_blocks": 1, "pages_per_block": 2}, {"rewrite_prob": 1.5},
                                  {"cells_per_page": 96}, {"pub_pages": 0}, {"cover_pages": 10_000}])
def test_bad_configuration(opts):
    with pytest.raises(ConfigError):
        make_scheme("pearl", **{**GEOM, **opts})


def test_utilization_matches_oracle():
    s = make_scheme("pearl")
    assert s.space_utilization() == pytest.approx(pearl_utilization(s.cells_per_page), abs=1e-12)


def test_durability_fuzz():
    rep = durability_run("pearl", ops=3000, seed=9, **GEOM)
    assert rep.ok, rep.mismatches[:5]
    assert rep.unmounts > 0 and rep.deletes > 0
