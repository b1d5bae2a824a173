import pytest

from pdkit.crypto import (OVERHEAD, KeyPair, SeededRng, ciphertext_size, decrypt, encrypt, rng_bytes,
                          try_decrypt)
from pdkit.errors import AuthFail, ConfigError
from pdkit.stats import monobit_p, passes_battery, serial_p


@pytest.fixture
def key():
    return SeededRng(9).bytes(32)


def test_roundtrip_and_randomized(key):
    rng = SeededRng(1)
    for _ in range(1000):
        m = rng.bytes(rng.randrange(100))
        assert decrypt(key, encrypt(key, m, rng)) == m
    assert encrypt(key, b"same", rng) != encrypt(key, b"same", rng)


def test_overhead_is_fixed(key):
    rng = SeededRng(2)
    assert OVERHEAD == 32
    for n in (0, 1, 100, 4064):
        assert len(encrypt(key, bytes(n), rng)) == n + OVERHEAD == ciphertext_size(n)


def test_wrong_key_and_garbage(key):
    rng = SeededRng(3)
    other = rng.bytes(32)
    with pytest.raises(AuthFail):
        decrypt(other, encrypt(key, b"m", rng))
    with pytest.raises(AuthFail):
        decrypt(key, b"")
    assert try_decrypt(key, b"short") is None


def test_random_bytes_never_authenticate(key):
    rng = SeededRng(4)
    false_accepts = sum(try_decrypt(key, rng.bytes(64)) is not None for _ in range(100_000))
    assert false_accepts == 0


def test_ciphertexts_look_random(key):
    rng = SeededRng(5)
    ct = b"".join(encrypt(key, bytes(4064), rng) for _ in range(245))  # ~10^6 bytes of structured input
    assert len(ct) >= 10 ** 6
    assert monobit_p(ct) > 0.01
    assert min(serial_p(ct)) > 0.01
    counters = b"".join(encrypt(key, i.to_bytes(8, "big") * 500, rng) for i in range(100))
    assert passes_battery(counters)


def test_rng_determinism():
    assert rng_bytes(SeededRng(7), 64) == rng_bytes(SeededRng(7), 64)
    assert rng_bytes(SeededRng(7), 64) != rng_bytes(SeededRng(8), 64)
    assert rng_bytes(SeededRng(7), 0) == b""
    a = SeededRng(7)
    assert a.child(1).bytes(8) == a.child(1).bytes(8) != a.child(2).bytes(8)
    with pytest.raises(ValueError):
        a.bytes(-1)


def test_keypair():
    kp = KeyPair.generate(SeededRng(1))
    assert len(kp.k_pub) == len(kp.k_hid) == 32 and kp.k_pub != kp.k_hid
    assert len(KeyPair.generate(SeededRng(1), 128).k_pub) == 16
    assert kp.k_hid.hex() not in repr(kp)
    assert kp.k_hid.hex() not in str(kp.to_public())
    with pytest.raises(ConfigError):
        KeyPair(b"a" * 32, b"a" * 32)
    with pytest.raises(ConfigError):
        KeyPair.generate(SeededRng(1), 100)
