"""Randomized authenticated encryption and the seeded RNG every experiment draws from.

Ciphertexts are ``nonce(16) || AES-GCM(ciphertext || tag(16))`` so their length
is always ``len(plaintext) + OVERHEAD`` and the bytes look uniform.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthFail, ConfigError

NONCE_SIZE = 16
TAG_SIZE = 16
OVERHEAD = NONCE_SIZE + TAG_SIZE
MASK64 = (1 << 64) - 1


class SeededRng:
    """Deterministic byte/integer stream keyed by a 64-bit seed.

    ``child(*key)`` derives an independent stream, so components that must not
    perturb each other's draws (placement vs. ciphertext nonces) stay aligned
    across runs with the same seed.
    """

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed) & MASK64
        self.spawn_key = tuple(spawn_key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(ss))
        self.drawn = 0

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, spawn_key={self.spawn_key})"

    def child(self, *key: int) -> "SeededRng":
        return SeededRng(self.seed, self.spawn_key + tuple(key))

    def bytes(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("n must be non-negative")
        self.drawn += n
        return self._gen.bytes(n) if n else b""

    def randrange(self, n: int) -> int:
        return int(self._gen.integers(0, n))

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def random(self) -> float:
        return float(self._gen.random())

    def bit(self) -> int:
        return int(self._gen.integers(0, 2))

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def shuffle(self, items: list) -> None:
        self._gen.shuffle(items)


def rng_bytes(rng: SeededRng, n: int) -> bytes:
    return rng.bytes(n)


@dataclass(frozen=True)
class KeyPair:
    k_pub: bytes
    k_hid: bytes = field(repr=False)

    def __post_init__(self):
        if self.k_pub == self.k_hid:
            raise ConfigError("public and hidden keys must differ")

    @classmethod
    def generate(cls, rng: SeededRng, lam: int = 256) -> "KeyPair":
        if lam not in (128, 192, 256):
            raise ConfigError(f"security parameter must be 128, 192 or 256 bits, got {lam}")
        k_pub = rng.bytes(lam // 8)
        k_hid = rng.bytes(lam // 8)
        while k_hid == k_pub:
            k_hid = rng.bytes(lam // 8)
        return cls(k_pub, k_hid)

    def to_public(self) -> dict:
        """Serializable view; the hidden key never leaves the process."""
        return {"k_pub": self.k_pub.hex()}


@lru_cache(maxsize=64)
def _aead(key: bytes) -> AESGCM:
    return AESGCM(key)


def ciphertext_size(plaintext_len: int) -> int:
    return plaintext_len + OVERHEAD


def encrypt(key: bytes, plaintext: bytes, rng: SeededRng) -> bytes:
    nonce = rng.bytes(NONCE_SIZE)
    return nonce + _aead(key).encrypt(nonce, bytes(plaintext), None)


def decrypt(key: bytes, ciphertext: bytes) -> bytes:
    if len(ciphertext) < OVERHEAD:
        raise AuthFail("ciphertext shorter than nonce and tag")
    ciphertext = bytes(ciphertext)
    try:
        return _aead(key).decrypt(ciphertext[:NONCE_SIZE], ciphertext[NONCE_SIZE:], None)
    except InvalidTag:
        raise AuthFail("tag mismatch") from None


def try_decrypt(key: bytes, ciphertext: bytes) -> bytes | None:
    try:
        return decrypt(key, ciphertext)
    except AuthFail:
        return None
