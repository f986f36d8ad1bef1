# -*- coding: utf-8 -*-
"""
Seeded Randomness
=================

One 64-bit generator for everything random in the simulator: jitter, coin
flips, carrier bytes, key material. Streams are derived per (seed, label...)
so a node's draws never depend on how events of other nodes interleave.

The mixer is SplitMix64:

    state += 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)            (all mod 2^64)
"""

from __future__ import annotations

from typing import Sequence, TypeVar

from src.core.constants import MICRO

T = TypeVar("T")

MASK_64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """Finalizer of SplitMix64 applied to an arbitrary 64-bit value."""
    z &= MASK_64
    z = ((z ^ (z >> 30)) * MIX_1) & MASK_64
    z = ((z ^ (z >> 27)) * MIX_2) & MASK_64
    return z ^ (z >> 31)


class SplitMix64:
    """Deterministic 64-bit generator with a few sampling helpers."""

    def __init__(self, seed: int):
        self.state = seed & MASK_64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK_64
        return mix64(self.state)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform_int(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.randbelow(hi - lo + 1)

    def coin(self, p_micro: int) -> bool:
        """True with probability p_micro / 10^6."""
        if p_micro <= 0:
            return False
        if p_micro >= MICRO:
            return True
        return self.randbelow(MICRO) < p_micro

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise IndexError("cannot choose from an empty sequence")
        return seq[self.randbelow(len(seq))]

    def random_bytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += self.next_u64().to_bytes(8, "big")
        return bytes(out[:n])


def derive_stream(seed: int, *labels: int) -> SplitMix64:
    """Independent generator for (seed, label, label, ...)."""
    acc = mix64(seed ^ GOLDEN_GAMMA)
    for label in labels:
        acc = mix64(acc ^ mix64((label + GOLDEN_GAMMA) & MASK_64))
    return SplitMix64(acc)


def _absorb(data: bytes, acc: int) -> int:
    for i in range(0, len(data), 8):
        chunk = data[i:i + 8].ljust(8, b"\0")
        acc = mix64(acc ^ int.from_bytes(chunk, "big"))
    return mix64(acc ^ len(data))


def keystream(key: bytes, nonce: bytes, length: int) -> bytes:
    """Keystream of `length` bytes absorbed from key and nonce.

    Simulation stand-in, not a cryptographic primitive.
    """
    seed = _absorb(nonce, _absorb(key, GOLDEN_GAMMA))
    return SplitMix64(seed).random_bytes(length)


def xor_bytes(data: bytes, stream: bytes) -> bytes:
    if not data:
        return b""
    n = len(data)
    return (int.from_bytes(data, "big") ^ int.from_bytes(stream[:n], "big")).to_bytes(n, "big")
