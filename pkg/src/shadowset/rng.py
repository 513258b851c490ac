"""Deterministic, splittable random streams.

Every random decision in this package draws from a stream whose 64-bit state
is hashed from (seed, pixel index, sample index, tag). Streams are
counter-based: creating the same stream twice yields the same sequence, and
no stream shares state with another, so renders are reproducible regardless
of tile order or thread count.

The stepping functions are numba-compiled and shared verbatim by the render
kernels; the `RngStream` class is a thin stateful wrapper for Python-side
consumers (dataset generation, tests).
"""
from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64

_GAMMA = U64(0x9E3779B97F4A7C15)
_MASK64 = 0xFFFFFFFFFFFFFFFF
_INV_2_53 = 1.0 / 9007199254740992.0

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


@njit(cache=True)
def mix64(z):
    # splitmix64 finalizer; full-avalanche 64-bit mix. The cast pins the
    # arithmetic to uint64 no matter how the caller's ints were typed;
    # without it a signed dispatch would compute a different sequence.
    z = U64(z)
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@njit(cache=True)
def stream_state(seed, pixel, sample, tag):
    """Initial state for the (seed, pixel, sample, tag) stream."""
    z = mix64(U64(seed) + _GAMMA)
    z = mix64(z ^ (U64(pixel) + _GAMMA))
    z = mix64(z ^ (U64(sample) + _GAMMA))
    z = mix64(z ^ (U64(tag) + _GAMMA))
    return z


@njit(cache=True)
def next_u64(state):
    state = U64(state) + _GAMMA
    return state, mix64(state)


@njit(cache=True)
def next_f64(state):
    state = U64(state) + _GAMMA
    # top 53 bits -> [0, 1)
    return state, (mix64(state) >> U64(11)) * _INV_2_53


def mix(*parts) -> int:
    """FNV-1a hash of ints/strings into a derived 64-bit seed.

    Used to split seeds hierarchically, e.g. mix(seed, "cameras", room_idx).
    Order-sensitive.
    """
    h = _FNV_OFFSET
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
        else:
            data = (int(part) & _MASK64).to_bytes(8, "little")
        for byte in data:
            h ^= byte
            h = (h * _FNV_PRIME) & _MASK64
    return h


class RngStream:
    """Stateful view over one counter-based stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int, pixel: int = 0, sample: int = 0, tag: int = 0):
        self.state = stream_state(
            U64(seed & _MASK64), U64(pixel & _MASK64),
            U64(sample & _MASK64), U64(tag & _MASK64),
        )

    # compiled calls hand state back as a plain int; rewrap so the next
    # dispatch does not try to squeeze it into int64
    def next_float(self) -> float:
        state, value = next_f64(U64(self.state))
        self.state = U64(state)
        return float(value)

    def next_pair(self) -> tuple[float, float]:
        return self.next_float(), self.next_float()

    def next_uint(self) -> int:
        state, value = next_u64(U64(self.state))
        self.state = U64(state)
        return int(value)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return min(int(self.next_float() * n), n - 1)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def child(self, *parts) -> "RngStream":
        """Independent stream derived from this stream's identity."""
        return RngStream(mix(int(self.state), *parts))
