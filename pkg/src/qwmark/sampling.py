"""Deterministic 64-bit generator and sampling helpers.

Location derivation must be reproducible bit-for-bit across runs, thread
counts and implementations, so the generator is pinned here instead of
delegating to a platform RNG:

* ``splitmix64``: state advances by the 64-bit golden-ratio constant, the
  output is the scrambled state (xor-shift/multiply finalizer).
* Per-layer streams: layer ``i`` of a run seeded with ``s`` uses a fresh
  generator seeded with ``mix64(s XOR (i * GOLDEN) mod 2^64)``.
* Selection of ``k`` items from an ordered list of ``n``: partial
  Fisher-Yates, at step ``i`` swapping with ``i + (next_u64() mod (n - i))``
  and keeping the first ``k`` entries in swap order.

The modulo draw carries a small bias for ranges that do not divide 2^64;
this is accepted to keep the definition trivially portable.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

T = TypeVar("T")


def mix64(x: int) -> int:
    """One splitmix64 output step applied to state ``x``."""
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & MASK64
    return x ^ (x >> 31)


class SplitMix64:
    """splitmix64 sequence; seed is reduced modulo 2^64."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def next_below(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound


def layer_stream(seed: int, layer_index: int) -> SplitMix64:
    """Independent per-layer stream for run seed ``seed``."""
    if layer_index < 0:
        raise ValueError("layer_index must be non-negative")
    return SplitMix64(mix64((seed & MASK64) ^ ((layer_index * GOLDEN) & MASK64)))


def partial_fisher_yates(items: Sequence[T], k: int, gen: SplitMix64) -> list[T]:
    """First ``k`` entries of a partial Fisher-Yates shuffle of ``items``.

    Only the first ``k`` swap steps are performed; the result order is the
    swap order, which downstream code relies on for bit assignment.
    """
    n = len(items)
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} items from {n}")
    pool = list(items)
    for i in range(k):
        j = i + gen.next_below(n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def sample_indices(population: int, k: int, gen: SplitMix64) -> list[int]:
    """``k`` distinct indices from ``range(population)``, uniform without replacement.

    Sparse partial Fisher-Yates; O(k) memory so it works on large flat
    weight matrices.
    """
    if not 0 <= k <= population:
        raise ValueError(f"cannot sample {k} of {population}")
    swapped: dict[int, int] = {}
    out = []
    for i in range(k):
        j = i + gen.next_below(population - i)
        vi = swapped.get(i, i)
        vj = swapped.get(j, j)
        swapped[i], swapped[j] = vj, vi
        out.append(vj)
    return out


def rademacher_bits(seed: int, count: int) -> list[int]:
    """Deterministic +/-1 sequence: low bit of each draw maps to +1/-1."""
    if count < 0:
        raise ValueError("count must be non-negative")
    gen = SplitMix64(seed)
    return [1 if gen.next_u64() & 1 else -1 for _ in range(count)]
