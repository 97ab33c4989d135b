"""Deterministic, splittable random streams used for sampling and oracles.

Streams are counter-based on SHA-256 so that a draw depends only on the
stream's path and the draw index, never on global state.  Child streams are
derived by extending the path, which makes per-record generation order
independent and reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
from fractions import Fraction
from typing import Sequence


class SeedStream:
    """A deterministic stream of integers keyed by (path, counter)."""

    __slots__ = ("_path", "_counter")

    def __init__(self, *path: object) -> None:
        self._path = "/".join(repr(p) for p in path)
        self._counter = 0

    def child(self, *parts: object) -> "SeedStream":
        return SeedStream(self._path, *parts)

    def _next_int(self) -> int:
        digest = hashlib.sha256(
            f"{self._path}#{self._counter}".encode("utf-8")
        ).digest()
        self._counter += 1
        return int.from_bytes(digest, "big")

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n).  Bias is below 2**-180 for n < 2**64."""
        if n <= 0:
            raise ValueError("randrange needs a positive bound")
        return self._next_int() % n

    def fraction(self, denominator: int) -> Fraction:
        """Uniform rational k/denominator with k in [0, denominator)."""
        return Fraction(self.randrange(denominator), denominator)

    def choice(self, items: Sequence):
        return items[self.randrange(len(items))]

    def weighted_index(self, weights: Sequence[Fraction]) -> int:
        """Index drawn with exact rational probabilities (must sum to 1)."""
        denom = 1
        for w in weights:
            denom = denom * w.denominator // _gcd(denom, w.denominator)
        k = self.randrange(denom)
        acc = 0
        for i, w in enumerate(weights):
            acc += int(w * denom)
            if k < acc:
                return i
        raise ValueError("weights do not sum to 1")

    def simplex_point(self, n: int, grain: int = 720720) -> list[Fraction]:
        """A random exact-rational point on the n-simplex."""
        if n == 1:
            return [Fraction(1)]
        cuts = sorted(self.randrange(grain + 1) for _ in range(n - 1))
        out = []
        prev = 0
        for c in cuts:
            out.append(Fraction(c - prev, grain))
            prev = c
        out.append(Fraction(grain - prev, grain))
        return out


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a
