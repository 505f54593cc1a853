"""Time sequences (a_n), n = 1, 2, ...

Integer kinds produce exact ints.  The square-root kinds produce `Sqrt`
values that compare exactly through their radicands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering
from typing import Sequence

import mpmath

from .errors import DomainError
from .exact import as_fraction, fmt

KINDS = ("power", "factorial", "sqrt_all", "sqrt_squarefree", "floor_log", "explicit")


@total_ordering
@dataclass(frozen=True)
class Sqrt:
    """The real number sqrt(radicand)."""

    radicand: int

    def __lt__(self, other):
        return self.radicand < other.radicand

    def __float__(self):
        return math.sqrt(self.radicand)

    def mp(self):
        return mpmath.sqrt(self.radicand)

    def __repr__(self):
        return f"sqrt({self.radicand})"


def squarefree_upto(n: int) -> list[int]:
    """Squarefree integers 2..n, by sieving out multiples of squares."""
    flags = bytearray([1]) * (n + 1)
    i = 2
    while i * i <= n:
        for m in range(i * i, n + 1, i * i):
            flags[m] = 0
        i += 1
    return [s for s in range(2, n + 1) if flags[s]]


@dataclass(frozen=True)
class TimeSequence:
    kind: str
    base: int | None = None  # for power(k)
    terms: tuple = ()  # for explicit
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown sequence kind {self.kind!r}")
        if self.kind == "power" and (self.base is None or self.base < 2):
            raise DomainError("power(k) needs k >= 2")
        if self.kind == "explicit":
            object.__setattr__(self, "terms", tuple(as_fraction(t) if not isinstance(t, int) else t
                                                    for t in self.terms))

    @classmethod
    def power(cls, k: int) -> "TimeSequence":
        return cls("power", base=k)

    @classmethod
    def explicit(cls, terms: Sequence) -> "TimeSequence":
        return cls("explicit", terms=tuple(terms))

    @property
    def is_integer(self) -> bool:
        if self.kind == "explicit":
            return all(isinstance(t, int) or (isinstance(t, Fraction) and t.denominator == 1) for t in self.terms)
        return self.kind in ("power", "factorial", "floor_log")

    def materialize(self, N: int) -> list:
        """The first N terms a_1..a_N."""
        if N < 0:
            raise DomainError("N must be nonnegative")
        k = self.kind
        if k == "power":
            out, x = [], 1
            for _ in range(N):
                x *= self.base
                out.append(x)
            return out
        if k == "factorial":
            out, x = [], 1
            for n in range(1, N + 1):
                x *= n
                out.append(x)
            return out
        if k == "sqrt_all":
            return [Sqrt(n) for n in range(1, N + 1)]
        if k == "sqrt_squarefree":
            bound = max(8, 2 * N + 8)
            while True:
                sf = squarefree_upto(bound)
                if len(sf) >= N:
                    return [Sqrt(s) for s in sf[:N]]
                bound *= 2
        if k == "floor_log":
            return [floor_log(n) for n in range(1, N + 1)]
        if N > len(self.terms):
            raise DomainError(f"explicit sequence has only {len(self.terms)} terms")
        return list(self.terms[:N])

    def term(self, n: int):
        if n < 1:
            raise DomainError("terms are indexed from 1")
        if self.kind == "power":
            return self.base**n
        if self.kind == "explicit":
            return self.terms[n - 1]
        return self.materialize(n)[-1]

    def ratio(self, n: int):
        """a_{n+1}/a_n, exact where possible."""
        if self.kind == "power":
            return Fraction(self.base)
        if self.kind == "factorial":
            return Fraction(n + 1)
        a, b = self.materialize(n + 1)[-2:]
        if isinstance(a, Sqrt):
            return mpmath.sqrt(mpmath.mpf(b.radicand) / a.radicand)
        return Fraction(b) / Fraction(a)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "power":
            out["base"] = self.base
        if self.kind == "explicit":
            out["terms"] = [fmt(t) for t in self.terms]
        return out

    @classmethod
    def from_json(cls, data: dict) -> "TimeSequence":
        if data["kind"] == "explicit":
            return cls.explicit([Fraction(t) for t in data["terms"]])
        return cls(data["kind"], base=data.get("base"))


def floor_log(n: int) -> int:
    """floor(ln n) exactly: e**m <= n < e**(m+1), checked at 40 digits."""
    if n < 1:
        raise DomainError("floor_log needs n >= 1")
    with mpmath.workdps(40):
        m = int(mpmath.floor(mpmath.log(n)))
        # e is transcendental, so n is never exactly a power of e; the
        # guard only protects against a rounding slip at huge n
        while mpmath.exp(m + 1) <= n:
            m += 1
        while mpmath.exp(m) > n:
            m -= 1
    return m
