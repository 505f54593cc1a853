"""Exact nonnegative step functions on circles and bounded line windows.

Breakpoints are stored as integer numerators over one common integer
`scale`, so that ordering and lengths are plain integer operations even
when the breakpoints carry very large denominators.  Cells are
left-closed and right-open; on a circle the last cell wraps through 0.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath

from .errors import DomainError
from .exact import as_fraction, fmt, lcm, precision_digits, rpow, rpow_exact


@dataclass(frozen=True)
class Domain:
    kind: str  # "circle" or "window"
    left: Fraction
    right: Fraction

    def __post_init__(self):
        if self.kind not in ("circle", "window"):
            raise DomainError(f"unknown domain kind {self.kind!r}")
        object.__setattr__(self, "left", as_fraction(self.left))
        object.__setattr__(self, "right", as_fraction(self.right))
        if self.right <= self.left:
            raise DomainError("domain must have positive length")
        if self.kind == "circle" and self.left != 0:
            raise DomainError("circles start at 0")

    @classmethod
    def circle(cls, circumference=1) -> "Domain":
        return cls("circle", Fraction(0), as_fraction(circumference))

    @classmethod
    def window(cls, left, right) -> "Domain":
        return cls("window", as_fraction(left), as_fraction(right))

    @property
    def is_circle(self) -> bool:
        return self.kind == "circle"

    @property
    def length(self) -> Fraction:
        return self.right - self.left

    @property
    def base_denominator(self) -> int:
        return lcm(self.left.denominator, self.right.denominator)

    def to_json(self) -> dict:
        if self.is_circle:
            return {"kind": "circle", "circumference": fmt(self.right)}
        return {"kind": "window", "left": fmt(self.left), "right": fmt(self.right)}

    @classmethod
    def from_json(cls, data: dict) -> "Domain":
        if data["kind"] == "circle":
            return cls.circle(Fraction(data["circumference"]))
        return cls.window(Fraction(data["left"]), Fraction(data["right"]))


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Use the module-level constructors; the raw fields are canonical only
    when built through `_from_sweep`.

    circle: len(values) == len(cuts); values[i] lives on [cuts[i], cuts[i+1])
            and values[-1] on the wrap cell.  A constant has cuts == ().
    window: len(values) == len(cuts) + 1; values[0] lives on [left, cuts[0]).
    """

    domain: Domain
    cuts: tuple[int, ...]
    scale: int
    values: tuple[Fraction, ...]

    # -- structure -----------------------------------------------------------
    @property
    def breakpoints(self) -> list[Fraction]:
        return [Fraction(c, self.scale) for c in self.cuts]

    @property
    def lo(self) -> int:
        return self.domain.left.numerator * (self.scale // self.domain.left.denominator)

    @property
    def hi(self) -> int:
        return self.domain.right.numerator * (self.scale // self.domain.right.denominator)

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (self.domain == other.domain and self.scale == other.scale
                and self.cuts == other.cuts and self.values == other.values)

    def __hash__(self):
        return hash((self.domain, self.scale, self.cuts, self.values))

    def __call__(self, x) -> Fraction:
        return self.evaluate(x)

    def evaluate(self, x) -> Fraction:
        x = as_fraction(x)
        if self.domain.is_circle:
            x = x % self.domain.right
        elif not (self.domain.left <= x < self.domain.right):
            return Fraction(0)
        pos = (x.numerator * self.scale) // x.denominator
        i = bisect_right(self.cuts, pos) - 1
        if self.domain.is_circle:
            return self.values[i]  # i == -1 is the wrap cell
        return self.values[i + 1]

    def cell_lengths(self) -> list[tuple[Fraction, int]]:
        """(value, length numerator over scale) for every cell."""
        cuts, vals = self.cuts, self.values
        if self.domain.is_circle:
            if not cuts:
                return [(vals[0], self.hi)]
            out = [(vals[i], cuts[i + 1] - cuts[i]) for i in range(len(cuts) - 1)]
            out.append((vals[-1], self.hi - cuts[-1] + cuts[0]))
            return out
        edges = [self.lo, *cuts, self.hi]
        return [(vals[i], edges[i + 1] - edges[i]) for i in range(len(vals))]

    def cells(self) -> list[tuple[Fraction, Fraction, Fraction]]:
        """(start, end, value) with the circle's wrap cell split at 0."""
        out = []
        s = self.scale
        if self.domain.is_circle:
            cuts = self.cuts
            if not cuts:
                return [(Fraction(0), self.domain.right, self.values[0])]
            if cuts[0] > 0:
                out.append((Fraction(0), Fraction(cuts[0], s), self.values[-1]))
            for i, c in enumerate(cuts):
                end = cuts[i + 1] if i + 1 < len(cuts) else self.hi
                out.append((Fraction(c, s), Fraction(end, s), self.values[i]))
            return out
        edges = [self.lo, *self.cuts, self.hi]
        return [(Fraction(edges[i], s), Fraction(edges[i + 1], s), v) for i, v in enumerate(self.values)]

    def to_json(self) -> dict:
        return {
            "domain": self.domain.to_json(),
            "breakpoints": [fmt(b) for b in self.breakpoints],
            "values": [fmt(v) for v in self.values],
        }

    @classmethod
    def from_json(cls, data: dict) -> "StepFunction":
        return from_cells(Domain.from_json(data["domain"]),
                          [Fraction(b) for b in data["breakpoints"]],
                          [Fraction(v) for v in data["values"]])


# -- construction ------------------------------------------------------------

def _sweep(f: StepFunction) -> tuple[Fraction, list[tuple[int, Fraction]]]:
    """Initial value at the domain's left end plus (position, new value) changes."""
    cuts, vals = f.cuts, f.values
    if f.domain.is_circle:
        if not cuts:
            return vals[0], []
        if cuts[0] == 0:
            return vals[0], list(zip(cuts[1:], vals[1:]))
        return vals[-1], list(zip(cuts, vals))
    return vals[0], list(zip(cuts, vals[1:]))


def _rescaled(f: StepFunction, scale: int) -> StepFunction:
    if scale == f.scale:
        return f
    m, r = divmod(scale, f.scale)
    if r:
        raise ValueError("new scale must be a multiple of the old one")
    return StepFunction(f.domain, tuple(c * m for c in f.cuts), scale, f.values)


def _from_sweep(domain: Domain, scale: int, init, changes: Iterable[tuple[int, Fraction]]) -> StepFunction:
    """Canonical function from a sweep; positions must be strictly inside the
    domain and sorted (equal positions: the last entry wins)."""
    init = as_fraction(init)
    if init < 0:
        raise DomainError("step functions are nonnegative")
    cuts: list[int] = []
    vals: list[Fraction] = []
    cur = init
    for pos, v in changes:
        if v < 0:
            raise DomainError("step functions are nonnegative")
        if cuts and cuts[-1] == pos:
            vals[-1] = v
            prev = vals[-2] if len(vals) > 1 else init
            if v == prev:
                cuts.pop()
                vals.pop()
            cur = vals[-1] if vals else init
            continue
        if v != cur:
            cuts.append(pos)
            vals.append(v)
            cur = v
    if domain.is_circle:
        if not cuts:
            values = (init,)
        elif cur == init:
            values = tuple(vals)
        else:
            cuts.insert(0, 0)
            values = (init, *vals)
    else:
        values = (init, *vals)
    base = domain.base_denominator
    g = math.gcd(scale // base, *cuts) if cuts else scale // base
    if g > 1:
        scale //= g
        cuts = [c // g for c in cuts]
    return StepFunction(domain, tuple(cuts), scale, values)


def canonical(f: StepFunction) -> StepFunction:
    init, changes = _sweep(f)
    return _from_sweep(f.domain, f.scale, init, changes)


def constant(domain: Domain, c) -> StepFunction:
    return _from_sweep(domain, domain.base_denominator, as_fraction(c), [])


def from_cells(domain: Domain, breakpoints: Sequence, values: Sequence) -> StepFunction:
    """Build from explicit breakpoints and per-cell values (layout as in StepFunction)."""
    bps = [as_fraction(b) for b in breakpoints]
    vals = [as_fraction(v) for v in values]
    if domain.is_circle and not bps:
        need = 1
    else:
        need = len(bps) if domain.is_circle else len(bps) + 1
    if len(vals) != need:
        raise DomainError(f"expected {need} values for {len(bps)} breakpoints")
    if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise DomainError("breakpoints must be strictly increasing")
    if domain.is_circle:
        if bps and (bps[0] < 0 or bps[-1] >= domain.right):
            raise DomainError("circle breakpoints must lie in [0, M)")
    elif bps and (bps[0] <= domain.left or bps[-1] >= domain.right):
        raise DomainError("window breakpoints must lie strictly inside the window")
    scale = lcm(domain.base_denominator, *(b.denominator for b in bps))
    cuts = [b.numerator * (scale // b.denominator) for b in bps]
    if domain.is_circle and not bps:
        return constant(domain, vals[0])
    raw = StepFunction(domain, tuple(cuts), scale, tuple(vals))
    return canonical(raw)


def indicator(domain: Domain, a, b, height=1) -> StepFunction:
    """height * 1_[a, b); on a circle the interval is taken mod M and may wrap."""
    a, b, h = as_fraction(a), as_fraction(b), as_fraction(height)
    if b <= a:
        raise DomainError("empty interval")
    scale = lcm(domain.base_denominator, a.denominator, b.denominator)
    if domain.is_circle:
        M = domain.right
        if b - a >= M:
            return constant(domain, h)
        A = (a % M) * scale
        B = (b % M) * scale
        A, B = int(A), int(B)
        if A < B:
            return _from_sweep(domain, scale, Fraction(h if A == 0 else 0),
                               [(A, h)] * (A > 0) + [(B, Fraction(0))])
        changes = [(B, Fraction(0))] * (B > 0) + [(A, h)]
        return _from_sweep(domain, scale, h, changes)
    if a < domain.left or b > domain.right:
        raise DomainError("interval leaves the window")
    lo = int(domain.left * scale)
    hi = int(domain.right * scale)
    A, B = int(a * scale), int(b * scale)
    changes = []
    if A > lo:
        changes.append((A, h))
    if B < hi:
        changes.append((B, Fraction(0)))
    return _from_sweep(domain, scale, h if A == lo else Fraction(0), changes)


# -- algebra -----------------------------------------------------------------

def translate(f: StepFunction, s) -> StepFunction:
    """x -> f(x - s)."""
    s = as_fraction(s)
    if s == 0:
        return f
    scale = lcm(f.scale, s.denominator)
    g = _rescaled(f, scale)
    shift = s.numerator * (scale // s.denominator)
    if f.domain.is_circle:
        L = g.hi
        shift %= L
        init = f.evaluate(-s)
        changes = []
        for pos, v in zip(g.cuts, g.values):
            q = (pos + shift) % L
            if q:
                changes.append((q, v))
        changes.sort(key=lambda e: e[0])
        return _from_sweep(f.domain, scale, init, changes)
    lo, hi = g.lo, g.hi
    line = [(lo, g.values[0])] + list(zip(g.cuts, g.values[1:])) + [(hi, Fraction(0))]
    line = [(p + shift, v) for p, v in line]

    def value_at(pos, inclusive):
        cur = Fraction(0)
        for p, v in line:
            if p < pos or (inclusive and p == pos):
                cur = v
        return cur

    if value_at(lo, False) != 0 or value_at(hi, True) != 0:
        raise DomainError("translation moves support outside the window")
    changes = [(p, v) for p, v in line if lo < p < hi]
    return _from_sweep(f.domain, scale, value_at(lo, True), changes)


def combine(fs: Sequence[StepFunction], op: Callable[..., Fraction]) -> StepFunction:
    """Pointwise op(f_1(x), ..., f_k(x)) by a merged breakpoint sweep."""
    if not fs:
        raise DomainError("nothing to combine")
    domain = fs[0].domain
    if any(f.domain != domain for f in fs):
        raise DomainError("domain mismatch")
    scale = lcm(*(f.scale for f in fs))
    sweeps = [_sweep(_rescaled(f, scale)) for f in fs]
    cur = [s[0] for s in sweeps]
    init = op(*cur)
    events = []
    for k, (_, ch) in enumerate(sweeps):
        events.extend((pos, k, v) for pos, v in ch)
    events.sort(key=lambda e: e[0])
    changes = []
    i, n = 0, len(events)
    while i < n:
        pos = events[i][0]
        while i < n and events[i][0] == pos:
            cur[events[i][1]] = events[i][2]
            i += 1
        changes.append((pos, op(*cur)))
    return _from_sweep(domain, scale, init, changes)


def _max2(f: StepFunction, g: StepFunction) -> StepFunction:
    return combine([f, g], max)


def pointwise_max(fs: Sequence[StepFunction]) -> StepFunction:
    """Balanced pairwise merge; the output has at most sum(len(cuts)) breakpoints."""
    fs = list(fs)
    if not fs:
        raise DomainError("pointwise_max of nothing")
    if any(f.domain != fs[0].domain for f in fs):
        raise DomainError("domain mismatch")
    while len(fs) > 1:
        nxt = [_max2(fs[i], fs[i + 1]) for i in range(0, len(fs) - 1, 2)]
        if len(fs) % 2:
            nxt.append(fs[-1])
        fs = nxt
    return fs[0]


def scale_add(a, f: StepFunction, b, g: StepFunction) -> StepFunction:
    a, b = as_fraction(a), as_fraction(b)
    try:
        return combine([f, g], lambda u, v: a * u + b * v)
    except DomainError as exc:
        raise DomainError("a*f + b*g is negative somewhere") from exc


def multiply(f: StepFunction, g: StepFunction) -> StepFunction:
    return combine([f, g], lambda u, v: u * v)


def map_values(f: StepFunction, fn: Callable[[Fraction], Fraction]) -> StepFunction:
    init, ch = _sweep(f)
    return _from_sweep(f.domain, f.scale, fn(init), [(p, fn(v)) for p, v in ch])


def threshold_split(f: StepFunction, lo, hi=None) -> tuple[StepFunction, StepFunction, StepFunction]:
    """(up, middle, down) = ([f >= hi] f, [lo < f < hi] f, [f <= lo] f); hi=None means +infinity."""
    lo = as_fraction(lo)
    if hi is not None:
        hi = as_fraction(hi)
        if lo > hi:
            raise DomainError("lo must not exceed hi")
    if lo < 0:
        raise DomainError("lo must be nonnegative")
    zero = Fraction(0)
    up = map_values(f, lambda v: v if hi is not None and v >= hi else zero)
    mid = map_values(f, lambda v: v if lo < v and (hi is None or v < hi) else zero)
    down = map_values(f, lambda v: v if v <= lo and not (hi is not None and v >= hi) else zero)
    return up, mid, down


# -- measure theory ----------------------------------------------------------

def integral(f: StepFunction) -> Fraction:
    return sum((v * n for v, n in f.cell_lengths()), Fraction(0)) / f.scale


def level_measure(f: StepFunction, y, strict: bool = False) -> Fraction:
    y = as_fraction(y)
    tot = sum(n for v, n in f.cell_lengths() if (v > y if strict else v >= y))
    return Fraction(tot, f.scale)


class Distribution(Sequence):
    """(value, measure) pairs, ascending by value, with every measure an
    integer length over one common denominator.

    Measures become Fractions only when read; sums and norms work on the
    integer lengths, which matters when the denominator has 10^5 bits.
    """

    def __init__(self, lengths: dict, denominator: int):
        self.values = sorted(v for v, n in lengths.items() if n)
        self.lengths = [lengths[v] for v in self.values]
        self.denominator = denominator
        self._pairs = None

    def _materialize(self):
        if self._pairs is None:
            self._pairs = [(v, Fraction(n, self.denominator)) for v, n in zip(self.values, self.lengths)]
        return self._pairs

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self._materialize()[i]

    def __eq__(self, other):
        return list(self) == list(other)

    def __repr__(self):
        return f"Distribution({len(self)} values over 1/{self.denominator.bit_length()}-bit)"

    def measure(self, pred: Callable[[Fraction], bool]) -> Fraction:
        return Fraction(sum(n for v, n in zip(self.values, self.lengths) if pred(v)), self.denominator)

    def at_least(self, y, strict: bool = False) -> Fraction:
        y = as_fraction(y)
        return self.measure((lambda v: v > y) if strict else (lambda v: v >= y))


def distribution(f: StepFunction) -> Distribution:
    """Distinct values with the measure of the set where f takes them, ascending by value."""
    acc: dict[Fraction, int] = {}
    for v, n in f.cell_lengths():
        acc[v] = acc.get(v, 0) + n
    return Distribution(acc, f.scale)


@dataclass
class NormReport:
    p: Fraction
    strong_p: Fraction | mpmath.mpf  # ||f||_p ** p
    weak_p: Fraction | mpmath.mpf  # ||f||_{p,inf} ** p
    attaining_level: Fraction  # y attaining the weak sup
    level_measure: Fraction  # mu{f >= y} at that y

    @property
    def strong(self):
        return _root(self.strong_p, self.p)

    @property
    def weak(self):
        return _root(self.weak_p, self.p)

    def weak_ge(self, target_p) -> bool:
        """Exact test ||f||_{p,inf}**p >= target_p."""
        from .exact import power_product_cmp
        return power_product_cmp(self.attaining_level, self.p, self.level_measure, as_fraction(target_p)) >= 0

    def chebyshev_holds(self) -> bool:
        if isinstance(self.strong_p, Fraction) and isinstance(self.weak_p, Fraction):
            return self.weak_p <= self.strong_p
        with mpmath.workdps(precision_digits() + 10):
            slack = mpmath.mpf(10) ** (-(precision_digits()))
            return _mp(self.weak_p) <= _mp(self.strong_p) * (1 + slack)

    def to_json(self) -> dict:
        def r(x):
            return fmt(x) if isinstance(x, Fraction) else mpmath.nstr(x, precision_digits())
        return {
            "p": fmt(self.p),
            "strong_p": r(self.strong_p),
            "weak_p": r(self.weak_p),
            "attaining_level": fmt(self.attaining_level),
            "level_measure": fmt(self.level_measure),
        }


def _mul_wp(x, mu):
    with mpmath.workdps(precision_digits() + 10):
        return x * _mp(mu)


def _mp(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def _root(xp, p: Fraction):
    if isinstance(xp, Fraction):
        exact = rpow_exact(xp, 1 / p)
        if exact is not None:
            return exact
    with mpmath.workdps(precision_digits() + 10):
        return mpmath.power(_mp(xp), 1 / _mp(p))


def norms_from_distribution(dist: Sequence[tuple[Fraction, Fraction]], p) -> NormReport:
    """Norms from (value, measure) pairs; values need not be distinct or sorted."""
    p = as_fraction(p)
    if p < 1:
        raise DomainError("p must be at least 1")
    if isinstance(dist, Distribution):
        return _norms_from_lengths(dist, p)
    a, b = p.numerator, p.denominator
    merged: dict[Fraction, Fraction] = {}
    for v, m in dist:
        if m:
            merged[as_fraction(v)] = merged.get(as_fraction(v), Fraction(0)) + as_fraction(m)
    levels = sorted((v for v in merged if v > 0), reverse=True)
    strong_terms = [(rpow(v, p), merged[v]) for v in levels]
    if all(isinstance(t, Fraction) for t, _ in strong_terms):
        strong_p = sum((t * m for t, m in strong_terms), Fraction(0))
    else:
        with mpmath.workdps(precision_digits() + 10):
            strong_p = mpmath.fsum(_mp(t) * _mp(m) for t, m in strong_terms)
    best_key = None
    best = (Fraction(0), Fraction(0))
    cum = Fraction(0)
    for v in levels:
        cum += merged[v]
        key = v**a * cum**b
        if best_key is None or key > best_key:
            best_key, best = key, (v, cum)
    y, mu = best
    wp = rpow(y, p)
    weak_p = wp * mu if isinstance(wp, Fraction) else _mul_wp(wp, mu)
    return NormReport(p, strong_p, weak_p, y, mu)


def _log2(n: int) -> float:
    """log2 of a positive integer of any size."""
    shift = max(0, n.bit_length() - 60)
    return math.log2(n >> shift) + shift


def _norms_from_lengths(dist: Distribution, p: Fraction) -> NormReport:
    a, b = p.numerator, p.denominator
    S = dist.denominator
    items = [(v, n) for v, n in zip(dist.values, dist.lengths) if v > 0]
    items.reverse()
    powers = [rpow(v, p) for v, _ in items]
    if all(isinstance(t, Fraction) for t in powers):
        D = lcm(*(t.denominator for t in powers))
        total = sum(t.numerator * (D // t.denominator) * n for t, (_, n) in zip(powers, items))
        strong_p = Fraction(total, D * S)
    else:
        with mpmath.workdps(precision_digits() + 10):
            strong_p = mpmath.fsum(_mp(t) * n for t, (_, n) in zip(powers, items)) / S
    if not items:
        return NormReport(p, strong_p, Fraction(0), Fraction(0), Fraction(0))
    # v^a cum^b is maximized over levels; floats shortlist, integers decide
    cums, cum = [], 0
    for _, n in items:
        cum += n
        cums.append(cum)
    logs = [a * (_log2(v.numerator) - _log2(v.denominator)) + b * _log2(c) for (v, _), c in zip(items, cums)]
    top = max(logs)
    best = None
    for i, lg in enumerate(logs):
        if lg < top - 1e-6:
            continue
        v, c = items[i][0], cums[i]
        if best is None:
            best = i
            continue
        w, d = items[best][0], cums[best]
        # v^a c^b > w^a d^b  <=>  (v.num w.den)^a c^b > (w.num v.den)^a d^b
        if (v.numerator * w.denominator) ** a * c**b > (w.numerator * v.denominator) ** a * d**b:
            best = i
    y, mu = items[best][0], Fraction(cums[best], S)
    wp = rpow(y, p)
    weak_p = wp * mu if isinstance(wp, Fraction) else _mul_wp(wp, mu)
    return NormReport(p, strong_p, weak_p, y, mu)


def norms(f: StepFunction, p) -> NormReport:
    return norms_from_distribution(distribution(f), p)
