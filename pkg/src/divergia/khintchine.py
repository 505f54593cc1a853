"""Khintchine averages, their additive (logarithmic) form, and semigroup diagnostics.

Multiplicative averages f(nx mod 1) at rational x are exact.  On the
additive side the translates y - log a_n are irrational, so every value
there is an interval with rational endpoints, certified with mpmath's
interval context; when a translate falls within rounding distance of a
breakpoint the interval is widened and flagged, never guessed.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath

from .dynsys import Assertion
from .errors import DomainError
from .exact import as_fraction, fmt, iv_precision, precision_digits
from .measure import StepFunction
from .sequences import Sqrt
from .weights import weak_norm_seq

iv = mpmath.iv


# -- multiplicative side ---------------------------------------------------------

def khintchine_average(f: StepFunction, x, S_N: Sequence[int]) -> Fraction:
    """1/|S_N| sum_{n in S_N} f(n x mod 1), exactly."""
    if not f.domain.is_circle or f.domain.right != 1:
        raise DomainError("f must live on the unit circle")
    S_N = list(S_N)
    if not S_N:
        raise DomainError("S_N is empty")
    x = as_fraction(x)
    return sum((f.evaluate((n * x) % 1) for n in S_N), Fraction(0)) / len(S_N)


def khintchine_sum(f: StepFunction, x, N: int) -> Fraction:
    """K_N f(x) = sum_{n <= N} f(n x mod 1)."""
    x = as_fraction(x)
    return sum((f.evaluate((n * x) % 1) for n in range(1, N + 1)), Fraction(0))


# -- additive side -------------------------------------------------------------

@dataclass(frozen=True)
class RealStep:
    """Step function on the line with real breakpoints: value values[i] on
    [breaks[i], breaks[i+1]) and 0 outside [breaks[0], breaks[-1]).

    Breakpoints may be rationals or mpmath expressions given as callables
    returning an interval (so they can be re-evaluated at any precision).
    """

    breaks: tuple
    values: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.breaks) != len(self.values) + 1:
            raise DomainError("need one more breakpoint than values")
        object.__setattr__(self, "values", tuple(as_fraction(v) for v in self.values))

    @classmethod
    def from_step(cls, g: StepFunction) -> "RealStep":
        if g.domain.is_circle:
            raise DomainError("additive averages act on line windows")
        cells = g.cells()
        return cls(tuple([c[0] for c in cells] + [cells[-1][1]]), tuple(c[2] for c in cells))

    def ibreaks(self) -> list:
        out = []
        for b in self.breaks:
            if callable(b):
                out.append(b())
            else:
                q = as_fraction(b)
                out.append(iv.mpf(q.numerator) / q.denominator)
        return out

    def bounds_on(self, z, ib=None) -> tuple[Fraction, Fraction, bool]:
        """(min, max) of the function over the interval z, and whether it is a single value."""
        ib = self.ibreaks() if ib is None else ib
        vals = [Fraction(0)] + list(self.values) + [Fraction(0)]
        # cell k (0 = left of everything) is [ib[k-1], ib[k]); find candidate cells
        cands = []
        for k in range(len(vals)):
            left = ib[k - 1] if k >= 1 else None
            right = ib[k] if k < len(ib) else None
            # z can meet cell k unless it lies entirely on one side
            if right is not None and z.a >= right.b:
                continue  # z entirely at or right of the cell's right end
            if left is not None and z.b < left.a:
                continue  # z entirely left of the cell
            cands.append(vals[k])
        if not cands:
            raise DomainError("interval outside every cell")
        return min(cands), max(cands), len(set(cands)) == 1


@dataclass
class CertifiedValue:
    lo: Fraction
    hi: Fraction
    widened: bool  # some translate sat within rounding distance of a breakpoint

    @property
    def exact(self) -> bool:
        return self.lo == self.hi

    def to_json(self) -> dict:
        return {"lo": fmt(self.lo), "hi": fmt(self.hi), "widened": self.widened}


def _iv_of(y):
    if isinstance(y, mpmath.ctx_iv.ivmpf):
        return y
    if isinstance(y, (int, Fraction, str)):
        q = as_fraction(y)
        return iv.mpf(q.numerator) / q.denominator
    return iv.mpf(y)


def _ilog(a):
    if isinstance(a, Sqrt):
        return iv.log(iv.mpf(a.radicand)) / 2
    q = as_fraction(a)
    return iv.log(iv.mpf(q.numerator)) - iv.log(iv.mpf(q.denominator))


def additive_average(g, y, I: Sequence[int], a) -> CertifiedValue:
    """1/|I| sum_{n in I} g(y - log a_n) as a certified rational interval.

    a is a callable n -> a_n or a sequence (indexed from 1).
    """
    g = RealStep.from_step(g) if isinstance(g, StepFunction) else g
    I = list(I)
    if not I:
        raise DomainError("I is empty")
    term = a if callable(a) else (lambda n: a[n - 1])
    with iv_precision():
        ib = g.ibreaks()
        yy = _iv_of(y)
        lo = hi = Fraction(0)
        widened = False
        for n in I:
            z = yy - _ilog(term(n))
            mn, mx, single = g.bounds_on(z, ib)
            lo += mn
            hi += mx
            widened |= not single
    return CertifiedValue(lo / len(I), hi / len(I), widened)


def _ln2_times(k):
    return lambda: iv.mpf(k) * iv.log(2)


def khintchine_g() -> RealStep:
    """g = 2 * 1_[0, 2 ln 2)."""
    return RealStep((0, _ln2_times(2)), (Fraction(2),))


@dataclass
class KhintchineLowerReport:
    J: list[int]
    p: Fraction
    certified_measure: object  # interval containing |J| ln 2
    norm_g_p: object  # interval containing ||g||_p^p = 2^(p+1) ln 2
    weak_lower: object  # interval: (|J| ln 2)^(1/p) bounds ||max_j B_j g||_{p,inf} from below
    ratio_lower: object
    target: object  # 2^(-1-1/p) (ln 2)^(1/p) |J|^(1/p)
    per_level_min_count: dict[int, int]
    assertions: list[Assertion]

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_json(self) -> dict:
        s = lambda x: [mpmath.nstr(mpmath.mpf(x.a), 30), mpmath.nstr(mpmath.mpf(x.b), 30)]
        return {"J": self.J, "p": fmt(self.p), "certified_measure": s(self.certified_measure),
                "norm_g_p_power": s(self.norm_g_p), "weak_lower": s(self.weak_lower),
                "ratio_lower": s(self.ratio_lower), "target": s(self.target),
                "per_level_min_count": {str(k): v for k, v in self.per_level_min_count.items()},
                "assertions": [a.to_json() for a in self.assertions]}


PROBE_LEVEL_CAP = 12  # probes cost 2^j logarithms each


def khintchine_lower(J: Sequence[int], p) -> KhintchineLowerReport:
    """Certify max_{j in J} B_j g >= 1 on the union of [j ln 2, (j+1) ln 2).

    For y in that cell, B_j g(y) = 2^(1-j) #{n <= 2^j: e^y/4 < n <= e^y}, and
    the count is at least #{n <= 2^j: n >= 2^(j-1)}.  The counting argument
    is cross-checked by certified additive averages at interior probes.
    """
    J = sorted(set(int(j) for j in J))
    if not J or J[0] < 0:
        raise DomainError("J must be a nonempty set of nonnegative integers")
    p = as_fraction(p)
    if p < 1:
        raise DomainError("p must be at least 1")
    counts = {}
    assertions = []
    with iv_precision(max(precision_digits(), 30) + 10):
        ln2 = iv.log(2)
        ok = True
        for j in J:
            # e^y runs over [2^j, 2^(j+1)) exactly since y = j ln 2 is the left end:
            # n <= e^y for every y once n <= 2^j, and n > e^y/4 once n >= 2^(j-1).
            n_hi = 2**j
            n_lo = max(1, -(-(2**j) // 2))
            count = n_hi - n_lo + 1
            counts[j] = count
            ok &= 2 * count >= 2**j
        assertions.append(Assertion("B_j g >= 1 on [j ln 2, (j+1) ln 2) for all j in J", 1,
                                    min(Fraction(2 * counts[j], 2**j) for j in J), ok))
        g = khintchine_g()
        probe_min = None
        for j in (j for j in J if j <= PROBE_LEVEL_CAP):
            for k in (1, 2, 3):
                y = (j + iv.mpf(k) / 4) * ln2
                v = additive_average(g, y, range(1, 2**j + 1), lambda n: n)
                probe_min = v.lo if probe_min is None else min(probe_min, v.lo)
        if probe_min is not None:
            assertions.append(Assertion("probe averages >= 1", 1, probe_min, probe_min >= 1))
        pp = iv.mpf(p.numerator) / p.denominator
        measure = len(J) * ln2
        width = mpmath.mpf(measure.b) - mpmath.mpf(measure.a)
        assertions.append(Assertion("certified measure = |J| ln 2 within 1e-25", "1e-25",
                                    mpmath.nstr(width, 5), width < mpmath.mpf(10) ** -25))
        norm_g = iv.mpf(2) ** (pp + 1) * ln2
        weak = (1 * measure) ** (1 / pp) if ok else iv.mpf(0)
        ratio = weak / norm_g ** (1 / pp)
        target = iv.mpf(2) ** (-1 - 1 / pp) * ln2 ** (1 / pp) * iv.mpf(len(J)) ** (1 / pp)
        assertions.append(Assertion("ratio >= 2^(-1-1/p) (ln 2)^(1/p) |J|^(1/p)", target, ratio,
                                    bool(ratio.a >= target.b)))
    return KhintchineLowerReport(J, p, measure, norm_g, weak, ratio, target, counts, assertions)


# -- Rokhlin towers --------------------------------------------------------------

@dataclass
class TowerModel:
    d: int
    N: int
    cells: dict  # index tuple in {0..N-1}^d -> tuple of values on that cell
    error_mass: Fraction = Fraction(0)
    power_cap: int = 0

    def __post_init__(self):
        if self.d < 1 or self.N < 1:
            raise DomainError("need d >= 1 and N >= 1")
        for idx in self.cells:
            if len(idx) != self.d or any(not 0 <= i < self.N for i in idx):
                raise DomainError(f"cell {idx} outside the geometry")
        self.error_mass = as_fraction(self.error_mass)

    @classmethod
    def from_function(cls, d: int, N: int, fn: Callable[[tuple], Sequence], error_mass=0) -> "TowerModel":
        cells = {idx: tuple(as_fraction(v) for v in fn(idx)) for idx in itertools.product(range(N), repeat=d)}
        return cls(d, N, cells, as_fraction(error_mass))

    def translate(self, idx: tuple, e: tuple) -> tuple | None:
        """Cell idx + e, or None when it leaves the tower."""
        out = tuple(i + k for i, k in zip(idx, e))
        return out if all(0 <= i < self.N for i in out) else None

    @property
    def total_mass(self) -> Fraction:
        return 1 - self.error_mass


@dataclass
class TransferResult:
    dst: TowerModel
    core: set
    core_mass: Fraction
    probes: int
    assertions: list[Assertion]

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)


def _box_means(tower: TowerModel, idx: tuple, r: int) -> list:
    """For m = 0..r: the mean over exponent boxes {0..m}^d of the values at idx - e."""
    out = []
    for m in range(r + 1):
        vals = []
        for e in itertools.product(range(m + 1), repeat=tower.d):
            cell = tower.translate(idx, tuple(-k for k in e))
            vals.extend(tower.cells[cell])
        out.append(sum(vals, Fraction(0)) / len(vals))
    return out


def tower_transfer(src: TowerModel, r: int) -> TransferResult:
    """Carry values cell by cell (index matching) and check equality of every
    evaluation f(T^-e x) = g(S^-e theta x) with entries of e at most r on
    the core {n : r <= n_i < N}."""
    if r >= src.N:
        raise DomainError("r >= N leaves an empty core")
    if r < 0:
        raise DomainError("r must be nonnegative")
    dst = TowerModel(src.d, src.N, dict(src.cells), src.error_mass, r)
    core = {idx for idx in src.cells if all(r <= i < src.N for i in idx)}
    probes = 0
    equal = True
    for idx in core:
        for e in itertools.product(range(r + 1), repeat=src.d):
            back = tuple(-k for k in e)
            a, b = src.translate(idx, back), dst.translate(idx, back)
            probes += 1
            equal &= a is not None and a == b and src.cells[a] == dst.cells[b]
        equal &= max(_box_means(src, idx, r)) == max(_box_means(dst, idx, r))
    mass = Fraction(len(core), src.N**src.d) * (1 - src.error_mass)
    expected = Fraction(src.N - r, src.N) ** src.d * (1 - src.error_mass)
    assertions = [
        Assertion("transported evaluations equal on the core", probes, probes if equal else 0, equal),
        Assertion("core mass = ((N-r)/N)^d (1-eps)", expected, mass, mass == expected),
    ]
    return TransferResult(dst, core, mass, probes, assertions)


# -- growth and weak norms -------------------------------------------------------

@dataclass
class GrowthProfile:
    h: list[Fraction]
    c: list[Fraction] = field(init=False)
    weak_norm_c: Fraction = field(init=False)

    def __post_init__(self):
        self.h = [as_fraction(v) for v in self.h]
        if not self.h:
            raise DomainError("empty sequence")
        if any(b < a for a, b in zip(self.h, self.h[1:])):
            raise DomainError("h must be nondecreasing")
        if self.h[0] < 0:
            raise DomainError("h must be nonnegative")
        prev = Fraction(0)  # h_0 = 0, so c_1 = 1 whenever h_1 > 0
        c = []
        for v in self.h:
            c.append(Fraction(0) if v == 0 else (v - prev) / v)
            prev = v
        self.c = c
        self.weak_norm_c = weak_norm_seq(c, 1).value


@dataclass
class WeakBoundResult:
    d: Fraction
    K: Fraction
    worst_ratio: mpmath.mpf  # max_n h_n / (K n^d)
    holds: bool
    degenerate: bool = False


def weakbound_check(h: GrowthProfile | Sequence) -> WeakBoundResult:
    """d = ||c||_{1,inf}, K = h_1 prod_{j=2}^{2 ceil(d) - 1} 1/(1 - t_j), and h_n <= e K n^d."""
    prof = h if isinstance(h, GrowthProfile) else GrowthProfile(list(h))
    if prof.h[0] <= 0:
        raise DomainError("weakbound_check needs h_1 > 0")
    d = as_fraction(prof.weak_norm_c)
    t = sorted(prof.c, reverse=True)  # t[0] is t_1
    K = prof.h[0]
    degenerate = False
    for j in range(2, 2 * math.ceil(d)):
        if j > len(t):
            break
        tj = t[j - 1]
        if tj >= 1:
            # fall back on t_j <= d/j from the rearrangement
            degenerate = True
            tj = min(d / j, Fraction(1, 2))
        K /= 1 - tj
    # float logs screen every n; near-ties and the argmax are redone in mpmath
    lk, fd = _flog(K), float(d)
    margins = [_flog(hn) - lk - fd * math.log(n) for n, hn in enumerate(prof.h, start=1)]
    top = max(range(len(margins)), key=margins.__getitem__)
    recheck = {top} | {i for i, m in enumerate(margins) if m > 1 - 1e-9}
    ok = True
    with mpmath.workdps(precision_digits() + 10):
        dd = mpmath.mpf(d.numerator) / d.denominator
        Km = mpmath.mpf(K.numerator) / K.denominator
        worst = mpmath.mpf(0)
        for i in sorted(recheck):
            hn = prof.h[i]
            r = (mpmath.mpf(hn.numerator) / hn.denominator) / (Km * mpmath.power(i + 1, dd))
            worst = max(worst, r)
            ok &= r <= mpmath.e
    return WeakBoundResult(d, K, worst, ok, degenerate)


def _flog(q: Fraction) -> float:
    return math.log(q.numerator) - math.log(q.denominator)


@dataclass
class GrowthDivergence:
    h: list[int]
    profile: GrowthProfile
    weak_norms: dict[int, Fraction]  # horizon -> ||c||_{1,inf} on n <= horizon
    certified: bool  # sup_N B_N g >= c_n on [n, n+1) checked at probes
    trend: str

    def to_json(self) -> dict:
        return {"h": self.h, "c": [fmt(c) for c in self.profile.c],
                "weak_norms": {str(k): fmt(v) for k, v in self.weak_norms.items()},
                "certified": self.certified, "trend": self.trend}


def _le(term, q: Fraction) -> bool:
    """term <= q exactly for rationals and square roots."""
    if isinstance(term, Sqrt):
        return q >= 0 and term.radicand <= q * q
    return as_fraction(term) <= q


def growth_divergence(t_seq: Sequence | None = None, horizon: int = 16,
                      counts: Callable[[int], int] | None = None) -> GrowthDivergence:
    """h(N) = #{n : t_n <= N}, c_n = (h(n) - h(n-1))/h(n), and ||c||_{1,inf}.

    Give either the increasing terms t_seq (rationals or Sqrt) or the
    counting function directly (for sequences too long to list).
    """
    if counts is None:
        if t_seq is None:
            raise DomainError("give t_seq or counts")
        terms = list(t_seq)
        counts = lambda N: sum(1 for t in terms if _le(t, Fraction(N)))
    else:
        terms = None
    h = [counts(N) for N in range(1, horizon + 1)]
    if h[0] < 1:
        raise DomainError("the proof assumes h(1) >= 1")
    prof = GrowthProfile(h)
    certified = True
    if terms is not None:
        # for x in [n, n+1): B_n g(x) >= #{m : n-1 < t_m <= n} / h(n) = c_n
        for n in range(2, horizon + 1):
            for x in (Fraction(n), Fraction(2 * n + 1, 2), Fraction(n + 1) - Fraction(1, 10**6)):
                hits = sum(1 for t in terms if _le(t, Fraction(n)) and _le(t, x) and not _le(t, x - 2))
                certified &= Fraction(hits, h[n - 1]) >= prof.c[n - 1]
    norms_at = {}
    k = 1
    while 2**k <= horizon:
        norms_at[2**k] = as_fraction(weak_norm_seq(prof.c[: 2**k], 1).value)
        k += 1
    norms_at[horizon] = as_fraction(prof.weak_norm_c)
    vals = [norms_at[k] for k in sorted(norms_at)]
    half = len(vals) // 2
    trend = "grows" if half and vals[-1] > 2 * vals[half - 1] else "bounded-so-far"
    return GrowthDivergence(h, prof, norms_at, certified, trend)


# -- multiplicative semigroups ---------------------------------------------------

def _factor(n: int) -> dict[int, int]:
    out = {}
    q = 2
    while q * q <= n:
        while n % q == 0:
            out[q] = out.get(q, 0) + 1
            n //= q
        q += 1 if q == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _rank(vectors: list[list[int]]) -> int:
    rows = [[Fraction(x) for x in v] for v in vectors]
    rank, col = 0, 0
    ncols = len(rows[0]) if rows else 0
    while rank < len(rows) and col < ncols:
        piv = next((i for i in range(rank, len(rows)) if rows[i][col] != 0), None)
        if piv is None:
            col += 1
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][col] != 0:
                m = rows[i][col] / rows[rank][col]
                rows[i] = [a - m * b for a, b in zip(rows[i], rows[rank])]
        rank += 1
        col += 1
    return rank


@dataclass
class SemigroupSample:
    generators: list[int] | None
    elements: list[int]
    N_max: int
    prime_support: list[int]
    lattice_dim: int
    include_one: bool = False

    def S_N(self, N: int) -> list[int]:
        import bisect
        return self.elements[: bisect.bisect_right(self.elements, N)]

    def vector(self, n: int) -> tuple[int, ...]:
        fac = _factor(n)
        if any(q not in self.prime_support for q in fac):
            raise DomainError(f"{n} has a prime outside the support")
        return tuple(fac.get(q, 0) for q in self.prime_support)

    def counts_on_grid(self, base: int = 10) -> list[tuple[int, int]]:
        out = []
        N = base
        while N <= self.N_max:
            out.append((N, len(self.S_N(N))))
            N *= base
        return out

    def growth_curves(self, base: int = 10) -> dict[int, list[tuple[int, float]]]:
        """|S_N| / (ln N)^k on the grid, for k = 1..lattice_dim + 1."""
        grid = self.counts_on_grid(base)
        return {k: [(N, c / math.log(N) ** k) for N, c in grid] for k in range(1, self.lattice_dim + 2)}

    def to_json(self) -> dict:
        return {"generators": self.generators, "N_max": self.N_max, "size": len(self.elements),
                "prime_support": self.prime_support, "lattice_dim": self.lattice_dim,
                "counts": self.counts_on_grid()}


def _sample(generators, elements, N_max, include_one) -> SemigroupSample:
    primes = sorted({q for n in elements for q in _factor(n)})
    vecs = [[_factor(n).get(q, 0) for q in primes] for n in elements if n > 1]
    return SemigroupSample(generators, elements, N_max, primes, _rank(vecs) if vecs else 0, include_one)


def semigroup_enumerate(generators: Sequence[int], N_max: int, include_one: bool = False) -> SemigroupSample:
    """All products of the generators up to N_max, in increasing order (heap)."""
    gens = sorted(set(int(g) for g in generators))
    if not gens or gens[0] < 2:
        raise DomainError("generators must be integers >= 2")
    seen = set()
    heap = list(gens)
    heapq.heapify(heap)
    out = []
    while heap:
        x = heapq.heappop(heap)
        if x in seen or x > N_max:
            continue
        seen.add(x)
        out.append(x)
        for g in gens:
            y = x * g
            if y <= N_max and y not in seen:
                heapq.heappush(heap, y)
    if include_one:
        out.insert(0, 1)
    return _sample(gens, out, N_max, include_one)


def semigroup_from_elements(elements: Sequence[int], N_max: int | None = None) -> SemigroupSample:
    els = sorted(set(int(e) for e in elements))
    return _sample(None, els, N_max or els[-1], 1 in els)


@dataclass
class FolnerRow:
    N: int
    size: int
    foln1: Fraction  # |x S_N sym-diff S_N| / |S_N|
    foln2: Fraction | None  # |S_N S_N^-1| / |S_N| on exponent vectors


def folner_check(S: SemigroupSample, x: int, Ns: Sequence[int], truncated: bool = False,
                 with_foln2: bool = True) -> list[FolnerRow]:
    """Foln1 and Foln2 ratios over a grid of N, computed on exponent vectors.

    The default reading keeps x S_N untruncated; truncated=True intersects
    it with [1, N] first.
    """
    if x not in set(S.elements):
        raise DomainError(f"{x} is not in the sample")
    vx = S.vector(x)
    rows = []
    for N in Ns:
        if N > S.N_max:
            raise DomainError(f"N = {N} exceeds the sample horizon {S.N_max}")
        SN = S.S_N(N)
        if not SN:
            raise DomainError(f"S_N is empty at N = {N}")
        vecs = {S.vector(n) for n in SN}
        moved = {tuple(a + b for a, b in zip(v, vx)) for v in vecs}
        if truncated:
            moved = {S.vector(x * m) for m in SN if x * m <= N}
        f1 = Fraction(len(moved ^ vecs), len(vecs))
        f2 = None
        if with_foln2:
            diffs = {tuple(a - b for a, b in zip(u, v)) for u in vecs for v in vecs}
            f2 = Fraction(len(diffs), len(vecs))
        rows.append(FolnerRow(N, len(vecs), f1, f2))
    return rows


@dataclass
class LatticeCount:
    primes: list[int]
    y: Fraction
    count: int
    asymptote: mpmath.mpf
    residual: mpmath.mpf
    normalized: mpmath.mpf  # residual / y^(d-1)


def lattice_count(primes: Sequence[int], y) -> LatticeCount:
    """#{alpha in Z_+^d : sum alpha_i ln p_i <= y}, counted as products <= floor(e^y)."""
    primes = list(primes)
    if not primes or any(p < 2 for p in primes):
        raise DomainError("need primes >= 2")
    y = as_fraction(y)
    if y < 0:
        raise DomainError("y must be nonnegative")
    d = len(primes)
    with mpmath.workdps(max(precision_digits(), int(y) + 30)):
        E = int(mpmath.floor(mpmath.exp(mpmath.mpf(y.numerator) / y.denominator)))

        def count(i: int, bound: int) -> int:
            if i == d - 1:
                c, v = 0, 1
                while v <= bound:
                    c += 1
                    v *= primes[i]
                return c
            total, v = 0, 1
            while v <= bound:
                total += count(i + 1, bound // v)
                v *= primes[i]
            return total

        L = count(0, E)
        yy = mpmath.mpf(y.numerator) / y.denominator
        asym = yy**d / (math.factorial(d) * mpmath.fprod(mpmath.log(p) for p in primes))
        resid = abs(L - asym)
        norm = resid / yy ** (d - 1) if d > 1 else resid
    return LatticeCount(primes, y, L, asym, resid, norm)


@dataclass
class DichotomyVerdict:
    side: str  # "convergence side" or "divergence side"
    horizon: int
    support_growth: list[tuple[int, int]]  # (N, |prime support of S_N|)
    folner: list[FolnerRow] = field(default_factory=list)
    growth_curves: dict = field(default_factory=dict)
    growth: GrowthDivergence | None = None
    note: str = "verdict qualified by the sample horizon"

    def to_json(self) -> dict:
        out = {"side": self.side, "horizon": self.horizon, "support_growth": self.support_growth, "note": self.note}
        if self.folner:
            out["folner"] = [{"N": r.N, "size": r.size, "foln1": fmt(r.foln1),
                              "foln2": None if r.foln2 is None else fmt(r.foln2)} for r in self.folner]
        if self.growth_curves:
            out["growth_curves"] = {str(k): v for k, v in self.growth_curves.items()}
        if self.growth is not None:
            out["growth"] = self.growth.to_json()
        return out


def dichotomy_report(S: SemigroupSample, base: int = 10) -> DichotomyVerdict:
    """Convergence side when the prime support stops growing over the last
    half of the N-grid; divergence side when it keeps growing."""
    if not S.elements:
        raise DomainError("empty sample")
    grid = []
    N = base
    while N <= S.N_max:
        grid.append(N)
        N *= base
    if not grid:
        grid = [S.N_max]
    support = []
    for N in grid:
        primes = {q for n in S.S_N(N) for q in _factor(n)}
        support.append((N, len(primes)))
    half = len(support) // 2
    growing = len(support) >= 2 and support[-1][1] > support[half][1] if half else False
    if not growing:
        x = next(n for n in S.elements if n > 1)
        Ns = [N for N in grid if S.S_N(N)]
        rows = folner_check(S, x, Ns, with_foln2=len(S.elements) <= 2000)
        return DichotomyVerdict("convergence side", S.N_max, support, folner=rows)
    # log coordinate t = ln s, started at the first K with S_{e^K} nonempty
    top = int(math.log(S.N_max))
    start = next((K for K in range(top + 1) if S.S_N(int(mpmath.floor(mpmath.exp(K))))), None)
    gd = None
    if start is not None and top - start >= 2:
        counts = lambda K: len(S.S_N(int(mpmath.floor(mpmath.exp(K + start - 1)))))
        gd = growth_divergence(counts=counts, horizon=top - start + 1)
    return DichotomyVerdict("divergence side", S.N_max, support, growth_curves=S.growth_curves(base), growth=gd)
