"""Translation systems, weighted dyadic averages and their maximal functions.

Every system here is a translation of a circle, so f(T^{a_n} x) = f(x + s_n)
for a shift s_n, and an average is a finite sum of translates of a step
function.  Averages and maximal functions are computed by one sweep over
the translated breakpoints, with positions kept as integers over a common
scale.  When positions are too large to hold in memory at once (long
lacunary sequences carry denominators with 10^5 bits) the sweep orders
events by a fixed-width prefix, resolves prefix collisions exactly, and
recomputes exact positions in extra streaming passes.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import mpmath

from .errors import BoundViolation, DomainError, PrecisionError, ResourceGuard
from .exact import as_fraction, fmt, iv_precision, lcm, precision_digits, rpow
from .measure import (
    Distribution,
    Domain,
    NormReport,
    StepFunction,
    _from_sweep,
    combine,
    constant,
    integral,
    map_values,
    multiply,
    norms,
    norms_from_distribution,
    scale_add,
)
from .sequences import Sqrt, TimeSequence
from .weights import WeightSequence, c1, weak_norm_seq

MODES = ("full", "block", "block_sum")

# exact positions are kept in memory while bits * events stays below this
EXACT_BITS_BUDGET = 1 << 28
_PREFIX_BITS = 64


# -- digit reals & systems ---------------------------------------------------

@dataclass(frozen=True)
class DigitReal:
    """alpha = sum_i digits[i-1] * base**-i, valid for shifts up to base**n_max."""

    base: int
    digits: tuple[int, ...]
    reserve: int = 0

    def __post_init__(self):
        if self.base < 2:
            raise DomainError("base must be at least 2")
        if not self.digits:
            raise DomainError("a digit real needs at least one digit")
        if any(not 0 <= d < self.base for d in self.digits):
            raise DomainError("digit out of range")
        if not 0 <= self.reserve <= len(self.digits):
            raise DomainError("reserve must fit inside the digit string")
        object.__setattr__(self, "digits", tuple(self.digits))

    @property
    def numerator(self) -> int:
        if self.base == 10:
            return int("".join(map(str, self.digits)))
        if self.base <= 36:
            return int("".join("0123456789abcdefghijklmnopqrstuvwxyz"[d] for d in self.digits), self.base)
        out = 0
        for d in self.digits:
            out = out * self.base + d
        return out

    @property
    def denominator(self) -> int:
        return self.base ** len(self.digits)

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    @property
    def n_max(self) -> int:
        return len(self.digits) - self.reserve

    def shift(self, n: int) -> Fraction:
        """base**n * alpha mod 1, by digit shifting."""
        if n > self.n_max:
            raise PrecisionError(f"shift by {self.base}^{n} exceeds the validity horizon {self.n_max}")
        tail = self.digits[n:]
        if not tail:
            return Fraction(0)
        return DigitReal(self.base, tail).value

    def to_json(self) -> dict:
        if self.base <= 36:
            digits = "".join("0123456789abcdefghijklmnopqrstuvwxyz"[d] for d in self.digits)
        else:
            digits = list(self.digits)
        return {"base": self.base, "digits": digits, "reserve": self.reserve}

    @classmethod
    def from_json(cls, data: dict) -> "DigitReal":
        digits = data["digits"]
        if isinstance(digits, str):
            digits = [int(ch, 36) for ch in digits]
        return cls(int(data["base"]), tuple(digits), int(data.get("reserve", 0)))


SYSTEM_KINDS = ("circle_rotation", "flow", "digit_rotation", "map_family")


@dataclass(frozen=True)
class SystemModel:
    """A translation action on a circle.

    circle_rotation / flow: T^a x = x + direction * alpha * a (a integer or real time)
    digit_rotation: the same with alpha a DigitReal
    map_family: level t averages the translations maps[t-1] (at most 2**t of them)
    """

    kind: str
    domain: Domain = Domain.circle(1)
    alpha: Fraction | DigitReal | None = None
    direction: int = 1
    maps: tuple[tuple[Fraction, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise DomainError(f"unknown system kind {self.kind!r}")
        if not self.domain.is_circle:
            raise DomainError("systems act on circles")
        if self.direction not in (1, -1):
            raise DomainError("direction must be +1 or -1")
        if self.kind == "map_family":
            maps = tuple(tuple(as_fraction(s) for s in level) for level in self.maps)
            for t, level in enumerate(maps, start=1):
                if len(level) > 2**t:
                    raise DomainError(f"level {t} has more than 2^{t} maps")
            object.__setattr__(self, "maps", maps)
        elif self.kind == "digit_rotation":
            if not isinstance(self.alpha, DigitReal):
                raise DomainError("digit_rotation needs a DigitReal")
        else:
            object.__setattr__(self, "alpha", as_fraction(self.alpha))

    @classmethod
    def rotation(cls, alpha, circumference=1, direction=1) -> "SystemModel":
        return cls("circle_rotation", Domain.circle(circumference), as_fraction(alpha), direction)

    @classmethod
    def flow(cls, alpha_step, circumference=1, direction=1) -> "SystemModel":
        return cls("flow", Domain.circle(circumference), as_fraction(alpha_step), direction)

    @classmethod
    def digit_rotation(cls, alpha: DigitReal, direction=1) -> "SystemModel":
        return cls("digit_rotation", Domain.circle(1), alpha, direction)

    @classmethod
    def map_family(cls, maps, circumference=1) -> "SystemModel":
        return cls("map_family", Domain.circle(circumference), None, 1, tuple(tuple(m) for m in maps))

    @property
    def alpha_fraction(self) -> Fraction:
        if isinstance(self.alpha, DigitReal):
            return self.alpha.value
        return self.alpha

    def translation(self, a) -> Fraction:
        """The shift s with T^a x = x + s (mod M)."""
        if self.kind == "map_family":
            raise DomainError("map families have no single time parameter")
        if isinstance(a, Sqrt):
            raise DomainError("irrational times cannot be applied exactly")
        a = as_fraction(a)
        if self.kind == "digit_rotation":
            dr = self.alpha
            if a.denominator != 1 or a > dr.base**dr.n_max:
                raise PrecisionError(f"time {a} exceeds the digit validity horizon")
        return (self.direction * self.alpha_fraction * a) % self.domain.right

    def apply(self, x, a) -> Fraction:
        return (as_fraction(x) + self.translation(a)) % self.domain.right

    def to_json(self) -> dict:
        out = {"kind": self.kind, "domain": self.domain.to_json(), "direction": self.direction}
        if isinstance(self.alpha, DigitReal):
            out["alpha"] = self.alpha.to_json()
        elif self.alpha is not None:
            out["alpha"] = fmt(self.alpha)
        if self.maps:
            out["maps"] = [[fmt(s) for s in level] for level in self.maps]
        return out

    @classmethod
    def from_json(cls, data: dict) -> "SystemModel":
        alpha = data.get("alpha")
        if isinstance(alpha, dict):
            alpha = DigitReal.from_json(alpha)
        elif alpha is not None:
            alpha = Fraction(alpha)
        maps = tuple(tuple(Fraction(s) for s in level) for level in data.get("maps", []))
        return cls(data["kind"], Domain.from_json(data["domain"]), alpha, int(data.get("direction", 1)), maps)


# -- shift streams -----------------------------------------------------------

def block_of(n: int) -> int:
    """Dyadic block of index n: n = 1 -> 0, n in (2^(b-1), 2^b] -> b."""
    return (n - 1).bit_length()


@dataclass
class _Shifts:
    """Shifts X/S (mod L = M*S) with a group label per shift, regenerable on demand."""

    S: int
    L: int
    count: int
    make: Callable[[], Iterator[tuple[int, int]]]


def _check_digit_horizon(system: SystemModel, a: TimeSequence, count: int):
    if system.kind != "digit_rotation" or count == 0:
        return
    dr = system.alpha
    if a.kind == "power":
        if a.base == dr.base:
            if count > dr.n_max:
                raise PrecisionError(f"need shifts up to {dr.base}^{count}, digits are valid to {dr.base}^{dr.n_max}")
            return
        if a.base**count > dr.base**dr.n_max:
            raise PrecisionError("shifts exceed the digit validity horizon")
        return
    last = max(a.materialize(count))
    if last > dr.base**dr.n_max:
        raise PrecisionError("shifts exceed the digit validity horizon")


def _sequence_shifts(system: SystemModel, a, count: int, f_scale: int) -> _Shifts:
    M = system.domain.right
    if isinstance(a, (list, tuple)):
        a = TimeSequence.explicit(a)
    if a.kind in ("sqrt_all", "sqrt_squarefree"):
        raise DomainError("square-root times are irrational; averages along them are not exact")
    _check_digit_horizon(system, a, count)
    alpha = system.alpha_fraction
    sign = system.direction
    if a.kind == "power":
        B = a.base
        S = lcm(alpha.denominator, f_scale, M.denominator)
        L = M.numerator * (S // M.denominator)
        first = (sign * alpha.numerator * (S // alpha.denominator) * B) % L

        def make():
            x = first
            for n in range(1, count + 1):
                yield x, block_of(n)
                x = (x * B) % L

        return _Shifts(S, L, count, make)
    terms = a.materialize(count)
    shifts = [(sign * alpha * as_fraction(t)) % M for t in terms]
    S = lcm(f_scale, M.denominator, *(s.denominator for s in shifts))
    L = M.numerator * (S // M.denominator)
    nums = [s.numerator * (S // s.denominator) for s in shifts]

    def make():
        for n, x in enumerate(nums, start=1):
            yield x, block_of(n)

    return _Shifts(S, L, count, make)


def _family_shifts(system: SystemModel, levels: Sequence[int], f_scale: int) -> _Shifts:
    M = system.domain.right
    used = []
    for t in levels:
        if not 1 <= t <= len(system.maps):
            raise DomainError(f"map family has no level {t}")
        used.extend((s % M, t) for s in system.maps[t - 1])
    S = lcm(f_scale, M.denominator, *(s.denominator for s, _ in used))
    L = M.numerator * (S // M.denominator)
    nums = [(s.numerator * (S // s.denominator), t) for s, t in used]
    return _Shifts(S, L, len(nums), lambda: iter(nums))


# -- the sweep ---------------------------------------------------------------

@dataclass
class Level:
    t: int
    coef: Fraction
    groups: tuple[int, ...]
    norm: int  # the average divides by this


def _levels(levels: Sequence[tuple[int, Fraction]], mode: str, family: bool) -> list[Level]:
    if mode not in MODES:
        raise DomainError(f"unknown averaging mode {mode!r}")
    out = []
    for t, c in levels:
        if t < 0:
            raise DomainError("levels are nonnegative")
        c = as_fraction(c)
        if c < 0:
            raise DomainError("weights must be nonnegative")
        if family:
            out.append(Level(t, c, (t,), 1 << t))
        elif mode == "full":
            out.append(Level(t, c, tuple(range(t + 1)), 1 << t))
        elif mode == "block":
            out.append(Level(t, c, (t,), 1 << max(t - 1, 0)))
        else:
            out.append(Level(t, c, (t,), 1 << t))
    return out


@dataclass
class SweepResult:
    domain: Domain
    levels: list[Level]
    distribution: Distribution  # (value, measure), ascending
    argmax_measure: dict[int, Fraction]  # level t -> measure where it attains the max first
    function: StepFunction | None
    cells: int


def _sweep(f: StepFunction, shifts: _Shifts, levels: list[Level], materialize: bool) -> SweepResult:
    if f.domain.right * shifts.S != shifts.L:
        raise DomainError("function and system live on different circles")
    if not f.domain.is_circle:
        raise DomainError("averages need a function on the system's circle")
    S, L = shifts.S, shifts.L
    m = S // f.scale
    cuts = [c * m for c in f.cuts]
    Vd = lcm(*(v.denominator for v in f.values))
    V = [v.numerator * (Vd // v.denominator) for v in f.values]
    deltas = [V[i] - V[i - 1] for i in range(len(V))] if cuts else []
    # integer level coefficients: value_t = K_t * count_t / Z
    Z = Vd * lcm(*(lv.coef.denominator * lv.norm for lv in levels))
    K = [lv.coef.numerator * (Z // (lv.coef.denominator * lv.norm * Vd)) for lv in levels]
    groups = sorted({g for lv in levels for g in lv.groups})
    gindex = {g: i for i, g in enumerate(groups)}
    levels_of = [[] for _ in groups]
    for li, lv in enumerate(levels):
        for g in lv.groups:
            levels_of[gindex[g]].append(li)

    count = [0] * len(groups)
    nc = len(cuts)
    exact_mode = materialize or L.bit_length() * max(1, shifts.count * nc) <= EXACT_BITS_BUDGET
    if materialize and L.bit_length() * shifts.count * nc > 4 * EXACT_BITS_BUDGET:
        raise ResourceGuard("the averaged function is too large to materialize; request the distribution only")
    sh = 0 if exact_mode else max(0, L.bit_length() - _PREFIX_BITS)
    events = []  # (key, event id, group index, delta)
    for idx, (X, g) in enumerate(shifts.make()):
        gi = gindex.get(g)
        if gi is None:
            continue
        if nc:
            count[gi] += V[bisect_right(cuts, X) - 1]
            for i in range(nc):
                q = (cuts[i] - X) % L
                if q:
                    events.append((q >> sh, idx * nc + i, gi, deltas[i]))
        else:
            count[gi] += V[0]
    events.sort(key=lambda e: e[0])

    exact_pos: dict[int, int] = {}
    if not exact_mode and events:
        need = set()
        for i in range(1, len(events)):
            if events[i][0] == events[i - 1][0]:
                need.add(events[i][1])
                need.add(events[i - 1][1])
        if need:
            for idx, (X, _) in enumerate(shifts.make()):
                for i in range(nc):
                    eid = idx * nc + i
                    if eid in need:
                        exact_pos[eid] = (cuts[i] - X) % L
            events.sort(key=lambda e: (e[0], exact_pos.get(e[1], 0)))

    def same_point(e1, e2):
        if e1[0] != e2[0]:
            return False
        return exact_mode or e1[1] == e2[1] or exact_pos[e1[1]] == exact_pos[e2[1]]

    level_sum = [0] * len(levels)
    for gi, c in enumerate(count):
        for li in levels_of[gi]:
            level_sum[li] += c

    def current():
        best, arg = None, None
        for li in range(len(levels)):
            v = K[li] * level_sum[li]
            if best is None or v > best:
                best, arg = v, li
        return best, arg

    init = current()
    group_values = []  # per position group: value after applying it
    reps = []  # representative event id (or exact position) per group
    i, n = 0, len(events)
    while i < n:
        j = i
        first = events[i]
        while j < n and same_point(first, events[j]):
            _, _, gi, d = events[j]
            for li in levels_of[gi]:
                level_sum[li] += d
            j += 1
        group_values.append(current())
        reps.append(first[0] if exact_mode else first[1])
        i = j

    acc: dict[tuple[int, int], int] = {}

    def add(key, amount):
        acc[key] = acc.get(key, 0) + amount

    positions = reps if exact_mode else None
    if exact_mode:
        prev = init
        for k, pos in enumerate(positions):
            add(prev, pos)
            add(group_values[k], -pos)
            prev = group_values[k]
    else:
        # stream the exact positions once; storing them would cost |events| * bits
        wanted = {eid: k for k, eid in enumerate(reps)}
        for idx, (X, _) in enumerate(shifts.make()):
            for i2 in range(nc):
                k = wanted.get(idx * nc + i2)
                if k is None:
                    continue
                before = group_values[k - 1] if k else init
                if before != group_values[k]:
                    pos = (cuts[i2] - X) % L
                    add(before, pos)
                    add(group_values[k], -pos)
    add(group_values[-1] if group_values else init, L)

    by_value: dict[int, int] = {}
    by_level: dict[int, int] = {}
    for (val, li), length in acc.items():
        if length:
            by_value[val] = by_value.get(val, 0) + length
            t = levels[li].t
            by_level[t] = by_level.get(t, 0) + length
    distribution = Distribution({Fraction(val, Z): length for val, length in by_value.items()}, S)
    argm = {t: Fraction(length, S) for t, length in by_level.items() if length}

    function = None
    if materialize:
        changes = [(pos, Fraction(gv[0], Z)) for pos, gv in zip(positions, group_values)]
        function = _from_sweep(f.domain, S, Fraction(init[0], Z), changes)
    return SweepResult(f.domain, levels, distribution, argm, function, len(group_values) + 1)


def sweep_levels(system: SystemModel, f: StepFunction, a, levels: Sequence[tuple[int, Fraction]],
                 mode: str = "full", materialize: bool = True) -> SweepResult:
    """x -> max over (t, c) in levels of c * A_t f(x), as a distribution and optionally a function."""
    if not levels:
        raise DomainError("no levels requested")
    if f.domain != system.domain:
        raise DomainError("function and system live on different domains")
    family = system.kind == "map_family"
    lv = _levels(levels, mode, family)
    if family:
        shifts = _family_shifts(system, [l.t for l in lv], f.scale)
    else:
        top = max(l.t for l in lv)
        shifts = _sequence_shifts(system, a, 1 << top, f.scale)
    return _sweep(f, shifts, lv, materialize)


def average(system: SystemModel, f: StepFunction, a, t: int, mode: str = "full") -> StepFunction:
    """A_t f: 2^-t sum_{n <= 2^t} f(T^{a_n} x) (full), the block mean over
    (2^(t-1), 2^t] (block) or 2^-t times the block sum (block_sum)."""
    return sweep_levels(system, f, a, [(t, Fraction(1))], mode, True).function


def average_at(system: SystemModel, f: StepFunction, a, t: int, x, mode: str = "full") -> Fraction:
    """Direct pointwise evaluation of the same average; used as an oracle."""
    x = as_fraction(x)
    lv = _levels([(t, Fraction(1))], mode, system.kind == "map_family")[0]
    if system.kind == "map_family":
        total = sum((f.evaluate(x + s) for s in system.maps[t - 1]), Fraction(0))
        return total / lv.norm
    shifts = _sequence_shifts(system, a, 1 << t, f.scale)
    S, L = shifts.S, shifts.L
    S2 = lcm(S, x.denominator)
    L2 = L * (S2 // S)
    m = S2 // f.scale
    cuts = [c * m for c in f.cuts]
    x0 = x.numerator * (S2 // x.denominator)
    total = Fraction(0)
    for X, g in shifts.make():
        if g not in lv.groups:
            continue
        pos = (x0 + X * (S2 // S)) % L2
        total += f.values[bisect_right(cuts, pos) - 1] if cuts else f.values[0]
    return total / lv.norm


# -- maximal functions -------------------------------------------------------

@dataclass
class MaximalReport:
    mode: str
    levels: list[int]
    distribution: list[tuple[Fraction, Fraction]]
    argmax_measure: dict[int, Fraction]
    f_norms: dict[Fraction, NormReport]
    max_norms: dict[Fraction, NormReport]

    def ratio(self, p) -> mpmath.mpf:
        """||max||_{p,inf} / ||f||_p."""
        p = as_fraction(p)
        with mpmath.workdps(precision_digits() + 10):
            return _mp(self.max_norms[p].weak) / _mp(self.f_norms[p].strong)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "levels": self.levels,
            "distribution": _dist_json(self.distribution),
            "argmax_measure": {str(t): fmt(m) for t, m in sorted(self.argmax_measure.items())},
            "norms": {
                fmt(p): {
                    "f": self.f_norms[p].to_json(),
                    "maximal": self.max_norms[p].to_json(),
                    "ratio_weak_over_strong": mpmath.nstr(self.ratio(p), 20),
                }
                for p in self.max_norms
            },
        }


def _mp(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


JSON_DISTRIBUTION_BITS = 1 << 20


def _dist_json(dist):
    """Exact pairs, or a float summary when the exact form would be huge."""
    if isinstance(dist, Distribution) and len(dist) * dist.denominator.bit_length() > JSON_DISTRIBUTION_BITS:
        return {"values": len(dist), "denominator_bits": dist.denominator.bit_length(),
                "top_values_approx": [[fmt(v), mpmath.nstr(_mp(Fraction(n, dist.denominator)), 15)]
                                      for v, n in zip(dist.values[-50:], dist.lengths[-50:])]}
    return [[fmt(v), fmt(m)] for v, m in dist]


def _report(result: SweepResult, f: StepFunction, ps, mode: str) -> MaximalReport:
    ps = [as_fraction(p) for p in ps]
    return MaximalReport(
        mode=mode,
        levels=[lv.t for lv in result.levels],
        distribution=result.distribution,
        argmax_measure=result.argmax_measure,
        f_norms={p: norms(f, p) for p in ps},
        max_norms={p: norms_from_distribution(result.distribution, p) for p in ps},
    )


def maximal_profile(system: SystemModel, f: StepFunction, a, w: WeightSequence, T: int | None = None,
                    mode: str = "full", ps=(1,), materialize: bool = True):
    """(sup_{t <= T} w_t A_t f, MaximalReport); the function is None when not materialized."""
    T = w.horizon if T is None else T
    if not 1 <= T <= w.horizon:
        raise DomainError("T must lie in 1..horizon")
    res = sweep_levels(system, f, a, [(t, w[t]) for t in range(1, T + 1)], mode, materialize)
    return res.function, _report(res, f, ps, mode)


def max_over_levels(system: SystemModel, f: StepFunction, a, J: Sequence[int], mode: str = "full",
                    ps=(1,), materialize: bool = False):
    """max_{j in J} A_j f with unit weights."""
    res = sweep_levels(system, f, a, [(j, Fraction(1)) for j in sorted(set(J))], mode, materialize)
    return res.function, _report(res, f, ps, mode)


# -- audits of the positive results --------------------------------------------

@dataclass
class Assertion:
    name: str
    bound: object
    achieved: object
    passed: bool

    def to_json(self) -> dict:
        def r(x):
            if isinstance(x, Fraction):
                return fmt(x)
            if isinstance(x, mpmath.mpf):
                return mpmath.nstr(x, 25)
            if isinstance(x, mpmath.ctx_iv.ivmpf):
                return [mpmath.nstr(mpmath.mpf(x.a), 25), mpmath.nstr(mpmath.mpf(x.b), 25)]
            return x
        return {"name": self.name, "bound": r(self.bound), "achieved": r(self.achieved), "pass": self.passed}


def _iv(x):
    if isinstance(x, Fraction):
        return mpmath.iv.mpf(x.numerator) / x.denominator
    return mpmath.iv.mpf(x)


@dataclass
class AuditResult:
    assertions: list[Assertion]
    ratio: Fraction | mpmath.mpf
    report: MaximalReport

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)


def _family_profile(system, f, w):
    T = min(w.horizon, len(system.maps)) if system.kind == "map_family" else w.horizon
    return sweep_levels(system, f, None, [(t, w[t]) for t in range(1, T + 1)], "full", False)


def audit_fa1(system: SystemModel, f: StepFunction, w: WeightSequence, a=None) -> AuditResult:
    """||sup_t w_t A_t f||_{1,inf} <= 9 C_1(w) ||f||_1, exactly."""
    if system.kind == "map_family":
        res = _family_profile(system, f, w)
    else:
        res = sweep_levels(system, f, a, [(t, w[t]) for t in range(1, w.horizon + 1)], "full", False)
    rep = _report(res, f, [1], "full")
    lhs = rep.max_norms[Fraction(1)].weak_p
    rhs = 9 * c1(w).value * rep.f_norms[Fraction(1)].strong_p
    ok = lhs <= rhs
    result = AuditResult([Assertion("fa1: ||sup w_t A_t f||_{1,inf} <= 9 C1(w) ||f||_1", rhs, lhs, ok)],
                         lhs / rhs if rhs else Fraction(0), rep)
    if not ok:
        raise BoundViolation(f"fa1 bound violated: {lhs} > {rhs}")
    return result


def fap_constant(p, r) -> mpmath.ctx_iv.ivmpf:
    """e^p / (e^(p-r) - 1) as a certified interval."""
    p, r = as_fraction(p), as_fraction(r)
    with iv_precision():
        P, Rr = _iv(p), _iv(r)
        return mpmath.iv.exp(P) / (mpmath.iv.exp(P - Rr) - 1)


def audit_fap(system: SystemModel, f: StepFunction, w: WeightSequence, p, r, a=None) -> AuditResult:
    """Two checks of the fap estimate, both against a certified lower bound of the right side:

    lambda = 2:   mu{sup_t w_t A_t f > 2} <= C ||w||_{p,inf}^p ||f||_p^p
    all lambda:   ||sup_t w_t A_t f||_{p,inf}^p <= 2^p C ||w||_{p,inf}^p ||f||_p^p
    with C = e^p/(e^(p-r) - 1); the second is the first applied to (2/lambda) f.
    """
    p, r = as_fraction(p), as_fraction(r)
    if not 1 <= r < p:
        raise DomainError("need 1 <= r < p")
    if system.kind == "map_family":
        res = _family_profile(system, f, w)
    else:
        res = sweep_levels(system, f, a, [(t, w[t]) for t in range(1, w.horizon + 1)], "full", False)
    rep = _report(res, f, [p], "full")
    wnorm = weak_norm_seq(w, p)
    with iv_precision():
        C = fap_constant(p, r)
        wp = _iv(wnorm.argmax_threshold) ** _iv(p) * wnorm.extra["count"]
        fp = _iv(rep.f_norms[p].strong_p) if isinstance(rep.f_norms[p].strong_p, Fraction) else \
            mpmath.iv.mpf([rep.f_norms[p].strong_p * (1 - mpmath.mpf(10) ** -precision_digits()),
                           rep.f_norms[p].strong_p * (1 + mpmath.mpf(10) ** -precision_digits())])
        rhs2 = C * wp * fp
        rhs_all = _iv(Fraction(2)) ** _iv(p) * rhs2
        exceed = res.distribution.at_least(2, strict=True)
        mx = rep.max_norms[p]
        lhs_all = _iv(mx.attaining_level) ** _iv(p) * _iv(mx.level_measure)
        ok2 = _iv(exceed).b <= rhs2.a
        ok_all = lhs_all.b <= rhs_all.a
        ratio = mpmath.mpf(lhs_all.b) / mpmath.mpf(rhs_all.a) if rhs_all.a > 0 else mpmath.mpf(0)
    assertions = [
        Assertion("fap at lambda=2: mu{sup > 2} <= C ||w||^p ||f||^p", rhs2, exceed, bool(ok2)),
        Assertion("fap all lambda: ||sup||_{p,inf}^p <= 2^p C ||w||^p ||f||^p", rhs_all, lhs_all, bool(ok_all)),
    ]
    result = AuditResult(assertions, ratio, rep)
    if not result.passed:
        bad = [a.name for a in assertions if not a.passed]
        raise BoundViolation(f"fap bound violated: {bad}")
    return result


# -- subset refinement -------------------------------------------------------

def _pth(x: NormReport):
    return x.strong_p


def _ge(a, b) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a >= b
    with mpmath.workdps(precision_digits() + 10):
        return _mp(a) >= _mp(b) * (1 - mpmath.mpf(10) ** -(precision_digits()))


def _scaled_pow(c_p, x):
    if isinstance(c_p, Fraction) and isinstance(x, Fraction):
        return c_p * x
    return _mp(c_p) * _mp(x)


@dataclass
class RefineResult:
    J_prime: list[int]
    C_p: Fraction | mpmath.mpf  # C**p actually used
    recomputed: bool
    assertions: list[Assertion]


def refine_subset(averages: dict[int, StepFunction], f: StepFunction, C, p) -> RefineResult:
    """J' = J minus {j : ||A_j f||_p < (C/2)||f||_p}, with both conclusions checked.

    If the given C exceeds the constant actually achieved by max_J A_j f,
    the achieved constant is used instead.
    """
    p = as_fraction(p)
    if not averages:
        raise DomainError("J is empty")
    J = sorted(averages)
    fp = norms(f, p).strong_p
    if fp == 0:
        raise DomainError("f must be nonzero")
    mx = combine([averages[j] for j in J], max)
    mp_ = norms(mx, p).strong_p
    achieved = mp_ / (len(J) * fp) if isinstance(mp_, Fraction) and isinstance(fp, Fraction) \
        else _mp(mp_) / (len(J) * _mp(fp))
    Cp = rpow(as_fraction(C), p)
    recomputed = False
    if not _ge(achieved, Cp):
        Cp, recomputed = achieved, True
    half_p = Fraction(1, 2 ** p.numerator) if p.denominator == 1 else mpmath.power(2, -_mp(p))
    threshold = _scaled_pow(Cp, fp) * half_p if isinstance(half_p, Fraction) and isinstance(Cp, Fraction) \
        else _mp(Cp) * _mp(fp) * half_p
    avg_p = {j: norms(averages[j], p).strong_p for j in J}
    J1 = [j for j in J if not _ge(avg_p[j], threshold)]
    Jp = [j for j in J if j not in J1]
    assertions = [Assertion(f"refine: ||A_{j} f||^p >= (C/2)^p ||f||^p", threshold, avg_p[j], _ge(avg_p[j], threshold))
                  for j in Jp]
    if Jp:
        mxp = norms(combine([averages[j] for j in Jp], max), p).strong_p
    else:
        mxp = Fraction(0)
    target = threshold * len(J) if isinstance(threshold, Fraction) else threshold * len(J)
    assertions.append(Assertion("refine: ||max_{J'} A_j f||^p >= (C/2)^p |J| ||f||^p", target, mxp, _ge(mxp, target)))
    res = RefineResult(Jp, Cp, recomputed, assertions)
    if not all(a.passed for a in assertions):
        raise BoundViolation("refine conclusions failed")
    return res


# -- equidistributed level sets ---------------------------------------------

@dataclass
class LevelDecomposition:
    L: Fraction | mpmath.mpf
    s: int  # R = s**2
    R: int
    ks: list[int]
    E: dict[int, StepFunction]  # indicator of E^k
    B: dict[int, StepFunction]
    B_prime: dict[int, StepFunction]
    Af: StepFunction
    Bf: StepFunction
    B_prime_f: StepFunction
    rho_exceed_measure: Fraction | None  # mu{rho > L}, integer p only
    assertions: list[Assertion]


def equi_parameters(C, p) -> tuple[Fraction | mpmath.mpf, int]:
    """L = (16/C)^p and the least s >= 8 with s^(p-1) >= 8L; R = s^2.

    R is taken to be a perfect square so that R^(k +- 1/2) = s^(2k +- 1)
    stays rational and the level sets E^k are exact.
    """
    C, p = as_fraction(C), as_fraction(p)
    if not 0 < C < 1:
        raise DomainError("equi_parameters needs 0 < C < 1")
    if p <= 1:
        raise DomainError("equi_parameters needs p > 1")
    L = rpow(16 / C, p)
    a, b = p.numerator, p.denominator
    # s^(p-1) >= 8 (16/C)^p  <=>  s^(a-b) >= 8^b (16/C)^a
    target = Fraction(8) ** b * (16 / C) ** a
    with mpmath.workdps(30):
        guess = int(mpmath.floor(mpmath.power(_mp(target), 1 / mpmath.mpf(a - b))))
    s = max(8, guess - 2)
    while Fraction(s) ** (a - b) < target:
        s += 1
    while s > 8 and Fraction(s - 1) ** (a - b) >= target:
        s -= 1
    return L, s


def level_decompose(system: SystemModel, f: StepFunction, a, j: int, C, p) -> LevelDecomposition:
    p, C = as_fraction(p), as_fraction(C)
    L, s = equi_parameters(C, p)
    R = s * s
    Af = average(system, f, a, j)
    fp, Ap = norms(f, p).strong_p, norms(Af, p).strong_p
    need = rpow(C / 2, p)
    if not _ge(Ap, _scaled_pow(need, fp) if isinstance(need, Fraction) and isinstance(fp, Fraction)
               else _mp(need) * _mp(fp)):
        raise DomainError("precondition ||A_j f||_p >= (C/2)||f||_p fails")
    zero = Fraction(0)
    vals = sorted({v for v in Af.values if v > 0})
    ks = sorted({_level_index(v, s) for v in vals})
    E, B, Bp = {}, {}, {}
    for k in ks:
        lo_e, hi_e = _spow(s, 2 * k - 1), _spow(s, 2 * k + 1)
        E[k] = map_values(Af, lambda v, lo=lo_e, hi=hi_e: Fraction(1) if lo < v <= hi else zero)
        lo_f, hi_f = _spow(s, 2 * k - 2), _spow(s, 2 * k + 2)
        g = map_values(f, lambda v, lo=lo_f, hi=hi_f: v if lo < v <= hi else zero)
        B[k] = multiply(E[k], average(system, g, a, j))
        thr = _spow(s, 2 * k - 2)
        Bp[k] = map_values(B[k], lambda v, thr=thr: v if v > thr else zero)
    Bf = constant(f.domain, 0)
    Bpf = constant(f.domain, 0)
    for k in ks:
        Bf = scale_add(1, Bf, 1, B[k])
        Bpf = scale_add(1, Bpf, 1, Bp[k])
    diff = scale_add(1, Af, -1, Bpf)
    dp = norms(diff, p).strong_p
    half = rpow(Fraction(1, 2), p)
    bound = _scaled_pow(half, Ap) if isinstance(half, Fraction) and isinstance(Ap, Fraction) else _mp(half) * _mp(Ap)
    ok = _ge(bound, dp)
    rho_measure = None
    if p.denominator == 1:
        fpow = map_values(f, lambda v: v ** p.numerator)
        Afp = average(system, fpow, a, j)
        Lq = as_fraction(L)
        # rho > L  <=>  A(f^p) > L (Af)^p  where Af > 0
        rho_measure = _rho_exceed(Af, Afp, Lq, p.numerator)
    assertions = [Assertion("equi: ||Af - B'f||_p^p <= ||Af||_p^p / 2^p", bound, dp, ok)]
    res = LevelDecomposition(L, s, R, ks, E, B, Bp, Af, Bf, Bpf, rho_measure, assertions)
    if not ok:
        raise BoundViolation("level-set bound failed")
    return res


def _spow(s: int, e: int) -> Fraction:
    return Fraction(s) ** e


def _level_index(v: Fraction, s: int) -> int:
    """The k with s^(2k-1) < v <= s^(2k+1)."""
    k = 0
    while not (_spow(s, 2 * k - 1) < v):
        k -= 1
    while not (v <= _spow(s, 2 * k + 1)):
        k += 1
    while _spow(s, 2 * k - 3) < v and v <= _spow(s, 2 * k - 1):
        k -= 1
    return k


def _rho_exceed(Af: StepFunction, Afp: StepFunction, L: Fraction, p: int) -> Fraction:
    both = combine([Af, Afp], lambda u, v: Fraction(1) if u > 0 and v > L * u**p else Fraction(0))
    return integral(both)


class AverageOracle:
    """Pointwise evaluation of A_t f at many points with the shifts computed once."""

    def __init__(self, system: SystemModel, f: StepFunction, a, t: int, mode: str = "full"):
        if system.kind == "map_family":
            raise DomainError("use average_at for map families")
        self.f = f
        self.level = _levels([(t, Fraction(1))], mode, False)[0]
        shifts = _sequence_shifts(system, a, 1 << t, f.scale)
        self.S, self.L = shifts.S, shifts.L
        self.nums = [X for X, g in shifts.make() if g in self.level.groups]

    def __call__(self, x) -> Fraction:
        x = as_fraction(x)
        S2 = lcm(self.S, x.denominator)
        L2 = self.L * (S2 // self.S)
        up = S2 // self.S
        m = S2 // self.f.scale
        cuts = [c * m for c in self.f.cuts]
        vals = self.f.values
        x0 = x.numerator * (S2 // x.denominator)
        if not cuts:
            return vals[0] * len(self.nums) / self.level.norm
        total = Fraction(0)
        for X in self.nums:
            total += vals[bisect_right(cuts, (x0 + X * up) % L2) - 1]
        return total / self.level.norm


# -- random audit instances ----------------------------------------------------

@dataclass
class AuditInstance:
    system: SystemModel
    f: StepFunction
    w: WeightSequence


def random_audit_instance(rng, max_maps: int = 64, max_levels: int = 16, max_den: int = 64) -> AuditInstance:
    """A map family with at most min(2^t, max_maps) rational shifts per level,
    a nonnegative step function on the unit circle and positive weights.

    rng is a random.Random; the instance depends only on its state.
    """
    from .measure import from_cells

    T = rng.randint(1, max_levels)
    maps = []
    for t in range(1, T + 1):
        cap = min(2**t, max_maps)
        maps.append([Fraction(rng.randrange(max_den), max_den) for _ in range(rng.randint(1, cap))])
    system = SystemModel.map_family(maps)
    cells = rng.randint(1, 6)
    den = rng.choice([2, 3, 4, 8, 12, 16, 32])
    bps = sorted(rng.sample(range(den), min(cells, den)))
    f = from_cells(Domain.circle(1), [Fraction(b, den) for b in bps],
                   [Fraction(rng.randint(0, 8), rng.randint(1, 4)) for _ in bps])
    w = WeightSequence(tuple(Fraction(rng.randint(1, 16), rng.randint(1, 16) * (1 << rng.randint(0, t)))
                             for t in range(1, T + 1)))
    return AuditInstance(system, f, w)
