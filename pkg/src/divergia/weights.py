"""Weight sequences and the weight functionals C_1, C_1', C_p, the weak
sequence norms, the iterated-log profile Phi, and the dyadic envelope.

All weights are positive Fractions.  Functionals are computed exactly at
finite horizon; "divergence" is only ever reported as a curve of values
against the horizon.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath

from .errors import DomainError
from .exact import (
    as_fraction,
    fmt,
    lcm,
    power_product_cmp,
    precision_digits,
    rationalize,
    rpow,
    rpow_exact,
)


@dataclass(frozen=True)
class WeightSequence:
    values: tuple[Fraction, ...]
    tag: str | None = None

    def __post_init__(self):
        vals = tuple(as_fraction(v) for v in self.values)
        if any(v <= 0 for v in vals):
            raise DomainError("weights must be strictly positive")
        object.__setattr__(self, "values", vals)

    @property
    def horizon(self) -> int:
        return len(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, t: int) -> Fraction:
        """1-based access: w[t] is w_t."""
        if not 1 <= t <= len(self.values):
            raise IndexError(t)
        return self.values[t - 1]

    def truncate(self, horizon: int) -> "WeightSequence":
        return WeightSequence(self.values[:horizon], self.tag)

    def scaled(self, factor) -> "WeightSequence":
        factor = as_fraction(factor)
        return WeightSequence(tuple(factor * v for v in self.values), None)

    def to_json(self) -> dict:
        return {"tag": self.tag, "horizon": self.horizon, "values": [fmt(v) for v in self.values]}

    @classmethod
    def from_json(cls, data: dict) -> "WeightSequence":
        values = tuple(Fraction(v) for v in data["values"])
        if int(data["horizon"]) != len(values):
            raise DomainError("horizon does not match the number of values")
        return cls(values, data.get("tag"))

    @classmethod
    def from_tag(cls, tag: str, horizon: int) -> "WeightSequence":
        return cls(tuple(materialize_tag(tag, horizon)), tag)


@dataclass
class WeightFunctionalReport:
    functional: str
    value: Fraction | mpmath.mpf
    argmax_threshold: Fraction
    contributing_indices: list[int]
    power_value: Fraction | None = None  # value**p, exact, for weak norms
    p: Fraction = Fraction(1)
    extra: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return isinstance(self.value, Fraction)

    def decimal(self, digits: int = 20) -> str:
        return mpmath.nstr(mpmath.mpf(self.value.numerator) / self.value.denominator
                           if isinstance(self.value, Fraction) else self.value, digits)

    def to_json(self) -> dict:
        out = {
            "functional": self.functional,
            "p": fmt(self.p),
            "value": fmt(self.value) if self.exact else None,
            "value_decimal": self.decimal(),
            "argmax_threshold": fmt(self.argmax_threshold),
            "contributing_count": len(self.contributing_indices),
        }
        if self.power_value is not None:
            out["power_value"] = fmt(self.power_value)
        out.update(self.extra)
        return out


# -- Phi ---------------------------------------------------------------------

def phi(t) -> mpmath.mpf:
    """t times every iterated natural log of t that is strictly greater than 1.

    An iterate within 10**-(digits-5) of 1 counts as equal to 1 and is
    excluded, so e**e maps to e**e * e rather than depending on rounding.
    """
    digits = precision_digits()
    with mpmath.workdps(digits + 10):
        x = mpmath.mpf(t) if not isinstance(t, Fraction) else mpmath.mpf(t.numerator) / t.denominator
        if x <= 0:
            raise DomainError("phi is defined for t > 0")
        tol = mpmath.mpf(10) ** (-(digits - 5))
        out = x
        it = x
        while True:
            it = mpmath.log(it)
            if it - 1 <= tol:
                break
            out *= it
        return +out


# -- generators --------------------------------------------------------------

def _parse_int_list(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def materialize_tag(tag: str, horizon: int) -> list[Fraction]:
    """Values w_1..w_T for a generator tag.

    Tags: reciprocal-t, reciprocal-Phi, loglog-over-Phi, power:<e> (t**e),
    constant:<c>, linear, indicator:<list> (1 on the list, <floor> elsewhere
    via indicator:<list>;floor=<q>), dyadic:<s> (2**(t-s)).
    Irrational values are rounded to DIVERGIA_PRECISION_DIGITS significant
    digits, deterministically.
    """
    if horizon < 1:
        raise DomainError("horizon must be positive")
    name, _, arg = tag.partition(":")
    ts = range(1, horizon + 1)
    if name == "reciprocal-t":
        return [Fraction(1, t) for t in ts]
    if name == "linear":
        return [Fraction(t) for t in ts]
    if name == "constant":
        c = as_fraction(arg or "1")
        return [c for _ in ts]
    if name == "dyadic":
        s = int(arg)
        return [Fraction(2) ** (t - s) for t in ts]
    if name == "reciprocal-Phi":
        return [rationalize(1 / phi(t)) for t in ts]
    if name == "loglog-over-Phi":
        out = []
        for t in ts:
            if t < 16:
                out.append(Fraction(1))
            else:
                with mpmath.workdps(precision_digits() + 10):
                    out.append(rationalize(mpmath.log(mpmath.log(t)) / phi(t)))
        return out
    if name == "power":
        e = as_fraction(arg)
        out = []
        for t in ts:
            exact = rpow_exact(Fraction(t), e)
            out.append(exact if exact is not None else rationalize(rpow(Fraction(t), e)))
        return out
    if name == "indicator-of-J":
        return [Fraction(1) for _ in ts]
    if name == "indicator":
        members_text, _, rest = arg.partition(";")
        floor_value = Fraction(0)
        if rest.startswith("floor="):
            floor_value = as_fraction(rest[len("floor="):])
        members = set(_parse_int_list(members_text))
        vals = [Fraction(1) if t in members else floor_value for t in ts]
        return vals
    raise DomainError(f"unknown weight tag {tag!r}")


def indicator(members: Sequence[int], horizon: int | None = None) -> WeightSequence:
    """Indicator weight of a finite set J (restricted to J itself, so all weights are positive)."""
    members = sorted(set(members))
    if horizon is not None:
        raise DomainError("indicator sequences are materialized on J itself")
    return WeightSequence(tuple(Fraction(1) for _ in members), f"indicator-of-J:{len(members)}")


# -- functionals -------------------------------------------------------------

def _require_nonempty(w: WeightSequence):
    if len(w.values) == 0:
        raise DomainError("empty weight sequence")


def _flog(q: Fraction) -> float:
    if q.numerator <= 0:
        return -math.inf
    return math.log(q.numerator) - math.log(q.denominator)


def sort_key(q: Fraction) -> tuple:
    """(float, exact) key: rounding is monotone, so floats order all but ties."""
    try:
        return (float(q), q)
    except OverflowError:
        return (math.inf if q > 0 else -math.inf, q)


def weak_norm_seq(w: WeightSequence | Sequence, p=1) -> WeightFunctionalReport:
    """sup_y y * #{t: w_t >= y}**(1/p); the sup is attained at some y = w_t."""
    vals = w.values if isinstance(w, WeightSequence) else tuple(as_fraction(v) for v in w)
    if not vals:
        raise DomainError("empty weight sequence")
    p = as_fraction(p)
    if p < 1:
        raise DomainError("p must be at least 1")
    a, b = p.numerator, p.denominator
    keys = [sort_key(v) for v in vals]
    order = sorted(range(len(vals)), key=keys.__getitem__, reverse=True)
    levels = []  # (y, #{w >= y}) for each distinct value, largest first
    i, n = 0, len(order)
    while i < n:
        k = keys[order[i]]
        j = i
        while j < n and keys[order[j]] == k:
            j += 1
        levels.append((vals[order[i]], j))
        i = j
    # y^p * count is maximized; float logs shortlist, integers decide (ties keep the larger y)
    logs = [a * _flog(y) + b * math.log(c) for y, c in levels]
    top = max(logs)
    slack = 1e-9 * max(1.0, abs(top))
    best_y, best_count = None, 0
    for (y, c), lg in zip(levels, logs):
        if lg < top - slack:
            continue
        if best_y is None or (y.numerator * best_y.denominator) ** a * c**b > \
                (best_y.numerator * y.denominator) ** a * best_count**b:
            best_y, best_count = y, c
    power_value = rpow_exact(best_y, p)
    power_value = power_value * best_count if power_value is not None else None
    value = rpow_exact(best_y**a * Fraction(best_count) ** b, Fraction(1, a)) if a else None
    if value is None:
        with mpmath.workdps(precision_digits() + 10):
            value = +(mpmath.mpf(best_y.numerator) / best_y.denominator
                      * mpmath.power(best_count, mpmath.mpf(1) / (mpmath.mpf(a) / b)))
    bk = sort_key(best_y)
    contributing = [i + 1 for i in range(len(vals)) if keys[i] >= bk]
    return WeightFunctionalReport(
        functional=f"weak_norm({fmt(p)})",
        value=value,
        argmax_threshold=best_y,
        contributing_indices=contributing,
        power_value=power_value,
        p=p,
        extra={"count": best_count},
    )


def _c1_window_sum(vals: Sequence[Fraction], y: Fraction) -> Fraction:
    """Direct evaluation of sum_t [y < w_t < 2**t y] w_t (t is 1-based)."""
    total = Fraction(0)
    for t, v in enumerate(vals, start=1):
        if y < v < (y * (1 << t)):
            total += v
    return total


def _exact_sum(values: Sequence[Fraction]) -> Fraction:
    """Pairwise summation keeps intermediate denominators small."""
    vals = list(values)
    if not vals:
        return Fraction(0)
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def _order_positions(points: list[tuple[Fraction, int]]) -> list[list[int]]:
    """Sort points v * 2**-e exactly; returns groups of indices of equal points.

    A float key on log2 orders everything except near-ties, which are
    re-sorted with exact rational comparisons.
    """
    keys = [math.log2(v.numerator) - math.log2(v.denominator) - e for v, e in points]
    order = sorted(range(len(points)), key=keys.__getitem__)

    def exact(i):
        v, e = points[i]
        return Fraction(v.numerator, v.denominator << e)

    groups: list[list[int]] = []
    i, n = 0, len(order)
    while i < n:
        j = i + 1
        while j < n and keys[order[j]] - keys[order[j - 1]] < 1e-6:
            j += 1
        run = order[i:j]
        if len(run) == 1:
            groups.append(run)
        else:
            ex = {k: exact(k) for k in run}
            run.sort(key=ex.__getitem__)
            cur = [run[0]]
            for k in run[1:]:
                if ex[k] == ex[cur[0]]:
                    cur.append(k)
                else:
                    groups.append(cur)
                    cur = [k]
            groups.append(cur)
        i = j
    return groups


_FIXED_BITS = 160


def c1(w: WeightSequence | Sequence) -> WeightFunctionalReport:
    """Exact sup over y of sum_t [y < w_t < 2**t y] w_t.

    Term t is active exactly for y in the open interval (w_t 2**-t, w_t), so
    the sum is constant on the open cells between consecutive endpoints and
    the sup is the largest cell value.  Cells are first ranked with
    fixed-point lower/upper sums; exact rational sums are then evaluated only
    for cells whose upper bound can still beat the best exact value.
    """
    vals = w.values if isinstance(w, WeightSequence) else tuple(as_fraction(v) for v in w)
    if not vals:
        raise DomainError("empty weight sequence")
    T = len(vals)
    points = []  # index 2(t-1): left end, 2(t-1)+1: right end
    for t, v in enumerate(vals, start=1):
        points.append((v, t))
        points.append((v, 0))
    groups = _order_positions(points)
    lo_fix, hi_fix = [], []
    for v in vals:
        q, r = divmod(v.numerator << _FIXED_BITS, v.denominator)
        lo_fix.append(q)
        hi_fix.append(q + (r > 0))
    rank = [0] * len(points)
    cell_lo, cell_hi = [], []  # cell k lies between group k and group k+1
    act_lo = act_hi = 0
    for k, grp in enumerate(groups):
        for idx in grp:
            rank[idx] = k
            t0 = idx >> 1
            if idx & 1:
                act_lo -= lo_fix[t0]
                act_hi -= hi_fix[t0]
            else:
                act_lo += lo_fix[t0]
                act_hi += hi_fix[t0]
        cell_lo.append(act_lo)
        cell_hi.append(act_hi)
    cell_lo.pop()
    cell_hi.pop()
    floor_best = max(cell_lo)
    candidates = sorted((k for k in range(len(cell_hi)) if cell_hi[k] >= floor_best),
                        key=lambda k: -cell_hi[k])
    best = None
    best_cell = None
    for k in candidates:
        if best is not None and Fraction(cell_hi[k], 1 << _FIXED_BITS) < best:
            break
        members = [t0 + 1 for t0 in range(T) if rank[2 * t0] <= k and rank[2 * t0 + 1] >= k + 1]
        value = _exact_sum([vals[t - 1] for t in members])
        if best is None or value > best:
            best, best_cell = value, (k, members)
    k, members = best_cell

    def pos(g):
        v, e = points[groups[g][0]]
        return Fraction(v.numerator, v.denominator << e)

    left, right = pos(k), pos(k + 1)
    return WeightFunctionalReport(
        functional="C1",
        value=best,
        argmax_threshold=(left + right) / 2,
        contributing_indices=members,
        extra={"cell": [fmt(left), fmt(right)]},
    )


def c1_prime(w: WeightSequence | Sequence) -> WeightFunctionalReport:
    """sup over integer z in {0..T} of sum_t [t > z and w_t > 2**-z] w_t.

    Sums for every z come from one descending pass with fixed-point
    integers; the exact rational sum is then taken only for the z whose
    upper bound can still reach the best exact value.
    """
    vals = w.values if isinstance(w, WeightSequence) else tuple(as_fraction(v) for v in w)
    if not vals:
        raise DomainError("empty weight sequence")
    T = len(vals)
    lo_fix, hi_fix = [], []
    for v in vals:
        q, r = divmod(v.numerator << _FIXED_BITS, v.denominator)
        lo_fix.append(q)
        hi_fix.append(q + (r > 0))
    # z descends from T: index t = z + 1 joins the pool, the threshold 2**-z
    # rises, so pooled terms leave for good once they fall to or below it.
    order = []  # pool as a heap keyed by value
    pool_lo = pool_hi = 0
    lo_sum = [0] * (T + 1)
    hi_sum = [0] * (T + 1)
    for z in range(T, -1, -1):
        if z < T:
            heapq.heappush(order, (vals[z], z))
            pool_lo += lo_fix[z]
            pool_hi += hi_fix[z]
        thr = Fraction(1, 1 << z)
        while order and order[0][0] <= thr:
            _, i = heapq.heappop(order)
            pool_lo -= lo_fix[i]
            pool_hi -= hi_fix[i]
        lo_sum[z], hi_sum[z] = pool_lo, pool_hi
    floor_best = max(lo_sum)
    best = None
    best_z = 0
    for z in sorted((z for z in range(T + 1) if hi_sum[z] >= floor_best), key=lambda z: (-hi_sum[z], z)):
        if best is not None and Fraction(hi_sum[z], 1 << _FIXED_BITS) < best:
            break
        thr = Fraction(1, 1 << z)
        s = _exact_sum([v for t, v in enumerate(vals, start=1) if t > z and v > thr])
        if best is None or s > best or (s == best and z < best_z):
            best, best_z = s, z
    thr = Fraction(1, 1 << best_z)
    members = [t for t, v in enumerate(vals, start=1) if t > best_z and v > thr]
    return WeightFunctionalReport(
        functional="C1_prime",
        value=best,
        argmax_threshold=thr,
        contributing_indices=members,
        extra={"z": best_z},
    )


def cp(w: WeightSequence | Sequence, p) -> WeightFunctionalReport:
    p = as_fraction(p)
    if p < 1:
        raise DomainError("C_p needs p >= 1")
    if p == 1:
        return c1(w)
    return weak_norm_seq(w, p)


# -- Hardy-type classification ---------------------------------------------

@dataclass
class TrendReport:
    p: Fraction
    profile: list[mpmath.mpf]
    running_max: list[mpmath.mpf]
    first_half_max: mpmath.mpf
    last_half_max: mpmath.mpf
    first_half_min: mpmath.mpf
    last_half_min: mpmath.mpf
    verdict: str
    note: str = "finite-horizon heuristic, not a limit statement"


def classify_hardy(w: WeightSequence, p=1) -> TrendReport:
    """Profile t -> w_t Phi(t) (p = 1) or w_t t**(1/p) (p > 1) with a verdict.

    growing: the profile's minimum over the last half of the horizon exceeds
    twice its minimum over the first half (the profile tends upward
    everywhere); inconclusive: only the maximum doubles (unbounded on a
    subsequence, small on another); bounded-so-far otherwise.
    """
    T = w.horizon
    if T < 16:
        raise DomainError("classify_hardy needs horizon >= 16")
    p = as_fraction(p)
    prof = []
    with mpmath.workdps(precision_digits() + 10):
        for t in range(1, T + 1):
            wt = mpmath.mpf(w[t].numerator) / w[t].denominator
            if p == 1:
                prof.append(wt * phi(t))
            else:
                prof.append(wt * mpmath.power(t, 1 / (mpmath.mpf(p.numerator) / p.denominator)))
    run = []
    cur = None
    for v in prof:
        cur = v if cur is None or v > cur else cur
        run.append(cur)
    half = T // 2
    first, last = prof[:half], prof[half:]
    fmax, lmax, fmin, lmin = max(first), max(last), min(first), min(last)
    if lmin > 2 * fmin:
        verdict = "growing"
    elif lmax > 2 * fmax:
        verdict = "inconclusive"
    else:
        verdict = "bounded-so-far"
    return TrendReport(p, prof, run, fmax, lmax, fmin, lmin, verdict)


# -- dyadic envelope & rescaling --------------------------------------------

def dyadic_envelope(u: Sequence, T: int) -> list:
    """v_t = max of u_n over 2**(t-1) < n <= 2**t (u is 1-based: u[0] is u_1)."""
    if len(u) < (1 << T):
        raise DomainError(f"need at least 2**{T} terms, got {len(u)}")
    return [max(u[n - 1] for n in range((1 << (t - 1)) + 1, (1 << t) + 1)) for t in range(1, T + 1)]


@dataclass
class ScaledSum:
    sequence: WeightSequence
    factors: list[Fraction]
    exact: bool
    cp_of_sum: WeightFunctionalReport


def scale_and_sum(weights: Sequence[WeightSequence], targets: Sequence, p=1) -> ScaledSum:
    """Rescale each w^(k) so that C_p(w^(k)) equals targets[k], then sum pointwise.

    C_p is positively homogeneous, so the factor is target / C_p.  When C_p
    is irrational (weak norms with p > 1) the factor is rounded to working
    precision and `exact` is False.
    """
    if not weights:
        raise DomainError("no sequences")
    T = weights[0].horizon
    if any(wk.horizon != T for wk in weights):
        raise DomainError("all horizons must be equal")
    targets = [as_fraction(x) for x in targets]
    if len(targets) != len(weights) or any(x <= 0 for x in targets):
        raise DomainError("need one positive target per sequence")
    p = as_fraction(p)
    factors = []
    exact = True
    for wk, target in zip(weights, targets):
        rep = cp(wk, p)
        if rep.exact:
            factors.append(target / rep.value)
        else:
            exact = False
            factors.append(rationalize(mpmath.mpf(target.numerator) / target.denominator / rep.value))
    summed = tuple(sum((f * wk.values[i] for f, wk in zip(factors, weights)), Fraction(0)) for i in range(T))
    seq = WeightSequence(summed, None)
    return ScaledSum(seq, factors, exact, cp(seq, p))


def weight_power(w: WeightSequence, p) -> WeightSequence:
    """Pointwise w_t**p; exact only where the powers are rational."""
    p = as_fraction(p)
    vals = []
    for v in w.values:
        e = rpow_exact(v, p)
        if e is None:
            raise DomainError("w**p is not rational for this sequence")
        vals.append(e)
    return WeightSequence(tuple(vals), None)


def bound_chain_holds(w: WeightSequence) -> bool | None:
    """||w||_{1,inf} <= 2 C_1(w) whenever max w_t <= C_1(w); None if the hypothesis fails."""
    c = c1(w).value
    if max(w.values) > c:
        return None
    return weak_norm_seq(w, 1).value <= 2 * c


def c1_curve(tag: str, horizons: Sequence[int]) -> list[tuple[int, Fraction]]:
    """C_1 at several horizons of one generator (the finite-horizon divergence curve)."""
    longest = WeightSequence.from_tag(tag, max(horizons))
    return [(T, c1(longest.truncate(T)).value) for T in horizons]


def weak_power_ge(report: WeightFunctionalReport, target) -> bool:
    """Exact test value**p >= target for a weak-norm report."""
    y = report.argmax_threshold
    count = Fraction(report.extra["count"])
    return power_product_cmp(y, report.p, count, as_fraction(target)) >= 0


GENERATORS: dict[str, Callable[[int], list[Fraction]]] = {}
