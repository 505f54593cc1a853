"""Acceptance criteria 1-11.

Each test pins its tolerance and runtime limit as module constants and
prints one summary line through the `criterion` marker (see conftest.py).
Run alone with:  pytest tests/test_acceptance.py -v
"""

import math
import random
import time
from bisect import bisect_left, bisect_right
from fractions import Fraction as F
from itertools import accumulate

import mpmath
import pytest

from divergia.constructions import (
    ResidueProblem,
    build_infection,
    build_sumset,
    build_ubL1,
    build_ubLp,
    infection_sums,
    solve_residues,
)
from divergia.dynsys import audit_fa1, audit_fap, random_audit_instance
from divergia.errors import BoundViolation, DomainError
from divergia.khintchine import (
    dichotomy_report,
    folner_check,
    khintchine_lower,
    lattice_count,
    semigroup_enumerate,
    semigroup_from_elements,
    weakbound_check,
)
from divergia.measure import distribution
from divergia.weights import WeightSequence, c1, c1_curve, weak_norm_seq

# runtime limits (seconds)
LIMIT_1 = LIMIT_2 = LIMIT_4 = LIMIT_5 = LIMIT_11 = 60
LIMIT_3 = LIMIT_7 = LIMIT_8 = 300
LIMIT_6 = LIMIT_10 = 120
LIMIT_9 = 10

# tolerances
HARDY_FLAT_GROWTH = F(105, 100)  # 1/Phi: at most 5% growth between the last two horizons
HARDY_GROWTH = F(125, 100)  # 1/t: at least 25% growth
KHINTCHINE_MEASURE_TOL = mpmath.mpf(10) ** -25
LATTICE_CONSTANT = 2  # residual / y stays below this at y in {10, 20, 40}
INSTANCES = 1000


def crit(number, title):
    return pytest.mark.criterion(number, title)


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


# -- criterion 1 ---------------------------------------------------------------------------

def scaled_oracle(vals):
    """Integer form of y -> sum of w_t over y < w_t < 2^t y.

    Breakpoints, midpoints and coarse grid points are all multiples of 1/S,
    so everything below is integer arithmetic on values scaled by S.
    """
    S = 512 * math.lcm(*(v.denominator for v in vals)) * 2 ** len(vals)
    hi = [v.numerator * (S // v.denominator) for v in vals]
    lo = [w >> t for t, w in enumerate(hi, 1)]
    by_lo = sorted(zip(lo, hi))
    lo_keys = [k for k, _ in by_lo]
    lo_sum = [0] + list(accumulate(w for _, w in by_lo))
    hi_sorted = sorted(hi)
    hi_sum = [0] + list(accumulate(hi_sorted))

    # open intervals: the term counts when lo_t < y and y < hi_t
    def W(y):
        return lo_sum[bisect_left(lo_keys, y)] - hi_sum[bisect_right(hi_sorted, y)]

    return S, sorted(set(lo) | set(hi)), W


def random_sequence(rng):
    n = max(1, int(2 ** rng.uniform(0, 12)))
    return [F(rng.randint(1, 64), rng.randint(1, 16) * 2 ** rng.randint(0, 12)) for _ in range(n)]


@crit(1, "weight functionals: c1 scan vs grid oracle, weak-norm identities (10^3 sequences)")
def test_criterion_1_weight_functionals():
    rng = random.Random(101)
    with Clock() as clk:
        for _ in range(INSTANCES):
            vals = random_sequence(rng)
            value = c1(vals).value
            S, pts, W = scaled_oracle(vals)
            target = value * S
            # a coarse geometric grid never beats the scan
            lo, hi = pts[0] // 2, pts[-1] * 2
            coarse = [lo + (hi - lo) * i // 256 for i in range(257)]
            coarse += [lo << i for i in range(1, 64) if lo << i < hi]
            assert max(W(y) for y in coarse) <= target
            # a grid with a point in every breakpoint interval attains it
            fine = [lo] + [(a + b) // 2 for a, b in zip(pts, pts[1:])] + [hi]
            assert max(W(y) for y in fine) == target

            lam = F(rng.randint(1, 50), rng.randint(1, 50))
            for p in (F(1), F(2), F(3, 2)):
                a, b = weak_norm_seq(vals, p), weak_norm_seq([lam * v for v in vals], p)
                assert b.argmax_threshold == lam * a.argmax_threshold
                assert b.extra["count"] == a.extra["count"]
                if p.denominator == 1:
                    assert b.power_value == lam ** p.numerator * a.power_value
            assert weak_norm_seq(vals, 2).power_value == weak_norm_seq([v * v for v in vals], 1).value
    print(f"criterion 1: {clk.seconds:.1f} s")
    assert clk.seconds < LIMIT_1


# -- criterion 2 ---------------------------------------------------------------------------

@crit(2, "Hardy' horizon behaviour: 1/Phi flat, 1/t grows >= 25% (2^8, 2^12, 2^16)")
def test_criterion_2_hardy_prime():
    horizons = [2**8, 2**12, 2**16]
    with Clock() as clk:
        flat = [v for _, v in c1_curve("reciprocal-Phi", horizons)]
        grow = [v for _, v in c1_curve("reciprocal-t", horizons)]
    assert all(a <= b for a, b in zip(flat, flat[1:]))
    assert flat[2] <= flat[1] * HARDY_FLAT_GROWTH
    assert grow[2] >= grow[1] * HARDY_GROWTH
    print(f"criterion 2: 1/Phi {[float(v) for v in flat]}, 1/t {[round(float(v), 3) for v in grow]}, "
          f"{clk.seconds:.1f} s")
    assert clk.seconds < LIMIT_2


# -- criterion 3 ---------------------------------------------------------------------------

@crit(3, "fa1/fap audits: zero violations on 10^3 random instances")
def test_criterion_3_audits():
    rng = random.Random(303)
    violations = 0
    worst = mpmath.mpf(0)
    with Clock() as clk:
        for _ in range(INSTANCES):
            inst = random_audit_instance(rng, max_maps=64, max_levels=16)
            assert all(len(level) <= 64 for level in inst.system.maps) and len(inst.system.maps) <= 16
            try:
                checks = [audit_fa1(inst.system, inst.f, inst.w),
                          audit_fap(inst.system, inst.f, inst.w, 2, F(3, 2)),
                          audit_fap(inst.system, inst.f, inst.w, 3, 2)]
            except BoundViolation:
                violations += 1
                continue
            violations += sum(not c.passed for c in checks)
            worst = max([worst] + [mpmath.mpf(c.ratio.numerator) / c.ratio.denominator
                                   if isinstance(c.ratio, F) else c.ratio for c in checks])
    print(f"criterion 3: violations {violations}, worst ratio {mpmath.nstr(worst, 6)}, {clk.seconds:.1f} s")
    assert violations == 0
    assert clk.seconds < LIMIT_3


# -- criterion 4 ---------------------------------------------------------------------------

@crit(4, "solve_residues: 10^3 lacunary problems certified, ratio <= 2K rejected")
def test_criterion_4_residues():
    rng = random.Random(404)
    with Clock() as clk:
        for _ in range(INSTANCES):
            K, t = rng.randint(1, 16), rng.randint(1, 12)
            terms = [rng.randint(1, 9)]
            for _ in range(t - 1):
                terms.append(terms[-1] * rng.randint(2 * K + 1, 6 * K))
            targets = [rng.randrange(K) for _ in terms]
            sol = solve_residues(ResidueProblem(K, terms, targets))
            assert [math.floor(K * ((sol.alpha * b) % 1)) for b in terms] == targets
            if t >= 2:
                bad = list(terms)
                i = rng.randrange(1, t)
                bad[i] = bad[i - 1] * rng.randint(1, 2 * K)
                with pytest.raises(DomainError):
                    solve_residues(ResidueProblem(K, bad, targets))
    print(f"criterion 4: {clk.seconds:.1f} s")
    assert clk.seconds < LIMIT_4


# -- criterion 5 ---------------------------------------------------------------------------

@crit(5, "build_ubLp: weak ratio >= 2^(-1-2/p)|J|^(1/p), exact ||f||_p (|J| in 4,8,16; p in 3/2,2)")
def test_criterion_5_ublp():
    lines = []
    with Clock() as clk:
        for size in (4, 8, 16):
            for p in (F(3, 2), F(2)):
                plan = build_ubLp(range(1, size + 1), p)
                assert plan.passed
                K = plan.bookkeeping["K"]
                # ||f||_p^p = 2^p * 2/K, i.e. ||f||_p = 2^(1+1/p) K^(-1/p)
                dist = {v: m for v, m in distribution(plan.f) if m}
                assert dist == {v: m for v, m in ((F(2), F(2, K)), (F(0), 1 - F(2, K))) if m}
                # ratio^p = y^p mu / (2^(p+1)/K) >= |J| 2^(-p-2)  <=>  y^a mu^b >= (|J|/(2K))^b
                mx = plan.report.max_norms[p]
                a, b = p.numerator, p.denominator
                assert mx.attaining_level**a * mx.level_measure**b >= F(size, 2 * K) ** b
                with mpmath.workdps(30):
                    ratio = plan.report.ratio(p)
                    pp = mpmath.mpf(p.numerator) / p.denominator
                    target = mpmath.power(2, -1 - 2 / pp) * mpmath.power(size, 1 / pp)
                    assert ratio >= target * (1 - mpmath.mpf(10) ** -25)
                lines.append(f"|J|={size} p={p}: {mpmath.nstr(ratio, 8)} >= {mpmath.nstr(target, 8)}")
    print("criterion 5: " + "; ".join(lines) + f"; {clk.seconds:.1f} s")
    assert clk.seconds < LIMIT_5


# -- criterion 6 ---------------------------------------------------------------------------

@crit(6, "build_ubL1: mu{sup >= 1} = 1, ||f||_1 = 4/M, constant > M/4 (M = 2, 4)")
def test_criterion_6_ubl1():
    w = WeightSequence.from_tag("linear", 8)
    with Clock() as clk:
        for M in (2, 4):
            plan = build_ubL1(w, M)
            assert plan.passed
            rep = plan.report
            assert rep.distribution.at_least(1) == 1
            f1 = sum(v * m for v, m in distribution(plan.f))
            assert f1 == F(4, M)
            ratio = rep.max_norms[F(1)].weak_p / f1
            assert ratio > F(M, 4)
            print(f"criterion 6: M={M} weak-(1,1) ratio {ratio} > {F(M, 4)}")
    assert clk.seconds < LIMIT_6


# -- criterion 7 ---------------------------------------------------------------------------

def exceeds(alpha, n0, y, t, w_t, x_num, x_den):
    """w_t 2^-t sum_{2^(t-1) < n <= 2^t} f(x - 2^n alpha) > 1, f = 2^y 1_[-1/P, 2/P), in integers."""
    P = 2**n0 - 1
    Q = alpha.denominator  # a power of two
    L = Q * P * x_den
    x = x_num * Q * P
    s = (alpha.numerator * pow(2, 2 ** (t - 1) + 1, Q)) % Q
    band = Q * x_den  # 1/P on the common scale
    hits = 0
    for _ in range(2 ** (t - 1)):
        z = (x - s * P * x_den) % L
        hits += z < 2 * band or z >= L - band
        s = (2 * s) % Q
    return w_t * F(hits * 2**y, 2**t) > 1


@crit(7, "infection (k=2, y=4, T=12): 100% oracle agreement, l_y + l_2y > m_y - 9 for 1/t")
def test_criterion_7_infection():
    with Clock() as clk:
        w = WeightSequence.from_tag("dyadic:5", 12)
        plan = build_infection(2, w, 4, 12)
        assert plan.passed
        book = plan.bookkeeping
        assert book["infected_intervals"] > 0
        alpha = plan.system.alpha.value
        n0, P = book["n0"], 2 ** book["n0"] - 1
        eps_den = 2**24
        agree = 0
        for t, V in book["infected"]:
            for num, den in ((V * eps_den + 1, P * eps_den), (2 * V + 1, 2 * P), ((V + 1) * eps_den - 1, P * eps_den)):
                g = math.gcd(num, den)
                agree += exceeds(alpha, n0, 4, t, w[t], num // g, den // g)
        total = 3 * len(book["infected"])
        sums = infection_sums(WeightSequence.from_tag("reciprocal-t", 12), 4)
    print(f"criterion 7: {agree}/{total} probes agree, l_y + l_2y = {sums['l_y'] + sums['l_2y']} "
          f"> m_y - 9 = {sums['m_y'] - 9}, {clk.seconds:.1f} s")
    assert agree == total
    assert sums["l_y"] + sums["l_2y"] > sums["m_y"] - 9
    assert clk.seconds < LIMIT_7


# -- criterion 8 ---------------------------------------------------------------------------

@crit(8, "sumset (k=3, J={0,2}, p=2): exhaustive checks and the weak-norm bound")
def test_criterion_8_sumset():
    with Clock() as clk:
        inst, rep = build_sumset(3, [0, 2], 2)
    assert inst.passed
    assert len(inst.B) == 3**2 * 3**8
    assert 2 * len(inst.C) >= len(inst.B)
    mx = rep.max_norms[F(2)]
    # ||sup||_{2,inf}^2 >= |J| ||f||_2^2 / 16 with ||f||_2^2 = |B|
    assert mx.attaining_level**2 * mx.level_measure >= F(2 * len(inst.B), 16)
    print(f"criterion 8: |B| = {len(inst.B)}, |C| = {len(inst.C)}, weak_2^2 = {mx.weak_p}, {clk.seconds:.1f} s")
    assert clk.seconds < LIMIT_8


# -- criterion 9 ---------------------------------------------------------------------------

@crit(9, "Khintchine lower bound (J = 1..8, p = 2): certified ratio and measure 8 ln 2")
def test_criterion_9_khintchine():
    with Clock() as clk:
        rep = khintchine_lower(range(1, 9), 2)
    assert rep.passed
    with mpmath.workdps(60):
        target = mpmath.power(2, mpmath.mpf(-3) / 2) * mpmath.sqrt(mpmath.log(2)) * mpmath.sqrt(8)
        assert mpmath.mpf(rep.ratio_lower.a) >= target
        lo, hi = mpmath.mpf(rep.certified_measure.a), mpmath.mpf(rep.certified_measure.b)
        exact = 8 * mpmath.log(2)
        assert abs(lo - exact) < KHINTCHINE_MEASURE_TOL and abs(hi - exact) < KHINTCHINE_MEASURE_TOL
    print(f"criterion 9: ratio >= {mpmath.nstr(mpmath.mpf(rep.ratio_lower.a), 10)} "
          f"vs target {mpmath.nstr(target, 10)}, {clk.seconds:.2f} s")
    assert clk.seconds < LIMIT_9


# -- criterion 10 --------------------------------------------------------------------------

@crit(10, "semigroup diagnostics: |S_100| = 19, monotone Foln1, bounded lattice residual, verdict flip")
def test_criterion_10_semigroups():
    with Clock() as clk:
        S = semigroup_enumerate([2, 3], 10**6)
        assert len(S.S_N(100)) == 19
        rows = folner_check(S, 2, [10**2, 10**3, 10**4, 10**5], with_foln2=False)
        f1 = [r.foln1 for r in rows]
        assert all(a > b for a, b in zip(f1, f1[1:]))
        normalized = [lattice_count([2, 3], y).normalized for y in (10, 20, 40)]
        assert max(normalized) <= LATTICE_CONSTANT
        assert dichotomy_report(S).side == "convergence side"
        primes = [p for p in range(2, 1001) if all(p % q for q in range(2, int(p**0.5) + 1))]
        squares = semigroup_from_elements([p * p for p in primes], 10**6)
        assert dichotomy_report(squares).side == "divergence side"
    print(f"criterion 10: Foln1 {[round(float(v), 3) for v in f1]}, "
          f"residual/y {[mpmath.nstr(v, 4) for v in normalized]}, {clk.seconds:.1f} s")
    assert clk.seconds < LIMIT_10


# -- criterion 11 --------------------------------------------------------------------------

@crit(11, "weakbound: h_n <= e K n^d on 10^3 random nondecreasing sequences")
def test_criterion_11_weakbound():
    rng = random.Random(1111)
    violations = 0
    worst = mpmath.mpf(0)
    with Clock() as clk:
        for _ in range(INSTANCES):
            n = max(1, int(2 ** rng.uniform(0, 12)))
            style = rng.randrange(3)
            h = [rng.randint(1, 10)]
            for i in range(2, n + 1):
                if style == 0:
                    step = rng.choice([0, 0, 1, rng.randint(0, 100)])
                elif style == 1:
                    step = max(0, int(h[-1] * rng.uniform(0, 0.3)))
                else:
                    step = rng.randint(0, 2 * i)
                h.append(h[-1] + step)
            r = weakbound_check(h)
            violations += not r.holds
            worst = max(worst, r.worst_ratio)
    print(f"criterion 11: violations {violations}, worst h_n/(K n^d) {mpmath.nstr(worst, 6)} "
          f"(bound e), {clk.seconds:.1f} s")
    assert violations == 0
    assert clk.seconds < LIMIT_11


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
