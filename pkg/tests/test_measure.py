import random
from fractions import Fraction as F

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from divergia.errors import DomainError
from divergia.measure import (
    Domain,
    StepFunction,
    canonical,
    constant,
    distribution,
    from_cells,
    indicator,
    integral,
    level_measure,
    norms,
    pointwise_max,
    scale_add,
    threshold_split,
    translate,
)

CIRCLE = Domain.circle(1)


def mp(x):
    return mpmath.mpf(x.numerator) / x.denominator if isinstance(x, F) else mpmath.mpf(x)


def random_step(rng, domain=CIRCLE, den=24, cells=5):
    bps = sorted(rng.sample(range(1, den), rng.randint(1, cells)))
    pts = [domain.left + (domain.right - domain.left) * F(b, den) for b in bps]
    if domain.is_circle:
        vals = [F(rng.randint(0, 6), rng.randint(1, 3)) for _ in pts]
    else:
        vals = [F(rng.randint(0, 6), rng.randint(1, 3)) for _ in range(len(pts) + 1)]
    return from_cells(domain, pts, vals)


def probe_grid(domain, n):
    return [domain.left + (domain.right - domain.left) * F(i, n) for i in range(n)]


steps = st.builds(lambda seed: random_step(random.Random(seed)), st.integers(0, 10**6))


# -- translation -------------------------------------------------------------------

def test_translate_by_zero():
    f = random_step(random.Random(1))
    assert translate(f, 0) == f


def test_translate_indicator_half():
    assert translate(indicator(CIRCLE, 0, F(1, 4)), F(1, 2)) == indicator(CIRCLE, F(1, 2), F(3, 4))


def test_translate_reduces_mod_circumference():
    f = random_step(random.Random(2))
    a, b = translate(f, F(7, 3)), translate(f, F(1, 3))
    for x in probe_grid(CIRCLE, 240):
        assert a(x) == b(x)


@settings(max_examples=60, deadline=None)
@given(steps, st.fractions(min_value=-3, max_value=3, max_denominator=50))
def test_translate_pointwise_and_norms(f, s):
    g = translate(f, s)
    for x in probe_grid(CIRCLE, 60):
        assert g(x) == f(x - s)
    for p in (1, 2):
        assert norms(g, p).strong_p == norms(f, p).strong_p
        assert norms(g, p).weak_p == norms(f, p).weak_p
    # irrational powers: equal up to rounding at working precision
    a, b = norms(g, F(3, 2)), norms(f, F(3, 2))
    with mpmath.workdps(40):
        for x, y in ((a.strong_p, b.strong_p), (a.weak_p, b.weak_p)):
            assert abs(mp(x) - mp(y)) <= mpmath.mpf(10) ** -25 * (1 + abs(mp(y)))


# -- pointwise max and linear combinations --------------------------------------------------

def test_max_single_and_union():
    f = random_step(random.Random(3))
    assert pointwise_max([f]) == f
    m = pointwise_max([indicator(CIRCLE, 0, F(1, 2)), indicator(CIRCLE, F(1, 4), F(3, 4))])
    assert m == indicator(CIRCLE, 0, F(3, 4))


def test_max_of_fifty_against_probes():
    rng = random.Random(4)
    fs = [random_step(rng) for _ in range(50)]
    m = pointwise_max(fs)
    for i in range(10**4):
        x = F(i, 10**4) + F(1, 3 * 10**4)
        assert m(x) == max(f(x) for f in fs)
    # every breakpoint of the max is a breakpoint of some input
    assert len(m.cuts) <= sum(len(f.cuts) for f in fs)


def test_max_domain_mismatch():
    with pytest.raises(DomainError):
        pointwise_max([constant(CIRCLE, 1), constant(Domain.circle(2), 1)])


def test_scale_add_examples():
    f = random_step(random.Random(5))
    g = random_step(random.Random(6))
    assert scale_add(1, f, 0, g) == f
    half = indicator(CIRCLE, 0, 1)
    assert scale_add(F(1, 2), half, F(1, 2), half) == constant(CIRCLE, 1)
    with pytest.raises(DomainError):
        scale_add(1, constant(CIRCLE, 0), -1, indicator(CIRCLE, 0, F(1, 2)))


def test_threshold_split_examples():
    f = scale_add(3, indicator(CIRCLE, 0, F(1, 3)), 0, constant(CIRCLE, 0))
    up, mid, down = threshold_split(f, 1, 2)
    assert up == f
    assert all(v == 0 for v in mid.values) and all(v == 0 for v in down.values)
    with pytest.raises(DomainError):
        threshold_split(f, 2, 1)


@settings(max_examples=60, deadline=None)
@given(steps, st.integers(0, 4), st.integers(0, 4))
def test_threshold_split_recombines(f, a, b):
    lo, hi = min(a, b), max(a, b)
    up, mid, down = threshold_split(f, lo, hi)
    assert scale_add(1, scale_add(1, up, 1, mid), 1, down) == canonical(f)
    for x in probe_grid(CIRCLE, 48):
        parts = [g(x) for g in (up, mid, down)]
        assert sum(1 for v in parts if v) <= 1


# -- norms ----------------------------------------------------------------------------

def test_norms_single_level():
    f = scale_add(F(5, 2), indicator(CIRCLE, F(1, 5), F(3, 5)), 0, constant(CIRCLE, 0))
    for p in (1, 2, 3):
        r = norms(f, p)
        assert r.strong_p == F(5, 2) ** p * F(2, 5)
        assert r.weak_p == F(5, 2) ** p * F(2, 5)


def test_norms_staircase_against_riemann():
    f = from_cells(CIRCLE, [0, F(1, 3), F(1, 2), F(4, 5)], [1, 3, 2, 0])
    for p in (1, 2, 3):
        grid = probe_grid(CIRCLE, 10**4)
        riemann = sum(f(x) ** p for x in grid) / len(grid)
        # each breakpoint misplaces at most one grid cell of height max f^p
        assert abs(riemann - norms(f, p).strong_p) <= F(len(f.cuts) * 3**p, len(grid))
        exact = F(1, 3) + 3**p * F(1, 6) + 2**p * F(3, 10)
        assert norms(f, p).strong_p == exact


def test_norms_on_window():
    w = Domain.window(-1, 3)
    f = indicator(w, 0, 2, 2)
    assert norms(f, 2).strong_p == 8
    assert integral(f) == 4
    assert level_measure(f, 2) == 2 and level_measure(f, 2, strict=True) == 0


@settings(max_examples=100, deadline=None)
@given(steps, st.sampled_from([F(1), F(3, 2), F(2), F(3)]))
def test_chebyshev(f, p):
    assert norms(f, p).chebyshev_holds()


@settings(max_examples=60, deadline=None)
@given(st.lists(steps, min_size=1, max_size=5))
def test_max_dominates_weak_norms(fs):
    m = pointwise_max(fs)
    for p in (1, 2):
        assert norms(m, p).weak_p >= max(norms(f, p).weak_p for f in fs)


@settings(max_examples=60, deadline=None)
@given(steps)
def test_canonical_idempotent_and_no_equal_neighbours(f):
    c = canonical(f)
    assert canonical(c) == c
    vals = c.values
    if len(vals) > 1:
        assert all(a != b for a, b in zip(vals, vals[1:]))


def test_distribution_sums_to_domain_length():
    rng = random.Random(8)
    for _ in range(20):
        f = random_step(rng, Domain.window(F(-1, 2), 2))
        assert sum(m for _, m in distribution(f)) == F(5, 2)


def test_json_roundtrip():
    f = random_step(random.Random(9))
    assert StepFunction.from_json(f.to_json()) == f


def test_cells_right_continuity():
    f = indicator(CIRCLE, F(1, 4), F(1, 2))
    assert f(F(1, 4)) == 1 and f(F(1, 2)) == 0
    wrap = indicator(CIRCLE, F(-1, 8), F(1, 8))
    assert wrap(F(15, 16)) == 1 and wrap(F(1, 8)) == 0


def test_bad_breakpoints():
    with pytest.raises(DomainError):
        from_cells(CIRCLE, [F(1, 2), F(1, 4)], [1, 2])
    with pytest.raises(DomainError):
        from_cells(CIRCLE, [F(3, 2)], [1])
