import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from divergia.dynsys import (
    AverageOracle,
    DigitReal,
    SystemModel,
    audit_fa1,
    audit_fap,
    average,
    average_at,
    block_of,
    equi_parameters,
    level_decompose,
    max_over_levels,
    maximal_profile,
    random_audit_instance,
    refine_subset,
)
from divergia.errors import DomainError, PrecisionError
from divergia.measure import Domain, constant, from_cells, indicator, integral, map_values, norms
from divergia.sequences import TimeSequence
from divergia.weights import WeightSequence

CIRCLE = Domain.circle(1)


# -- independent oracle: evaluate f(x + alpha a_n) term by term ----------------------

def oracle_average(f, alpha, terms, t, x, mode="full", M=1):
    n_range = range(1, 2**t + 1) if mode == "full" else range(2 ** (t - 1) + 1, 2**t + 1)
    if t == 0 and mode != "full":
        n_range = range(1, 2)
    norm = 2**t if mode in ("full", "block_sum") else 2 ** max(t - 1, 0)
    total = sum(f((x + alpha * terms[n - 1]) % M) for n in n_range)
    return F(total) / norm


def midpoints(g):
    cuts = list(g.cuts) or [F(0)]
    ext = cuts + [cuts[0] + g.domain.right]
    return [(a + b) / 2 % g.domain.right for a, b in zip(ext, ext[1:])]


def random_step(rng, den=16):
    bps = sorted(rng.sample(range(den), rng.randint(1, 4)))
    return from_cells(CIRCLE, [F(b, den) for b in bps], [F(rng.randint(0, 5), rng.randint(1, 3)) for _ in bps])


# -- averages ------------------------------------------------------------------------

def test_quarter_rotation_example():
    sys = SystemModel.rotation(F(1, 4))
    f = indicator(CIRCLE, 0, F(1, 2))
    assert average_at(sys, f, [1, 2, 3, 4], 2, 0) == F(1, 2)
    assert average(sys, f, [1, 2, 3, 4], 2)(0) == F(1, 2)


def test_block_index():
    assert [block_of(n) for n in range(1, 10)] == [0, 1, 2, 2, 3, 3, 3, 3, 4]


def test_constants_are_invariant():
    sys = SystemModel.rotation(F(3, 7))
    c = constant(CIRCLE, F(5, 3))
    for mode in ("full", "block"):
        assert average(sys, c, TimeSequence.power(2), 4, mode) == c


def test_block_identity():
    rng = random.Random(1)
    for _ in range(10):
        sys = SystemModel.rotation(F(rng.randint(1, 30), rng.randint(31, 60)))
        f = random_step(rng)
        a = TimeSequence.power(3)
        for t in range(1, 5):
            full_t, full_prev = average(sys, f, a, t), average(sys, f, a, t - 1)
            blk = average(sys, f, a, t, "block")
            for x in midpoints(blk) + midpoints(full_t):
                assert blk(x) == 2 * full_t(x) - full_prev(x)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.sampled_from(["full", "block", "block_sum"]))
def test_average_matches_oracle(seed, t, mode):
    rng = random.Random(seed)
    alpha = F(rng.randint(1, 40), rng.randint(41, 97))
    f = random_step(rng)
    terms = [rng.randint(1, 500) for _ in range(2**t)]
    sys = SystemModel.rotation(alpha)
    g = average(sys, f, terms, t, mode)
    probes = midpoints(g) + [F(rng.randint(0, 999), 1000) for _ in range(20)]
    for x in probes:
        assert g(x) == oracle_average(f, alpha, terms, t, x, mode)


def test_average_oracle_class_agrees():
    sys = SystemModel.rotation(F(5, 13))
    f = random_step(random.Random(2))
    a = TimeSequence.power(2)
    A = AverageOracle(sys, f, a, 4)
    for i in range(50):
        x = F(i, 50)
        assert A(x) == average_at(sys, f, a, 4, x)


def test_direction_and_circumference():
    sys = SystemModel.rotation(F(1, 3), circumference=2, direction=-1)
    f = indicator(Domain.circle(2), 0, 1)
    for i in range(40):
        x = F(i, 20)
        assert average_at(sys, f, [1, 2], 1, x) == oracle_average(f, F(-1, 3), [1, 2], 1, x, M=2)


def test_domain_mismatch():
    with pytest.raises(DomainError):
        average(SystemModel.rotation(F(1, 3), 2), indicator(CIRCLE, 0, F(1, 2)), [1, 2], 1)


def test_sqrt_times_rejected():
    with pytest.raises(DomainError):
        average(SystemModel.rotation(F(1, 3)), constant(CIRCLE, 1), TimeSequence("sqrt_all"), 2)


# -- digit reals -------------------------------------------------------------------------

def test_digit_real_shift_and_horizon():
    d = DigitReal(10, (1, 4, 1, 5, 9), reserve=2)
    assert d.value == F(14159, 10**5)
    assert d.shift(2) == F(159, 1000)
    with pytest.raises(PrecisionError):
        d.shift(4)
    assert DigitReal.from_json(d.to_json()) == d


def test_digit_rotation_matches_fraction_rotation_inside_horizon():
    d = DigitReal(2, tuple(random.Random(3).randint(0, 1) for _ in range(24)), reserve=4)
    f = random_step(random.Random(4))
    a = TimeSequence.power(2)
    ga = average(SystemModel.digit_rotation(d), f, a, 4)
    gb = average(SystemModel.rotation(d.value), f, a, 4)
    assert ga == gb
    with pytest.raises(PrecisionError):
        average(SystemModel.digit_rotation(d), f, a, 5)


def test_digit_real_validation():
    for bad in ((1, (0,)), (10, ()), (2, (2,))):
        with pytest.raises(DomainError):
            DigitReal(*bad)


# -- maximal functions ---------------------------------------------------------------------

def test_maximal_profile_against_oracle():
    rng = random.Random(5)
    for _ in range(8):
        alpha = F(rng.randint(1, 50), rng.randint(51, 101))
        sys = SystemModel.rotation(alpha)
        f = random_step(rng)
        w = WeightSequence(tuple(F(rng.randint(1, 9), rng.randint(1, 9)) for _ in range(5)))
        terms = [2**n for n in range(1, 33)]
        g, rep = maximal_profile(sys, f, TimeSequence.power(2), w, ps=(1, 2))
        for x in midpoints(g):
            assert g(x) == max(w[t] * oracle_average(f, alpha, terms, t, x) for t in range(1, 6))
        assert rep.max_norms[F(1)].weak_p == norms(g, 1).weak_p
        assert rep.f_norms[F(2)] == norms(f, 2)


def test_unmaterialized_distribution_matches():
    sys = SystemModel.rotation(F(7, 19))
    f = random_step(random.Random(6))
    w = WeightSequence.from_tag("reciprocal-t", 6)
    g, rep = maximal_profile(sys, f, [n * n for n in range(1, 65)], w)
    none, rep2 = maximal_profile(sys, f, [n * n for n in range(1, 65)], w, materialize=False)
    assert none is None
    assert rep2.max_norms[F(1)] == rep.max_norms[F(1)]
    assert sum(m for _, m in rep.distribution) == 1


def test_max_over_levels_dominates_each_level():
    sys = SystemModel.rotation(F(3, 11))
    f = random_step(random.Random(7))
    g, rep = max_over_levels(sys, f, TimeSequence.power(2), [1, 3, 4], materialize=True)
    for j in (1, 3, 4):
        A = average(sys, f, TimeSequence.power(2), j)
        for x in midpoints(g) + midpoints(A):
            assert g(x) >= A(x)


def test_map_family_levels():
    sys = SystemModel.map_family([[0, F(1, 2)], [F(1, 4)]])
    f = indicator(CIRCLE, 0, F(1, 2))
    assert average_at(sys, f, None, 1, 0) == F(1, 2)
    assert average_at(sys, f, None, 2, 0) == F(1, 4)
    with pytest.raises(DomainError):
        SystemModel.map_family([[0, 0, 0]])


# -- audits --------------------------------------------------------------------------------

def test_audits_on_random_instances():
    rng = random.Random(8)
    for _ in range(60):
        inst = random_audit_instance(rng)
        for res in (audit_fa1(inst.system, inst.f, inst.w),
                    audit_fap(inst.system, inst.f, inst.w, 2, F(3, 2)),
                    audit_fap(inst.system, inst.f, inst.w, 3, 2)):
            assert res.passed


def test_audit_instances_are_reproducible():
    a = random_audit_instance(random.Random(9))
    b = random_audit_instance(random.Random(9))
    assert a.system == b.system and a.f == b.f and a.w == b.w
    for level_t, level in enumerate(a.system.maps, 1):
        assert len(level) <= min(2**level_t, 64)


def test_audit_fa1_on_rotation():
    sys = SystemModel.rotation(F(2, 9))
    res = audit_fa1(sys, indicator(CIRCLE, 0, F(1, 3)), WeightSequence.from_tag("reciprocal-t", 6),
                    TimeSequence.power(2))
    assert res.passed and res.ratio <= 1


def test_audit_fap_bad_exponents():
    inst = random_audit_instance(random.Random(10))
    with pytest.raises(DomainError):
        audit_fap(inst.system, inst.f, inst.w, 2, 2)


# -- refine and level decomposition ---------------------------------------------------------------

def test_refine_subset_drops_small_averages():
    f = indicator(CIRCLE, 0, F(1, 4), 4)
    big = f
    small = constant(CIRCLE, F(1, 100))
    res = refine_subset({1: big, 2: small, 3: big}, f, F(1, 2), 2)
    assert res.J_prime == [1, 3]
    assert all(a.passed for a in res.assertions)


def test_refine_recomputes_oversized_constant():
    f = indicator(CIRCLE, 0, F(1, 2))
    res = refine_subset({1: f, 2: f}, f, 5, 1)
    assert res.recomputed and res.C_p == F(1, 2)
    with pytest.raises(DomainError):
        refine_subset({}, f, 1, 1)


def test_equi_parameters():
    L, s = equi_parameters(F(1, 2), 2)
    assert L == 1024
    assert s ** 1 >= 8 * L and (s - 1) < 8 * L
    L3, s3 = equi_parameters(F(1, 2), 3)
    assert s3**2 >= 8 * L3 and (s3 - 1) ** 2 < 8 * L3
    with pytest.raises(DomainError):
        equi_parameters(1, 2)
    with pytest.raises(DomainError):
        equi_parameters(F(1, 2), 1)


def test_level_decompose_example():
    sys = SystemModel.rotation(F(1, 8))
    f = from_cells(CIRCLE, [0, F(1, 8), F(1, 2)], [F(1), F(3), F(0)])
    res = level_decompose(sys, f, [1, 2, 3, 4], 2, F(1, 2), 2)
    assert res.R == res.s**2
    assert all(a.passed for a in res.assertions)
    # the sets E^k partition the support of Af
    support = map_values(res.Af, lambda v: F(1) if v > 0 else F(0))
    assert sum(integral(e) for e in res.E.values()) == integral(support)
    assert res.rho_exceed_measure is not None and res.rho_exceed_measure >= 0
