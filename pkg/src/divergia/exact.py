"""Small exact-arithmetic helpers: rational parsing, exact rational powers,
and the bridge between mpmath values and Fractions."""

from __future__ import annotations

import math
import os
import sys
from contextlib import contextmanager
from fractions import Fraction

import mpmath

# Constructions carry integers with tens of thousands of digits through JSON.
if hasattr(sys, "set_int_max_str_digits"):
    sys.set_int_max_str_digits(0)

DEFAULT_DIGITS = 30


def precision_digits() -> int:
    """Working precision for every floating/interval computation (DIVERGIA_PRECISION_DIGITS)."""
    raw = os.environ.get("DIVERGIA_PRECISION_DIGITS")
    if raw is None:
        return DEFAULT_DIGITS
    digits = int(raw)
    if digits < 15:
        raise ValueError("DIVERGIA_PRECISION_DIGITS must be at least 15")
    return digits


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, mpmath.mpf):
        return mpf_to_fraction(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


def fmt(q) -> str:
    """Serialize a rational as 'p/q' (or 'p' for integers)."""
    q = as_fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def mpf_to_fraction(x: mpmath.mpf) -> Fraction:
    """Exact value of a binary mpf."""
    if not mpmath.isfinite(x):
        raise ValueError("non-finite value")
    man, exp = mpmath.mpf(x).man_exp
    if man == 0:
        return Fraction(0)
    man = int(man)
    exp = int(exp)
    if exp >= 0:
        return Fraction(man << exp)
    return Fraction(man, 1 << -exp)


def to_mpf(q) -> mpmath.mpf:
    q = as_fraction(q)
    return mpmath.mpf(q.numerator) / q.denominator


def integer_root(n: int, k: int) -> int | None:
    """Exact k-th root of a nonnegative integer, or None."""
    if n < 0:
        return None
    if n in (0, 1):
        return n
    r = round(n ** (1.0 / k)) if n.bit_length() < 1000 else None
    if r is None:
        # Newton iteration on integers for big inputs.
        r = 1 << ((n.bit_length() + k - 1) // k)
        while True:
            s = ((k - 1) * r + n // r ** (k - 1)) // k
            if s >= r:
                break
            r = s
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**k == n:
            return cand
    return None


def rpow_exact(x, p) -> Fraction | None:
    """x**p as an exact Fraction when it is rational, else None (x >= 0, p rational)."""
    x = as_fraction(x)
    p = as_fraction(p)
    if x < 0:
        raise ValueError("negative base")
    if x == 0:
        return Fraction(0) if p > 0 else None
    a, b = p.numerator, p.denominator
    if b == 1:
        return x**a
    num = integer_root(x.numerator, b)
    den = integer_root(x.denominator, b)
    if num is None or den is None:
        return None
    return Fraction(num, den) ** a


def rpow_mp(x, p) -> mpmath.mpf:
    return mpmath.power(to_mpf(x), to_mpf(p))


def rpow(x, p):
    """Exact Fraction when possible, else an mpf at working precision."""
    exact = rpow_exact(x, p)
    if exact is not None:
        return exact
    with mpmath.workdps(precision_digits() + 10):
        return rpow_mp(x, p)


def power_product_cmp(base: Fraction, p: Fraction, factor: Fraction, target: Fraction) -> int:
    """Sign of base**p * factor - target, exactly, for nonnegative rationals.

    With p = a/b this compares base**a * factor**b against target**b.
    """
    base, p, factor, target = map(as_fraction, (base, p, factor, target))
    if min(base, factor, target) < 0 or p <= 0:
        raise ValueError("power_product_cmp needs nonnegative operands and p > 0")
    a, b = p.numerator, p.denominator
    lhs = base**a * factor**b
    rhs = target**b
    return (lhs > rhs) - (lhs < rhs)


def lcm(*values: int) -> int:
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def rationalize(x, digits: int | None = None) -> Fraction:
    """Round a real (mpf or expression) to a binary rational carrying `digits` significant digits."""
    digits = digits or precision_digits()
    with mpmath.workdps(digits):
        return mpf_to_fraction(+mpmath.mpf(x))


@contextmanager
def iv_precision(digits: int | None = None):
    """Temporarily set the interval context's working precision."""
    old = mpmath.iv.prec
    mpmath.iv.dps = digits or precision_digits() + 10
    try:
        yield
    finally:
        mpmath.iv.prec = old
