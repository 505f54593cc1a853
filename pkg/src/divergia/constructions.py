"""Time sequences and the explicit divergence constructions.

Four builders produce a `ConstructionPlan` (a system, a function, the
bookkeeping and a claimed bound that replays bit-exactly):

* build_ubL1 / build_ubLp: a flow whose orbit along a lacunary sequence is
  steered into prescribed residue classes by the nested-interval solver;
* build_infection: a base-k digit string for alpha that "infects" every
  period-n0 interval at some dyadic time;
* build_sumset: the integer sumset instance for the powers k^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath
import numpy as np

from .dynsys import (
    Assertion,
    AverageOracle,
    DigitReal,
    MaximalReport,
    SystemModel,
    max_over_levels,
    maximal_profile,
    sweep_levels,
)
from .errors import BoundViolation, DomainError, HorizonTooSmall, ReplayMismatch, ResourceGuard
from .exact import as_fraction, fmt, iv_precision, power_product_cmp, precision_digits
from .measure import Domain, StepFunction, constant, distribution, indicator, norms, norms_from_distribution
from .sequences import Sqrt, TimeSequence, squarefree_upto
from .weights import WeightSequence

__all__ = [
    "TimeSequence", "materialize", "LacunarityProfile", "lacunarity_profile", "RefinedSubsequence",
    "refine_bounded_gaps", "PowerTerms", "ResidueProblem", "ResidueSolution", "solve_residues",
    "solve_residues_dense", "ConstructionPlan", "build_ubL1", "build_ubLp", "infection_n0",
    "infection_sums", "build_infection", "SumsetInstance", "build_sumset", "sumset_plan", "replay",
]


def materialize(seq: TimeSequence, N: int) -> list:
    if N < 1:
        raise DomainError("N must be at least 1")
    return seq.materialize(N)


# -- lacunarity diagnostics --------------------------------------------------

@dataclass
class LacunarityProfile:
    eps: Fraction
    n: list[int]
    ratio: list[mpmath.mpf]
    over_power: list[mpmath.mpf]  # (a_{n+1}/a_n) / n^eps
    over_log: list[mpmath.mpf | None]  # (a_{n+1}/a_n) / (ln n)^eps; None at n = 1
    power_trend: str
    log_trend: str

    def to_json(self) -> dict:
        s = lambda v: None if v is None else mpmath.nstr(v, 15)
        return {"eps": fmt(self.eps), "n": self.n, "ratio": [s(v) for v in self.ratio],
                "over_power": [s(v) for v in self.over_power], "over_log": [s(v) for v in self.over_log],
                "power_trend": self.power_trend, "log_trend": self.log_trend}


def _trend(values: list) -> str:
    """'grows' when the minimum over the last half exceeds twice the minimum over the first half."""
    vals = [v for v in values if v is not None]
    half = len(vals) // 2
    if half == 0:
        return "fails"
    return "grows" if min(vals[half:]) > 2 * min(vals[:half]) else "fails"


def lacunarity_profile(seq: TimeSequence, eps, N: int) -> LacunarityProfile:
    if N < 3:
        raise DomainError("N must be at least 3")
    eps = as_fraction(eps)
    e = mpmath.mpf(eps.numerator) / eps.denominator
    terms = seq.materialize(N)
    ns, ratios, over_p, over_l = [], [], [], []
    with mpmath.workdps(precision_digits()):
        for n in range(1, N):
            a, b = terms[n - 1], terms[n]
            if isinstance(a, Sqrt):
                r = mpmath.sqrt(mpmath.mpf(b.radicand) / a.radicand)
            else:
                q = Fraction(b) / Fraction(a)
                r = mpmath.mpf(q.numerator) / q.denominator
            ns.append(n)
            ratios.append(r)
            over_p.append(r / mpmath.power(n, e))
            over_l.append(None if n == 1 else r / mpmath.power(mpmath.log(n), e))
    return LacunarityProfile(eps, ns, ratios, over_p, over_l, _trend(over_p), _trend(over_l))


@dataclass
class RefinedSubsequence:
    indices: list[int]  # 1-based indices into the original sequence
    terms: list
    gap: int  # largest gap between kept indices
    ok: bool
    failed_at: int | None = None


def refine_bounded_gaps(seq, target: Callable[[int], object], N: int, window: int = 2) -> RefinedSubsequence:
    """Greedily keep a_j whenever a_j / (last kept) > target(number kept so far),
    looking at most `window` indices ahead of the last kept term."""
    terms = seq.materialize(N) if isinstance(seq, TimeSequence) else list(seq)[:N]
    vals = [Fraction(t) if not isinstance(t, Sqrt) else t for t in terms]
    if any(not (vals[i] < vals[i + 1]) for i in range(len(vals) - 1)):
        raise DomainError("sequence must be strictly increasing")
    kept, gap = [1], 0
    i = 1
    while True:
        nxt = None
        for j in range(i + 1, min(i + window, N) + 1):
            a, b = vals[i - 1], vals[j - 1]
            ratio = (mpmath.sqrt(mpmath.mpf(b.radicand) / a.radicand) if isinstance(a, Sqrt)
                     else b / a)
            if ratio > target(len(kept)):
                nxt = j
                break
        if nxt is None:
            if i + window <= N:
                return RefinedSubsequence(kept, [terms[k - 1] for k in kept], gap, False, i)
            break
        gap = max(gap, nxt - i)
        kept.append(nxt)
        i = nxt
    return RefinedSubsequence(kept, [terms[k - 1] for k in kept], gap, True)


# -- the nested-interval residue solver --------------------------------------

@dataclass(frozen=True)
class PowerTerms:
    """The terms base**e for the listed increasing exponents, without materializing them."""

    base: int
    exponents: tuple[int, ...]

    def __len__(self):
        return len(self.exponents)

    def __getitem__(self, i):
        return self.base ** self.exponents[i]


@dataclass
class ResidueProblem:
    """Find alpha with floor(K * frac(alpha b_i)) = r_i for i = 1..n."""

    K: int
    terms: Sequence  # list of positive rationals, or PowerTerms
    targets: Sequence[int]

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be positive")
        if len(self.terms) != len(self.targets) or not self.targets:
            raise DomainError("need one target per term and at least one term")
        if any(not 0 <= r < self.K for r in self.targets):
            raise DomainError("targets must lie in 0..K-1")
        if not isinstance(self.terms, PowerTerms):
            self.terms = [as_fraction(b) for b in self.terms]
            if any(b <= 0 for b in self.terms):
                raise DomainError("terms must be positive")

    @property
    def n(self) -> int:
        return len(self.targets)

    def check_lacunarity(self):
        bound = 2 * self.K
        if isinstance(self.terms, PowerTerms):
            e = self.terms.exponents
            steps = [b - a for a, b in zip(e, e[1:])]
            if any(s < 1 for s in steps):
                raise DomainError("exponents must increase")
            if len(e) > 1 and self.terms.base ** min(steps) <= bound:
                raise DomainError(f"lacunarity fails: ratio {self.terms.base}^{min(steps)} <= 2K = {bound}")
            return
        for i, (a, b) in enumerate(zip(self.terms, self.terms[1:]), start=1):
            if b / a <= bound:
                raise DomainError(f"lacunarity fails at i = {i}: b_{i + 1}/b_{i} = {fmt(b / a)} <= 2K = {bound}")


@dataclass
class ResidueSolution:
    lo: Fraction
    hi: Fraction
    alpha: Fraction  # the midpoint
    certificate: list[Fraction] | None  # frac(alpha b_i), omitted for very long problems
    verified: bool

    def to_json(self) -> dict:
        return {"lo": fmt(self.lo), "hi": fmt(self.hi), "alpha": fmt(self.alpha), "verified": self.verified,
                "certificate": None if self.certificate is None else [fmt(c) for c in self.certificate]}


CERTIFICATE_BITS = 1 << 24


def _integer_ratios(prob: ResidueProblem) -> list[int] | None:
    t = prob.terms
    if isinstance(t, PowerTerms):
        return [t.base ** (b - a) for a, b in zip(t.exponents, t.exponents[1:])]
    out = []
    for a, b in zip(t, t[1:]):
        q = b / a
        if q.denominator != 1:
            return None
        out.append(q.numerator)
    return out


def solve_residues(prob: ResidueProblem, certify: bool | None = None) -> ResidueSolution:
    """Nested intervals: after step i, alpha in I_i forces the first i residues.

    With integer ratios q_i = b_{i+1}/b_i the interval is [u, u+1)/(K b_i) and
    the next u is the least u' >= u q_i with u' = r_{i+1} (mod K); the
    containment u'+1 <= (u+1) q_i is the lacunarity step and is re-checked.
    """
    prob.check_lacunarity()
    K, r = prob.K, list(prob.targets)
    b1 = prob.terms[0]
    ratios = _integer_ratios(prob)
    if ratios is not None:
        u = r[0]
        for q, rt in zip(ratios, r[1:]):
            base = u * q
            nu = base + (rt - base) % K
            if nu + 1 > (u + 1) * q:
                raise BoundViolation("nested-interval containment failed")
            u = nu
        bl = prob.terms[len(prob.terms) - 1]
        bl = Fraction(bl)
        lo, hi = Fraction(u) / (K * bl), Fraction(u + 1) / (K * bl)
    else:
        b = prob.terms
        lo, hi = Fraction(r[0]) / (K * b[0]), Fraction(r[0] + 1) / (K * b[0])
        for bi, rt in zip(b[1:], r[1:]):
            m = math.ceil(lo * bi - Fraction(rt, K))
            nlo = (m + Fraction(rt, K)) / bi
            nhi = (m + Fraction(rt + 1, K)) / bi
            if nlo < lo or nhi > hi:
                raise BoundViolation("nested-interval containment failed")
            lo, hi = nlo, nhi
    alpha = (lo + hi) / 2
    if certify is None:
        certify = prob.n * alpha.denominator.bit_length() <= CERTIFICATE_BITS
    cert = _certificate(prob, alpha, keep=certify)
    return ResidueSolution(lo, hi, alpha, cert, True)


def _certificate(prob: ResidueProblem, alpha: Fraction, keep: bool) -> list[Fraction] | None:
    """frac(alpha b_i) for every i, checked against the targets."""
    K = prob.K
    out = [] if keep else None
    t = prob.terms
    if isinstance(t, PowerTerms):
        P, Q = alpha.numerator, alpha.denominator
        X = (P * t[0]) % Q
        prev = t.exponents[0]
        for i, e in enumerate(t.exponents):
            if i:
                X = (X * pow(t.base, e - prev, Q)) % Q
                prev = e
            if (K * X) // Q != prob.targets[i]:
                raise BoundViolation(f"certificate fails at term {i + 1}")
            if keep:
                out.append(Fraction(X, Q))
        return out
    for i, b in enumerate(t):
        v = (alpha * b) % 1
        if math.floor(K * v) != prob.targets[i]:
            raise BoundViolation(f"certificate fails at term {i + 1}")
        if keep:
            out.append(v)
    return out


def solve_residues_dense(K: int, radicands: Sequence[int], targets: Sequence[int], max_level: int = 24,
                         alpha_max: int = 1) -> tuple[Fraction, list]:
    """Grid search for alpha with floor(K frac(alpha sqrt(s_i))) = r_i.

    The sqrt(s_i) of distinct squarefree s_i are rationally independent, so
    the orbit is dense in the torus and a dyadic grid eventually hits the
    target box.  Every acceptance is certified with interval arithmetic.
    Returns (alpha, intervals containing alpha sqrt(s_i) mod 1).
    """
    if len(radicands) != len(targets) or not targets:
        raise DomainError("need one target per radicand")
    if any(not 0 <= r < K for r in targets):
        raise DomainError("targets must lie in 0..K-1")
    with iv_precision():
        roots = [mpmath.iv.sqrt(mpmath.iv.mpf(s)) for s in radicands]
        for level in range(1, max_level + 1):
            step = 2**level
            start = 1 if level == 1 else 1
            stride = 1 if level == 1 else 2  # odd numerators are the new grid points
            for m in range(start, alpha_max * step, stride):
                a = mpmath.iv.mpf(m) / step
                fracs = []
                for root, rt in zip(roots, targets):
                    v = a * root
                    fl = mpmath.floor(v.a)
                    if mpmath.floor(v.b) != fl:
                        break
                    fr = v - fl
                    cls = K * fr
                    if mpmath.floor(cls.a) != mpmath.floor(cls.b) or int(mpmath.floor(cls.a)) != rt:
                        break
                    fracs.append(fr)
                else:
                    return Fraction(m, step), fracs
    raise HorizonTooSmall(f"no grid point up to level {max_level} meets the targets")


# -- plans ---------------------------------------------------------------------

@dataclass
class ConstructionPlan:
    """Everything needed to re-run a construction and re-check its bound.

    claimed_bound is a certified lower bound whose meaning is recorded in
    bookkeeping["claimed_bound_meaning"].
    """

    name: str
    params: dict
    system: SystemModel | None
    f: StepFunction | None
    w: WeightSequence | None
    bookkeeping: dict
    claimed_bound: Fraction
    assertions: list[Assertion]
    report: MaximalReport | None = None

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    @property
    def replay_script(self) -> str:
        return "divergia replay <plan.json>"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "system": None if self.system is None else self.system.to_json(),
            "f": None if self.f is None else self.f.to_json(),
            "w": None if self.w is None else self.w.to_json(),
            "bookkeeping": _jsonable(self.bookkeeping),
            "claimed_bound": fmt(self.claimed_bound),
            "assertions": [a.to_json() for a in self.assertions],
            "report": None if self.report is None else self.report.to_json(),
            "replay": self.replay_script,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ConstructionPlan":
        return cls(
            name=data["name"],
            params=data["params"],
            system=None if data.get("system") is None else SystemModel.from_json(data["system"]),
            f=None if data.get("f") is None else StepFunction.from_json(data["f"]),
            w=None if data.get("w") is None else WeightSequence.from_json(data["w"]),
            bookkeeping=data.get("bookkeeping", {}),
            claimed_bound=Fraction(data["claimed_bound"]),
            assertions=[Assertion(a["name"], a["bound"], a["achieved"], a["pass"]) for a in data.get("assertions", [])],
        )


def _jsonable(x):
    if isinstance(x, Fraction):
        return fmt(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _seq_or_default(seq, K: int) -> TimeSequence:
    if seq is None:
        return TimeSequence.power(2 * K + 1)
    if isinstance(seq, dict):
        seq = TimeSequence.from_json(seq)
    return seq


def _residue_problem(K: int, seq: TimeSequence, indices: list[int], targets: list[int]) -> ResidueProblem:
    if seq.kind == "power":
        return ResidueProblem(K, PowerTerms(seq.base, tuple(indices)), targets)
    if not seq.is_integer:
        raise DomainError("residue solving needs an integer sequence here (see solve_residues_dense for roots)")
    terms = seq.materialize(max(indices))
    return ResidueProblem(K, [terms[n - 1] for n in indices], targets)


# -- unbounded weak (1,1) constants ----------------------------------------

def ubl1_sum(w: WeightSequence, N: int) -> Fraction:
    return sum((w[t] for t in range(1, w.horizon + 1)
                if Fraction(1, N) < w[t] < Fraction(2**t, 4 * N)), Fraction(0))


def build_ubL1(w: WeightSequence, M: int, seq: TimeSequence | None = None, n0: int = 1,
               N_max: int = 10**5) -> ConstructionPlan:
    """f = 2N 1_[0, 2/K) and the flow x -> x + beta a_n with sup_t w_t A_t^block f >= 1 everywhere."""
    if M < 1:
        raise DomainError("M must be a positive integer")
    best = (None, Fraction(-1))
    N = None
    w_min = min(w.values)
    for cand in range(max(1, n0), N_max + 1):
        s = ubl1_sum(w, cand)
        if s > best[1]:
            best = (cand, s)
        if s > 3 * M:
            N = cand
            break
        # past 1/N < min w only the upper cut binds, so the sum can no longer grow
        if Fraction(1, cand) < w_min:
            break
    if N is None:
        raise HorizonTooSmall(f"no N with the weight sum above 3M = {3 * M} at horizon {w.horizon}; "
                              f"largest sum {fmt(best[1])} at N = {best[0]}", best)
    K = N * M
    U = [t for t in range(1, w.horizon + 1)
         if 2**t > 2 * N and Fraction(1, N) < w[t] < Fraction(2**t, 4 * N)]
    sum_U = sum((w[t] for t in U), Fraction(0))
    seq = _seq_or_default(seq, K)

    classes: dict[int, list[int]] = {}
    heights: dict[int, int] = {}
    pointer = 0
    for t in U:
        if pointer >= K:
            break
        h = -(-(2 ** (t - 1)) // (N * w[t]))  # ceil(2^(t-1) / (N w_t))
        h = int(h)
        q = min(math.floor(N * w[t]), 2 ** (t - 1) // h, K)
        classes[t] = [(pointer + i) % K for i in range(q)]
        heights[t] = h
        pointer += q
    covered = set(c for cs in classes.values() for c in cs)
    if len(covered) < K:
        raise HorizonTooSmall(f"residue classes cover only {len(covered)} of K = {K}", len(covered))

    indices, targets = [], []
    for t, cs in classes.items():
        start = 2 ** (t - 1) + 1
        for i, c in enumerate(cs):
            for n in range(start + i * heights[t], start + (i + 1) * heights[t]):
                indices.append(n)
                targets.append(c)
    sol = solve_residues(_residue_problem(K, seq, indices, targets))
    beta = sol.alpha
    system = SystemModel.flow(beta)
    f = indicator(Domain.circle(1), 0, Fraction(2, K), 2 * N)
    T = max(U) if U else w.horizon
    T = max(T, max(classes))

    assertions = []
    f_norm = norms(f, 1).strong_p
    assertions.append(Assertion("norm_f_1 == 4/M", Fraction(4, M), f_norm, f_norm == Fraction(4, M)))
    _, block = maximal_profile(system, f, seq, w, T=T, mode="block_sum", materialize=False)
    mu_block = block.distribution.at_least(1)
    assertions.append(Assertion("measure{sup_t w_t A_t^block f >= 1} == 1", Fraction(1), mu_block, mu_block == 1))
    _, full = maximal_profile(system, f, seq, w, T=T, mode="full", ps=(1,), materialize=False)
    mu_full = full.distribution.at_least(1)
    assertions.append(Assertion("measure{sup_t w_t A_t f >= 1} == 1", Fraction(1), mu_full, mu_full == 1))
    ratio = full.max_norms[Fraction(1)].weak_p / f_norm
    claimed = Fraction(M, 4)
    assertions.append(Assertion("weak-(1,1) ratio >= M/4", claimed, ratio, ratio >= claimed))
    lhs = mu_block * 1
    assertions.append(Assertion("1 >= (M/4) * norm_f_1", Fraction(M, 4) * f_norm, lhs, lhs >= Fraction(M, 4) * f_norm))

    book = {
        "N": N, "K": K, "M": M, "U": U, "sum_U": sum_U, "ycond_sum": ubl1_sum(w, N),
        "residue_classes": {t: cs for t, cs in classes.items()}, "heights": heights,
        "alpha": beta, "residue_interval": [sol.lo, sol.hi], "terms_constrained": len(indices),
        "sequence": seq.to_json(), "strict": ratio > claimed,
        "claimed_bound_meaning": "lower bound for ||sup_t w_t A_t f||_{1,inf} / ||f||_1",
    }
    params = {"w": w.to_json(), "M": M, "seq": None if seq is None else seq.to_json(), "n0": n0}
    return ConstructionPlan("ubl1", params, system, f, w, book, claimed, assertions, full)


# -- unbounded weak (p,p) constants ----------------------------------------

def build_ubLp(J: Sequence[int], p, n0: int = 1, seq: TimeSequence | None = None) -> ConstructionPlan:
    """max_{j in J} A_j f >= 1 on the whole circle for f = 2 * 1_[0, 2/K).

    The claimed bound is the p-th power of the weak norm lower bound,
    |J|/(2K); against ||f||_p^p = 2^(p+1)/K this is the constant
    2^(-1-2/p) |J|^(1/p).
    """
    J = sorted(set(int(j) for j in J))
    if not J:
        raise DomainError("J must be nonempty")
    if J[0] < 1:
        raise DomainError("levels in J start at 1")
    p = as_fraction(p)
    if p < 1:
        raise DomainError("p must be at least 1")
    size = len(J)
    params = {"J": J, "p": fmt(p), "n0": n0, "seq": None if seq is None else seq.to_json()}
    assertions = []
    if size <= 2 * n0:
        system = SystemModel.rotation(0)
        f = constant(Domain.circle(1), 1)
        _, rep = max_over_levels(system, f, TimeSequence.power(2), J, ps=(p,))
        claimed = Fraction(size, 2 * n0)
        weak_p = rep.max_norms[p].weak_p
        ok = rep.max_norms[p].weak_ge(claimed)
        assertions.append(Assertion("weak_p^p >= |J|/(2 n0) * norm_f_p^p", claimed, weak_p, ok))
        book = {"branch": "constant", "J": J, "n0": n0,
                "claimed_bound_meaning": "lower bound for ||max_j A_j f||_{p,inf}^p with ||f||_p = 1"}
        return ConstructionPlan("ublp", params, system, f, None, book, claimed, assertions, rep)

    K = size // 2
    Jp = [j for j in J if 2 * j >= size][:K]
    if len(Jp) < K:
        raise DomainError("J has fewer than |J|/2 elements above |J|/2")
    seq = _seq_or_default(seq, K)
    indices, targets = [], []
    for ell, j in enumerate(Jp):
        lo = 2 ** (j - 1) + 1 if j >= 1 else 1
        for n in range(lo, 2**j + 1):
            indices.append(n)
            targets.append(ell)
    sol = solve_residues(_residue_problem(K, seq, indices, targets))
    system = SystemModel.rotation(sol.alpha, direction=-1)
    f = indicator(Domain.circle(1), 0, Fraction(2, K), 2)
    _, rep = max_over_levels(system, f, seq, J, mode="full", ps=(p,), materialize=False)

    dist_f = dict(distribution(f))
    f_ok = dist_f.get(Fraction(2)) == Fraction(2, K)
    assertions.append(Assertion("norm_f_p^p == 2^(p+1)/K (mu{f = 2} = 2/K)", Fraction(2, K),
                                dist_f.get(Fraction(2), Fraction(0)), f_ok))
    covered = rep.distribution.at_least(1)
    assertions.append(Assertion("measure{max_j A_j f >= 1} == 1", Fraction(1), covered, covered == 1))
    claimed = Fraction(size, 2 * K)
    mx = rep.max_norms[p]
    ok = mx.weak_ge(claimed)
    assertions.append(Assertion("weak_p^p >= 2^(-p-2) |J| norm_f_p^p = |J|/(2K)", claimed, mx.weak_p, ok))
    book = {"branch": "residues", "J": J, "J_prime": Jp, "K": K, "N": K, "n0": n0, "alpha": sol.alpha,
            "residue_interval": [sol.lo, sol.hi], "sequence": seq.to_json(), "terms_constrained": len(indices),
            "claimed_bound_meaning": "lower bound for ||max_j A_j f||_{p,inf}^p; ||f||_p^p = 2^(p+1)/K"}
    return ConstructionPlan("ublp", params, system, f, None, book, claimed, assertions, rep)


# -- base-k infection ----------------------------------------------------------

def infection_n0(k: int, y: int) -> int:
    """floor(2y log_k 2): the largest n with k^n <= 4^y."""
    if k < 2 or y < 1:
        raise DomainError("need k >= 2 and y >= 1")
    n, target = 0, 4**y
    while k ** (n + 1) <= target:
        n += 1
    return n


def _band_sum(w: WeightSequence, lower: Fraction, y: int) -> Fraction:
    total = Fraction(0)
    for t in range(1, w.horizon + 1):
        wt = w[t]
        if lower < wt and wt * 2**y < 2**t:
            total += wt
    return total


def infection_sums(w: WeightSequence, y: int, k: int = 2) -> dict:
    """m_y, l_y and l_{2y} over the available horizon, and the inequality l_y + l_2y > m_y - 9."""
    m_y = _band_sum(w, Fraction(1, 2**y), y)
    l_y = _band_sum(w, Fraction(8 * infection_n0(k, y), 2**y), y)
    l_2y = _band_sum(w, Fraction(8 * infection_n0(k, 2 * y), 2 ** (2 * y)), 2 * y)
    return {"m_y": m_y, "l_y": l_y, "l_2y": l_2y, "holds": l_y + l_2y > m_y - 9}


def _necklace_classes(k: int, n0: int) -> list[list[int]]:
    """Least rotations of the words of exact period n0, in increasing value."""
    reps = []
    for v in range(k**n0):
        word = []
        x = v
        for _ in range(n0):
            word.append(x % k)
            x //= k
        word.reverse()
        rots = [word[r:] + word[:r] for r in range(n0)]
        if len(set(map(tuple, rots))) < n0:
            continue
        if word == min(rots):
            reps.append(word)
    return reps


def _word_value(word: Sequence[int], k: int) -> int:
    v = 0
    for d in word:
        v = v * k + d
    return v


def _min_on(g: StepFunction, a: Fraction, b: Fraction) -> Fraction:
    """Minimum of g over [a, b) inside one period (a < b)."""
    vals = [v for lo, hi, v in g.cells() if lo < b and hi > a]
    return min(vals)


def build_infection(k: int, w: WeightSequence, y: int, T: int, probe_eps_bits: int = 24) -> ConstructionPlan:
    """Digits of alpha in base k, filled block by block so that each period-n0
    interval I_B sees w_t 2^-t sum_{2^(t-1) < n <= 2^t} f(x - k^n alpha) > 1."""
    if T > w.horizon:
        raise DomainError("T exceeds the weight horizon")
    n0 = infection_n0(k, y)
    if n0 * 2**T > 10**8 or k**n0 > 10**7:
        raise ResourceGuard(f"infection instance too large (n0 = {n0}, T = {T})")
    if n0 < 1:
        raise DomainError("n0 = 0: y too small for this base")
    P = k**n0 - 1
    delta = Fraction(1, P)
    f = indicator(Domain.circle(1), -delta, 2 * delta, 2**y)
    classes = _necklace_classes(k, n0)
    lower = Fraction(8 * n0, 2**y)
    qualifying = [t for t in range(1, T + 1) if lower < w[t] and w[t] * 2**y < 2**t]

    D = 2**T + 2 * n0
    digits = [0] * D
    placed = []  # (class index, t, first digit index)
    ci = 0
    saturated = False
    reps: dict[int, int] = {}
    for t in qualifying:
        h = math.floor(Fraction(2**t, 2**y) / w[t]) + 1
        R = h + 1
        reps[t] = R
        pos, end = 2 ** (t - 1), 2**t
        width = R * n0
        while ci < len(classes) and pos + width <= end:
            word = classes[ci]
            for rep in range(R):
                digits[pos + rep * n0: pos + (rep + 1) * n0] = word
            placed.append((ci, t, pos))
            pos += width
            ci += 1
        if ci == len(classes):
            saturated = True
            break
    alpha = DigitReal(k, tuple(digits), reserve=2 * n0)
    system = SystemModel.digit_rotation(alpha, direction=-1)
    seq = TimeSequence.power(k)

    infected = []  # (t, interval value V)
    for c, t, _ in placed:
        word = classes[c]
        for r in range(n0):
            infected.append((t, _word_value(word[r:] + word[:r], k)))
    infected_measure = len(infected) * delta
    f_l1 = 3 * delta * 2**y

    assertions = []
    sums = infection_sums(w, y, k)
    assertions.append(Assertion("l_y + l_2y > m_y - 9", sums["m_y"] - 9, sums["l_y"] + sums["l_2y"], sums["holds"]))

    # direct oracle at the left endpoint, left + eps, midpoint and right - eps
    eps = delta / 2**probe_eps_bits
    agree = 0
    probes = 0
    failures = []
    oracles = {}
    for t, V in infected:
        if t not in oracles:
            oracles[t] = AverageOracle(system, f, seq, t, mode="block_sum")
        A = oracles[t]
        a, b = V * delta, (V + 1) * delta
        for x in (a, a + eps, (a + b) / 2, b - eps):
            probes += 1
            if w[t] * A(x) > 1:
                agree += 1
            elif len(failures) < 10:
                failures.append([t, fmt(x)])
    assertions.append(Assertion("oracle agreement on infected intervals", probes, agree, agree == probes))

    report = None
    if qualifying:
        sup_block = sweep_levels(system, f, seq, [(t, w[t]) for t in qualifying], "block_sum", True).function
        contained = all(_min_on(sup_block, V * delta, (V + 1) * delta) > 1 for _, V in infected)
        assertions.append(Assertion("infected intervals inside the swept exceedance set", True, contained, contained))
        _, report = maximal_profile(system, f, seq, w, T=T, mode="full", materialize=False)
        exceed = report.distribution.at_least(1, strict=True)
        assertions.append(Assertion("measure{sup_t w_t A_t f > 1} >= infected measure", infected_measure,
                                    exceed, exceed >= infected_measure))
    claimed = infected_measure / f_l1
    book = {
        "k": k, "y": y, "T": T, "n0": n0, "classes": len(classes), "classes_infected": len(placed),
        "qualifying_t": qualifying, "repetitions": reps, "saturated": saturated, "empty": not qualifying,
        "infected_intervals": len(infected), "infected": [[t, V] for t, V in infected],
        "infected_measure": infected_measure, "norm_f_1": f_l1,
        "m_y": sums["m_y"], "l_y": sums["l_y"], "l_2y": sums["l_2y"], "oracle_failures": failures,
        "claimed_bound_meaning": "lower bound for ||sup_t w_t A_t f||_{1,inf} / ||f||_1 (level 1, infected set)",
    }
    params = {"k": k, "w": w.to_json(), "y": y, "T": T}
    return ConstructionPlan("infection", params, system, f, w, book, claimed, assertions, report)


# -- sumset construction -----------------------------------------------------

SUMSET_GUARD = 10**7


@dataclass
class SumsetInstance:
    k: int
    J: list[int]
    B_parts: list[np.ndarray]
    C_parts: list[np.ndarray]
    B: np.ndarray
    C: np.ndarray
    window: tuple[int, int]  # x ranges over [lo, hi]
    assertions: list[Assertion] = field(default_factory=list)
    sup_levels: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def f(self, x: int) -> int:
        i = np.searchsorted(self.B, x)
        return int(i < len(self.B) and self.B[i] == x)

    def to_json(self) -> dict:
        return {"k": self.k, "J": self.J, "size_B": int(len(self.B)), "size_C": int(len(self.C)),
                "parts_B": [[int(p[0]), int(p[-1]), int(len(p))] for p in self.B_parts],
                "window": list(self.window), "levels": self.sup_levels,
                "assertions": [a.to_json() for a in self.assertions]}


def _sumset(parts: list[np.ndarray]) -> tuple[np.ndarray, int]:
    total = np.zeros(1, dtype=np.int64)
    count = 1
    for part in parts:
        total = np.add.outer(total, part).ravel()
        count *= len(part)
    return total, count


def build_sumset(k: int, J: Sequence[int], p) -> tuple[SumsetInstance, MaximalReport]:
    J = sorted(set(int(j) for j in J))
    if k < 3:
        raise DomainError("the sumset construction needs k >= 3")
    if not J or J[0] < 0:
        raise DomainError("J must be a nonempty set of nonnegative integers")
    if any(b - a == 1 for a, b in zip(J, J[1:])):
        raise DomainError("J must contain no two consecutive integers")
    p = as_fraction(p)
    size = 1
    for j in J:
        size *= k ** (2 ** (j + 1))
    if size > SUMSET_GUARD:
        raise ResourceGuard(f"|B| = {size} exceeds the guard {SUMSET_GUARD}")
    top = k ** (2 ** (J[-1] + 1))
    if top + size * top > 2**62:
        raise ResourceGuard("sumset values exceed 64-bit range")

    Bp = [(k - 1) * k ** (2**j) * np.arange(1, k ** (2 ** (j + 1)) + 1, dtype=np.int64) for j in J]
    Cp = [(k - 1) * k ** (2**j) * np.arange(1, k ** (2 ** (j + 1)) - k ** (2**j) + 1, dtype=np.int64) for j in J]
    B_all, nB = _sumset(Bp)
    C_all, nC = _sumset(Cp)
    B = np.unique(B_all)
    C = np.unique(C_all)
    inst = SumsetInstance(k, J, Bp, Cp, B, C, (0, int(B[-1])))
    A = inst.assertions
    A.append(Assertion("unique decomposition", nB, int(len(B)), len(B) == nB))
    A.append(Assertion("|C| >= |B|/2", Fraction(len(B), 2), int(len(C)), 2 * len(C) >= len(B)))

    lo, hi = inst.window
    ext = hi + top + 1
    fa = np.zeros(ext + 1, dtype=np.uint8)
    fa[B] = 1
    xs = slice(lo, hi + 1)
    width = hi - lo + 1
    levels = [j + 1 for j in J]  # index convention: the block [2^j, 2^(j+1)) sits inside level j + 1
    inst.sup_levels = levels
    L = max(levels)
    best = np.zeros(width, dtype=np.int64)  # sup as a multiple of 2^-L
    counts_by_level = {}
    for lv in levels:
        cnt = np.zeros(width, dtype=np.int64)
        for n in range(1, 2**lv + 1):
            s = k**n
            cnt += fa[lo + s: hi + 1 + s]
        counts_by_level[lv] = cnt
        np.maximum(best, cnt << (L - lv), out=best)

    ok_half = True
    worst = None
    for j in J:
        pts = C - k ** (2**j)
        cnt = counts_by_level[j + 1][pts - lo]
        m = Fraction(int(cnt.min()), 2 ** (j + 1))
        worst = m if worst is None else min(worst, m)
        ok_half &= m >= Fraction(1, 2)
    A.append(Assertion("A f >= 1/2 on C - k^(2^j0)", Fraction(1, 2), worst, ok_half))

    disjoint = True
    shifted = [C - k ** (2**j) for j in J]
    for a in range(len(J)):
        for b in range(a + 1, len(J)):
            if np.intersect1d(shifted[a], shifted[b], assume_unique=True).size:
                disjoint = False
    A.append(Assertion("pairwise disjoint C - k^(2^j)", True, disjoint, disjoint))

    vals, mult = np.unique(best, return_counts=True)
    dist = [(Fraction(int(v), 2**L), Fraction(int(c))) for v, c in zip(vals, mult) if v > 0]
    f_dist = [(Fraction(1), Fraction(len(B)))]
    mx = norms_from_distribution(dist, p)
    target = Fraction(len(J) * len(B))
    ok = power_product_cmp(4 * mx.attaining_level, p, mx.level_measure, target) >= 0
    A.append(Assertion("weak_p^p >= |J| ||f||_p^p / 4^p", f"{len(J)}*{len(B)}/4^{fmt(p)}", mx.weak_p, ok))
    argmax = {}
    for lv in levels:
        argmax[lv] = Fraction(int(np.count_nonzero((counts_by_level[lv] << (L - lv)) == best)))
    report = MaximalReport("full", levels, dist, argmax, {p: norms_from_distribution(f_dist, p)}, {p: mx})
    return inst, report


def sumset_plan(k: int, J: Sequence[int], p) -> ConstructionPlan:
    inst, rep = build_sumset(k, J, p)
    claimed = Fraction(len(inst.J) * len(inst.C))
    book = {"k": k, "J": inst.J, "levels": inst.sup_levels, "size_B": int(len(inst.B)), "size_C": int(len(inst.C)),
            "window": list(inst.window),
            "claimed_bound_meaning": "counting measure of the certified set {sup_j A_j f >= 1/2}"}
    params = {"k": k, "J": inst.J, "p": fmt(as_fraction(p))}
    return ConstructionPlan("sumset", params, None, None, None, book, claimed, inst.assertions, rep)


# -- replay --------------------------------------------------------------------

def _rebuild(name: str, params: dict) -> ConstructionPlan:
    seq = params.get("seq")
    seq = None if seq is None else TimeSequence.from_json(seq)
    if name == "ubl1":
        return build_ubL1(WeightSequence.from_json(params["w"]), int(params["M"]), seq, int(params.get("n0", 1)))
    if name == "ublp":
        return build_ubLp(params["J"], Fraction(params["p"]), int(params.get("n0", 1)), seq)
    if name == "infection":
        return build_infection(int(params["k"]), WeightSequence.from_json(params["w"]), int(params["y"]),
                               int(params["T"]))
    if name == "sumset":
        return sumset_plan(int(params["k"]), params["J"], Fraction(params["p"]))
    raise DomainError(f"unknown construction {name!r}")


def replay(plan: ConstructionPlan | dict) -> ConstructionPlan:
    """Rebuild from the recorded parameters and compare alpha, f and the claimed bound exactly."""
    recorded = plan if isinstance(plan, ConstructionPlan) else ConstructionPlan.from_json(plan)
    fresh = _rebuild(recorded.name, recorded.params)
    if recorded.system is not None:
        old, new = recorded.system.to_json().get("alpha"), fresh.system.to_json().get("alpha")
        if old != new:
            raise ReplayMismatch("alpha", old, new)
    if recorded.f is not None and recorded.f != fresh.f:
        raise ReplayMismatch("f", recorded.f.to_json(), fresh.f.to_json())
    if recorded.claimed_bound != fresh.claimed_bound:
        raise ReplayMismatch("claimed_bound", fmt(recorded.claimed_bound), fmt(fresh.claimed_bound))
    return fresh
