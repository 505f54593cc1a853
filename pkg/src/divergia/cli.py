"""Batch driver: `divergia <experiment> --config <file> [--out <dir>] [--seed <n>]`.

Configs are JSON objects.  Keys are the experiment's parameters plus
`experiment`, `seed` and `out`; anything else is rejected.  Each run writes
report.json (resolved config, results, assertions, timing) and a CSV of
plot data into the output directory; construction experiments also write
plan.json, which `divergia replay plan.json` re-executes.

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 usage error,
3 a size guard stopped the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import random
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path
from typing import Callable

import mpmath

from . import __version__
from .constructions import (
    build_infection,
    build_ubL1,
    build_ubLp,
    infection_sums,
    replay,
    sumset_plan,
    ConstructionPlan,
)
from .dynsys import Assertion, audit_fa1, audit_fap, random_audit_instance
from .errors import BoundViolation, DivergiaError, DomainError, HorizonTooSmall, ReplayMismatch, ResourceGuard
from .exact import as_fraction, fmt
from .khintchine import (
    dichotomy_report,
    folner_check,
    khintchine_lower,
    khintchine_sum,
    lattice_count,
    semigroup_enumerate,
)
from .measure import Domain, indicator
from .weights import WeightSequence, bound_chain_holds, c1, c1_prime, classify_hardy, weak_norm_seq

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_GUARD = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- parameter parsing -----------------------------------------------------------

def parse_int(x, key: str) -> int:
    """Integers, or strings like "2^16" / "10**5"."""
    if isinstance(x, bool):
        raise UsageError(f"{key}: expected an integer")
    if isinstance(x, int):
        return x
    if isinstance(x, str):
        s = x.replace("**", "^").strip()
        try:
            if "^" in s:
                b, e = s.split("^", 1)
                return int(b) ** int(e)
            return int(s)
        except ValueError:
            pass
    raise UsageError(f"{key}: expected an integer, got {x!r}")


def parse_rational(x, key: str) -> Fraction:
    try:
        return as_fraction(x) if not isinstance(x, float) else Fraction(str(x))
    except (TypeError, ValueError, ZeroDivisionError):
        raise UsageError(f"{key}: expected a rational, got {x!r}") from None


def parse_int_set(x, key: str) -> list[int]:
    """A list of integers or a range string "1-8"."""
    if isinstance(x, str):
        lo, sep, hi = x.partition("-")
        if sep:
            return list(range(parse_int(lo, key), parse_int(hi, key) + 1))
        return [parse_int(x, key)]
    if isinstance(x, list):
        return [parse_int(v, key) for v in x]
    raise UsageError(f"{key}: expected a list of integers or 'a-b'")


# Each experiment: parameter name -> (parser, default).  A default of
# REQUIRED makes the key mandatory.
REQUIRED = object()

SCHEMAS: dict[str, dict[str, tuple[Callable, object]]] = {
    "weights-analyze": {
        "tag": (str, REQUIRED),
        "horizon": (parse_int, 2**8),
        "p": (parse_rational, 1),
    },
    "ubl1": {
        "tag": (str, "linear"),
        "horizon": (parse_int, 8),
        "M": (parse_int, 2),
        "n0": (parse_int, 1),
        "N_max": (parse_int, 10**5),
    },
    "ublp": {
        "J": (parse_int_set, "1-4"),
        "p": (parse_rational, 2),
        "n0": (parse_int, 1),
    },
    "infection": {
        "k": (parse_int, 2),
        "tag": (str, "dyadic:5"),
        "sums_tag": (str, "reciprocal-t"),
        "y": (parse_int, 4),
        "T": (parse_int, 12),
    },
    "sumset": {
        "k": (parse_int, 3),
        "J": (parse_int_set, [0, 2]),
        "p": (parse_rational, 2),
    },
    "khintchine": {
        "J": (parse_int_set, "1-8"),
        "p": (parse_rational, 2),
        "harness_N": (parse_int, 0),
        "harness_width": (parse_rational, "1/8"),
        "harness_grid": (parse_int, 64),
    },
    "semigroup": {
        "generators": (lambda x, k: parse_int_set(x, k), None),
        "family": (str, None),
        "N_max": (parse_int, 10**5),
        "x": (parse_int, None),
        "truncated": (bool, False),
        "lattice_primes": (lambda x, k: parse_int_set(x, k), [2, 3]),
        "lattice_ys": (lambda x, k: parse_int_set(x, k), [10, 20, 40]),
    },
    "audit": {
        "instances": (parse_int, 100),
        "max_maps": (parse_int, 64),
        "max_levels": (parse_int, 16),
        "pairs": (list, [["2", "3/2"], ["3", "2"]]),
    },
}

GLOBAL_KEYS = {"experiment", "seed", "out"}


def resolve_config(experiment: str, raw: dict, seed: int | None = None) -> dict:
    """Validate a raw config against the experiment's schema and fill defaults."""
    if experiment not in SCHEMAS:
        raise UsageError(f"unknown experiment {experiment!r}; choose from {', '.join(SCHEMAS)}")
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    if raw.get("experiment", experiment) != experiment:
        raise UsageError(f"config is for {raw['experiment']!r}, not {experiment!r}")
    schema = SCHEMAS[experiment]
    unknown = sorted(set(raw) - set(schema) - GLOBAL_KEYS)
    if unknown:
        raise UsageError(f"unknown config key(s) for {experiment}: {', '.join(unknown)}")
    out = {"experiment": experiment}
    for key, (parser, default) in schema.items():
        if key in raw:
            value = raw[key]
        elif default is REQUIRED:
            raise UsageError(f"missing required key {key!r}")
        else:
            value = default
        if value is None:
            out[key] = None
        elif parser is str:
            out[key] = str(value)
        elif parser in (bool, list):
            if not isinstance(value, parser):
                raise UsageError(f"{key}: expected a {parser.__name__}")
            out[key] = value
        else:
            out[key] = parser(value, key)
    s = seed if seed is not None else raw.get("seed", 0)
    out["seed"] = parse_int(s, "seed")
    return out


def _echo(config: dict) -> dict:
    return {k: (fmt(v) if isinstance(v, Fraction) else v) for k, v in config.items()}


# -- experiments -------------------------------------------------------------------
# Each returns (results, assertions, csv_header, csv_rows, plan_or_None).

def _dyadic_horizons(horizon: int) -> list[int]:
    hs, h = [], 2
    while h < horizon:
        hs.append(h)
        h *= 2
    return hs + [horizon]


def run_weights(cfg):
    w = WeightSequence.from_tag(cfg["tag"], cfg["horizon"])
    horizons = _dyadic_horizons(cfg["horizon"])
    curve = [(T, c1(w.truncate(T)).value) for T in horizons]
    rep = c1(w)
    results = {"c1": rep.to_json(), "c1_prime": c1_prime(w).to_json(), "weak_norm": weak_norm_seq(w, cfg["p"]).to_json()}
    assertions = []
    if w.horizon >= 16:
        trend = classify_hardy(w, cfg["p"])
        results["hardy_verdict"] = trend.verdict
        results["hardy_note"] = trend.note
    chain = bound_chain_holds(w)
    if chain is not None:
        assertions.append(Assertion("||w||_{1,inf} <= 2 C1(w) when max w <= C1(w)", "holds", chain, chain))
    results["curve_growth_last_step"] = (
        fmt(curve[-1][1] / curve[-2][1]) if len(curve) > 1 and curve[-2][1] else None)
    rows = [(T, fmt(v), mpmath.nstr(mpmath.mpf(v.numerator) / v.denominator, 15)) for T, v in curve]
    return results, assertions, ("horizon", "c1", "c1_decimal"), rows, None


def _plan_rows(plan: ConstructionPlan):
    return [(a.name, str(a.to_json()["bound"]), str(a.to_json()["achieved"]), a.passed) for a in plan.assertions]


def run_ubl1(cfg):
    w = WeightSequence.from_tag(cfg["tag"], cfg["horizon"])
    plan = build_ubL1(w, cfg["M"], None, cfg["n0"], cfg["N_max"])
    return plan.to_json(), plan.assertions, ("assertion", "bound", "achieved", "pass"), _plan_rows(plan), plan


def run_ublp(cfg):
    plan = build_ubLp(cfg["J"], cfg["p"], cfg["n0"])
    return plan.to_json(), plan.assertions, ("assertion", "bound", "achieved", "pass"), _plan_rows(plan), plan


def run_infection(cfg):
    w = WeightSequence.from_tag(cfg["tag"], cfg["T"])
    plan = build_infection(cfg["k"], w, cfg["y"], cfg["T"])
    # the band-sum identity is also checked on a second weight family
    sums = infection_sums(WeightSequence.from_tag(cfg["sums_tag"], max(cfg["T"], 4 * cfg["y"])), cfg["y"], cfg["k"])
    results = plan.to_json()
    results["band_sums"] = {"tag": cfg["sums_tag"],
                            **{k: (fmt(v) if isinstance(v, Fraction) else v) for k, v in sums.items()}}
    assertions = list(plan.assertions)
    assertions.append(Assertion(f"l_y + l_2y > m_y - 9 for {cfg['sums_tag']}", sums["m_y"] - 9,
                                sums["l_y"] + sums["l_2y"], bool(sums["holds"])))
    return results, assertions, ("assertion", "bound", "achieved", "pass"), _plan_rows(plan), plan


def run_sumset(cfg):
    plan = sumset_plan(cfg["k"], cfg["J"], cfg["p"])
    return plan.to_json(), plan.assertions, ("assertion", "bound", "achieved", "pass"), _plan_rows(plan), plan


def run_khintchine(cfg):
    rep = khintchine_lower(cfg["J"], cfg["p"])
    results = {"lower_bound": rep.to_json()}
    rows = [(j, c, fmt(Fraction(2 * c, 2**j))) for j, c in sorted(rep.per_level_min_count.items())]
    header = ("j", "count", "certified_B_j_g_lower")
    if cfg["harness_N"]:
        # open question harness: sup_N (1/N) K_N f on a probe grid, no claim attached
        f = indicator(Domain.circle(1), 0, cfg["harness_width"])
        grid = cfg["harness_grid"]
        sups = []
        for i in range(grid):
            x = Fraction(i, grid)
            best = max(khintchine_sum(f, x, N) / N for N in range(1, cfg["harness_N"] + 1))
            sups.append(best)
        levels = sorted(set(sups))
        weak = max(y * Fraction(sum(1 for s in sups if s >= y), grid) for y in levels if y > 0) if any(sups) else 0
        results["l1_harness"] = {"width": fmt(cfg["harness_width"]), "N": cfg["harness_N"], "grid": grid,
                                 "probe_weak_11_ratio": fmt(Fraction(weak) / cfg["harness_width"])}
    return results, rep.assertions, header, rows, None


def _primes_upto(n: int) -> list[int]:
    sieve = bytearray([1]) * (n + 1)
    sieve[:2] = b"\x00\x00"
    for i in range(2, int(n**0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(sieve[i * i :: i]))
    return [i for i in range(n + 1) if sieve[i]]


def run_semigroup(cfg):
    N_max = cfg["N_max"]
    if cfg["family"] == "prime-squares":
        gens = [p * p for p in _primes_upto(int(N_max**0.5))]
    elif cfg["family"] is not None:
        raise UsageError(f"unknown family {cfg['family']!r} (known: prime-squares)")
    else:
        gens = cfg["generators"] or [2, 3]
    S = semigroup_enumerate(gens, N_max)
    verdict = dichotomy_report(S)
    results = {"sample": S.to_json(), "verdict": verdict.to_json()}
    assertions = []
    grid = [N for N, _ in S.counts_on_grid() if N >= 100]
    rows = []
    if verdict.side == "convergence side" and grid:
        x = cfg["x"] if cfg["x"] is not None else S.elements[0]
        frs = folner_check(S, x, grid, cfg["truncated"], with_foln2=len(S.elements) <= 5000)
        mono = all(b.foln1 <= a.foln1 for a, b in zip(frs, frs[1:]))
        assertions.append(Assertion("Foln1 ratio nonincreasing over the N-grid", "nonincreasing",
                                    [fmt(r.foln1) for r in frs], mono))
        rows = [(r.N, r.size, fmt(r.foln1), "" if r.foln2 is None else fmt(r.foln2)) for r in frs]
    else:
        rows = [(N, c, "", "") for N, c in S.counts_on_grid()]
    lat = [lattice_count(cfg["lattice_primes"], y) for y in cfg["lattice_ys"]]
    results["lattice"] = [{"y": fmt(L.y), "count": L.count, "asymptote": mpmath.nstr(L.asymptote, 20),
                           "residual_over_y^(d-1)": mpmath.nstr(L.normalized, 20)} for L in lat]
    return results, assertions, ("N", "size", "foln1", "foln2"), rows, None


def run_audit(cfg):
    rng = random.Random(cfg["seed"])
    pairs = [(parse_rational(p, "pairs"), parse_rational(r, "pairs")) for p, r in cfg["pairs"]]
    rows, violations, worst = [], 0, {"fa1": Fraction(0)}
    for i in range(cfg["instances"]):
        inst = random_audit_instance(rng, cfg["max_maps"], cfg["max_levels"])
        row = [i]
        try:
            r = audit_fa1(inst.system, inst.f, inst.w)
            row.append(fmt(r.ratio))
            worst["fa1"] = max(worst["fa1"], r.ratio)
        except BoundViolation:
            violations += 1
            row.append("violation")
        for p, rr in pairs:
            key = f"fap({fmt(p)},{fmt(rr)})"
            try:
                r = audit_fap(inst.system, inst.f, inst.w, p, rr)
                row.append(mpmath.nstr(r.ratio, 12))
                worst[key] = max(worst.get(key, mpmath.mpf(0)), r.ratio)
            except BoundViolation:
                violations += 1
                row.append("violation")
        rows.append(tuple(row))
    header = ("instance", "fa1_ratio") + tuple(f"fap_ratio_p{fmt(p)}_r{fmt(r)}" for p, r in pairs)
    results = {"instances": cfg["instances"], "violations": violations,
               "worst_ratio": {k: (fmt(v) if isinstance(v, Fraction) else mpmath.nstr(v, 15)) for k, v in worst.items()}}
    assertions = [Assertion("fa1 and fap bounds hold on every instance", 0, violations, violations == 0)]
    return results, assertions, header, rows, None


RUNNERS = {
    "weights-analyze": run_weights,
    "ubl1": run_ubl1,
    "ublp": run_ublp,
    "infection": run_infection,
    "sumset": run_sumset,
    "khintchine": run_khintchine,
    "semigroup": run_semigroup,
    "audit": run_audit,
}


# -- output ------------------------------------------------------------------------

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def run(config: dict, out_dir: str | Path | None = None) -> dict:
    """Run one resolved config; returns the report (also written when out_dir is given)."""
    start = time.perf_counter()
    results, assertions, header, rows, plan = RUNNERS[config["experiment"]](config)
    report = {
        "version": __version__,
        "config": _echo(config),
        "results": results,
        "assertions": [a.to_json() for a in assertions],
        "passed": all(a.passed for a in assertions),
        "timing": {"seconds": round(time.perf_counter() - start, 3)},
    }
    if out_dir is not None:
        out = Path(out_dir)
        _atomic_write(out / "report.json", json.dumps(report, indent=2, default=str) + "\n")
        _atomic_write(out / f"{config['experiment']}.csv", _csv_text(header, rows))
        if plan is not None:
            _atomic_write(out / "plan.json", json.dumps(plan.to_json(), indent=2, default=str) + "\n")
    return report


def _load(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _replay(path: str, out_dir: str | None) -> int:
    data = _load(path)
    if "plan" in data and isinstance(data["plan"], dict):
        data = data["plan"]
    if not {"name", "params", "claimed_bound"} <= set(data):
        raise UsageError(f"{path} is not a serialized construction plan")
    start = time.perf_counter()
    try:
        fresh = replay(data)
    except ReplayMismatch as exc:
        print(f"replay failure: {exc.field} recorded {str(exc.recorded)[:200]} replayed {str(exc.replayed)[:200]}",
              file=sys.stderr)
        return EXIT_FAIL
    report = {"version": __version__, "replayed": data["name"], "claimed_bound": fmt(fresh.claimed_bound),
              "identical": True, "assertions": [a.to_json() for a in fresh.assertions],
              "passed": fresh.passed, "timing": {"seconds": round(time.perf_counter() - start, 3)}}
    if out_dir:
        _atomic_write(Path(out_dir) / "replay.json", json.dumps(report, indent=2, default=str) + "\n")
    print(f"replay {data['name']}: claimed bound {fmt(fresh.claimed_bound)} reproduced")
    return EXIT_PASS if fresh.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divergia", description="Run divergia experiments from JSON configs.")
    ap.add_argument("--version", action="version", version=f"divergia {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SCHEMAS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--out", help="output directory (default: the config's out key, else runs/<experiment>)")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
    rp = sub.add_parser("replay", help="re-execute a plan.json and compare it bit for bit")
    rp.add_argument("plan")
    rp.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return _replay(args.plan, args.out)
        raw = _load(args.config)
        config = resolve_config(args.command, raw, args.seed)
        out = args.out or raw.get("out") or str(Path("runs") / args.command)
        if not isinstance(out, str):
            raise UsageError("out: expected a directory path")
        report = run(config, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceGuard as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except HorizonTooSmall as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except BoundViolation as exc:
        print(f"{args.command}: bound violated: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (DomainError, ValueError) as exc:
        print(f"usage error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergiaError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for a in report["assertions"]:
        print(f"[{'pass' if a['pass'] else 'FAIL'}] {a['name']}")
    print(f"{args.command}: {'pass' if report['passed'] else 'FAIL'} ({report['timing']['seconds']} s) -> {out}")
    return EXIT_PASS if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
