"""Acceptance criteria 1-8, one test each.

Run under pytest (the terminal summary prints one line per criterion) or
directly with ``python3 tests/test_acceptance.py``.
"""

import json
import sys
import time
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE  # noqa: E402
from tsorobust import corpus  # noqa: E402
from tsorobust.attacks import Valid, enumerate_attacks, validate_witness, witnessed_attacks  # noqa: E402
from tsorobust.checker import FEASIBLE, INFEASIBLE, check_robustness  # noqa: E402
from tsorobust.family import litmus_family  # noqa: E402
from tsorobust.fences import optimal_fences  # noqa: E402
from tsorobust.instrument import instrument  # noqa: E402
from tsorobust.parameterized import check_param_robustness, instantiate  # noqa: E402
from tsorobust.program import FenceSet  # noqa: E402
from tsorobust.semantics import is_tso_computation  # noqa: E402
from tsorobust.traces import (  # noqa: E402
    Violating,
    complete_bounds,
    cycle_edge_kinds,
    delaying_threads,
    hb_cycle,
    oracle_check,
    trace_of,
    violations,
)


def _record(k: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[k] = (ok, detail)


# -- shared pass over the litmus family (criteria 3, 4, 5) -----------------------


def _minimal_violations(p, first: Violating):
    """Every violation with the least delay count within the complete bounds."""
    if first.delays == 1:
        return [first]  # one delay pair means one delaying thread
    found = list(violations(p, *complete_bounds(p)))
    least = min(d for _, d in found)
    return [Violating(c, d) for c, d in found if d == least]


@lru_cache(maxsize=None)
def family_pass():
    t0 = time.perf_counter()
    stats = dict(programs=0, nonrobust=0, mismatches=[], multi_delayer=[], minimal=0,
                 feasible=0, bad_witness=[], infeasible=0, witnessed_infeasible=[], checked_programs=0,
                 equivalence_seconds=0.0)
    for p in litmus_family():
        stats["programs"] += 1
        t1 = time.perf_counter()
        rep = check_robustness(p)
        orc = oracle_check(p, *complete_bounds(p))
        stats["equivalence_seconds"] += time.perf_counter() - t1
        nonrobust = isinstance(orc, Violating)
        stats["nonrobust"] += nonrobust
        if (rep.verdict == "NonRobust") != nonrobust:
            stats["mismatches"].append(p.name)
        if nonrobust:
            for v in _minimal_violations(p, orc):
                stats["minimal"] += 1
                if len(delaying_threads(v.computation)) != 1:
                    stats["multi_delayer"].append(p.name)
        for r in rep.results:
            if r.status == FEASIBLE:
                stats["feasible"] += 1
                if validate_witness(p, r.attack, r.witness) != Valid() or not is_tso_computation(
                        p, r.witness.computation):
                    stats["bad_witness"].append((p.name, r.attack))
        infeasible = [r.attack for r in rep.results if r.status == INFEASIBLE]
        if infeasible:
            stats["checked_programs"] += 1
            stats["infeasible"] += len(infeasible)
            found = witnessed_attacks(p, *complete_bounds(p))
            stats["witnessed_infeasible"] += [(p.name, a) for a in infeasible if a in found]
    stats["seconds"] = time.perf_counter() - t0
    return stats


# -- criteria ------------------------------------------------------------------


def criterion_1():
    p = corpus.load("dekker")
    t0 = time.perf_counter()
    rep = check_robustness(p)
    dt = time.perf_counter() - t0
    attacks = enumerate_attacks(p)
    ok = len(attacks) == 2 and rep.verdict == "NonRobust"
    ok &= all(r.status == FEASIBLE for r in rep.results)
    for r in rep.results:
        ok &= validate_witness(p, r.attack, r.witness) == Valid()
        tr = trace_of(r.witness.computation)
        kinds = cycle_edge_kinds(tr, hb_cycle(tr))
        ok &= kinds["po"] == 2 and kinds["cf"] == 2
        ok &= r.states < 10**4
    ok &= dt < 1.0
    states = max(r.states for r in rep.results)
    return ok, f"2 attacks feasible, hb cycle 2po+2cf, max states {states}, {dt:.3f}s"


def criterion_2():
    p = corpus.load("dekker")
    t0 = time.perf_counter()
    res = optimal_fences(p)
    dt = time.perf_counter() - t0
    tot = res.report.totals
    ok = res.fences == FenceSet.of([("t1", "l1"), ("t2", "l1'")]) and res.cost == 2
    ok &= res.report.verdict == "Robust" and tot["NR2"] == 0 and tot["R"] == 0 and tot["NR1"] == tot["RQ"]
    ok &= dt < 2.0
    return ok, f"fences {res.fences} cost {res.cost}, re-check {res.report.verdict} {tot}, {dt:.3f}s"


def criterion_3():
    s = family_pass()
    ok = not s["mismatches"] and s["equivalence_seconds"] < 600
    return ok, (f"{s['programs']} programs ({s['nonrobust']} non-robust), "
                f"{len(s['mismatches'])} mismatches, checker+oracle {s['equivalence_seconds']:.0f}s "
                f"(shared pass with criteria 4-5: {s['seconds']:.0f}s)")


def criterion_4():
    s = family_pass()
    ok = not s["multi_delayer"]
    return ok, f"{s['minimal']} minimal violations, {len(s['multi_delayer'])} with several delaying threads"


def criterion_5():
    s = family_pass()
    bad, extra = list(s["bad_witness"]), list(s["witnessed_infeasible"])
    feasible, infeasible = s["feasible"], s["infeasible"]
    for name in ("dekker", "dekker_fenced"):
        p = corpus.load(name)
        rep = check_robustness(p)
        for r in rep.results:
            if r.status == FEASIBLE:
                feasible += 1
                if validate_witness(p, r.attack, r.witness) != Valid():
                    bad.append((name, r.attack))
            elif r.status == INFEASIBLE:
                infeasible += 1
                if r.attack in witnessed_attacks(p, *complete_bounds(p)):
                    extra.append((name, r.attack))
    ok = not bad and not extra
    return ok, (f"{feasible} feasible witnesses valid ({len(bad)} bad), "
                f"{infeasible} infeasible attacks unwitnessed ({len(extra)} witnessed)")


def criterion_6():
    p = corpus.load("dekker")
    outs = []
    for w in (1, 2, 4):
        check = check_robustness(p, workers=w).dumps(p)
        fences = json.dumps(optimal_fences(p, workers=w).to_json(p), indent=2)
        outs.append(check + fences)
    ok = outs[0] == outs[1] == outs[2]
    return ok, f"reports for 1/2/4 workers {'identical' if ok else 'differ'} ({len(outs[0])} bytes)"


def criterion_7():
    p = corpus.load("param_dekker")
    t0 = time.perf_counter()
    rep = check_param_robustness(p)
    fenced = check_param_robustness(corpus.load("param_dekker_fenced"))
    dt = time.perf_counter() - t0
    inst = check_robustness(instantiate(p, {"t1": 1, "t2": 1}))
    basis = max(r.basis for r in rep.results)
    ok = rep.verdict == "NonRobust" and inst.verdict == rep.verdict and fenced.verdict == "Robust"
    ok &= basis < 10**4 and dt < 30
    return ok, (f"param {rep.verdict}, instance (1,1) {inst.verdict}, fenced {fenced.verdict}, "
                f"max basis {basis}, {dt:.1f}s")


def criterion_8():
    worst, count, over = 0.0, 0, []
    for name in corpus.names():
        p = corpus.load(name)
        size = p.instruction_count()
        labels = sum(len(t.labels) for t in p.threads)
        for a in enumerate_attacks(p):
            n = instrument(p, a).program.instruction_count()
            count += 1
            bound = 7 * size + 4 * labels
            worst = max(worst, n / bound)
            if n > bound:
                over.append((name, a))
    return not over, f"{count} instrumented programs, worst size/bound ratio {worst:.2f}"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 9)}


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    ok, detail = CRITERIA[k]()
    _record(k, ok, detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for k, f in CRITERIA.items():
        ok, detail = f()
        failed += not ok
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    sys.exit(1 if failed else 0)
