"""Compare the compiled and pure-Python SC reachability kernels.

    python3 benchmarks/bench_kernel.py [--repeat N]

Each workload is one ``sc_search`` call on an instrumented program.  Both
kernels must agree on status, path and explored-state count.
"""

import argparse
import time
from pathlib import Path

from tsorobust import kernel
from tsorobust.attacks import Drop, enumerate_attacks, syntactic_filter
from tsorobust.instrument import instrument
from tsorobust.machine import machine_of
from tsorobust.parameterized import instantiate, instrument_parameterized
from tsorobust.program import aux_address, parse_program
from tsorobust.semantics import Goal

CORPUS = Path(__file__).resolve().parent.parent / "src" / "tsorobust" / "corpus"


def workloads():
    """(name, machine, goal slots) triples."""
    out = []
    for f in ("dekker", "peterson", "diamond", "cas_sb"):
        p = parse_program((CORPUS / f"{f}.prog").read_text())
        for k, a in enumerate(enumerate_attacks(p)):
            if isinstance(syntactic_filter(p, a), Drop):
                continue
            ip = instrument(p, a)
            m = machine_of(ip.program)
            out.append((f"{f}/A{k}", m, ip.goal.slots(m)))
    # instances of the parameterized instrumentation give larger state spaces
    p = parse_program((CORPUS / "param_dekker.prog").read_text())
    pa = instrument_parameterized(p, enumerate_attacks(p)[0])
    goal = Goal(mem={aux_address("SUC", p.domain): 1})
    for counts in ((2, 2), (3, 2)):
        q = instantiate(pa, {"t1": counts[0], "t2": counts[1]})
        m = machine_of(q)
        out.append((f"param_dekker{counts}", m, goal.slots(m)))
    # exhaustive search: a goal no run reaches
    for counts in ((2, 1),):
        q = instantiate(pa, {"t1": counts[0], "t2": counts[1]})
        m = machine_of(q)
        out.append((f"param_dekker{counts}/full", m, [(m.mem_off + 0, 2)]))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--budget", type=int, default=10**7)
    args = ap.parse_args()
    impls = kernel.implementations()
    names = sorted(impls)
    print(f"{'workload':<28}{'states':>10}" + "".join(f"{n + ' ms':>14}" for n in names)
          + ("     speedup" if len(names) > 1 else ""))
    totals = dict.fromkeys(names, 0.0)
    for wname, m, goal in workloads():
        times, results = {}, {}
        for n in names:
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                res = impls[n].sc_search(m, goal, args.budget)
                best = min(best, time.perf_counter() - t0)
            times[n], results[n] = best * 1000, res
            totals[n] += best * 1000
        first = results[names[0]]
        if any(r != first for r in results.values()):
            raise SystemExit(f"kernels disagree on {wname}")
        row = f"{wname:<28}{first[2]:>10}" + "".join(f"{times[n]:>14.2f}" for n in names)
        if len(names) > 1:
            row += f"{times['python'] / max(times['cython'], 1e-9):>11.1f}x"
        print(row)
    print(f"{'total':<28}{'':>10}" + "".join(f"{totals[n]:>14.2f}" for n in names))


if __name__ == "__main__":
    main()
