"""Robustness decision procedure: one SC reachability query per attack."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import kernel
from .attacks import Attack, Drop, Invalid, TsoWitness, enumerate_attacks, syntactic_filter, validate_witness
from .instrument import InstrumentedProgram, instrument
from .machine import machine_of
from .program import Program, eval_expr
from .semantics import Action, Computation
from .traces import hb_reachable, trace_of

DEFAULT_BUDGET = 10**7

DROPPED, INFEASIBLE, FEASIBLE, INCONCLUSIVE = "dropped", "infeasible", "feasible", "inconclusive"


@dataclass
class AttackResult:
    attack: Attack
    status: str
    witness: TsoWitness | None = None
    states: int = 0
    millis: float | None = None
    reason: str | None = None  # drop reason, budget note or witness defect

    def to_json(self, p: Program) -> dict:
        d = self.attack.to_json(p)
        d["status"] = self.status
        if self.reason is not None:
            d["reason"] = self.reason
        if self.witness is not None:
            d["witness"] = self.witness.to_json()
        d["states_explored"] = self.states
        d["millis"] = self.millis
        return d


@dataclass
class RobustnessReport:
    program: str
    results: list[AttackResult] = field(default_factory=list)

    @property
    def verdict(self) -> str:
        if any(r.status == FEASIBLE for r in self.results):
            return "NonRobust"
        if any(r.status == INCONCLUSIVE for r in self.results):
            return "Inconclusive"
        return "Robust"

    @property
    def totals(self) -> dict:
        count = {s: 0 for s in (DROPPED, INFEASIBLE, FEASIBLE, INCONCLUSIVE)}
        for r in self.results:
            count[r.status] += 1
        return {
            "RQ": len(self.results),
            "NR1": count[DROPPED],
            "NR2": count[INFEASIBLE],
            "R": count[FEASIBLE],
            "INC": count[INCONCLUSIVE],
        }

    def feasible(self) -> list[AttackResult]:
        return [r for r in self.results if r.status == FEASIBLE]

    def to_json(self, p: Program) -> dict:
        return {
            "program": self.program,
            "verdict": self.verdict,
            "attacks": [r.to_json(p) for r in self.results],
            "totals": self.totals,
        }

    def dumps(self, p: Program) -> str:
        return json.dumps(self.to_json(p), indent=2, ensure_ascii=False) + "\n"

    @property
    def exit_code(self) -> int:
        return {"Robust": 0, "NonRobust": 1}.get(self.verdict, 2)


def check_attack(
    p: Program, a: Attack, budget: int = DEFAULT_BUDGET, timing: bool = False
) -> AttackResult:
    """Feasibility of one attack by SC reachability of the goal in ``P_A``."""
    t0 = time.perf_counter()
    ip = instrument(p, a)
    m = machine_of(ip.program)
    status, path, explored = kernel.sc_search(m, ip.goal.slots(m), budget)
    millis = round((time.perf_counter() - t0) * 1000, 3) if timing else None
    if status == 0:
        return AttackResult(a, INFEASIBLE, None, explored, millis)
    if status < 0:
        return AttackResult(a, INCONCLUSIVE, None, explored, millis,
                            f"state budget {budget} exceeded")
    w = reconstruct_witness(ip, path)
    v = validate_witness(p, a, w)
    reason = None if not isinstance(v, Invalid) else f"witness fails {v.condition}: {v.detail}"
    if timing:
        millis = round((time.perf_counter() - t0) * 1000, 3)
    return AttackResult(a, FEASIBLE, w, explored, millis, reason)


def reconstruct_witness(ip: InstrumentedProgram, path: list[int]) -> TsoWitness:
    """Turn an SC path of ``P_A`` reaching the goal into a TSO witness of ``P``."""
    m = machine_of(ip.program)
    src = ip.source
    n = src.domain
    a = ip.attack
    ai = src.thread_index(a.attacker)
    ld_expr = a.ldinst(src).inst.addr
    raw = m.initial()
    out: list[Action] = []
    units: list[int] = []  # unit id per action (one per executed instruction)
    delayed: list[Action] = []
    isu_at = ld_at = None
    for step, iid in enumerate(path):
        ci = m.instrs[iid]
        tag = ip.provenance[ci.thread][ci.index]
        tid = m.tids[ci.thread]
        acts, nraw = m.sc_exec(ci, raw)
        if tag.role == "orig":
            out += [Action(tid, k, x, v) for k, x, v in acts]
            units += [step] * len(acts)
        elif tag.role == "delay":
            if isu_at is None:
                isu_at = len(out)
            _, x, v = acts[1]
            out.append(Action(tid, "isu"))
            units.append(step)
            delayed.append(Action(tid, "st", x - n, v - n))
        elif tag.role == "buf_ld":
            _, x, v = acts[0]
            out.append(Action(tid, "ld", x - n, v - n))
            units.append(step)
        elif tag.role == "ld_A":
            regs = {r: raw[m.reg_slot[ai][r]] for r in src.threads[ai].registers}
            x = eval_expr(ld_expr, regs, n)
            ld_at = len(out)
            out.append(Action(tid, "ld", x, raw[m.mem_off + x]))
            units.append(step)
        raw = nraw
    if isu_at is None or ld_at is None:
        raise AssertionError("goal path does not execute the attack")
    st_at = len(out)
    out += delayed
    units += [-1] * len(delayed)
    out, units, ld_at = _hoist_unrelated(out, units, ld_at, st_at)
    return TsoWitness(Computation(tuple(out)), isu_at, ld_at, st_at)


def _hoist_unrelated(out, units, ld_at, st_at):
    """Move helper actions not happens-before after ld_A in front of it.

    An SC path may let a helper pass its original-code guard before the
    attacker raises the flag and execute the guarded instruction afterwards.
    Such an action is independent of ld_A and everything up to it, so placing
    it before ld_A keeps the trace.
    """
    while True:
        tr = trace_of(Computation(tuple(out)))
        start = tr.node_of[ld_at]
        after = hb_reachable(tr, start) | {start}
        moved = False
        k = ld_at + 1
        while k < st_at:
            j = k
            while j + 1 < st_at and units[j + 1] == units[k]:
                j += 1
            if not any(tr.node_of[i] in after for i in range(k, j + 1)):
                seg, ids = out[k:j + 1], units[k:j + 1]
                out = out[:ld_at] + seg + out[ld_at:k] + out[j + 1:]
                units = units[:ld_at] + ids + units[ld_at:k] + units[j + 1:]
                ld_at += len(seg)
                moved = True
                break
            k = j + 1
        if not moved:
            return out, units, ld_at


def _check_one(args) -> AttackResult:
    p, a, budget, timing = args
    return check_attack(p, a, budget, timing)


def check_robustness(
    p: Program,
    workers: int = 1,
    budget: int = DEFAULT_BUDGET,
    timing: bool = False,
    attacks: list[Attack] | None = None,
) -> RobustnessReport:
    """Check every attack; surviving attacks are dispatched to a worker pool.

    Results are reported in attack enumeration order whatever the pool size.
    """
    attacks = enumerate_attacks(p) if attacks is None else attacks
    results: list[AttackResult | None] = [None] * len(attacks)
    todo = []
    for i, a in enumerate(attacks):
        f = syntactic_filter(p, a)
        if isinstance(f, Drop):
            results[i] = AttackResult(a, DROPPED, reason=f.reason, millis=0.0 if timing else None)
        else:
            todo.append(i)
    jobs = [(p, attacks[i], budget, timing) for i in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_check_one, jobs))
    else:
        done = [_check_one(j) for j in jobs]
    for i, r in zip(todo, done):
        results[i] = r
    return RobustnessReport(p.name, results)  # type: ignore[arg-type]
