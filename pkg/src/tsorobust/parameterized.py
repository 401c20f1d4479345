"""Robustness of parameterized programs.

A parameterized program is read as a set of thread templates, each of which
may run in any number of copies.  Per attack, the templates are instrumented
(one copy of the attacker template wins an election and attacks, every other
copy helps), the result is abstracted into a Petri net by counting threads
per local state, and goal reachability becomes coverability of a marking.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Iterable, Union

from .attacks import Attack, Drop, enumerate_attacks, syntactic_filter
from .checker import DROPPED, FEASIBLE, INCONCLUSIVE, INFEASIBLE
from .instrument import instrument_attacker, instrument_helper
from .program import (
    Assert,
    Cas,
    LabelFactory,
    Load,
    LocalAssign,
    Mfence,
    Program,
    Store,
    Thread,
    aux_address,
    eval_expr,
)

DEFAULT_BASIS_BUDGET = 10**4


# -- instrumentation -------------------------------------------------------------


def instrument_parameterized(p: Program, a: Attack) -> Program:
    """Helper instrumentation for every template; the attacker template also
    carries the attacker code, entered only by the copy that wins ``ELECT``."""
    threads = []
    for t in p.threads:
        h, _ = instrument_helper(t)
        if t.id != a.attacker:
            threads.append(h)
            continue
        el = LabelFactory(h.registers).fresh("r_el")
        att, _ = instrument_attacker(
            t, a, originals=False, elect=el, suffix="_a", reserved=h.labels
        )
        labels = tuple(dict.fromkeys(h.labels + att.labels))
        threads.append(Thread(t.id, h.registers + (el,), t.init_label,
                              h.instructions + att.instructions, labels))
    return Program(f"{p.name}_PA", tuple(threads), p.domain, p.consts)


def instantiate(p: Program, counts: dict[str, int]) -> Program:
    """The instance with ``counts[t]`` copies of template ``t`` (named ``t_1``, ``t_2``, ...)."""
    threads = []
    for t in p.threads:
        for k in range(1, counts.get(t.id, 0) + 1):
            threads.append(replace(t, id=f"{t.id}_{k}"))
    return Program(f"{p.name}_inst", tuple(threads), p.domain, p.consts)


# -- Petri nets ----------------------------------------------------------------


Marking = dict  # place -> positive token count; absent places hold 0


@dataclass
class Transition:
    name: str
    pre: dict  # place -> weight
    post: dict


@dataclass
class PetriNet:
    places: list = field(default_factory=list)
    transitions: list[Transition] = field(default_factory=list)

    def enabled(self, t: Transition, m: Marking) -> bool:
        return all(m.get(s, 0) >= w for s, w in t.pre.items())

    def fire(self, t: Transition, m: Marking) -> Marking:
        out = dict(m)
        for s, w in t.pre.items():
            out[s] = out.get(s, 0) - w
        for s, w in t.post.items():
            out[s] = out.get(s, 0) + w
        return {s: v for s, v in out.items() if v}

    def dump(self) -> str:
        lines = [f"place {_pname(s)}" for s in self.places]
        for t in self.transitions:
            pre = " ".join(f"{_pname(s)}*{w}" for s, w in sorted(t.pre.items(), key=repr))
            post = " ".join(f"{_pname(s)}*{w}" for s, w in sorted(t.post.items(), key=repr))
            lines.append(f"trans {t.name} : {pre} -> {post}")
        return "\n".join(lines) + "\n"


def _pname(s) -> str:
    if s[0] == "mem":
        return f"m[{s[1]}]={s[2]}"
    return f"{s[1]}@{s[2]}{list(s[3])}"


def covers(m: Marking, target: Marking) -> bool:
    return all(m.get(s, 0) >= v for s, v in target.items())


@dataclass
class CounterAbstraction:
    net: PetriNet
    m0: Marking
    goal: Marking


def _eval_all(e, regs, n, fixed: dict, vals: dict):
    """All ``(reads, value)`` outcomes of ``e``, branching on unread cells.

    ``vals[a]`` lists the values cell ``a`` may hold.
    """

    class Need(Exception):
        pass

    def go(reads):
        def read(x):
            if x in reads:
                return reads[x]
            raise Need(x)

        try:
            return [(reads, eval_expr(e, regs, n, read))]
        except Need as need:
            x = need.args[0]
            out = []
            for v in vals.get(x, ()):
                out += go({**reads, x: v})
            return out

    return go(dict(fixed))


def _local_outcomes(inst, regs: dict, n: int, vals: dict):
    """Transitions of one thread instruction from one register valuation.

    Yields ``(reads, write, new_regs)`` where ``reads`` maps cells to the
    values tested and ``write`` is ``(addr, new value)`` or None.
    """
    if isinstance(inst, Mfence):
        yield {}, None, regs
    elif isinstance(inst, LocalAssign):
        for rd, v in _eval_all(inst.expr, regs, n, {}, vals):
            yield rd, None, {**regs, inst.reg: v}
    elif isinstance(inst, Assert):
        for rd, v in _eval_all(inst.cond, regs, n, {}, vals):
            if v:
                yield rd, None, regs
    elif isinstance(inst, Load):
        for rd, x in _eval_all(inst.addr, regs, n, {}, vals):
            for v in ([rd[x]] if x in rd else vals.get(x, ())):
                if inst.untag and v < n:
                    continue
                yield {**rd, x: v}, None, {**regs, inst.reg: v - n if inst.untag else v}
    elif isinstance(inst, Store):
        for rd, x in _eval_all(inst.addr, regs, n, {}, vals):
            if x not in vals:
                continue
            for rd2, v in _eval_all(inst.value, regs, n, rd, vals):
                yield rd2, (x, v), regs
    elif isinstance(inst, Cas):
        for rd, x in _eval_all(inst.addr, regs, n, {}, vals):
            for rd2, ex in _eval_all(inst.expect, regs, n, rd, vals):
                for rd3, nv in _eval_all(inst.new, regs, n, rd2, vals):
                    for v in ([rd3[x]] if x in rd3 else vals.get(x, ())):
                        reads = {**rd3, x: v}
                        if v == ex:
                            yield reads, (x, nv), {**regs, inst.result: 1}
                        else:
                            yield reads, None, {**regs, inst.result: 0}
    else:
        raise TypeError(inst)


def _local_states(p: Program, vals: dict, literal: bool = False):
    """Per template, ``(label, registers)`` states and their outcomes.

    Only states reachable from the initial one are built unless ``literal``.
    """
    n = p.domain
    out = []
    for t in p.threads:
        regs0 = {r: 0 for r in t.registers}
        by_src: dict[str, list] = {}
        for i, li in enumerate(t.instructions):
            by_src.setdefault(li.src, []).append((i, li))
        key0 = (t.init_label, tuple(regs0.values()))
        seen = {key0}
        work = [(t.init_label, regs0)]
        if literal:
            for lab in t.labels:
                for vs in product(range(p.value_bound), repeat=len(t.registers)):
                    if (lab, vs) not in seen:
                        seen.add((lab, vs))
                        work.append((lab, dict(zip(t.registers, vs))))
        moves = []  # (instruction index, from key, to key, reads, write)
        while work:
            lab, regs = work.pop()
            here = (lab, tuple(regs[r] for r in t.registers))
            for i, li in by_src.get(lab, ()):
                for reads, write, nregs in _local_outcomes(li.inst, regs, n, vals):
                    there = (li.dst, tuple(nregs[r] for r in t.registers))
                    moves.append((i, here, there, reads, write))
                    if there not in seen:
                        seen.add(there)
                        work.append((li.dst, nregs))
        out.append((t, key0, seen, moves))
    return out


def cell_values(p: Program) -> dict[int, list[int]]:
    """Over-approximation of the values each cell takes, over any number of copies.

    Least fixpoint: every cell starts at 0; reads return only values
    already known for the cell; every write adds its value.
    """
    vals = {a: [0] for a in range(p.memory_size)}
    while True:
        new = {a: set(vs) for a, vs in vals.items()}
        for _, _, _, moves in _local_states(p, vals):
            for *_, write in moves:
                if write is not None:
                    new[write[0]].add(write[1])
        new = {a: sorted(vs) for a, vs in new.items()}
        if new == vals:
            return vals
        vals = new


def counter_abstraction(
    p: Program, goal: Marking | None = None, literal: bool = False
) -> CounterAbstraction:
    """Petri net counting threads per (template, label, register valuation).

    Memory places ``("mem", a, v)`` hold one token iff cell ``a`` has value
    ``v``.  Thread places and memory values that no run can produce (see
    ``cell_values``) are left out; they could never be marked.  ``literal``
    keeps every label and valuation and every value of every cell.
    """
    n = p.domain
    if literal:
        vals = {a: list(range(p.value_bound)) for a in range(p.memory_size)}
    else:
        vals = cell_values(p)
    net = PetriNet()
    net.places += [("mem", a, v) for a, vs in vals.items() for v in vs]
    for t, key0, seen, moves in _local_states(p, vals, literal):

        def place(key, t=t):
            return ("thr", t.id, key[0], key[1])

        net.transitions.append(Transition(f"spawn_{t.id}", {}, {place(key0): 1}))
        for i, here, there, reads, write in moves:
            pre = {place(here): 1}
            post = {place(there): 1}
            for x, v in reads.items():
                pre[("mem", x, v)] = post[("mem", x, v)] = 1
            name = f"{t.id}.{i}[{','.join(map(str, here[1]))}]" + "".join(
                f"{x}:{v}" for x, v in sorted(reads.items()))
            if write is None:
                net.transitions.append(Transition(name, pre, post))
            elif write[0] in reads:
                x, nv = write
                del post[("mem", x, reads[x])]
                post[("mem", x, nv)] = 1
                net.transitions.append(Transition(name, pre, post))
            else:
                # an unread cell: one transition per old value
                x, nv = write
                for old in vals[x]:
                    pr = {**pre, ("mem", x, old): 1}
                    po = {**post, ("mem", x, nv): 1}
                    net.transitions.append(Transition(f"{name}w{x}:{old}", pr, po))
        net.places += sorted((place(k) for k in seen), key=repr)
    m0 = {("mem", a, 0): 1 for a in range(p.memory_size)}
    if goal is None:
        goal = {("mem", aux_address("SUC", n), 1): 1}
    return CounterAbstraction(net, m0, goal)


# -- coverability ----------------------------------------------------------------


@dataclass(frozen=True)
class Coverable:
    firing: tuple[str, ...]  # a firing sequence from m0 covering the target
    basis: int


@dataclass(frozen=True)
class NotCoverable:
    basis: int


@dataclass(frozen=True)
class CoverInconclusive:
    basis: int
    budget: int


CoverResult = Union[Coverable, NotCoverable, CoverInconclusive]


def _frozen(m: Marking) -> frozenset:
    return frozenset(m.items())


def coverable(
    net: PetriNet,
    m0: Marking,
    target: Marking,
    budget: int = DEFAULT_BASIS_BUDGET,
    one_token: Iterable[Iterable] = (),
) -> CoverResult:
    """Backward coverability over minimal bases of upward-closed sets.

    ``one_token`` lists groups of places whose total never exceeds one in
    any reachable marking (the value places of a memory cell); markings
    demanding more are discarded.  ``basis`` in the result counts every
    marking ever added to the basis.
    """
    group_of = {}
    for k, g in enumerate(one_token):
        for s in g:
            group_of[s] = k

    def possible(m: Marking) -> bool:
        seen = set()
        for s, v in m.items():
            k = group_of.get(s)
            if k is not None:
                if v > 1 or k in seen:
                    return False
                seen.add(k)
        return True

    by_post: dict = {}
    for t in net.transitions:
        for s, w in t.post.items():
            if w > t.pre.get(s, 0):
                by_post.setdefault(s, []).append(t)

    target = {s: v for s, v in target.items() if v > 0}
    k0 = _frozen(target)
    # basis element -> (transition fired from it, element it leads to)
    parent: dict[frozenset, tuple[str, frozenset] | None] = {k0: None}
    basis: dict[frozenset, Marking] = {k0: target}
    supp = {k0: frozenset(target)}  # supports, for a cheap first covering test
    work = [k0]
    while work:
        for k, b in basis.items():
            if covers(m0, b):
                return Coverable(_firing(k, parent), len(parent))
        if len(parent) > budget:
            return CoverInconclusive(len(parent), budget)
        nxt = []
        for key in work:
            m = basis.get(key)
            if m is None:
                continue  # superseded meanwhile
            cand = {id(t): t for s in m for t in by_post.get(s, ())}
            for t in sorted(cand.values(), key=lambda t: t.name):
                pm = dict(m)
                for s, w in t.post.items():
                    if s in pm:
                        pm[s] = max(pm[s] - w, 0)
                for s, w in t.pre.items():
                    pm[s] = pm.get(s, 0) + w
                pm = {s: v for s, v in pm.items() if v}
                if not possible(pm):
                    continue
                pk = _frozen(pm)
                if pk in parent:
                    continue
                sp = pm.keys()
                if any(supp[bk] <= sp and covers(pm, b) for bk, b in basis.items()):
                    continue
                for bk in [bk for bk, b in basis.items() if sp <= supp[bk] and covers(b, pm)]:
                    del basis[bk]
                basis[pk] = pm
                supp[pk] = frozenset(sp)
                parent[pk] = (t.name, key)
                nxt.append(pk)
        work = nxt
    return NotCoverable(len(parent))


def _firing(k: frozenset, parent) -> tuple[str, ...]:
    seq = []
    while parent[k] is not None:
        name, k = parent[k]
        seq.append(name)
    return tuple(seq)


def replay_firing(net: PetriNet, m0: Marking, seq: Iterable[str]) -> Marking:
    """Fire ``seq`` from ``m0``; raises ValueError if a transition is disabled."""
    by_name = {t.name: t for t in net.transitions}
    m = dict(m0)
    for name in seq:
        t = by_name[name]
        if not net.enabled(t, m):
            raise ValueError(f"transition {name} is not enabled")
        m = net.fire(t, m)
    return m


# -- driver --------------------------------------------------------------------


@dataclass
class ParamAttackResult:
    attack: Attack
    status: str
    basis: int = 0
    firing: tuple[str, ...] | None = None
    reason: str | None = None

    def to_json(self, p: Program) -> dict:
        d = self.attack.to_json(p)
        d["status"] = self.status
        if self.reason is not None:
            d["reason"] = self.reason
        d["basis_size"] = self.basis
        if self.firing is not None:
            d["firing_sequence"] = list(self.firing)
        return d


@dataclass
class ParamReport:
    program: str
    results: list[ParamAttackResult]

    @property
    def verdict(self) -> str:
        if any(r.status == FEASIBLE for r in self.results):
            return "NonRobust"
        if any(r.status == INCONCLUSIVE for r in self.results):
            return "Inconclusive"
        return "Robust"

    @property
    def queries(self) -> int:
        return sum(r.status != DROPPED for r in self.results)

    @property
    def totals(self) -> dict:
        c = [r.status for r in self.results]
        return {"RQ": len(c), "NR1": c.count(DROPPED), "NR2": c.count(INFEASIBLE),
                "R": c.count(FEASIBLE), "INC": c.count(INCONCLUSIVE)}

    def to_json(self, p: Program) -> dict:
        return {
            "program": self.program,
            "parameterized": True,
            "verdict": self.verdict,
            "attacks": [r.to_json(p) for r in self.results],
            "totals": self.totals,
        }

    @property
    def exit_code(self) -> int:
        return {"Robust": 0, "NonRobust": 1}.get(self.verdict, 2)


def check_param_attack(p: Program, a: Attack, budget: int = DEFAULT_BASIS_BUDGET) -> ParamAttackResult:
    pa = instrument_parameterized(p, a)
    ca = counter_abstraction(pa)
    groups = [[s for s in ca.net.places if s[:2] == ("mem", x)] for x in range(pa.memory_size)]
    r = coverable(ca.net, ca.m0, ca.goal, budget, groups)
    if isinstance(r, Coverable):
        return ParamAttackResult(a, FEASIBLE, r.basis, r.firing)
    if isinstance(r, NotCoverable):
        return ParamAttackResult(a, INFEASIBLE, r.basis)
    return ParamAttackResult(a, INCONCLUSIVE, r.basis, reason=f"basis budget {budget} exceeded")


def _one(args):
    return check_param_attack(*args)


def check_param_robustness(
    p: Program, workers: int = 1, budget: int = DEFAULT_BASIS_BUDGET
) -> ParamReport:
    attacks = enumerate_attacks(p)
    results: list = [None] * len(attacks)
    todo = []
    for i, a in enumerate(attacks):
        f = syntactic_filter(p, a)
        if isinstance(f, Drop):
            results[i] = ParamAttackResult(a, DROPPED, reason=f.reason)
        else:
            todo.append(i)
    jobs = [(p, attacks[i], budget) for i in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_one, jobs))
    else:
        done = [_one(j) for j in jobs]
    for i, r in zip(todo, done):
        results[i] = r
    return ParamReport(p.name, results)
