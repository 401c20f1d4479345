"""Fence synthesis: eliminating fence sets per attack and an exact 0/1 ILP."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable

from .attacks import Attack, Drop, involved_labels, syntactic_filter
from .checker import DEFAULT_BUDGET, FEASIBLE, INCONCLUSIVE, INFEASIBLE, RobustnessReport, check_attack, check_robustness
from .program import FenceSet, Program, ProgramError, insert_fences

Label = tuple[str, str]  # (thread id, label)


class SynthesisInconclusive(RuntimeError):
    """A feasibility query needed by fence synthesis ran out of budget."""


# -- costs ---------------------------------------------------------------------


@dataclass(frozen=True)
class CostFunction:
    """Strictly positive label costs; labels without an entry cost 1."""

    table: dict = field(default_factory=dict)
    default: Fraction = Fraction(1)

    def __post_init__(self):
        for k, v in self.table.items():
            if v <= 0:
                raise ValueError(f"cost of {k[0]}.{k[1]} must be positive, got {v}")

    def __call__(self, lab: Label) -> Fraction:
        return self.table.get(lab, self.default)

    @classmethod
    def parse(cls, text: str) -> "CostFunction":
        """Lines ``thread.label = rational``; ``#`` starts a comment."""
        table = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            tid, dot, lab = key.strip().partition(".")
            if not sep or not dot or not tid or not lab:
                raise ProgramError(f"cost file line {n}: expected 'thread.label = rational'", n)
            try:
                c = Fraction(val.strip())
            except (ValueError, ZeroDivisionError):
                raise ProgramError(f"cost file line {n}: bad rational {val.strip()!r}", n) from None
            if c <= 0:
                raise ProgramError(f"cost file line {n}: cost must be positive", n)
            table[(tid, lab.strip())] = c
        return cls(table)

    def check_labels(self, p: Program) -> None:
        for tid, lab in self.table:
            try:
                t = p.thread(tid)
            except KeyError:
                raise ProgramError(f"cost for unknown thread {tid}") from None
            if lab not in t.labels:
                raise ProgramError(f"cost for unknown label {tid}.{lab}")


# -- eliminating sets ----------------------------------------------------------


def _eliminates(args) -> bool:
    p, a, fs, budget = args
    q = insert_fences(p, fs)
    # fence indices are appended, so the attack's instruction indices still apply
    if isinstance(syntactic_filter(q, a), Drop):
        return True
    r = check_attack(q, a, budget)
    if r.status == INCONCLUSIVE:
        raise SynthesisInconclusive(f"re-check of {a.describe(p)} with fences {fs}: {r.reason}")
    return r.status == INFEASIBLE


def eliminating_sets(
    p: Program, a: Attack, budget: int = DEFAULT_BUDGET, pool: ProcessPoolExecutor | None = None
) -> list[FenceSet]:
    """Irreducible fence sets over the involved labels that make ``a`` infeasible.

    Candidates are tried by increasing size, in lexicographic order within a
    size; supersets of sets already found are skipped.
    """
    labels = sorted(involved_labels(p, a))
    found: list[frozenset] = []
    for k in range(1, len(labels) + 1):
        cands = [
            FenceSet.of((a.attacker, l) for l in c)
            for c in combinations(labels, k)
            if not any(f <= set(c) for f in found)
        ]
        if not cands:
            break
        jobs = [(p, a, fs, budget) for fs in cands]
        ok = list(pool.map(_eliminates, jobs)) if pool and len(jobs) > 1 else map(_eliminates, jobs)
        for fs, hit in zip(cands, ok):
            if hit:
                found.append(frozenset(l for _, l in fs.labels))
    return [FenceSet.of((a.attacker, l) for l in sorted(f)) for f in sorted(found, key=lambda f: (len(f), sorted(f)))]


# -- ILP -----------------------------------------------------------------------


@dataclass
class IlpInstance:
    """``min Σ c(l)·x_l`` s.t. per attack ``Σ x_F ≥ 1`` and per set ``Σ_{l∈F} x_l ≥ |F|·x_F``."""

    labels: list[Label]
    costs: dict  # label -> Fraction
    sets: list[frozenset]  # one variable x_F per set
    selection: list[list[int]]  # per attack, indices into ``sets``
    attacks: list[Attack] = field(default_factory=list)

    @property
    def variable_count(self) -> int:
        return len(self.labels) + len(self.sets)

    def constraints(self) -> list[tuple[dict, int]]:
        """Rows as ``({variable: coefficient}, rhs)`` meaning ``row·x ≥ rhs``."""
        rows = []
        for sel in self.selection:
            rows.append(({("F", i): 1 for i in sel}, 1))
        for i, s in enumerate(self.sets):
            row = {("l", l): 1 for l in sorted(s)}
            row[("F", i)] = -len(s)
            rows.append((row, 0))
        return rows

    def objective(self, chosen: Iterable[Label]) -> Fraction:
        return sum((self.costs[l] for l in chosen), Fraction(0))


def build_ilp(feasible: list[tuple[Attack, list[FenceSet]]], c: CostFunction) -> IlpInstance:
    sets: list[frozenset] = []
    selection: list[list[int]] = []
    for a, fsets in feasible:
        if not fsets:
            raise AssertionError(f"attack {a} has no eliminating fence set")
        sel = []
        for fs in fsets:
            sel.append(len(sets))
            sets.append(frozenset(fs.labels))
        selection.append(sel)
    labels = sorted(set().union(*sets)) if sets else []
    return IlpInstance(labels, {l: Fraction(c(l)) for l in labels}, sets, selection,
                       [a for a, _ in feasible])


@dataclass(frozen=True)
class IlpSolution:
    x_label: dict  # label -> 0/1
    x_set: list[int]
    cost: Fraction

    @property
    def fences(self) -> FenceSet:
        return FenceSet.of(l for l, v in self.x_label.items() if v)


def solve(ilp: IlpInstance) -> IlpSolution:
    """Exact branch and bound over the set variables.

    Among optimal label sets the lexicographically smallest sorted one wins.
    """
    n = len(ilp.selection)
    best: list = [None, None]  # (cost, sorted labels)

    def extra(chosen: frozenset, i: int) -> Fraction:
        return ilp.objective(ilp.sets[i] - chosen)

    def bound(chosen: frozenset, k: int) -> Fraction:
        # any completion pays at least the cheapest extension of each open attack
        lb = Fraction(0)
        for j in range(k, n):
            sel = ilp.selection[j]
            if any(ilp.sets[i] <= chosen for i in sel):
                continue
            lb = max(lb, min(extra(chosen, i) for i in sel))
        return lb

    def better(cost, labs) -> bool:
        return best[0] is None or (cost, labs) < (best[0], best[1])

    def go(chosen: frozenset, cost: Fraction, k: int):
        while k < n and any(ilp.sets[i] <= chosen for i in ilp.selection[k]):
            k += 1
        if best[0] is not None and cost + bound(chosen, k) > best[0]:
            return
        if k == n:
            labs = sorted(chosen)
            if better(cost, labs):
                best[0], best[1] = cost, labs
            return
        opts = sorted(ilp.selection[k], key=lambda i: (extra(chosen, i), sorted(ilp.sets[i])))
        for i in opts:
            new = chosen | ilp.sets[i]
            go(new, cost + extra(chosen, i), k + 1)

    go(frozenset(), Fraction(0), 0)
    chosen = set(best[1])
    return IlpSolution(
        {l: int(l in chosen) for l in ilp.labels},
        [int(s <= chosen) for s in ilp.sets],
        best[0],
    )


# -- driver --------------------------------------------------------------------


@dataclass
class FenceResult:
    fences: FenceSet
    cost: Fraction
    program: Program  # the fenced program
    report: RobustnessReport  # re-check of the fenced program
    eliminating: list[tuple[Attack, list[FenceSet]]]
    ilp: IlpInstance

    def to_json(self, p: Program) -> dict:
        return {
            "program": p.name,
            "fences": [f"{t}.{l}" for t, l in self.fences],
            "cost": str(self.cost),
            "eliminating_sets": [
                {**a.to_json(p), "sets": [[f"{t}.{l}" for t, l in fs] for fs in sets]}
                for a, sets in self.eliminating
            ],
            "recheck": self.report.to_json(self.program),
        }


def optimal_fences(
    p: Program,
    costs: CostFunction | None = None,
    workers: int = 1,
    budget: int = DEFAULT_BUDGET,
) -> FenceResult:
    """A cost-optimal valid fence set; empty iff ``p`` is robust."""
    costs = costs or CostFunction()
    costs.check_labels(p)
    report = check_robustness(p, workers=workers, budget=budget)
    if report.verdict == "Inconclusive":
        raise SynthesisInconclusive(f"robustness check of {p.name} is inconclusive")
    feasible_attacks = [r.attack for r in report.results if r.status == FEASIBLE]
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        elim = [(a, eliminating_sets(p, a, budget, pool)) for a in feasible_attacks]
    finally:
        if pool:
            pool.shutdown()
    ilp = build_ilp(elim, costs)
    sol = solve(ilp)
    fenced = insert_fences(p, sol.fences)
    recheck = check_robustness(fenced, workers=workers, budget=budget)
    if recheck.verdict == "Inconclusive":
        raise SynthesisInconclusive(f"re-check of fenced {p.name} is inconclusive")
    if recheck.verdict != "Robust":
        raise AssertionError(f"fence set {sol.fences} does not make {p.name} robust")
    return FenceResult(sol.fences, sol.cost, fenced, recheck, elim, ilp)
