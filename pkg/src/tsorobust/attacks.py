"""Attacks, the syntactic filter, involved labels and TSO witness validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .machine import machine_of
from .program import Cas, Load, Program, Store, control_paths, is_fence_like, reachable_labels
from .semantics import Action, Computation
from .traces import delay_pairs, hb_reachable, trace_of


@dataclass(frozen=True, order=True)
class Attack:
    attacker: str
    st_index: int  # instruction index of the store within the attacker thread
    ld_index: int

    def stinst(self, p: Program):
        return p.thread(self.attacker).instructions[self.st_index]

    def ldinst(self, p: Program):
        return p.thread(self.attacker).instructions[self.ld_index]

    def describe(self, p: Program) -> str:
        return f"({self.attacker}, st@{self.stinst(p).src}, ld@{self.ldinst(p).src})"

    def to_json(self, p: Program) -> dict:
        return {
            "attacker": self.attacker,
            "st_label": self.stinst(p).src,
            "ld_label": self.ldinst(p).src,
            "st_index": self.st_index,
            "ld_index": self.ld_index,
        }


def enumerate_attacks(p: Program) -> list[Attack]:
    out = []
    for t in p.threads:
        stores = [i for i, li in enumerate(t.instructions) if isinstance(li.inst, Store)]
        loads = [i for i, li in enumerate(t.instructions) if isinstance(li.inst, Load)]
        out += [Attack(t.id, s, l) for s in stores for l in loads]
    return out


@dataclass(frozen=True)
class Keep:
    pass


@dataclass(frozen=True)
class Drop:
    reason: str  # "unreachable" | "fence-on-all-paths"


def syntactic_filter(p: Program, a: Attack) -> Keep | Drop:
    t = p.thread(a.attacker)
    start, end = a.stinst(p).dst, a.ldinst(p).src
    if end not in reachable_labels(t, start):
        return Drop("unreachable")
    if end not in reachable_labels(t, start, skip=is_fence_like):
        return Drop("fence-on-all-paths")
    return Keep()


def involved_labels(p: Program, a: Attack) -> set[str]:
    t = p.thread(a.attacker)
    return control_paths(t, a.stinst(p).dst, a.ldinst(p).src)[1]


# -- witnesses --------------------------------------------------------------


@dataclass(frozen=True)
class TsoWitness:
    """``τ1·isu·τ2·ld_A·τ3·st_A·τ4`` given by the positions of isu, ld_A and st_A."""

    computation: Computation
    isu_index: int
    ld_index: int
    st_index: int

    def fragments(self) -> dict[str, tuple[Action, ...]]:
        c = self.computation.actions
        i, l, s = self.isu_index, self.ld_index, self.st_index
        return {"tau1": c[:i], "tau2": c[i + 1:l], "tau3": c[l + 1:s], "tau4": c[s + 1:]}

    def to_json(self) -> dict:
        return {
            "computation": self.computation.to_json()["actions"],
            "decomposition": {"isu": self.isu_index, "ld": self.ld_index, "st": self.st_index},
        }

    @classmethod
    def from_json(cls, d: dict) -> "TsoWitness":
        dec = d["decomposition"]
        comp = Computation.from_json({"actions": d["computation"]})
        return cls(comp, dec["isu"], dec["ld"], dec["st"])


@dataclass(frozen=True)
class Valid:
    pass


@dataclass(frozen=True)
class Invalid:
    condition: str
    detail: str = ""


ValidationResult = Union[Valid, Invalid]


def replay_instructions(p: Program, c: Computation, fixed: dict | None = None):
    """Instruction provenance of each action in a TSO computation.

    Returns a list with ``(thread index, instruction index)`` for actions
    produced by an instruction and ``None`` for store flushes, or None if
    ``c`` is not a TSO computation of ``p``.  ``fixed`` pins chosen action
    positions to given instructions.
    """
    m = machine_of(p)
    acts = tuple(c.actions)
    fixed = fixed or {}
    failed = set()
    prov: list = []

    def moves(raw, bufs):
        for ti in range(m.nthreads):
            for ci in m.at[ti][raw[ti]]:
                r = m.tso_exec(ci, raw, bufs)
                if r is not None:
                    yield ti, (ti, ci.index), r
            r = m.tso_flush(ti, raw, bufs)
            if r is not None:
                yield ti, None, r

    def go(i, raw, bufs):
        if i == len(acts):
            return not any(bufs)
        key = (i, raw, bufs)
        if key in failed:
            return False
        for ti, src, (raw_acts, nraw, nbufs) in moves(raw, bufs):
            seq = tuple(Action(m.tids[ti], k, a, v) for k, a, v in raw_acts)
            if acts[i:i + len(seq)] != seq:
                continue
            if any(fixed.get(i + k, src) != src for k in range(len(seq))):
                continue
            prov.extend([src] * len(seq))
            if go(i + len(seq), nraw, nbufs):
                return True
            del prov[len(prov) - len(seq):]
        failed.add(key)
        return False

    return prov if go(0, m.initial(), ((),) * m.nthreads) else None


def validate_witness(p: Program, a: Attack, w: TsoWitness) -> ValidationResult:
    c = w.computation.actions
    n = len(c)
    i_isu, i_ld, i_st = w.isu_index, w.ld_index, w.st_index
    if not (0 <= i_isu < i_ld < i_st < n):
        raise IndexError("witness decomposition out of range")
    ta = a.attacker
    ai = p.thread_index(ta)
    isu, ld, st = c[i_isu], c[i_ld], c[i_st]
    if (isu.thread, isu.kind) != (ta, "isu") or (ld.thread, ld.kind) != (ta, "ld"):
        return Invalid("w-b", "decomposition does not point at attacker issue and load")
    if (st.thread, st.kind) != (ta, "st"):
        return Invalid("w-b", "st_A is not an attacker store")
    pairs = delay_pairs(c)
    partner = {j: i for j, i, _ in pairs}
    if partner.get(i_isu) != i_st:
        return Invalid("w-b", "st_A does not complete the marked issue")
    # w-a: only the attacker delays
    delaying = {c[j].thread for j, _, d in pairs if d > 0}
    if delaying != {ta}:
        return Invalid("w-a", f"delaying threads {sorted(delaying)}")
    # w-b: st_A is the first delayed store, ld_A the last overstepped action
    for j, i, d in pairs:
        if c[j].thread == ta and j < i_isu and d > 0:
            return Invalid("w-b", "an earlier attacker store is delayed")
    for k in range(i_isu + 1, i_ld):
        if c[k].thread == ta and c[k].kind == "st":
            return Invalid("w-b", "attacker store inside tau2")
    if any(c[k].thread == ta for k in range(i_ld + 1, i_st)):
        return Invalid("w-b", "ld_A is not the last overstepped attacker action")
    # w-d: tau4 holds only delayed attacker stores issued before ld_A
    for k in range(i_st + 1, n):
        if c[k].thread != ta or c[k].kind != "st":
            return Invalid("w-d", f"action {k} in tau4 is not an attacker store")
        j = next(j for j, i, _ in pairs if i == k)
        if j > i_ld:
            return Invalid("w-d", f"store {k} in tau4 was issued after ld_A")
    # w-e: ld_A did not read any delayed store early
    for k in range(i_st, n):
        if c[k].addr == ld.addr:
            return Invalid("w-e", f"delayed store {k} writes the address of ld_A")
    # the checks above need no provenance; the rest replays the computation
    prov = replay_instructions(p, w.computation, {i_isu: (ai, a.st_index), i_ld: (ai, a.ld_index)})
    if prov is None:
        if replay_instructions(p, w.computation) is None:
            return Invalid("legal", "not a TSO computation of the program")
        return Invalid("w-b", "st_A/ld_A are not instances of the attack instructions")
    t = p.threads[ai]
    for k in range(i_isu + 1, i_ld):
        if c[k].thread == ta and prov[k] is not None and is_fence_like(t.instructions[prov[k][1]].inst):
            return Invalid("w-b", "attacker fence inside tau2")
    # w-c: ld_A happens before every later action up to st_A
    tr = trace_of(w.computation)
    start = tr.node_of[i_ld]
    after = hb_reachable(tr, start) | {start}
    units = _units(p, c, prov)
    for k in range(i_ld + 1, i_st + 1):
        # a successful cas counts as one action, like an issue with its store
        if not any(tr.node_of[j] in after for j in units[k]):
            return Invalid("w-c", f"action {k} {c[k]} is not happens-before after ld_A")
    return Valid()


def _units(p: Program, c, prov) -> list[tuple[int, ...]]:
    """For each action, the positions of the atomic unit it belongs to."""
    units: list[tuple[int, ...]] = [(k,) for k in range(len(c))]
    k = 0
    while k < len(c):
        src = prov[k]
        if (
            src is not None
            and c[k].kind == "ld"
            and isinstance(p.threads[src[0]].instructions[src[1]].inst, Cas)
            and k + 2 < len(c)
            and prov[k + 1] == src == prov[k + 2]
            and c[k + 1].kind == "isu"
            and c[k + 2].kind == "st"
        ):
            units[k] = units[k + 1] = units[k + 2] = (k, k + 1, k + 2)
            k += 3
        else:
            k += 1
    return units


def find_witness(p: Program, a: Attack, max_buffer: int, max_length: int) -> TsoWitness | None:
    """Brute-force search for a TSO witness among bounded computations."""
    from .semantics import enumerate_tso_computations

    for comp in enumerate_tso_computations(p, max_buffer, max_length):
        for w in candidate_decompositions(comp, a.attacker):
            if validate_witness(p, a, w) == Valid():
                return w
    return None


def candidate_decompositions(c: Computation, attacker: str):
    acts = c.actions
    pairs = delay_pairs(acts)
    for j, i, d in pairs:
        if acts[j].thread != attacker or d == 0:
            continue
        for k in range(j + 1, i):
            if acts[k].thread == attacker and acts[k].kind == "ld":
                yield TsoWitness(c, j, k, i)
        break  # only the first delayed attacker store can be st_A


def witnessed_attacks(p: Program, max_buffer: int, max_length: int) -> dict[Attack, TsoWitness]:
    """Attacks with a valid witness among the bounded computations, one pass."""
    from .semantics import enumerate_tso_computations

    todo: dict[str, list[Attack]] = {}
    for a in enumerate_attacks(p):
        todo.setdefault(a.attacker, []).append(a)
    found: dict[Attack, TsoWitness] = {}
    for comp in enumerate_tso_computations(p, max_buffer, max_length):
        for tid in {c.thread for c in comp.actions if c.kind == "isu"}:
            open_ = [a for a in todo.get(tid, ()) if a not in found]
            if not open_:
                continue
            for w in candidate_decompositions(comp, tid):
                for a in open_:
                    if a not in found and validate_witness(p, a, w) == Valid():
                        found[a] = w
    return found
