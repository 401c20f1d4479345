"""Operational SC and TSO semantics, computations and SC reachability."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Union

from . import kernel
from .machine import Machine, machine_of
from .program import Program


class Action(NamedTuple):
    thread: str
    kind: str  # "isu" | "loc" | "ld" | "st"
    addr: int | None = None
    val: int | None = None

    def to_json(self) -> dict:
        d = {"thread": self.thread, "kind": self.kind}
        if self.kind in ("ld", "st"):
            d["addr"], d["val"] = self.addr, self.val
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Action":
        return cls(d["thread"], d["kind"], d.get("addr"), d.get("val"))

    def __str__(self) -> str:
        if self.kind in ("ld", "st"):
            return f"({self.thread},{self.kind},{self.addr},{self.val})"
        return f"({self.thread},{self.kind})"


@dataclass(frozen=True)
class ScState:
    pc: dict
    val: dict  # (thread, register) or address -> value


@dataclass(frozen=True)
class TsoState:
    pc: dict
    val: dict
    buf: dict = field(default_factory=dict)  # thread -> tuple of (addr, value)


@dataclass(frozen=True)
class Computation:
    actions: tuple[Action, ...]
    kind: str = "TSO"

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def to_json(self) -> dict:
        return {"kind": self.kind, "actions": [a.to_json() for a in self.actions]}

    @classmethod
    def from_json(cls, d: dict) -> "Computation":
        return cls(tuple(Action.from_json(a) for a in d["actions"]), d.get("kind", "TSO"))

    def __str__(self) -> str:
        return "·".join(str(a) for a in self.actions) or "ε"


# -- raw <-> structured states ---------------------------------------------


def to_raw(m: Machine, s: ScState | TsoState) -> tuple:
    p = m.program
    raw = [0] * m.size
    for ti, t in enumerate(p.threads):
        raw[ti] = m.label_index[ti][s.pc[t.id]]
        for r in t.registers:
            raw[m.reg_slot[ti][r]] = s.val.get((t.id, r), 0)
    for a in range(m.mem_size):
        raw[m.mem_off + a] = s.val.get(a, 0)
    return tuple(raw)


def from_raw(m: Machine, raw: tuple) -> ScState:
    p = m.program
    pc, val = {}, {}
    for ti, t in enumerate(p.threads):
        pc[t.id] = m.labels[ti][raw[ti]]
        for r in t.registers:
            val[(t.id, r)] = raw[m.reg_slot[ti][r]]
    for a in range(m.mem_size):
        val[a] = raw[m.mem_off + a]
    return ScState(pc, val)


def _tso_from_raw(m: Machine, raw: tuple, bufs: tuple) -> TsoState:
    s = from_raw(m, raw)
    return TsoState(s.pc, s.val, {t.id: bufs[i] for i, t in enumerate(m.program.threads)})


def _bufs_of(m: Machine, s: TsoState) -> tuple:
    return tuple(tuple(s.buf.get(t.id, ())) for t in m.program.threads)


def initial_sc(p: Program) -> ScState:
    m = machine_of(p)
    return from_raw(m, m.initial())


def initial_tso(p: Program) -> TsoState:
    m = machine_of(p)
    return _tso_from_raw(m, m.initial(), ((),) * m.nthreads)


def _actions(tid: str, acts) -> tuple[Action, ...]:
    return tuple(Action(tid, k, a, v) for k, a, v in acts)


# -- single steps -------------------------------------------------------------


def tso_step(p: Program, s: TsoState) -> list[tuple[Action | tuple, TsoState]]:
    """All TSO successors of ``s``: per thread, its instructions then a flush.

    A successful Cas yields its ``ld·isu·st`` action tuple instead of a single action.
    """
    m = machine_of(p)
    raw, bufs = to_raw(m, s), _bufs_of(m, s)
    out = []
    for seq, nraw, nbufs in _tso_moves(m, raw, bufs, None):
        out.append((seq[0] if len(seq) == 1 else seq, _tso_from_raw(m, nraw, nbufs)))
    return out


def _tso_moves(m: Machine, raw: tuple, bufs: tuple, max_buffer: int | None):
    """Yields ``(actions, raw, bufs)`` with ``actions`` a tuple of :class:`Action`."""
    tids = m.tids
    for ti in range(m.nthreads):
        tid = tids[ti]
        for ci in m.at[ti][raw[ti]]:
            r = m.tso_exec(ci, raw, bufs, max_buffer)
            if r is not None:
                yield _actions(tid, r[0]), r[1], r[2]
        r = m.tso_flush(ti, raw, bufs)
        if r is not None:
            yield _actions(tid, r[0]), r[1], r[2]


def sc_step(p: Program, s: ScState) -> list[tuple[tuple[Action, ...], ScState]]:
    m = machine_of(p)
    raw = to_raw(m, s)
    out = []
    for ci, acts, nraw in m.sc_successors(raw):
        out.append((_actions(p.threads[ci.thread].id, acts), from_raw(m, nraw)))
    return out


# -- reachability --------------------------------------------------------------


@dataclass(frozen=True)
class Goal:
    """Conjunction of equalities on program counters, registers and memory."""

    pc: dict = field(default_factory=dict)  # thread -> label
    regs: dict = field(default_factory=dict)  # (thread, register) -> value
    mem: dict = field(default_factory=dict)  # address -> value

    def slots(self, m: Machine) -> list[tuple[int, int]]:
        p = m.program
        out = []
        for tid, lab in self.pc.items():
            ti = p.thread_index(tid)
            out.append((ti, m.label_index[ti][lab]))
        for (tid, r), v in self.regs.items():
            out.append((m.reg_slot[p.thread_index(tid)][r], v))
        for a, v in self.mem.items():
            out.append((m.mem_off + m.check_addr(a), v))
        return sorted(out)

    def holds(self, s: ScState) -> bool:
        return (
            all(s.pc[t] == l for t, l in self.pc.items())
            and all(s.val[k] == v for k, v in self.regs.items())
            and all(s.val[a] == v for a, v in self.mem.items())
        )


@dataclass(frozen=True)
class Reachable:
    path: Computation
    explored: int
    steps: tuple = ()  # (thread index, instruction index) per executed instruction


@dataclass(frozen=True)
class NotReachable:
    explored: int


@dataclass(frozen=True)
class Inconclusive:
    explored: int
    reason: str = "state budget exceeded"


SearchResult = Union[Reachable, NotReachable, Inconclusive]


def replay_sc(m: Machine, instr_ids) -> tuple[Computation, tuple]:
    """Re-executes a kernel path (instruction ids) and returns its SC computation."""
    raw = m.initial()
    acts: list[Action] = []
    steps = []
    tids = [t.id for t in m.program.threads]
    for iid in instr_ids:
        ci = m.instrs[iid]
        r = m.sc_exec(ci, raw)
        if r is None:
            raise AssertionError("kernel path is not executable")
        acts.extend(_actions(tids[ci.thread], r[0]))
        raw = r[1]
        steps.append((ci.thread, ci.index))
    return Computation(tuple(acts), "SC"), tuple(steps)


def sc_reachable(
    p: Program, goal: Goal | Callable[[ScState], bool], budget: int = 10**7
) -> SearchResult:
    """Breadth-first search of the SC state graph for a goal state.

    A :class:`Goal` runs on the reachability kernel; an arbitrary predicate
    falls back to a slower search over structured states.
    """
    m = machine_of(p)
    if isinstance(goal, Goal):
        status, path, explored = kernel.sc_search(m, goal.slots(m), budget)
    else:
        status, path, explored = _search_pred(m, goal, budget)
    if status == 1:
        comp, steps = replay_sc(m, path)
        return Reachable(comp, explored, steps)
    if status == 0:
        return NotReachable(explored)
    return Inconclusive(explored)


def _search_pred(m: Machine, pred, budget: int):
    from collections import deque

    init = m.initial()
    parent = {init: None}
    if pred(from_raw(m, init)):
        return 1, [], 1
    queue = deque([init])
    while queue:
        s = queue.popleft()
        for iid, nxt in kernel.successors(m, s):
            if nxt in parent:
                continue
            parent[nxt] = (s, iid)
            if pred(from_raw(m, nxt)):
                path = []
                while parent[nxt] is not None:
                    nxt, i = parent[nxt]
                    path.append(i)
                return 1, path[::-1], len(parent)
            if len(parent) > budget:
                return -1, None, len(parent)
            queue.append(nxt)
    return 0, None, len(parent)


def sc_reachable_states(p: Program, budget: int = 10**6) -> set[tuple]:
    """Every reachable raw SC state (for cross-checks on small programs)."""
    m = machine_of(p)
    init = m.initial()
    seen = {init}
    stack = [init]
    while stack:
        s = stack.pop()
        for _, nxt in kernel.successors(m, s):
            if nxt not in seen:
                seen.add(nxt)
                if len(seen) > budget:
                    raise RuntimeError("state budget exceeded")
                stack.append(nxt)
    return seen


# -- enumeration -----------------------------------------------------------------


def enumerate_tso_computations(
    p: Program, max_buffer: int = 1, max_length: int = 32
) -> Iterator[Computation]:
    """Every TSO computation of at most ``max_length`` actions whose final state
    has empty buffers, in depth-first order (thread order, instructions before
    the thread's flush)."""
    if max_buffer < 1 or max_length < 0:
        raise ValueError("bounds must be positive")
    m = machine_of(p)
    nt = m.nthreads
    acts: list[Action] = []

    def dfs(raw, bufs):
        if not any(bufs):
            yield Computation(tuple(acts), "TSO")
        for seq, nraw, nbufs in _tso_moves(m, raw, bufs, max_buffer):
            if len(acts) + len(seq) > max_length:
                continue
            acts.extend(seq)
            yield from dfs(nraw, nbufs)
            del acts[len(acts) - len(seq):]

    yield from dfs(m.initial(), ((),) * nt)


def enumerate_sc_computations(p: Program, max_length: int = 32) -> Iterator[Computation]:
    """SC computations (store issue and store adjacent) up to ``max_length`` actions."""
    m = machine_of(p)
    tids = [t.id for t in p.threads]
    acts: list[Action] = []

    def dfs(raw):
        yield Computation(tuple(acts), "SC")
        for ci, a, nraw in m.sc_successors(raw):
            seq = _actions(tids[ci.thread], a)
            if len(acts) + len(seq) > max_length:
                continue
            acts.extend(seq)
            yield from dfs(nraw)
            del acts[len(acts) - len(seq):]

    yield from dfs(m.initial())


def is_tso_computation(p: Program, c: Computation) -> bool:
    """Whether ``c`` is a legal TSO computation of ``p`` ending with empty buffers."""
    m = machine_of(p)
    acts = tuple(c.actions)
    failed = set()

    def accepts(i, raw, bufs):
        if i == len(acts):
            return not any(bufs)
        key = (i, raw, bufs)
        if key in failed:
            return False
        for seq, nraw, nbufs in _tso_moves(m, raw, bufs, None):
            if acts[i:i + len(seq)] == seq and accepts(i + len(seq), nraw, nbufs):
                return True
        failed.add(key)
        return False

    return accepts(0, m.initial(), ((),) * m.nthreads)
