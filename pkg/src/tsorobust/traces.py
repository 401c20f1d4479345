"""Traces, happens-before, delay counting and the bounded robustness oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Union

from .machine import machine_of
from .program import Program
from .semantics import Action, Computation, _tso_moves


class TraceError(ValueError):
    pass


@dataclass
class Trace:
    """Node-labelled graph; nodes are numbered in creation order."""

    label: list[Action] = field(default_factory=list)
    po: set = field(default_factory=set)  # immediate program-order edges
    st: set = field(default_factory=set)  # immediate store-order edges
    src: dict = field(default_factory=dict)  # load node -> store node
    cf: set = field(default_factory=set)
    thread_nodes: dict = field(default_factory=dict)  # thread -> nodes in po order
    store_nodes: dict = field(default_factory=dict)  # addr -> stores in st order
    node_of: list[int] = field(default_factory=list)  # action index -> node

    @property
    def nodes(self) -> range:
        return range(len(self.label))

    def src_edges(self) -> set:
        return {(s, l) for l, s in self.src.items()}

    def hb_edges(self) -> set:
        return self.po | self.st | self.src_edges() | self.cf

    def __len__(self):
        return len(self.label)

    def position(self, n: int) -> tuple[str, int]:
        t = self.label[n].thread
        return t, self.thread_nodes[t].index(n)

    def canonical(self) -> tuple:
        """Representation independent of the interleaving that produced the trace."""
        pos = {}
        threads = []
        for t in sorted(self.thread_nodes):
            ns = self.thread_nodes[t]
            for i, n in enumerate(ns):
                pos[n] = (t, i)
            threads.append((t, tuple(tuple(self.label[n]) for n in ns)))
        stores = tuple(
            (a, tuple(pos[n] for n in ns)) for a, ns in sorted(self.store_nodes.items())
        )
        srcs = tuple(sorted((pos[s], pos[l]) for l, s in self.src.items()))
        return tuple(threads), stores, srcs

    def to_text(self) -> str:
        """Node list followed by typed edge list."""
        lines = [f"node {n} {a}" for n, a in enumerate(self.label)]
        for kind, edges in (("po", self.po), ("st", self.st), ("src", self.src_edges()),
                            ("cf", self.cf)):
            lines += [f"{kind} {a} {b}" for a, b in sorted(edges)]
        return "\n".join(lines) + "\n"


def trace_of(c: Computation | list) -> Trace:
    """Inductive trace construction, conflict relation included."""
    tr = Trace()
    pending: dict[str, list[int]] = {}  # thread -> issue nodes awaiting their store
    for a in c:
        if a.kind == "st":
            q = pending.get(a.thread)
            if not q:
                raise TraceError(f"store {a} without a pending issue")
            n = q.pop(0)
            tr.label[n] = a
            ss = tr.store_nodes.setdefault(a.addr, [])
            if ss:
                tr.st.add((ss[-1], n))
            ss.append(n)
            # loads of this thread that read this store early
            ns = tr.thread_nodes[a.thread]
            for m in ns[ns.index(n) + 1:]:
                if tr.label[m] == Action(a.thread, "ld", a.addr, a.val):
                    tr.src[m] = n
        else:
            n = len(tr.label)
            tr.label.append(a)
            ns = tr.thread_nodes.setdefault(a.thread, [])
            if ns:
                tr.po.add((ns[-1], n))
            ns.append(n)
            if a.kind == "isu":
                pending.setdefault(a.thread, []).append(n)
            elif a.kind == "ld":
                ss = tr.store_nodes.get(a.addr)
                if ss:
                    tr.src[n] = ss[-1]
        tr.node_of.append(n)
    _conflicts(tr)
    return tr


def _conflicts(tr: Trace) -> None:
    for n, a in enumerate(tr.label):
        if a.kind != "ld":
            continue
        ss = tr.store_nodes.get(a.addr, [])
        s = tr.src.get(n)
        later = ss if s is None else ss[ss.index(s) + 1:] if s in ss else []
        for x in later:
            tr.cf.add((n, x))


def _sorter(tr: Trace) -> TopologicalSorter:
    ts = TopologicalSorter()
    for n in tr.nodes:
        ts.add(n)
    for a, b in tr.hb_edges():
        ts.add(b, a)
    return ts


def happens_before(tr: Trace) -> set:
    return tr.hb_edges()


def hb_cycle(tr: Trace) -> list[int] | None:
    """Some happens-before cycle as a node list (first node repeated), or None."""
    try:
        _sorter(tr).prepare()
    except CycleError as e:
        return list(e.args[1])
    return None


def is_sc_feasible(tr: Trace) -> bool:
    return hb_cycle(tr) is None


def hb_reachable(tr: Trace, start: int) -> set[int]:
    """Nodes reachable from ``start`` by one or more happens-before edges."""
    succ: dict[int, list[int]] = {}
    for a, b in tr.hb_edges():
        succ.setdefault(a, []).append(b)
    seen: set[int] = set()
    stack = list(succ.get(start, ()))
    while stack:
        n = stack.pop()
        if n not in seen:
            seen.add(n)
            stack.extend(succ.get(n, ()))
    return seen


def cycle_edge_kinds(tr: Trace, cycle: list[int]) -> dict[str, int]:
    """Counts edge kinds along a cycle; po is preferred, then st, src, cf."""
    out = {"po": 0, "st": 0, "src": 0, "cf": 0}
    srcs = tr.src_edges()
    for a, b in zip(cycle, cycle[1:]):
        for kind, edges in (("po", tr.po), ("st", tr.st), ("src", srcs), ("cf", tr.cf)):
            if (a, b) in edges:
                out[kind] += 1
                break
    return out


# -- delays ----------------------------------------------------------------


def delay_pairs(c: Computation | list) -> list[tuple[int, int, int]]:
    """``(issue index, store index, distance)`` for each corresponding pair."""
    acts = list(c)
    issues: dict[str, list[int]] = {}
    count: dict[str, int] = {}  # actions of each thread so far
    at: dict[int, int] = {}
    out = []
    for i, a in enumerate(acts):
        t = a.thread
        if a.kind == "isu":
            issues.setdefault(t, []).append(i)
        elif a.kind == "st":
            j = issues[t].pop(0)
            out.append((j, i, count[t] - at[j] - 1))
        at[i] = count.get(t, 0)
        count[t] = at[i] + 1
    return out


def delay_count(c: Computation | list) -> int:
    return sum(d for _, _, d in delay_pairs(c))


def delaying_threads(c: Computation | list) -> set[str]:
    acts = list(c)
    return {acts[i].thread for i, _, d in delay_pairs(acts) if d > 0}


# -- oracle ----------------------------------------------------------------


@dataclass(frozen=True)
class RobustWithinBound:
    computations: int
    max_buffer: int
    max_length: int


@dataclass(frozen=True)
class Violating:
    computation: Computation
    delays: int


OracleResult = Union[RobustWithinBound, Violating]


def violations(p: Program, max_buffer: int = 1, max_length: int = 24):
    """Violating TSO computations within the bounds, depth first.

    Extensions of a violating computation are not explored: their traces
    contain the same cycle and their delay count is no smaller.
    Yields ``(computation, delays)`` and finally returns the number of
    computations examined.
    """
    m = machine_of(p)
    acts: list[Action] = []
    examined = 0

    def dfs(raw, bufs):
        nonlocal examined
        if not any(bufs):
            examined += 1
            d = delay_count(acts) if acts else 0
            if d and not is_sc_feasible(trace_of(acts)):
                yield Computation(tuple(acts)), d
                return
        for seq, nraw, nbufs in _tso_moves(m, raw, bufs, max_buffer):
            if len(acts) + len(seq) > max_length:
                continue
            acts.extend(seq)
            yield from dfs(nraw, nbufs)
            del acts[len(acts) - len(seq):]

    yield from dfs(m.initial(), ((),) * m.nthreads)
    return examined


def oracle_check(p: Program, max_buffer: int = 1, max_length: int = 24) -> OracleResult:
    """Bounded brute-force check; the earliest minimal-delay violation wins."""
    best = None
    gen = violations(p, max_buffer, max_length)
    examined = 0
    while True:
        try:
            c, d = next(gen)
        except StopIteration as stop:
            examined = stop.value
            break
        if best is None or d < best.delays:
            best = Violating(c, d)
            if d == 1:
                break
    if best is not None:
        return best
    return RobustWithinBound(examined, max_buffer, max_length)


def store_count(p: Program) -> int:
    from .program import Store, Cas

    return sum(isinstance(li.inst, (Store, Cas)) for t in p.threads for li in t.instructions)


def complete_bounds(p: Program) -> tuple[int, int]:
    """Bounds that make enumeration exhaustive for loop-free programs."""
    n = max(1, store_count(p))
    # each instruction contributes at most three actions (a successful cas)
    return n, 3 * p.instruction_count()
