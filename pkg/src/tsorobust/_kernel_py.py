"""Pure-Python SC reachability kernel (fallback for the compiled ``_kernel``)."""

from collections import deque

from .machine import ASSERT, CAS, FENCE, LOAD, LOCAL, STORE, Machine, SemanticsError

NAME = "python"


def _step_fn(m: Machine, ci):
    """Specialised SC successor function ``state -> state | None`` for one instruction."""
    t, dst, mo, msize, n = ci.thread, ci.dst, m.mem_off, m.mem_size, m.n
    reg, fa, fv, fn = ci.reg, ci.fa, ci.fv, ci.fn
    kind = ci.kind

    def addr(s):
        a = fa(s, ())
        if not 0 <= a < msize:
            raise SemanticsError(f"address {a} out of range")
        return a

    if kind == LOAD:
        untag = n if ci.untag else 0

        def step(s):
            out = list(s)
            out[t] = dst
            out[reg] = s[mo + addr(s)] - untag
            return tuple(out)
    elif kind == STORE:
        def step(s):
            out = list(s)
            out[t] = dst
            out[mo + addr(s)] = fv(s, ())
            return tuple(out)
    elif kind == LOCAL:
        def step(s):
            out = list(s)
            out[t] = dst
            out[reg] = fv(s, ())
            return tuple(out)
    elif kind == ASSERT:
        def step(s):
            if not fv(s, ()):
                return None
            out = list(s)
            out[t] = dst
            return tuple(out)
    elif kind == FENCE:
        def step(s):
            out = list(s)
            out[t] = dst
            return tuple(out)
    elif kind == CAS:
        def step(s):
            a = addr(s)
            out = list(s)
            out[t] = dst
            ok = s[mo + a] == fv(s, ())
            if ok:
                out[mo + a] = fn(s, ())
            out[reg] = 1 if ok else 0
            return tuple(out)
    else:
        raise ValueError(kind)
    return step


def _tables(m: Machine):
    tab = m.__dict__.get("_py_tables")
    if tab is None:
        ids = m.instr_id
        tab = [
            [[(ids[(ci.thread, ci.index)], _step_fn(m, ci)) for ci in at_pc] for at_pc in at_t]
            for at_t in m.at
        ]
        m.__dict__["_py_tables"] = tab
    return tab


def successors(m: Machine, s: tuple) -> list:
    """``[(instr id, state)]`` in thread-then-instruction order."""
    out = []
    tab = _tables(m)
    for t in range(m.nthreads):
        for iid, step in tab[t][s[t]]:
            nxt = step(s)
            if nxt is not None:
                out.append((iid, nxt))
    return out


def sc_search(m: Machine, goal, budget: int, init=None):
    """Breadth-first search for a state with ``state[slot] == value`` for all goal pairs.

    Returns ``(status, path, explored)`` with status 1 = found (path is a list
    of instruction ids), 0 = exhausted, -1 = budget exceeded.
    """
    tab = _tables(m)
    nt = m.nthreads
    init = m.initial() if init is None else init
    goal = tuple(goal)

    def hit(s):
        for k, v in goal:
            if s[k] != v:
                return False
        return True

    parent = {init: None}
    if hit(init):
        return 1, [], 1
    queue = deque([init])
    while queue:
        s = queue.popleft()
        for t in range(nt):
            for iid, step in tab[t][s[t]]:
                nxt = step(s)
                if nxt is None or nxt in parent:
                    continue
                parent[nxt] = (s, iid)
                if hit(nxt):
                    return 1, _path(parent, nxt), len(parent)
                if len(parent) > budget:
                    return -1, None, len(parent)
                queue.append(nxt)
    return 0, None, len(parent)


def _path(parent, s):
    path = []
    while parent[s] is not None:
        s, iid = parent[s]
        path.append(iid)
    path.reverse()
    return path
