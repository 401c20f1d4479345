# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled SC reachability kernel.

States are packed as native ``uint16`` arrays inside ``bytes`` objects, so the
visited set hashes flat byte strings.  Expressions run on the postfix
bytecode produced by :class:`tsorobust.machine.Machine`.
"""

from collections import deque

from cpython.bytes cimport PyBytes_AS_STRING, PyBytes_FromStringAndSize
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

NAME = "cython"

DEF MAXSTACK = 64

cdef enum:
    LOAD = 0
    STORE = 1
    FENCE = 2
    LOCAL = 3
    ASSERT = 4
    CAS = 5


cdef class Flat:
    cdef int nthreads, size, mem_off, mem_size, n, ninstr
    cdef int[:] lab_base, at_start, at_list
    cdef int[:] kind, thread, dst, reg, untag, c0, c1, c2
    cdef int[:] code

    def __init__(self, m):
        import array
        self.nthreads = m.nthreads
        self.size = m.size
        self.mem_off = m.mem_off
        self.mem_size = m.mem_size
        self.n = m.n
        self.ninstr = len(m.instrs)
        base = []
        start = []
        lst = []
        for t in range(m.nthreads):
            base.append(len(start))
            for at_pc in m.at[t]:
                start.append(len(lst))
                lst.extend(m.instr_id[(ci.thread, ci.index)] for ci in at_pc)
        start.append(len(lst))
        self.lab_base = array.array("i", base or [0])
        self.at_start = array.array("i", start)
        self.at_list = array.array("i", lst or [0])
        ins = m.instrs
        self.kind = array.array("i", [ci.kind for ci in ins] or [0])
        self.thread = array.array("i", [ci.thread for ci in ins] or [0])
        self.dst = array.array("i", [ci.dst for ci in ins] or [0])
        self.reg = array.array("i", [ci.reg for ci in ins] or [0])
        self.untag = array.array("i", [int(ci.untag) for ci in ins] or [0])
        self.c0 = array.array("i", [ci.code[0] for ci in ins] or [0])
        self.c1 = array.array("i", [ci.code[1] for ci in ins] or [0])
        self.c2 = array.array("i", [ci.code[2] for ci in ins] or [0])
        self.code = array.array("i", m.code or [19])


cdef int _eval(Flat f, int pc, unsigned short* s, int* err) noexcept:
    cdef int stack[MAXSTACK]
    cdef int sp = 0
    cdef int op, a, b, n = f.n
    while True:
        op = f.code[pc]
        if op == 19:
            return stack[sp - 1]
        if op == 0:
            stack[sp] = f.code[pc + 1]
            sp += 1
            pc += 2
            continue
        if op == 1:
            stack[sp] = s[f.code[pc + 1]]
            sp += 1
            pc += 2
            continue
        pc += 1
        if op == 2:
            a = stack[sp - 1]
            if a < 0 or a >= f.mem_size:
                err[0] = 1
                return 0
            stack[sp - 1] = s[f.mem_off + a]
            continue
        if op == 3:
            stack[sp - 1] = 1 if stack[sp - 1] == 0 else 0
            continue
        if op == 17:
            stack[sp - 1] += n
            continue
        if op == 18:
            stack[sp - 1] += 2 * n
            continue
        sp -= 1
        b = stack[sp]
        a = stack[sp - 1]
        if op == 4:
            a = (a + b) % n
        elif op == 5:
            a = ((a - b) % n + n) % n
        elif op == 6:
            a = (a * b) % n
        elif op == 7:
            a = a == b
        elif op == 8:
            a = a != b
        elif op == 9:
            a = a < b
        elif op == 10:
            a = a <= b
        elif op == 11:
            a = a > b
        elif op == 12:
            a = a >= b
        elif op == 13:
            a = (a != 0) and (b != 0)
        elif op == 14:
            a = (a != 0) or (b != 0)
        elif op == 15:
            a = a if a > b else b
        elif op == 16:
            a = a if a < b else b
        stack[sp - 1] = a


cdef int _step(Flat f, int i, unsigned short* s, unsigned short* out, int* err) noexcept:
    """Write the successor of ``s`` under instruction ``i`` into ``out``; 0 if blocked."""
    cdef int k = f.kind[i]
    cdef int a, v, old
    if k == ASSERT:
        if _eval(f, f.c1[i], s, err) == 0:
            return 0
    memcpy(out, s, f.size * sizeof(unsigned short))
    out[f.thread[i]] = <unsigned short>f.dst[i]
    if k == LOAD:
        a = _eval(f, f.c0[i], s, err)
        if a < 0 or a >= f.mem_size:
            err[0] = 1
            return 0
        v = s[f.mem_off + a]
        if f.untag[i]:
            v -= f.n
        out[f.reg[i]] = <unsigned short>v
    elif k == STORE:
        a = _eval(f, f.c0[i], s, err)
        if a < 0 or a >= f.mem_size:
            err[0] = 1
            return 0
        out[f.mem_off + a] = <unsigned short>_eval(f, f.c1[i], s, err)
    elif k == LOCAL:
        out[f.reg[i]] = <unsigned short>_eval(f, f.c1[i], s, err)
    elif k == CAS:
        a = _eval(f, f.c0[i], s, err)
        if a < 0 or a >= f.mem_size:
            err[0] = 1
            return 0
        old = s[f.mem_off + a]
        if old == _eval(f, f.c1[i], s, err):
            out[f.mem_off + a] = <unsigned short>_eval(f, f.c2[i], s, err)
            out[f.reg[i]] = 1
        else:
            out[f.reg[i]] = 0
    return 1


def flat_of(m):
    fl = m.__dict__.get("_flat")
    if fl is None:
        fl = Flat(m)
        m.__dict__["_flat"] = fl
    return fl


cdef bytes _pack(tuple st):
    import array
    return array.array("H", st).tobytes()


cdef tuple _unpack(bytes b):
    import array
    return tuple(array.array("H", b))


def successors(m, tuple state):
    cdef Flat f = flat_of(m)
    cdef bytes sb = _pack(state)
    cdef unsigned short* s = <unsigned short*>PyBytes_AS_STRING(sb)
    cdef unsigned short* out = <unsigned short*>malloc(f.size * sizeof(unsigned short))
    cdef int t, j, i, err = 0
    res = []
    try:
        for t in range(f.nthreads):
            j = f.lab_base[t] + s[t]
            for i in f.at_list[f.at_start[j]:f.at_start[j + 1]]:
                if _step(f, i, s, out, &err):
                    res.append((i, _unpack(PyBytes_FromStringAndSize(<char*>out, f.size * 2))))
                if err:
                    raise _address_error()
    finally:
        free(out)
    return res


def _address_error():
    from .machine import SemanticsError
    return SemanticsError("address out of range")


def sc_search(m, goal, long budget, init=None):
    """Breadth-first goal search; same contract as ``_kernel_py.sc_search``."""
    cdef Flat f = flat_of(m)
    cdef int ng = len(goal)
    cdef int* gslot = <int*>malloc((ng + 1) * sizeof(int))
    cdef int* gval = <int*>malloc((ng + 1) * sizeof(int))
    cdef unsigned short* out = <unsigned short*>malloc(f.size * sizeof(unsigned short))
    cdef unsigned short* s
    cdef int t, j, p, q, i, g, err = 0
    cdef bint ok
    cdef bytes cur, nb
    cdef dict parent
    cdef int nbytes = f.size * 2
    try:
        for g, (k, v) in enumerate(goal):
            gslot[g] = k
            gval[g] = v
        cur = _pack(m.initial() if init is None else tuple(init))
        parent = {cur: None}
        s = <unsigned short*>PyBytes_AS_STRING(cur)
        ok = True
        for g in range(ng):
            if s[gslot[g]] != gval[g]:
                ok = False
                break
        if ok:
            return 1, [], 1
        queue = deque([cur])
        while queue:
            cur = queue.popleft()
            s = <unsigned short*>PyBytes_AS_STRING(cur)
            for t in range(f.nthreads):
                j = f.lab_base[t] + s[t]
                p = f.at_start[j]
                q = f.at_start[j + 1]
                while p < q:
                    i = f.at_list[p]
                    p += 1
                    if not _step(f, i, s, out, &err):
                        if err:
                            raise _address_error()
                        continue
                    if err:
                        raise _address_error()
                    nb = PyBytes_FromStringAndSize(<char*>out, nbytes)
                    if nb in parent:
                        continue
                    parent[nb] = (cur, i)
                    ok = True
                    for g in range(ng):
                        if out[gslot[g]] != gval[g]:
                            ok = False
                            break
                    if ok:
                        return 1, _path(parent, nb), len(parent)
                    if len(parent) > budget:
                        return -1, None, len(parent)
                    queue.append(nb)
        return 0, None, len(parent)
    finally:
        free(gslot)
        free(gval)
        free(out)


cdef list _path(dict parent, bytes s):
    path = []
    while parent[s] is not None:
        s, i = parent[s]
        path.append(i)
    path.reverse()
    return path
