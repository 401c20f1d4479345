"""Flat, index-based form of a :class:`Program` used by the step functions.

A raw SC state is a tuple laid out as ``pcs + registers + memory``: one slot
per thread program counter (label index), one per register (threads in
order) and one per memory cell.  TSO states pair that tuple with a tuple of
per-thread buffers of ``(address, value)`` pairs.

Expressions are compiled twice: to Python closures ``f(state, buffer)`` for
the pure-Python paths and to a postfix bytecode consumed by the compiled
kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

from .program import (
    Assert,
    Aux,
    Binop,
    Call,
    Cas,
    Const,
    Expr,
    Load,
    LocalAssign,
    Mem,
    Mfence,
    Program,
    Reg,
    Store,
    Unop,
    apply_binop,
    aux_address,
)

LOAD, STORE, FENCE, LOCAL, ASSERT, CAS = range(6)

# bytecode opcodes (CONST and SLOT carry one operand)
OP_CONST, OP_SLOT, OP_MEM, OP_NOT = 0, 1, 2, 3
OP_BIN = {"+": 4, "-": 5, "*": 6, "==": 7, "!=": 8, "<": 9, "<=": 10, ">": 11,
          ">=": 12, "&&": 13, "||": 14, "max": 15, "min": 16}
OP_DTAG, OP_HBTAG, OP_END = 17, 18, 19


class SemanticsError(RuntimeError):
    pass


@dataclass
class CInstr:
    thread: int
    index: int
    src: int
    dst: int
    kind: int
    reg: int = -1  # register slot (load target, local target, cas result)
    untag: bool = False
    fa: object = None  # address closure
    fv: object = None  # value / condition / expected closure
    fn: object = None  # cas new-value closure
    code: tuple = (-1, -1, -1)  # bytecode offsets of (addr, value, new)


class Machine:
    def __init__(self, p: Program):
        self.program = p
        self.n = p.domain
        self.nthreads = len(p.threads)
        self.tids = [t.id for t in p.threads]
        self.labels = [t.labels for t in p.threads]
        self.label_index = [{l: i for i, l in enumerate(t.labels)} for t in p.threads]
        self.reg_slot: list[dict[str, int]] = []
        slot = self.nthreads
        for t in p.threads:
            self.reg_slot.append({r: slot + k for k, r in enumerate(t.registers)})
            slot += len(t.registers)
        self.mem_off = slot
        self.mem_size = p.memory_size
        self.size = slot + self.mem_size
        self.code: list[int] = []
        self.instrs: list[CInstr] = []
        self.at: list[list[list[CInstr]]] = [
            [[] for _ in t.labels] for t in p.threads
        ]
        for ti, t in enumerate(p.threads):
            for ii, li in enumerate(t.instructions):
                ci = self._compile_instr(ti, ii, li)
                self.instrs.append(ci)
                self.at[ti][ci.src].append(ci)
        self.instr_id = {(ci.thread, ci.index): k for k, ci in enumerate(self.instrs)}

    # -- compilation -----------------------------------------------------

    def _compile_instr(self, ti: int, ii: int, li) -> CInstr:
        inst = li.inst
        regs = self.reg_slot[ti]
        ci = CInstr(ti, ii, self.label_index[ti][li.src], self.label_index[ti][li.dst], FENCE)
        if isinstance(inst, Load):
            ci.kind, ci.reg, ci.untag = LOAD, regs[inst.reg], inst.untag
            ci.fa = self._closure(inst.addr, regs)
            ci.code = (self._bytecode(inst.addr, regs), -1, -1)
        elif isinstance(inst, Store):
            ci.kind = STORE
            ci.fa = self._closure(inst.addr, regs)
            ci.fv = self._closure(inst.value, regs)
            ci.code = (self._bytecode(inst.addr, regs), self._bytecode(inst.value, regs), -1)
        elif isinstance(inst, Mfence):
            ci.kind = FENCE
        elif isinstance(inst, LocalAssign):
            ci.kind, ci.reg = LOCAL, regs[inst.reg]
            ci.fv = self._closure(inst.expr, regs)
            ci.code = (-1, self._bytecode(inst.expr, regs), -1)
        elif isinstance(inst, Assert):
            ci.kind = ASSERT
            ci.fv = self._closure(inst.cond, regs)
            ci.code = (-1, self._bytecode(inst.cond, regs), -1)
        elif isinstance(inst, Cas):
            ci.kind, ci.reg = CAS, regs[inst.result]
            ci.fa = self._closure(inst.addr, regs)
            ci.fv = self._closure(inst.expect, regs)
            ci.fn = self._closure(inst.new, regs)
            ci.code = (self._bytecode(inst.addr, regs), self._bytecode(inst.expect, regs),
                       self._bytecode(inst.new, regs))
        else:
            raise TypeError(inst)
        return ci

    def _closure(self, e: Expr, regs: dict[str, int]):
        n, mo, msize = self.n, self.mem_off, self.mem_size
        t = type(e)
        if t is Const:
            c = e.value
            return lambda s, b: c
        if t is Aux:
            c = aux_address(e.name, n)
            return lambda s, b: c
        if t is Reg:
            k = regs[e.name]
            return lambda s, b: s[k]
        if t is Unop:
            f = self._closure(e.arg, regs)
            return lambda s, b: 0 if f(s, b) else 1
        if t is Binop:
            f, g, op = self._closure(e.left, regs), self._closure(e.right, regs), e.op
            if op == "+":
                return lambda s, b: (f(s, b) + g(s, b)) % n
            if op == "==":
                return lambda s, b: 1 if f(s, b) == g(s, b) else 0
            if op == "!=":
                return lambda s, b: 1 if f(s, b) != g(s, b) else 0
            return lambda s, b: apply_binop(op, f(s, b), g(s, b), n)
        if t is Call:
            fs = [self._closure(a, regs) for a in e.args]
            if e.fn == "max":
                f, g = fs
                return lambda s, b: max(f(s, b), g(s, b))
            if e.fn == "min":
                f, g = fs
                return lambda s, b: min(f(s, b), g(s, b))
            f = fs[0]
            off = n if e.fn == "d" else 2 * n
            return lambda s, b: f(s, b) + off
        if t is Mem:
            f = self._closure(e.addr, regs)

            def read(s, b):
                a = f(s, b)
                for x, v in reversed(b):
                    if x == a:
                        return v
                if not 0 <= a < msize:
                    raise SemanticsError(f"address {a} out of range")
                return s[mo + a]

            return read
        raise TypeError(e)

    def _bytecode(self, e: Expr, regs: dict[str, int]) -> int:
        start = len(self.code)
        self._emit(e, regs)
        self.code.append(OP_END)
        return start

    def _emit(self, e: Expr, regs):
        t = type(e)
        code = self.code
        if t is Const:
            code += (OP_CONST, e.value)
        elif t is Aux:
            code += (OP_CONST, aux_address(e.name, self.n))
        elif t is Reg:
            code += (OP_SLOT, regs[e.name])
        elif t is Unop:
            self._emit(e.arg, regs)
            code.append(OP_NOT)
        elif t is Binop:
            self._emit(e.left, regs)
            self._emit(e.right, regs)
            code.append(OP_BIN[e.op])
        elif t is Call:
            for a in e.args:
                self._emit(a, regs)
            if e.fn in ("max", "min"):
                code.append(OP_BIN[e.fn])
            else:
                code.append(OP_DTAG if e.fn == "d" else OP_HBTAG)
        elif t is Mem:
            self._emit(e.addr, regs)
            code.append(OP_MEM)
        else:
            raise TypeError(e)

    # -- states ----------------------------------------------------------

    def initial(self) -> tuple:
        s = [0] * self.size
        for ti, t in enumerate(self.program.threads):
            s[ti] = self.label_index[ti][t.init_label]
        return tuple(s)

    def slot_of_reg(self, thread: int, reg: str) -> int:
        return self.reg_slot[thread][reg]

    def check_addr(self, a: int) -> int:
        if not 0 <= a < self.mem_size:
            raise SemanticsError(f"address {a} out of range 0..{self.mem_size - 1}")
        return a

    # -- SC step ---------------------------------------------------------

    def sc_exec(self, ci: CInstr, s: tuple):
        """Execute ``ci`` under SC; returns ``(actions, state)`` or None if blocked.

        Actions are ``(kind, addr, value)`` triples without the thread.
        """
        k = ci.kind
        if k == ASSERT:
            if not ci.fv(s, ()):
                return None
            out = list(s)
            out[ci.thread] = ci.dst
            return (("loc", None, None),), tuple(out)
        out = list(s)
        out[ci.thread] = ci.dst
        if k == LOAD:
            a = self.check_addr(ci.fa(s, ()))
            v = s[self.mem_off + a]
            out[ci.reg] = v - self.n if ci.untag else v
            acts = (("ld", a, v),)
        elif k == STORE:
            a = self.check_addr(ci.fa(s, ()))
            v = ci.fv(s, ())
            out[self.mem_off + a] = v
            acts = (("isu", None, None), ("st", a, v))
        elif k == LOCAL:
            out[ci.reg] = ci.fv(s, ())
            acts = (("loc", None, None),)
        elif k == FENCE:
            acts = (("loc", None, None),)
        else:  # CAS
            a = self.check_addr(ci.fa(s, ()))
            old = s[self.mem_off + a]
            exp, new = ci.fv(s, ()), ci.fn(s, ())
            if old == exp:
                out[self.mem_off + a] = new
                acts = (("ld", a, old), ("isu", None, None), ("st", a, new))
            else:
                acts = (("ld", a, old),)
            out[ci.reg] = 1 if old == exp else 0
        return acts, tuple(out)

    def sc_successors(self, s: tuple):
        """All ``(instr, actions, state)`` SC successors, by thread then instruction."""
        res = []
        for ti in range(self.nthreads):
            for ci in self.at[ti][s[ti]]:
                r = self.sc_exec(ci, s)
                if r is not None:
                    res.append((ci, r[0], r[1]))
        return res

    # -- TSO step --------------------------------------------------------

    def tso_exec(self, ci: CInstr, s: tuple, bufs: tuple, max_buffer: int | None = None):
        """Execute ``ci`` under TSO; returns ``(actions, state, bufs)`` or None."""
        t = ci.thread
        b = bufs[t]
        k = ci.kind
        if k in (FENCE, CAS) and b:
            return None
        if k == ASSERT:
            if not ci.fv(s, b):
                return None
            out = list(s)
            out[t] = ci.dst
            return (("loc", None, None),), tuple(out), bufs
        out = list(s)
        out[t] = ci.dst
        if k == LOAD:
            a = self.check_addr(ci.fa(s, b))
            for x, v in reversed(b):
                if x == a:
                    break
            else:
                v = s[self.mem_off + a]
            out[ci.reg] = v - self.n if ci.untag else v
            return (("ld", a, v),), tuple(out), bufs
        if k == STORE:
            if max_buffer is not None and len(b) >= max_buffer:
                return None
            a = self.check_addr(ci.fa(s, b))
            v = ci.fv(s, b)
            nb = list(bufs)
            nb[t] = b + ((a, v),)
            return (("isu", None, None),), tuple(out), tuple(nb)
        if k == LOCAL:
            out[ci.reg] = ci.fv(s, b)
            return (("loc", None, None),), tuple(out), bufs
        if k == FENCE:
            return (("loc", None, None),), tuple(out), bufs
        acts, st = self.sc_exec(ci, s)
        return acts, st, bufs

    def tso_flush(self, t: int, s: tuple, bufs: tuple):
        b = bufs[t]
        if not b:
            return None
        (a, v), rest = b[0], b[1:]
        out = list(s)
        out[self.mem_off + a] = v
        nb = list(bufs)
        nb[t] = rest
        return (("st", a, v),), tuple(out), tuple(nb)


def machine_of(p: Program) -> Machine:
    """Compiled form of ``p``, cached on the program object."""
    m = p.__dict__.get("_machine")
    if m is None:
        m = Machine(p)
        p.__dict__["_machine"] = m
    return m
