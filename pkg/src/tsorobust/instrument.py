"""Source-to-source instrumentation of a program for one attack.

The instrumented program ``P_A`` runs under SC.  The attacker simulates its
store buffer with delayed copies ``d(a)`` of addresses; helpers track the
happens-before path from the attacker's load through access levels stored at
``hb(a)``.  A goal state (``mem[SUC] = 1``) exists iff the attack is feasible.

Every emitted instruction carries a provenance tag used to turn an SC path of
``P_A`` back into a TSO computation of ``P``:

``orig``    an instruction of ``P``; its actions are kept
``delay``   an attacker store to ``d(a)``; the issue stays, the store is delayed
``buf_ld``  an attacker load from its simulated buffer; the action is untagged
``ld_A``    marks the position of the attack's load (which is not executed)
``inst``    instrumentation only; its actions are dropped
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .attacks import Attack
from .program import (
    AUX_NAMES,
    LD_ACCESS,
    ST_ACCESS,
    Assert,
    Aux,
    Binop,
    Call,
    Cas,
    Const,
    Expr,
    LabelFactory,
    LabeledInstruction,
    Load,
    LocalAssign,
    Mem,
    Mfence,
    Program,
    Reg,
    Store,
    Thread,
    aux_address,
    expr_regs,
)
from .semantics import Goal


@dataclass(frozen=True)
class AddressEncoding:
    """Layout of auxiliary addresses and tagged values over a base domain of size N."""

    n: int

    def delayed(self, a: int) -> int:
        return self.n + a

    def hb(self, a: int) -> int:
        return 2 * self.n + a

    def tag(self, v: int) -> int:
        return self.n + v

    def untag(self, v: int) -> int:
        return v - self.n

    @property
    def hb_flag(self) -> int:
        return aux_address("HB", self.n)

    @property
    def a_st(self) -> int:
        return aux_address("AST", self.n)

    @property
    def suc(self) -> int:
        return aux_address("SUC", self.n)

    @property
    def size(self) -> int:
        return 3 * self.n + len(AUX_NAMES)

    def describe(self, addr: int) -> str:
        n = self.n
        if addr < n:
            return str(addr)
        if addr < 2 * n:
            return f"d({addr - n})"
        if addr < 3 * n:
            return f"hb({addr - 2 * n})"
        return AUX_NAMES[addr - 3 * n]


@dataclass(frozen=True)
class Tag:
    role: str
    thread: int  # thread index in P
    index: int = -1  # instruction index in P (-1 for pure instrumentation)


@dataclass
class InstrumentedProgram:
    program: Program
    attack: Attack
    source: Program
    provenance: tuple[tuple[Tag, ...], ...]
    goal: Goal = field(default_factory=Goal)

    @property
    def encoding(self) -> AddressEncoding:
        return AddressEncoding(self.source.domain)


def _d(e: Expr) -> Expr:
    return Call("d", (e,))


def _hb(e: Expr) -> Expr:
    return Call("hb", (e,))


def _eq(a: Expr, b: Expr) -> Expr:
    return Binop("==", a, b)


def _c(v: int) -> Const:
    return Const(v)


class _Emitter:
    def __init__(self, t: Thread, ti: int, suffix: str = "_c", reserved=()):
        self.t = t
        self.ti = ti
        self.fac = LabelFactory((*t.labels, *reserved))
        self.out: list[LabeledInstruction] = []
        self.tags: list[Tag] = []
        self.copy = {l: self.fac.fresh(f"{l}{suffix}") for l in t.labels}

    def emit(self, src: str, inst, dst: str, role: str = "inst", index: int = -1):
        self.out.append(LabeledInstruction(src, inst, dst))
        self.tags.append(Tag(role, self.ti, index))

    def fresh(self, base: str) -> str:
        return self.fac.fresh(base)

    def chain(self, src: str, dst: str, steps) -> None:
        """Emit ``steps`` (``(inst, role, index)``) as a straight line from src to dst."""
        cur = src
        for k, (inst, role, index) in enumerate(steps):
            nxt = dst if k == len(steps) - 1 else self.fresh(f"{src}_x")
            self.emit(cur, inst, nxt, role, index)
            cur = nxt

    def labels(self) -> tuple[str, ...]:
        seen = dict.fromkeys(self.t.labels)
        for li in self.out:
            seen.setdefault(li.src)
            seen.setdefault(li.dst)
        return tuple(seen)


def instrument_attacker(
    t: Thread,
    a: Attack,
    ti: int = 0,
    *,
    originals: bool = True,
    elect: str | None = None,
    suffix: str = "_c",
    reserved=(),
) -> tuple[Thread, tuple[Tag, ...]]:
    """Attacker instrumentation of ``t``.

    ``elect`` names a register used to win ``cas mem[ELECT], 0, 1`` before
    the attack starts (parameterized programs run many copies of ``t``).
    With ``originals=False`` the original instructions are left out.
    """
    if a.attacker != t.id:
        raise ValueError(f"thread {t.id} is not the attacker of {a}")
    st, ld = t.instructions[a.st_index], t.instructions[a.ld_index]
    if not isinstance(st.inst, Store) or not isinstance(ld.inst, Load):
        raise ValueError("attack instructions are not a store and a load")
    em = _Emitter(t, ti, suffix, reserved)
    cp = em.copy
    if originals:
        for i, li in enumerate(t.instructions):
            em.emit(li.src, li.inst, li.dst, "orig", i)
    # the attack's store enters the code copy
    e1, e2 = st.inst.addr, st.inst.value
    election = []
    if elect is not None:
        election = [
            (Cas(Aux("ELECT"), _c(0), _c(1), elect), "inst", -1),
            (Assert(_eq(Reg(elect), _c(1))), "inst", -1),
        ]
    em.chain(st.src, cp[st.dst], election + [
        (Store(_d(e1), _d(e2)), "delay", a.st_index),
        (Store(Aux("AST"), e1), "inst", -1),
    ])
    # the attack's load: no early read, then raise the flags and halt
    e = ld.inst.addr
    em.chain(cp[ld.src], em.fresh(f"{cp[ld.src]}_halt"), [
        (Assert(_eq(Mem(_d(e)), _c(0))), "inst", -1),
        (Store(Aux("HB"), _c(1)), "ld_A", a.ld_index),
        (Store(_hb(e), _c(LD_ACCESS)), "inst", -1),
    ])
    # code copy with buffered stores; fences and locked instructions block
    for i, li in enumerate(t.instructions):
        inst, s, d = li.inst, cp[li.src], cp[li.dst]
        if isinstance(inst, Store):
            em.emit(s, Store(_d(inst.addr), _d(inst.value)), d, "delay", i)
        elif isinstance(inst, Load):
            x = inst.addr
            em.chain(s, d, [
                (Assert(_eq(Mem(_d(x)), _c(0))), "inst", -1),
                (Load(inst.reg, x), "orig", i),
            ])
            em.chain(s, d, [
                (Assert(Binop("!=", Mem(_d(x)), _c(0))), "inst", -1),
                (Load(inst.reg, _d(x), untag=True), "buf_ld", i),
            ])
        elif isinstance(inst, (LocalAssign, Assert)):
            em.emit(s, inst, d, "orig", i)
        # Mfence and Cas: nothing
    regs = t.registers + ((elect,) if elect is not None else ())
    thread = Thread(t.id, regs, t.init_label, tuple(em.out), em.labels())
    return thread, tuple(em.tags)


def instrument_helper(t: Thread, ti: int = 0) -> tuple[Thread, tuple[Tag, ...]]:
    em = _Emitter(t, ti)
    cp = em.copy
    regs = LabelFactory(t.registers)
    rt = regs.fresh("r_hb")
    extra = [rt]
    snap: str | None = None

    def addr_reg() -> str:
        nonlocal snap
        if snap is None:
            snap = regs.fresh("r_adr")
            extra.append(snap)
        return snap

    # original code, disabled once the attacker raised HB
    for i, li in enumerate(t.instructions):
        em.chain(li.src, li.dst, [
            (Assert(_eq(Mem(Aux("HB")), _c(0))), "inst", -1),
            (li.inst, "orig", i),
        ])
    # entering the code copy with an action that happens after ld_A
    for i, li in enumerate(t.instructions):
        inst, s, d = li.inst, li.src, cp[li.dst]
        if isinstance(inst, Load):
            em.chain(s, d, [
                (Assert(_eq(Mem(_hb(inst.addr)), _c(ST_ACCESS))), "inst", -1),
                (inst, "orig", i),
            ])
        elif isinstance(inst, Store):
            em.chain(s, d, [
                (Assert(Binop(">=", Mem(_hb(inst.addr)), _c(LD_ACCESS))), "inst", -1),
                (inst, "orig", i),
                (Store(_hb(inst.addr), _c(ST_ACCESS)), "inst", -1),
            ])
        elif isinstance(inst, Cas):
            # the unit ld·isu·st is related if its load is (address stored) or
            # it succeeds and its store is (address accessed)
            pre, x = _cas_addr(inst, addr_reg)
            em.chain(s, d, pre + [
                (LocalAssign(rt, Mem(_hb(x))), "inst", -1),
                (Assert(Binop(">=", Reg(rt), _c(LD_ACCESS))), "inst", -1),
                (_cas_at(inst, x), "orig", i),
                (Assert(Binop("||", _eq(Reg(inst.result), _c(1)),
                              _eq(Reg(rt), _c(ST_ACCESS)))), "inst", -1),
                (Store(_hb(x), _c(ST_ACCESS)), "inst", -1),
            ])
    # code copy maintaining the access levels
    for i, li in enumerate(t.instructions):
        inst, s, d = li.inst, cp[li.src], cp[li.dst]
        if isinstance(inst, (LocalAssign, Assert, Mfence)):
            em.emit(s, inst, d, "orig", i)
        elif isinstance(inst, Store):
            em.chain(s, d, [
                (inst, "orig", i),
                (Store(_hb(inst.addr), _c(ST_ACCESS)), "inst", -1),
            ])
        elif isinstance(inst, Load):
            em.chain(s, d, [
                (LocalAssign(rt, inst.addr), "inst", -1),
                (Load(inst.reg, Reg(rt), inst.untag), "orig", i),
                (Store(_hb(Reg(rt)), _raise_ld(Reg(rt))), "inst", -1),
            ])
        elif isinstance(inst, Cas):
            pre, x = _cas_addr(inst, addr_reg)
            mid = em.fresh(f"{s}_x")
            em.chain(s, mid, pre + [(_cas_at(inst, x), "orig", i)])
            em.chain(mid, d, [
                (Assert(_eq(Reg(inst.result), _c(1))), "inst", -1),
                (Store(_hb(x), _c(ST_ACCESS)), "inst", -1),
            ])
            em.chain(mid, d, [
                (Assert(_eq(Reg(inst.result), _c(0))), "inst", -1),
                (Store(_hb(x), _raise_ld(x)), "inst", -1),
            ])
    # success check at every copy label
    for l in t.labels:
        s = cp[l]
        em.chain(s, em.fresh(f"{s}_suc"), [
            (Load(rt, Aux("AST")), "inst", -1),
            (Load(rt, _hb(Reg(rt))), "inst", -1),
            (Assert(Binop("!=", Reg(rt), _c(0))), "inst", -1),
            (Store(Aux("SUC"), _c(1)), "inst", -1),
        ])
    thread = Thread(t.id, t.registers + tuple(extra), t.init_label, tuple(em.out), em.labels())
    return thread, tuple(em.tags)


def _raise_ld(x: Expr) -> Expr:
    return Call("max", (_c(LD_ACCESS), Mem(_hb(x))))


def _cas_addr(inst: Cas, addr_reg):
    """The cas address as an expression still valid after the result register changes."""
    if inst.result not in expr_regs(inst.addr):
        return [], inst.addr
    r = addr_reg()
    return [(LocalAssign(r, inst.addr), "inst", -1)], Reg(r)


def _cas_at(inst: Cas, x: Expr) -> Cas:
    return inst if x is inst.addr else Cas(x, inst.expect, inst.new, inst.result)


def instrument(p: Program, a: Attack) -> InstrumentedProgram:
    threads, tags = [], []
    for ti, t in enumerate(p.threads):
        if t.id == a.attacker:
            nt, tg = instrument_attacker(t, a, ti)
        else:
            nt, tg = instrument_helper(t, ti)
        threads.append(nt)
        tags.append(tg)
    prog = Program(f"{p.name}_A", tuple(threads), p.domain, p.consts)
    goal = Goal(mem={aux_address("SUC", p.domain): 1})
    return InstrumentedProgram(prog, a, p, tuple(tags), goal)
