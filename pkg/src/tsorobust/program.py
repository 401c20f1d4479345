"""Program model: AST, parser, pretty-printer, CFG utilities and fence insertion.

Concrete syntax::

    program Dekker domain 2
    const x = 0
    const y = 1
    thread t1
    regs r1
    init l0
    labels l0 l1 l2
    begin
      l0: mem[x] <- 1; goto l1;
      l1: r1 <- mem[y]; goto l2;
    end

``labels`` is optional.  When given it is the complete label set of the
thread and every ``goto`` target must appear in it; otherwise the label set is
inferred from the instructions.

Expressions are total over the data domain ``{0..N-1}``: ``+ - *`` wrap modulo
``N``, comparisons and boolean connectives yield 1 or 0.  Instrumented
programs additionally use ``mem[e]`` inside expressions, ``max``/``min`` and
the auxiliary address terms ``d(e)``, ``hb(e)``, ``HB``, ``AST``, ``SUC``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator, Union


class ProgramError(ValueError):
    """Raised for syntax and well-formedness errors."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + message)


# --------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Const:
    value: int
    name: str | None = None


@dataclass(frozen=True)
class Reg:
    name: str


@dataclass(frozen=True)
class Aux:
    """A scalar auxiliary address: ``HB``, ``AST``, ``SUC`` or ``ELECT``."""

    name: str


@dataclass(frozen=True)
class Unop:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Binop:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Mem:
    addr: "Expr"


Expr = Union[Const, Reg, Aux, Unop, Binop, Call, Mem]

BINOPS = ("||", "&&", "==", "!=", "<", "<=", ">", ">=", "+", "-", "*")
CALLS = {"max": 2, "min": 2, "d": 1, "hb": 1}
AUX_NAMES = ("HB", "AST", "SUC", "ELECT")
ARITH = frozenset("+-*")

# value of the "true" flag stored in HB and SUC
TRUE = 1
NO_ACCESS, LD_ACCESS, ST_ACCESS = 0, 1, 2


def aux_address(name: str, n: int) -> int:
    return 3 * n + AUX_NAMES.index(name)


def eval_expr(e: Expr, regs, n: int, read=None) -> int:
    """Evaluate ``e`` with register lookup ``regs[name]`` over domain size ``n``.

    ``read(addr)`` serves ``mem[...]`` sub-terms.
    """
    t = type(e)
    if t is Const:
        return e.value
    if t is Reg:
        return regs[e.name]
    if t is Binop:
        a = eval_expr(e.left, regs, n, read)
        b = eval_expr(e.right, regs, n, read)
        return apply_binop(e.op, a, b, n)
    if t is Unop:
        return int(eval_expr(e.arg, regs, n, read) == 0)
    if t is Call:
        vals = [eval_expr(a, regs, n, read) for a in e.args]
        if e.fn == "max":
            return max(vals)
        if e.fn == "min":
            return min(vals)
        if e.fn == "d":
            return vals[0] + n
        return vals[0] + 2 * n
    if t is Aux:
        return aux_address(e.name, n)
    if t is Mem:
        if read is None:
            raise ProgramError("memory read in expression context without memory")
        return read(eval_expr(e.addr, regs, n, read))
    raise TypeError(f"not an expression: {e!r}")


def apply_binop(op: str, a: int, b: int, n: int) -> int:
    if op == "+":
        return (a + b) % n
    if op == "-":
        return (a - b) % n
    if op == "*":
        return (a * b) % n
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    if op == ">":
        return int(a > b)
    if op == ">=":
        return int(a >= b)
    if op == "&&":
        return int(a != 0 and b != 0)
    if op == "||":
        return int(a != 0 or b != 0)
    raise ValueError(op)


def expr_children(e: Expr) -> tuple:
    if isinstance(e, Binop):
        return (e.left, e.right)
    if isinstance(e, Unop):
        return (e.arg,)
    if isinstance(e, Call):
        return e.args
    if isinstance(e, Mem):
        return (e.addr,)
    return ()


def walk_expr(e: Expr) -> Iterator[Expr]:
    yield e
    for c in expr_children(e):
        yield from walk_expr(c)


def expr_regs(e: Expr) -> set[str]:
    return {x.name for x in walk_expr(e) if isinstance(x, Reg)}


def expr_reads_memory(e: Expr) -> bool:
    return any(isinstance(x, Mem) for x in walk_expr(e))


# --------------------------------------------------------------------------
# Instructions


@dataclass(frozen=True)
class Load:
    reg: str
    addr: Expr
    untag: bool = False  # ``d(r) <- mem[e]`` stores the untagged value into r


@dataclass(frozen=True)
class Store:
    addr: Expr
    value: Expr


@dataclass(frozen=True)
class Mfence:
    pass


@dataclass(frozen=True)
class LocalAssign:
    reg: str
    expr: Expr


@dataclass(frozen=True)
class Assert:
    cond: Expr


@dataclass(frozen=True)
class Cas:
    addr: Expr
    expect: Expr
    new: Expr
    result: str


Instruction = Union[Load, Store, Mfence, LocalAssign, Assert, Cas]


def instruction_exprs(inst: Instruction) -> tuple[Expr, ...]:
    if isinstance(inst, Load):
        return (inst.addr,)
    if isinstance(inst, Store):
        return (inst.addr, inst.value)
    if isinstance(inst, LocalAssign):
        return (inst.expr,)
    if isinstance(inst, Assert):
        return (inst.cond,)
    if isinstance(inst, Cas):
        return (inst.addr, inst.expect, inst.new)
    return ()


def is_fence_like(inst: Instruction) -> bool:
    """Fences and locked instructions drain the store buffer."""
    return isinstance(inst, (Mfence, Cas))


@dataclass(frozen=True)
class LabeledInstruction:
    src: str
    inst: Instruction
    dst: str


@dataclass(frozen=True)
class Thread:
    id: str
    registers: tuple[str, ...]
    init_label: str
    instructions: tuple[LabeledInstruction, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.labels:
            seen: dict[str, None] = {self.init_label: None}
            for li in self.instructions:
                seen.setdefault(li.src)
                seen.setdefault(li.dst)
            object.__setattr__(self, "labels", tuple(seen))

    def successors(self) -> dict[str, list[tuple[int, str]]]:
        """Map label -> [(instruction index, destination)]."""
        out: dict[str, list[tuple[int, str]]] = {l: [] for l in self.labels}
        for i, li in enumerate(self.instructions):
            out[li.src].append((i, li.dst))
        return out


@dataclass(frozen=True)
class Program:
    name: str
    threads: tuple[Thread, ...]
    domain: int = 2
    consts: tuple[tuple[str, int], ...] = ()

    def __getstate__(self):
        # drop cached derived data (compiled machines hold closures)
        return {k: self.__dict__[k] for k in ("name", "threads", "domain", "consts")}

    def thread(self, tid: str) -> Thread:
        for t in self.threads:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def thread_index(self, tid: str) -> int:
        for i, t in enumerate(self.threads):
            if t.id == tid:
                return i
        raise KeyError(tid)

    @cached_property
    def uses_aux(self) -> bool:
        for t in self.threads:
            for li in t.instructions:
                if isinstance(li.inst, Load) and li.inst.untag:
                    return True
                for e in instruction_exprs(li.inst):
                    for x in walk_expr(e):
                        if isinstance(x, (Aux, Mem)) or (
                            isinstance(x, Call) and x.fn in ("d", "hb")
                        ):
                            return True
        return False

    @property
    def memory_size(self) -> int:
        """Number of addressable cells: D, or D plus the auxiliary layout."""
        return 3 * self.domain + len(AUX_NAMES) if self.uses_aux else self.domain

    @property
    def value_bound(self) -> int:
        return self.memory_size

    def instruction_count(self) -> int:
        return sum(len(t.instructions) for t in self.threads)

    def label_count(self) -> int:
        return sum(len(t.labels) for t in self.threads)


@dataclass(frozen=True)
class FenceSet:
    """Labels tagged with their owning thread, as ``(thread id, label)`` pairs."""

    labels: frozenset[tuple[str, str]] = field(default_factory=frozenset)

    @classmethod
    def of(cls, pairs: Iterable[tuple[str, str]]) -> "FenceSet":
        return cls(frozenset(pairs))

    def sorted(self) -> list[tuple[str, str]]:
        return sorted(self.labels)

    def __iter__(self):
        return iter(self.sorted())

    def __len__(self):
        return len(self.labels)

    def __str__(self) -> str:
        return "{" + ", ".join(f"{t}.{l}" for t, l in self.sorted()) + "}"


# --------------------------------------------------------------------------
# Lexer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op><-|←|->|==|!=|<=|>=|&&|\|\||[-+*<>!:;,=\[\]()])
    """,
    re.VERBOSE,
)

KEYWORDS = frozenset(
    "program domain const thread regs init labels begin end goto mfence assert cas mem".split()
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ProgramError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                if s == "←":
                    s = "<-"
                toks.append(Token(kind, s, line, col))
            col += len(m.group())
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.domain = 2
        self.consts: dict[str, int] = {}
        self.aux_used = False

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None) -> ProgramError:
        tok = tok or self.tok
        return ProgramError(msg, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "eof"

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            raise self.error(f"expected {what}, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def number(self) -> int:
        t = self.tok
        if t.kind != "num":
            raise self.error(f"expected number, found {t.text or 'end of input'!r}")
        self.i += 1
        return int(t.text)

    # grammar
    def program(self) -> Program:
        self.expect("program")
        name = self.ident("program name").text
        if self.accept("domain"):
            tok = self.tok
            self.domain = self.number()
            if self.domain < 1:
                raise self.error("domain size must be positive", tok)
        while self.at("const"):
            self.const_decl()
        threads = []
        while self.at("thread"):
            threads.append(self.thread())
        if self.tok.kind != "eof":
            raise self.error(f"expected 'thread', found {self.tok.text!r}")
        prog = Program(name, tuple(threads), self.domain, tuple(self.consts.items()))
        check_program(prog)
        return prog

    def const_decl(self):
        self.expect("const")
        while True:
            tok = self.ident("constant name")
            self.expect("=")
            self.consts[tok.text] = self.number()
            if not self.accept(","):
                break

    def thread(self) -> Thread:
        self.expect("thread")
        tid_tok = self.ident("thread id")
        self.expect("regs")
        regs = []
        while self.tok.kind == "ident" and self.tok.text not in KEYWORDS:
            regs.append(self.ident().text)
        self.expect("init")
        init = self.ident("label").text
        declared = None
        if self.accept("labels"):
            declared = []
            while self.tok.kind == "ident" and self.tok.text not in KEYWORDS:
                declared.append(self.ident().text)
        self.expect("begin")
        self.regs = set(regs)
        self.thread_id = tid_tok.text
        instrs = []
        goto_tokens = []
        while not self.at("end"):
            src_tok = self.ident("label")
            self.expect(":")
            inst = self.instruction()
            self.expect(";")
            self.expect("goto")
            dst_tok = self.ident("label")
            self.expect(";")
            instrs.append(LabeledInstruction(src_tok.text, inst, dst_tok.text))
            goto_tokens.append((src_tok, dst_tok))
        self.expect("end")
        if declared is not None:
            known = set(declared)
            if init not in known:
                raise ProgramError(
                    f"initial label {init} is not declared in thread {tid_tok.text}",
                    tid_tok.line, tid_tok.col,
                )
            for src_tok, dst_tok in goto_tokens:
                for t, what in ((src_tok, "label"), (dst_tok, "goto target")):
                    if t.text not in known:
                        raise ProgramError(
                            f"undefined {what} {t.text} in thread {tid_tok.text}",
                            t.line, t.col,
                        )
        return Thread(tid_tok.text, tuple(regs), init, tuple(instrs), tuple(declared or ()))

    def register(self, tok: Token) -> str:
        if tok.text not in self.regs:
            raise ProgramError(
                f"undeclared register {tok.text} in thread {self.thread_id}", tok.line, tok.col
            )
        return tok.text

    def instruction(self) -> Instruction:
        if self.accept("mfence"):
            return Mfence()
        if self.accept("assert"):
            return Assert(self.expr())
        if self.accept("cas"):
            self.expect("mem")
            self.expect("[")
            addr = self.expr()
            self.expect("]")
            self.expect(",")
            expect = self.expr()
            self.expect(",")
            new = self.expr()
            self.expect("->")
            res = self.register(self.ident("register"))
            return Cas(addr, expect, new, res)
        if self.at("mem"):
            self.expect("mem")
            self.expect("[")
            addr = self.expr()
            self.expect("]")
            self.expect("<-")
            return Store(addr, self.expr())
        # d(r) <- mem[e]
        if self.at("d") and self.toks[self.i + 1].text == "(":
            self.i += 2
            reg = self.register(self.ident("register"))
            self.expect(")")
            self.expect("<-")
            self.expect("mem")
            self.expect("[")
            addr = self.expr()
            self.expect("]")
            self.aux_used = True
            return Load(reg, addr, untag=True)
        reg = self.register(self.ident("register"))
        self.expect("<-")
        if self.at("mem") and self._is_plain_load():
            self.expect("mem")
            self.expect("[")
            addr = self.expr()
            self.expect("]")
            return Load(reg, addr)
        return LocalAssign(reg, self.expr())

    def _is_plain_load(self) -> bool:
        # ``r <- mem[e]`` followed directly by ';' is a load; anything longer is
        # an expression that happens to start with a memory read.
        depth = 0
        j = self.i + 1
        while j < len(self.toks):
            t = self.toks[j].text
            if t == "[":
                depth += 1
            elif t == "]":
                depth -= 1
                if depth == 0:
                    return self.toks[j + 1].text == ";"
            j += 1
        return False

    # expressions, lowest precedence first
    _LEVELS = (("||",), ("&&",), ("==", "!=", "<", "<=", ">", ">="), ("+", "-"), ("*",))

    def expr(self, level: int = 0) -> Expr:
        if level == len(self._LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in self._LEVELS[level]:
            op = self.tok.text
            self.i += 1
            left = Binop(op, left, self.expr(level + 1))
        return left

    def unary(self) -> Expr:
        if self.accept("!"):
            return Unop("!", self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(int(tok.text))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("mem"):
            self.expect("[")
            e = self.expr()
            self.expect("]")
            return Mem(e)
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            self.i += 1
            if tok.text in CALLS and self.at("("):
                self.expect("(")
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                if len(args) != CALLS[tok.text]:
                    raise ProgramError(
                        f"{tok.text} expects {CALLS[tok.text]} argument(s)", tok.line, tok.col
                    )
                return Call(tok.text, tuple(args))
            if tok.text in AUX_NAMES:
                return Aux(tok.text)
            if tok.text in self.regs:
                return Reg(tok.text)
            if tok.text in self.consts:
                return Const(self.consts[tok.text], tok.text)
            raise ProgramError(
                f"undeclared register {tok.text} in thread {self.thread_id}", tok.line, tok.col
            )
        raise self.error(f"expected expression, found {tok.text or 'end of input'!r}")


def parse_program(text: str) -> Program:
    """Parse program text; raises :class:`ProgramError` with line/column."""
    return _Parser(text).program()


def check_program(p: Program) -> None:
    """Validate the well-formedness invariants of ``p``."""
    if p.domain < 1:
        raise ProgramError("domain size must be positive")
    ids = [t.id for t in p.threads]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise ProgramError(f"duplicate thread id(s): {', '.join(sorted(dup))}")
    bound = p.memory_size
    for name, value in p.consts:
        if not 0 <= value < bound:
            raise ProgramError(f"constant {name} = {value} outside data domain 0..{p.domain - 1}")
    for t in p.threads:
        known = set(t.labels)
        regs = set(t.registers)
        if len(regs) != len(t.registers):
            raise ProgramError(f"duplicate register in thread {t.id}")
        if t.init_label not in known:
            raise ProgramError(f"initial label {t.init_label} is not declared in thread {t.id}")
        for li in t.instructions:
            for lab, what in ((li.src, "label"), (li.dst, "goto target")):
                if lab not in known:
                    raise ProgramError(f"undefined {what} {lab} in thread {t.id}")
            inst = li.inst
            used = set()
            for e in instruction_exprs(inst):
                used |= expr_regs(e)
                for x in walk_expr(e):
                    if isinstance(x, Const) and not 0 <= x.value < bound:
                        raise ProgramError(
                            f"constant {x.value} outside data domain 0..{p.domain - 1} "
                            f"in thread {t.id}"
                        )
            if isinstance(inst, (Load, LocalAssign)):
                used.add(inst.reg)
            if isinstance(inst, Cas):
                used.add(inst.result)
            missing = used - regs
            if missing:
                raise ProgramError(
                    f"undeclared register {', '.join(sorted(missing))} in thread {t.id}"
                )


# --------------------------------------------------------------------------
# Pretty-printer

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
         "+": 4, "-": 4, "*": 5}


def format_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, Const):
        return e.name if e.name else str(e.value)
    if isinstance(e, Reg):
        return e.name
    if isinstance(e, Aux):
        return e.name
    if isinstance(e, Mem):
        return f"mem[{format_expr(e.addr)}]"
    if isinstance(e, Call):
        return f"{e.fn}(" + ", ".join(format_expr(a) for a in e.args) + ")"
    if isinstance(e, Unop):
        return "!" + format_expr(e.arg, 6)
    if isinstance(e, Binop):
        p = _PREC[e.op]
        # left-associative: the right operand needs strictly higher precedence
        s = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({s})" if p < prec else s
    raise TypeError(e)


def format_instruction(inst: Instruction) -> str:
    if isinstance(inst, Load):
        target = f"d({inst.reg})" if inst.untag else inst.reg
        return f"{target} <- mem[{format_expr(inst.addr)}]"
    if isinstance(inst, Store):
        return f"mem[{format_expr(inst.addr)}] <- {format_expr(inst.value)}"
    if isinstance(inst, Mfence):
        return "mfence"
    if isinstance(inst, LocalAssign):
        s = format_expr(inst.expr)
        if isinstance(inst.expr, Mem):
            s = f"({s})"  # keep it from re-parsing as a load
        return f"{inst.reg} <- {s}"
    if isinstance(inst, Assert):
        return f"assert {format_expr(inst.cond)}"
    if isinstance(inst, Cas):
        return (f"cas mem[{format_expr(inst.addr)}], {format_expr(inst.expect)}, "
                f"{format_expr(inst.new)} -> {inst.result}")
    raise TypeError(inst)


def format_program(p: Program) -> str:
    lines = [f"program {p.name} domain {p.domain}"]
    for name, value in p.consts:
        lines.append(f"const {name} = {value}")
    for t in p.threads:
        lines.append("")
        lines.append(f"thread {t.id}")
        lines.append("regs " + " ".join(t.registers) if t.registers else "regs")
        lines.append(f"init {t.init_label}")
        lines.append("labels " + " ".join(t.labels))
        lines.append("begin")
        for li in t.instructions:
            lines.append(f"  {li.src}: {format_instruction(li.inst)}; goto {li.dst};")
        lines.append("end")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Control flow


def _reach(edges: dict[str, list[str]], start: str) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        for nxt in edges.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def cfg_edges(t: Thread, skip=None) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
    """Forward and backward label edges, omitting instructions where ``skip(inst)``."""
    fwd: dict[str, list[str]] = {l: [] for l in t.labels}
    bwd: dict[str, list[str]] = {l: [] for l in t.labels}
    for li in t.instructions:
        if skip is not None and skip(li.inst):
            continue
        fwd[li.src].append(li.dst)
        bwd[li.dst].append(li.src)
    return fwd, bwd


def reachable_labels(t: Thread, start: str, skip=None) -> set[str]:
    return _reach(cfg_edges(t, skip)[0], start)


def involved_between(t: Thread, start: str, end: str, blocked: frozenset = frozenset()) -> set[str]:
    """Labels lying on some (possibly cyclic) CFG path from ``start`` to ``end``.

    Labels in ``blocked`` may not be traversed.
    """
    for lab in (start, end):
        if lab not in t.labels:
            raise ProgramError(f"unknown label {lab} in thread {t.id}")
    if start in blocked or end in blocked:
        return set()
    fwd, bwd = cfg_edges(t)
    if blocked:
        fwd = {k: [v for v in vs if v not in blocked] for k, vs in fwd.items() if k not in blocked}
        bwd = {k: [v for v in vs if v not in blocked] for k, vs in bwd.items() if k not in blocked}
    forward = _reach(fwd, start)
    if end not in forward:
        return set()
    return forward & _reach(bwd, end)


def control_paths(t: Thread, start: str, end: str) -> tuple[list[tuple[str, ...]], set[str]]:
    """All simple label paths from ``start`` to ``end`` and the involved label set."""
    involved = involved_between(t, start, end)
    fwd, _ = cfg_edges(t)
    paths: list[tuple[str, ...]] = []
    if not involved:
        return paths, involved

    def dfs(path: list[str]):
        here = path[-1]
        if here == end:
            paths.append(tuple(path))
            return
        for nxt in sorted(set(fwd[here])):
            if nxt in involved and nxt not in path:
                path.append(nxt)
                dfs(path)
                path.pop()

    dfs([start])
    return paths, involved


# --------------------------------------------------------------------------
# Transformations


class LabelFactory:
    """Deterministic, collision-free fresh labels for one thread."""

    def __init__(self, used: Iterable[str]):
        self.used = set(used)
        self.counter: dict[str, int] = {}

    def fresh(self, base: str) -> str:
        k = self.counter.get(base, 0)
        while True:
            cand = base if k == 0 else f"{base}{k}"
            k += 1
            if cand not in self.used:
                self.counter[base] = k
                self.used.add(cand)
                return cand


def insert_fences(p: Program, f: FenceSet | Iterable[tuple[str, str]]) -> Program:
    """Insert an ``mfence`` in front of every instruction at each label of ``f``.

    Instructions keep their positions (so instruction indices stay valid); the
    new fences are appended to the end of each thread.
    """
    pairs = f.labels if isinstance(f, FenceSet) else frozenset(f)
    by_thread: dict[str, set[str]] = {}
    for tid, lab in pairs:
        try:
            t = p.thread(tid)
        except KeyError:
            raise ProgramError(f"fence label {tid}.{lab}: no such thread") from None
        if lab not in t.labels:
            raise ProgramError(f"fence label {lab} not present in thread {tid}")
        by_thread.setdefault(tid, set()).add(lab)
    if not by_thread:
        return p
    threads = []
    for t in p.threads:
        labs = by_thread.get(t.id)
        if not labs:
            threads.append(t)
            continue
        fac = LabelFactory(t.labels)
        fresh = {l: fac.fresh(f"{l}_f") for l in t.labels if l in labs}
        instrs = [
            replace(li, src=fresh[li.src]) if li.src in fresh else li for li in t.instructions
        ]
        instrs += [LabeledInstruction(l, Mfence(), fresh[l]) for l in t.labels if l in fresh]
        labels = list(t.labels)
        for l in t.labels:
            if l in fresh:
                labels.insert(labels.index(l) + 1, fresh[l])
        threads.append(replace(t, instructions=tuple(instrs), labels=tuple(labels)))
    return replace(p, threads=tuple(threads))
