"""Exhaustive families of small loop-free litmus programs."""

from __future__ import annotations

from itertools import product
from typing import Iterator

from .program import Const, LabeledInstruction, Load, Mfence, Program, Store, Thread

# per-thread instruction menu: load x, load y, store x, store y, fence
MENU = ("ld0", "ld1", "st0", "st1", "f")


def _thread(tid: str, ops: tuple[str, ...]) -> Thread:
    regs = tuple(f"r{i}" for i, op in enumerate(ops) if op.startswith("ld"))
    instrs = []
    for i, op in enumerate(ops):
        src, dst = f"{tid}_{i}", f"{tid}_{i + 1}"
        if op == "f":
            inst = Mfence()
        elif op.startswith("ld"):
            inst = Load(f"r{i}", Const(int(op[2])))
        else:
            inst = Store(Const(int(op[2])), Const(1))
        instrs.append(LabeledInstruction(src, inst, dst))
    labels = tuple(f"{tid}_{i}" for i in range(len(ops) + 1))
    return Thread(tid, regs, labels[0], tuple(instrs), labels)


def _canon(ops: tuple[str, ...], swap: bool) -> tuple[str, ...]:
    if not swap:
        return ops
    flip = {"ld0": "ld1", "ld1": "ld0", "st0": "st1", "st1": "st0", "f": "f"}
    return tuple(flip[o] for o in ops)


def thread_shapes(max_len: int = 3) -> list[tuple[str, ...]]:
    out = []
    for k in range(1, max_len + 1):
        out += list(product(MENU, repeat=k))
    return out


def litmus_family(max_len: int = 3) -> Iterator[Program]:
    """Two-thread programs up to symmetry (thread swap, address swap)."""
    shapes = thread_shapes(max_len)
    seen = set()
    for a, b in product(shapes, repeat=2):
        key = min(
            (_canon(x, s), _canon(y, s)) for s in (False, True) for x, y in ((a, b), (b, a))
        )
        if key in seen:
            continue
        seen.add(key)
        name = "L_" + "_".join(key[0]) + "__" + "_".join(key[1])
        yield Program(name, (_thread("t1", key[0]), _thread("t2", key[1])), 2, ())
