import pytest
from hypothesis import given, settings

from tsorobust import corpus, kernel
from tsorobust.attacks import enumerate_attacks
from tsorobust.instrument import instrument
from tsorobust.machine import machine_of

from strategies import programs

IMPLS = kernel.implementations()


def test_compiled_kernel_is_selected():
    # the extension is built by ``pip install -e .``; skip if a compiler was missing
    if "cython" not in IMPLS:
        pytest.skip("compiled kernel not built")
    assert kernel.NAME == "cython"


@pytest.mark.parametrize("name", ["dekker", "peterson", "cas_sb", "diamond", "spinlock"])
def test_kernels_agree_on_instrumented_corpus(name):
    p = corpus.load(name)
    for a in enumerate_attacks(p):
        ip = instrument(p, a)
        m = machine_of(ip.program)
        res = {n: k.sc_search(m, ip.goal.slots(m), 10**6) for n, k in IMPLS.items()}
        assert len(set(map(repr, res.values()))) == 1


def test_budget_reported(dekker):
    ip = instrument(dekker, enumerate_attacks(dekker)[0])
    m = machine_of(ip.program)
    for k in IMPLS.values():
        status, path, explored = k.sc_search(m, ip.goal.slots(m), 10)
        assert (status, path) == (-1, None)
        assert explored == 11


@settings(max_examples=80, deadline=None)
@given(programs(max_threads=3, max_instr=4, loops=True))
def test_kernels_agree_on_successors(p):
    m = machine_of(p)
    init = m.initial()
    seen = {init}
    stack = [init]
    while stack and len(seen) < 300:
        s = stack.pop()
        succ = {n: k.successors(m, s) for n, k in IMPLS.items()}
        first = next(iter(succ.values()))
        assert all(v == first for v in succ.values())
        for _, nxt in first:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
