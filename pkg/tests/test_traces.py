from hypothesis import given, settings

from tsorobust import corpus
from tsorobust.semantics import Action, Computation, enumerate_sc_computations, enumerate_tso_computations
from tsorobust.traces import (
    RobustWithinBound,
    Violating,
    complete_bounds,
    cycle_edge_kinds,
    delay_count,
    delay_pairs,
    delaying_threads,
    hb_cycle,
    hb_reachable,
    is_sc_feasible,
    oracle_check,
    trace_of,
    violations,
)

from strategies import litmus, programs

FIG4 = Computation((
    Action("t1", "isu"), Action("t1", "ld", 1, 0), Action("t2", "isu"),
    Action("t2", "st", 1, 1), Action("t2", "ld", 0, 0), Action("t1", "st", 0, 1),
))

FIG4_TRACE = """\
node 0 (t1,st,0,1)
node 1 (t1,ld,1,0)
node 2 (t2,st,1,1)
node 3 (t2,ld,0,0)
po 0 1
po 2 3
cf 1 2
cf 3 0
"""


class TestTraceOf:
    def test_fig4(self):
        tr = trace_of(FIG4)
        assert tr.to_text() == FIG4_TRACE
        assert tr.node_of == [0, 1, 2, 2, 3, 0]

    def test_cycle(self):
        tr = trace_of(FIG4)
        cyc = hb_cycle(tr)
        assert cyc == [0, 1, 2, 3, 0]
        assert cycle_edge_kinds(tr, cyc) == {"po": 2, "st": 0, "src": 0, "cf": 2}
        assert not is_sc_feasible(tr)

    def test_early_read_source(self):
        # the load reads the thread's own buffered store
        c = [Action("t", "isu"), Action("t", "ld", 0, 1), Action("t", "st", 0, 1)]
        tr = trace_of(c)
        assert tr.src == {1: 0}
        assert tr.cf == set()
        assert is_sc_feasible(tr)

    def test_initial_read_conflicts_with_all_stores(self):
        c = [Action("a", "ld", 0, 0), Action("b", "isu"), Action("b", "st", 0, 1),
             Action("c", "isu"), Action("c", "st", 0, 1)]
        tr = trace_of(c)
        assert tr.cf == {(0, 1), (0, 2)}
        assert tr.st == {(1, 2)}

    def test_hb_reachable(self):
        tr = trace_of(FIG4)
        assert hb_reachable(tr, 1) == {0, 1, 2, 3}


class TestDelays:
    def test_fig4(self):
        assert delay_pairs(FIG4) == [(2, 3, 0), (0, 5, 1)]
        assert delay_count(FIG4) == 1
        assert delaying_threads(FIG4) == {"t1"}

    def test_two_delays(self):
        c = [Action("t", "isu"), Action("t", "loc"), Action("t", "loc"), Action("t", "st", 0, 1)]
        assert delay_count(c) == 2


class TestOracle:
    def test_dekker(self, dekker):
        r = oracle_check(dekker, 1, 8)
        assert r == Violating(FIG4, 1)

    def test_dekker_violation_count(self, dekker):
        gen = violations(dekker, 1, 8)
        found = 0
        try:
            while True:
                next(gen)
                found += 1
        except StopIteration as stop:
            examined = stop.value
        assert (found, examined) == (18, 133)

    def test_fenced(self, dekker_fenced):
        assert complete_bounds(dekker_fenced) == (2, 18)
        assert oracle_check(dekker_fenced, 2, 18) == RobustWithinBound(223, 2, 18)

    def test_message_passing_is_robust(self):
        p = corpus.load("message_passing")
        assert isinstance(oracle_check(p, *complete_bounds(p)), RobustWithinBound)


def test_tso_traces_that_are_acyclic_are_sc_traces(dekker):
    # a TSO computation with an acyclic trace has an SC computation with that trace
    sc = {trace_of(c).canonical() for c in enumerate_sc_computations(dekker, 12)}
    tso = {trace_of(c).canonical() for c in enumerate_tso_computations(dekker, 2, 12)
           if is_sc_feasible(trace_of(c))}
    assert tso == sc
    assert len(sc) == 13


@settings(max_examples=40, deadline=None)
@given(litmus())
def test_minimal_violations_have_one_delaying_thread(p):
    r = oracle_check(p, *complete_bounds(p))
    if isinstance(r, Violating):
        assert len(delaying_threads(r.computation)) == 1


@settings(max_examples=40, deadline=None)
@given(programs(max_threads=2, max_instr=3))
def test_sc_computations_have_acyclic_traces(p):
    for c in enumerate_sc_computations(p, 8):
        assert is_sc_feasible(trace_of(c))
