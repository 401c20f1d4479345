from collections import Counter
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsorobust import corpus
from tsorobust.attacks import Attack
from tsorobust.checker import check_robustness
from tsorobust.parameterized import (
    Coverable,
    CoverInconclusive,
    NotCoverable,
    PetriNet,
    Transition,
    cell_values,
    check_param_attack,
    check_param_robustness,
    counter_abstraction,
    coverable,
    covers,
    instantiate,
    instrument_parameterized,
    replay_firing,
)
from tsorobust.program import Mfence, parse_program
from tsorobust.semantics import Goal, NotReachable, Reachable, sc_reachable

from strategies import programs

LIT = """program Lit domain 2
thread t
regs r
init a
begin
  a: r <- mem[0]; goto b;
  b: mem[1] <- r; goto c;
end
"""


@pytest.fixture(scope="module")
def param_dekker():
    return corpus.load("param_dekker")


@pytest.fixture(scope="module")
def param_report(param_dekker):
    return check_param_robustness(param_dekker)


class TestCounterAbstraction:
    def test_literal_net(self):
        ca = counter_abstraction(parse_program(LIT), goal={("mem", 1, 1): 1}, literal=True)
        thread_places = [s for s in ca.net.places if s[0] == "thr"]
        mem_places = [s for s in ca.net.places if s[0] == "mem"]
        assert len(thread_places) == 6 and len(mem_places) == 4
        assert [t.name for t in ca.net.transitions if t.name.startswith("spawn")] == ["spawn_t"]
        assert len(ca.net.transitions) == 9
        assert ca.m0 == {("mem", 0, 0): 1, ("mem", 1, 0): 1}

    def test_load_keeps_cell(self):
        ca = counter_abstraction(parse_program(LIT), literal=True, goal={})
        t = next(t for t in ca.net.transitions if t.name == "t.0[0]0:1")
        assert t.pre == {("thr", "t", "a", (0,)): 1, ("mem", 0, 1): 1}
        assert t.post == {("thr", "t", "b", (1,)): 1, ("mem", 0, 1): 1}

    def test_dump(self):
        ca = counter_abstraction(parse_program(LIT), literal=True, goal={})
        lines = ca.net.dump().splitlines()
        assert lines[0] == "place m[0]=0"
        assert "trans spawn_t :  -> t@a[0]*1" in lines
        assert "trans t.1[0]w1:1 : m[1]=1*1 t@b[0]*1 -> m[1]=0*1 t@c[0]*1" in lines

    def test_pruned(self):
        p = parse_program(LIT)
        assert cell_values(p) == {0: [0], 1: [0]}
        ca = counter_abstraction(p, goal={("mem", 1, 1): 1})
        assert (len(ca.net.places), len(ca.net.transitions)) == (5, 3)
        # the goal place was pruned, so it cannot be covered
        assert coverable(ca.net, ca.m0, ca.goal) == NotCoverable(1)

    def test_literal_agrees(self):
        ca = counter_abstraction(parse_program(LIT), goal={("mem", 1, 1): 1}, literal=True)
        assert coverable(ca.net, ca.m0, ca.goal) == NotCoverable(5)


class TestCoverability:
    NET = PetriNet(["a", "b"], [Transition("s", {}, {"a": 1}), Transition("t", {"a": 2}, {"b": 1})])

    def test_target_is_initial(self):
        assert coverable(self.NET, {"a": 1}, {"a": 1}) == Coverable((), 1)

    def test_needs_repeated_spawn(self):
        r = coverable(self.NET, {}, {"b": 2})
        assert isinstance(r, Coverable)
        assert Counter(r.firing) == Counter({"s": 4, "t": 2})
        assert covers(replay_firing(self.NET, {}, r.firing), {"b": 2})

    def test_not_coverable(self):
        net = PetriNet(["a", "b"], [Transition("t", {"a": 1}, {"b": 1})])
        assert coverable(net, {"a": 1}, {"b": 2}) == NotCoverable(3)

    def test_budget(self):
        r = coverable(self.NET, {}, {"b": 3}, budget=2)
        assert isinstance(r, CoverInconclusive) and r.budget == 2

    def test_one_token_groups(self):
        net = PetriNet(["x0", "x1", "p"], [Transition("t", {"x0": 1, "x1": 1}, {"p": 1})])
        assert isinstance(coverable(net, {"x0": 1, "x1": 1}, {"p": 1}), Coverable)
        assert isinstance(coverable(net, {"x0": 1, "x1": 1}, {"p": 1}, one_token=[["x0", "x1"]]), NotCoverable)

    def test_replay_rejects_disabled(self):
        with pytest.raises(ValueError):
            replay_firing(self.NET, {}, ["t"])


@st.composite
def nets(draw):
    places = ["p0", "p1", "p2"]
    weight = st.dictionaries(st.sampled_from(places), st.integers(1, 2), max_size=2)
    ts = [Transition(f"t{i}", draw(weight), draw(weight)) for i in range(draw(st.integers(1, 4)))]
    m0 = draw(st.dictionaries(st.sampled_from(places), st.integers(1, 2), max_size=2))
    target = draw(st.dictionaries(st.sampled_from(places), st.integers(1, 3), min_size=1, max_size=2))
    return PetriNet(places, ts), m0, target


def _forward(net, m0, target, depth=6):
    level = [m0]
    seen = {frozenset(m0.items())}
    for _ in range(depth + 1):
        if any(covers(m, target) for m in level):
            return True
        nxt = []
        for m in level:
            for t in net.transitions:
                if net.enabled(t, m):
                    m2 = net.fire(t, m)
                    k = frozenset(m2.items())
                    if k not in seen and sum(m2.values()) <= 12:
                        seen.add(k)
                        nxt.append(m2)
        level = nxt
    return False


@settings(max_examples=200, deadline=None)
@given(nets())
def test_random_nets(case):
    net, m0, target = case
    r = coverable(net, m0, target, budget=2000)
    if isinstance(r, Coverable):
        assert covers(replay_firing(net, m0, r.firing), target)
    elif isinstance(r, NotCoverable):
        assert not _forward(net, m0, target)


@settings(max_examples=80, deadline=None)
@given(st.one_of(programs(max_threads=2, max_instr=3, loops=True), programs(max_threads=2, max_instr=3)),
       st.sampled_from([{0: 1}, {1: 1}, {0: 1, 1: 1}]))
def test_abstraction_matches_instances(p, goal):
    """Coverable iff some instance reaches the goal, and the certificate's
    spawn counts name such an instance."""
    ca = counter_abstraction(p, goal={("mem", a, v): 1 for a, v in goal.items()})
    groups = [[s for s in ca.net.places if s[:2] == ("mem", x)] for x in range(p.memory_size)]
    r = coverable(ca.net, ca.m0, ca.goal, 10**4, groups)
    if isinstance(r, Coverable):
        counts = Counter(n.split("_", 1)[1] for n in r.firing if n.startswith("spawn_"))
        assert isinstance(sc_reachable(instantiate(p, dict(counts)), Goal(mem=goal)), Reachable)
    for cs in product(range(3), repeat=len(p.threads)):
        inst = instantiate(p, {t.id: c for t, c in zip(p.threads, cs)})
        if isinstance(sc_reachable(inst, Goal(mem=goal), 10**5), Reachable):
            assert isinstance(r, Coverable)
            break


class TestInstrumentation:
    def test_shape(self, param_dekker):
        pa = instrument_parameterized(param_dekker, Attack("t1", 0, 1))
        assert pa.name == "ParamDekker_PA"
        assert [len(t.instructions) for t in pa.threads] == [38, 26]
        assert "r_el" in pa.threads[0].registers
        assert pa.memory_size == 10

    def test_instantiate(self, param_dekker):
        q = instantiate(param_dekker, {"t1": 2, "t2": 1})
        assert [t.id for t in q.threads] == ["t1_1", "t1_2", "t2_1"]
        assert q.name == "ParamDekker_inst"

    @pytest.mark.parametrize("counts,reach", [
        ((1, 1), True), ((2, 1), True), ((1, 2), True), ((0, 1), False), ((1, 0), False),
    ])
    def test_instances(self, param_dekker, counts, reach):
        pa = instrument_parameterized(param_dekker, Attack("t1", 0, 1))
        q = instantiate(pa, dict(zip(("t1", "t2"), counts)))
        r = sc_reachable(q, Goal(mem={pa.memory_size - 2: 1}))
        assert isinstance(r, Reachable if reach else NotReachable)

    def test_single_attacker_elected(self, param_dekker):
        pa = instrument_parameterized(param_dekker, Attack("t1", 0, 1))
        q = instantiate(pa, {"t1": 2, "t2": 0})
        # two attacker copies alone never succeed: the loser only helps
        assert isinstance(sc_reachable(q, Goal(mem={8: 1})), NotReachable)


class TestDekker:
    def test_verdict(self, param_report):
        assert param_report.verdict == "NonRobust"
        assert param_report.totals == {"RQ": 2, "NR1": 0, "NR2": 0, "R": 2, "INC": 0}
        assert [r.basis for r in param_report.results] == [2260, 4351]
        assert all(r.basis < 10**4 for r in param_report.results)

    def test_certificate(self, param_dekker, param_report):
        r = param_report.results[0]
        assert len(r.firing) == 19
        assert r.firing[0] == "spawn_t1"
        pa = instrument_parameterized(param_dekker, r.attack)
        ca = counter_abstraction(pa)
        assert covers(replay_firing(ca.net, ca.m0, r.firing), ca.goal)

    def test_agrees_with_instance(self, param_dekker, param_report):
        inst = check_robustness(instantiate(param_dekker, {"t1": 1, "t2": 1}))
        assert inst.verdict == param_report.verdict

    def test_fenced(self):
        rep = check_param_robustness(corpus.load("param_dekker_fenced"))
        assert rep.verdict == "Robust" and rep.queries == 0 and rep.exit_code == 0

    def test_json(self, param_dekker, param_report):
        d = param_report.to_json(param_dekker)
        assert d["parameterized"] is True and d["verdict"] == "NonRobust"
        assert d["attacks"][1]["basis_size"] == 4351
        assert len(d["attacks"][1]["firing_sequence"]) == 19

    def test_budget(self, param_dekker):
        r = check_param_attack(param_dekker, Attack("t1", 0, 1), budget=100)
        assert r.status == "inconclusive" and r.reason == "basis budget 100 exceeded"


def test_fence_only_template_is_robust():
    p = parse_program("""program F domain 2
thread t
regs r
init a
begin
  a: mfence; goto b;
end
""")
    assert isinstance(p.threads[0].instructions[0].inst, Mfence)
    assert check_param_robustness(p).verdict == "Robust"
