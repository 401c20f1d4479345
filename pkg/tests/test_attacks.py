import pytest
from hypothesis import given, settings

from tsorobust import corpus
from tsorobust.attacks import (
    Attack,
    Drop,
    Invalid,
    Keep,
    TsoWitness,
    Valid,
    candidate_decompositions,
    enumerate_attacks,
    find_witness,
    involved_labels,
    replay_instructions,
    syntactic_filter,
    validate_witness,
    witnessed_attacks,
)
from tsorobust.program import parse_program
from tsorobust.semantics import Action as A
from tsorobust.semantics import Computation as C
from tsorobust.traces import complete_bounds

from strategies import litmus

FIG4 = C((A("t1", "isu"), A("t1", "ld", 1, 0), A("t2", "isu"),
          A("t2", "st", 1, 1), A("t2", "ld", 0, 0), A("t1", "st", 0, 1)))

# Dekker where t2 first does a local step, which ld_A cannot happen before
LOCAL_FIRST = """program L domain 2
const x = 0, y = 1
thread t1
regs r1
init l0
begin
  l0: mem[x] <- 1; goto l1;
  l1: r1 <- mem[y]; goto l2;
end
thread t2
regs r2
init m0
begin
  m0: r2 <- 1; goto m1;
  m1: mem[y] <- 1; goto m2;
  m2: r2 <- mem[x]; goto m3;
end
"""

SAME_ADDR = """program S domain 2
thread t1
regs r
init l0
begin
  l0: mem[0] <- 1; goto l1;
  l1: r <- mem[0]; goto l2;
end
"""

TWO_STORES = """program T domain 3
thread t1
regs r
init l0
begin
  l0: mem[0] <- 1; goto l1;
  l1: mem[1] <- 1; goto l2;
  l2: r <- mem[2]; goto l3;
end
"""


class TestEnumerate:
    def test_dekker(self, dekker):
        assert enumerate_attacks(dekker) == [Attack("t1", 0, 1), Attack("t2", 0, 1)]

    def test_cas_is_not_a_store(self):
        assert enumerate_attacks(corpus.load("cas_sb")) == [Attack("t2", 0, 1)]

    def test_no_loads(self):
        p = corpus.load("message_passing")
        assert enumerate_attacks(p) == []

    def test_json(self, dekker):
        assert Attack("t2", 0, 1).to_json(dekker) == {
            "attacker": "t2", "st_label": "l0'", "ld_label": "l1'", "st_index": 0, "ld_index": 1}


class TestFilter:
    def test_dekker_kept(self, dekker):
        assert [syntactic_filter(dekker, a) for a in enumerate_attacks(dekker)] == [Keep(), Keep()]

    def test_fenced_dropped(self, dekker_fenced):
        assert {syntactic_filter(dekker_fenced, a) for a in enumerate_attacks(dekker_fenced)} == {
            Drop("fence-on-all-paths")}

    def test_unreachable(self):
        p = corpus.load("single")
        assert syntactic_filter(p, Attack("t1", 2, 1)) == Drop("unreachable")

    def test_involved(self, dekker, diamond):
        assert involved_labels(dekker, Attack("t1", 0, 1)) == {"l1"}
        assert involved_labels(dekker, Attack("t2", 0, 1)) == {"l1'"}
        assert involved_labels(diamond, Attack("t1", 0, 5)) == {"l1", "l2", "l3", "l4"}


class TestValidate:
    def test_fig4_valid(self, dekker):
        w = TsoWitness(FIG4, 0, 1, 5)
        assert validate_witness(dekker, Attack("t1", 0, 1), w) == Valid()
        assert [len(f) for f in w.fragments().values()] == [0, 0, 3, 0]

    def test_wrong_attacker(self, dekker):
        r = validate_witness(dekker, Attack("t2", 0, 1), TsoWitness(FIG4, 0, 1, 5))
        assert isinstance(r, Invalid) and r.condition == "w-b"

    def test_two_delaying_threads(self, dekker):
        c = C((A("t1", "isu"), A("t1", "ld", 1, 0), A("t2", "isu"), A("t2", "ld", 0, 0),
               A("t1", "st", 0, 1), A("t2", "st", 1, 1)))
        r = validate_witness(dekker, Attack("t1", 0, 1), TsoWitness(c, 0, 1, 4))
        assert r == Invalid("w-a", "delaying threads ['t1', 't2']")

    def test_tau4_foreign_action(self, dekker):
        c = C((A("t1", "isu"), A("t1", "ld", 1, 0), A("t2", "isu"), A("t2", "st", 1, 1),
               A("t1", "st", 0, 1), A("t2", "ld", 0, 1)))
        r = validate_witness(dekker, Attack("t1", 0, 1), TsoWitness(c, 0, 1, 4))
        assert isinstance(r, Invalid) and r.condition == "w-d"

    def test_illegal(self, dekker):
        c = C((A("t1", "isu"), A("t1", "ld", 1, 1)) + FIG4.actions[2:])
        r = validate_witness(dekker, Attack("t1", 0, 1), TsoWitness(c, 0, 1, 5))
        assert r.condition == "legal"

    def test_unrelated_action_in_tau3(self):
        p = parse_program(LOCAL_FIRST)
        c = C((A("t1", "isu"), A("t1", "ld", 1, 0), A("t2", "loc"), A("t2", "isu"),
               A("t2", "st", 1, 1), A("t2", "ld", 0, 0), A("t1", "st", 0, 1)))
        r = validate_witness(p, Attack("t1", 0, 1), TsoWitness(c, 0, 1, 6))
        assert isinstance(r, Invalid) and r.condition == "w-c"
        # moving the local step in front of ld_A repairs it
        c2 = C((A("t1", "isu"), A("t2", "loc"), A("t1", "ld", 1, 0)) + c.actions[3:])
        assert validate_witness(p, Attack("t1", 0, 1), TsoWitness(c2, 0, 2, 6)) == Valid()

    def test_early_read_of_own_store(self):
        p = parse_program(SAME_ADDR)
        c = C((A("t1", "isu"), A("t1", "ld", 0, 1), A("t1", "st", 0, 1)))
        r = validate_witness(p, Attack("t1", 0, 1), TsoWitness(c, 0, 1, 2))
        assert isinstance(r, Invalid) and r.condition == "w-e"

    def test_earlier_store_delayed(self):
        p = parse_program(TWO_STORES)
        c = C((A("t1", "isu"), A("t1", "isu"), A("t1", "ld", 2, 0),
               A("t1", "st", 0, 1), A("t1", "st", 1, 1)))
        r = validate_witness(p, Attack("t1", 1, 2), TsoWitness(c, 1, 2, 4))
        assert r == Invalid("w-b", "an earlier attacker store is delayed")

    def test_bad_indices(self, dekker):
        with pytest.raises(IndexError):
            validate_witness(dekker, Attack("t1", 0, 1), TsoWitness(FIG4, 1, 0, 5))

    def test_json_round_trip(self):
        w = TsoWitness(FIG4, 0, 1, 5)
        assert TsoWitness.from_json(w.to_json()) == w


class TestSearch:
    def test_replay_provenance(self, dekker):
        assert replay_instructions(dekker, FIG4) == [(0, 0), (0, 1), (1, 0), None, (1, 1), None]

    def test_find_witness_dekker(self, dekker):
        w = find_witness(dekker, Attack("t1", 0, 1), *complete_bounds(dekker))
        assert w == TsoWitness(FIG4, 0, 1, 5)

    def test_candidates_only_first_delayed_store(self):
        p = parse_program(TWO_STORES)
        c = C((A("t1", "isu"), A("t1", "isu"), A("t1", "ld", 2, 0),
               A("t1", "st", 0, 1), A("t1", "st", 1, 1)))
        assert [(w.isu_index, w.ld_index, w.st_index) for w in candidate_decompositions(c, "t1")] == [
            (0, 2, 3)]

    def test_witnessed_dekker(self, dekker):
        assert set(witnessed_attacks(dekker, *complete_bounds(dekker))) == set(enumerate_attacks(dekker))


@settings(max_examples=40, deadline=None)
@given(litmus())
def test_dropped_attacks_have_no_witness(p):
    found = witnessed_attacks(p, *complete_bounds(p))
    for a in enumerate_attacks(p):
        if isinstance(syntactic_filter(p, a), Drop):
            assert a not in found
