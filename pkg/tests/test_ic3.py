"""
IC3 over the abstract system.
"""

import pytest

from dpmc.abstraction import AbstractTrace, aeq, anot, dp_abstract
from dpmc.btor2 import parse_btor2
from dpmc.errors import ResourceLimit
from dpmc.ic3 import IC3, EmptyTrace, ic3_check
from dpmc.ir import OpKind
from dpmc.oracle import random_system
from dpmc.propagation import LemmaStore, Propagator
from dpmc.solver import SolverBackend

# three registers that never change; x = y is inductive and z is irrelevant
FROZEN = """
1 sort bitvec 2
2 sort bitvec 1
3 zero 1
4 state 1 x
5 state 1 y
6 state 1 z
7 init 1 4 3
8 init 1 5 3
9 init 1 6 3
10 next 1 4 4
11 next 1 5 5
12 next 1 6 6
13 neq 2 4 5
14 bad 13
"""


@pytest.fixture
def frozen():
    return dp_abstract(parse_btor2(FROZEN, name="frozen"))


def test_initial_counterexample_without_propagation(fig2, sig):
    system = dp_abstract(fig2)
    trace = ic3_check(system)
    assert isinstance(trace, AbstractTrace)
    assert trace.length == 0
    (window,) = trace.windows
    assert anot(system.prop) in window
    assert system.init[0] in window


def test_propagation_answers_initial_query(fig2, config):
    system = dp_abstract(fig2)
    lemmas = LemmaStore()
    backend = SolverBackend(config)
    ic3 = IC3(system, lemmas, config, backend, Propagator(config, backend))
    outcome = ic3.check()
    assert ic3.stats["queries_skipped_by_propagation"] >= 2
    assert lemmas.dpl
    assert isinstance(outcome, (EmptyTrace, AbstractTrace))


def test_frozen_registers_are_safe(frozen, sig):
    outcome = ic3_check(frozen)
    assert isinstance(outcome, EmptyTrace)
    x, y = sig.v("x"), sig.v("y")
    assert aeq(x, y) in outcome.invariant


def test_counterexample_at_initial_state(bad_init):
    trace = ic3_check(dp_abstract(bad_init))
    assert isinstance(trace, AbstractTrace)
    assert trace.length == 0
    assert len(trace.cubes) == 1


def test_generalize_drops_irrelevant_literal(frozen, sig):
    ic3 = IC3(frozen)
    x, y, z = sig.v("x"), sig.v("y"), sig.v("z")
    cube = (anot(aeq(x, y)), aeq(z, sig.c(0)))
    assert ic3.generalize(cube, 1) == (anot(aeq(x, y)),)


def test_generalize_keeps_needed_cube(frozen, sig):
    ic3 = IC3(frozen)
    cube = (anot(aeq(sig.v("x"), sig.v("y"))),)
    assert ic3.generalize(cube, 1) == cube


def test_generalize_can_be_disabled(frozen, sig, config):
    config["engine"]["generalize"] = False
    ic3 = IC3(frozen, config=config)
    cube = (anot(aeq(sig.v("x"), sig.v("y"))), aeq(sig.v("z"), sig.c(0)))
    assert ic3.generalize(cube, 1) == cube


def test_lemma_instances_cover_both_sides(fig2, sig):
    system = dp_abstract(fig2)
    lemma = sig.f(OpKind.ULE, sig.c(0), sig.v("x"))
    store = LemmaStore()
    store.add_drl(lemma)
    ic3 = IC3(system, store)
    assert ic3._lemma_instances() == [lemma, system.prime(lemma)]


def test_frame_budget(frozen, config):
    config["engine"]["max_frames"] = 1
    with pytest.raises(ResourceLimit) as info:
        IC3(frozen, config=config).check()
    assert info.value.budget == "max_frames"


def _assert_frame_invariants(ic3: IC3):
    """Each frame implies the next, and F_i with T implies every clause of F_{i+1} primed."""
    backend = SolverBackend()
    lemmas = ic3._lemma_instances()
    for i in range(len(ic3.frames) - 1):
        current, following = ic3._frame_clauses(i), ic3._frame_clauses(i + 1)
        if i == 0:
            for c in following:
                assert backend.euf_check(current + lemmas + [anot(c)]).is_unsat, c
        else:
            assert set(following) <= set(current), i
        for c in following:
            parts = current + ic3.trans + lemmas + [anot(ic3.system.prime(c))]
            assert backend.euf_check(parts).is_unsat, (i, c)


def _run(system, config, propagate):
    backend = SolverBackend(config)
    propagator = Propagator(config, backend) if propagate else None
    ic3 = IC3(system, LemmaStore(), config, backend, propagator)
    try:
        ic3.check()
    except ResourceLimit:
        pass
    return ic3


def test_fig2_frames_are_monotone_and_relatively_inductive(fig2, config):
    ic3 = _run(dp_abstract(fig2), config, propagate=True)
    assert len(ic3.frames) >= 2
    _assert_frame_invariants(ic3)


def test_frozen_frames_are_monotone_and_relatively_inductive(frozen, config):
    _assert_frame_invariants(_run(frozen, config, propagate=False))


@pytest.mark.parametrize("propagate", [True, False])
@pytest.mark.parametrize("seed", range(12))
def test_random_frames_are_monotone_and_relatively_inductive(seed, propagate, config):
    config["engine"]["max_frames"] = 8
    system = dp_abstract(random_system(seed, state_bits=4))
    _assert_frame_invariants(_run(system, config, propagate))
