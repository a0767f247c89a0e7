"""
Datapath propagation on small abstract queries.
"""

import pytest

from dpmc.abstraction import (
    AFALSE,
    ATRUE,
    aconst,
    aeq,
    aimplies,
    aite,
    anot,
    app,
    asym,
    const_symbol,
    dp_abstract,
    symbol_for_op,
    symbol_for_term,
)
from dpmc.errors import DpmcError
from dpmc.ir import OpKind, bv, var
from dpmc.propagation import (
    LemmaStore,
    PropagationState,
    Propagator,
    apply_rules,
    evaluate_ground_app,
    propagate,
    update_related_uf,
)
from dpmc.solver import SolverBackend

ADD, SUB, MUL, LT, LE = OpKind.ADD, OpKind.SUB, OpKind.MUL, OpKind.ULT, OpKind.ULE


def _euf_unsat(phi, psi) -> bool:
    return SolverBackend().euf_check(list(phi) + list(psi)).is_unsat


def test_pinned_registers_refute_negated_order(sig):
    x, y, c0 = sig.v("x"), sig.v("y"), sig.c(0)
    phi = [aeq(x, c0), aeq(y, c0), anot(sig.f(LE, y, x))]
    result = propagate(phi)
    assert result.unsat
    assert sig.f(LE, c0, c0) in result.psi
    assert aimplies([aeq(x, y)], sig.f(LE, y, x)) in result.psi
    assert _euf_unsat(phi, result.psi)


def test_increment_from_zero_is_not_below(sig):
    x, y, c0, c1 = sig.v("x"), sig.v("y"), sig.c(0), sig.c(1)
    phi = [aeq(x, c0), aeq(y, sig.f(ADD, x, c1)), sig.f(LT, y, x)]
    result = propagate(phi)
    assert result.unsat
    assert result.psi == [aeq(sig.f(ADD, c0, c1), c1), anot(sig.f(LT, c1, c0))]
    assert result.verdict == "unsat"


def test_emitted_lemmas_are_recorded_for_audit(sig, audit_propagation_lemmas):
    x, y, c0, c1 = sig.v("x"), sig.v("y"), sig.c(0), sig.c(1)
    result = propagate([aeq(x, c0), aeq(y, sig.f(ADD, x, c1)), sig.f(LT, y, x)])
    recorded = [lemma for lemma, _ in audit_propagation_lemmas]
    assert result.psi == [aeq(sig.f(ADD, c0, c1), c1), anot(sig.f(LT, c1, c0))]
    assert set(result.psi) <= set(recorded)


def test_lemma_audit_catches_unsound_lemma(sig, lemma_auditor):
    x, c0, c1 = sig.v("x"), sig.c(0), sig.c(1)
    assert lemma_auditor(sig.f(LE, c0, x)) is None
    assert lemma_auditor(aeq(sig.f(ADD, x, c1), x)) is not None


def test_difference_of_equals_is_not_negative(sig):
    x, y, u, v, c0 = sig.v("x"), sig.v("y"), sig.v("u"), sig.v("v"), sig.c(0)
    phi = [aeq(x, y), aeq(u, sig.f(SUB, x, y)), aeq(v, c0), sig.f(LT, u, v)]
    result = propagate(phi)
    assert result.unsat
    assert aimplies([aeq(x, y)], aeq(sig.f(SUB, x, y), c0)) in result.psi
    assert _euf_unsat(phi, result.psi)


def test_one_step_query_decides_guard(fig2):
    system = dp_abstract(fig2)
    phi = [system.prop, *system.trans, anot(system.prime(system.prop))]
    result = propagate(phi)
    assert not result.unsat
    decided = [
        e
        for e in result.events
        if e.kind == "rewrite" and e.result is AFALSE and e.node.sym is not None
        and e.node.sym.name == "LT_2"
    ]
    assert decided and decided[0].rule_id == "rel.chain"


def test_update_related_uf_touches_applications(sig):
    x, y, z, u, w = (sig.v(n) for n in "xyzuw")
    c0, c1 = sig.c(0), sig.c(1)
    phi = [aeq(x, c0), aeq(y, x), aeq(z, c1), aeq(w, sig.f(ADD, u, y)), sig.f(LT, x, z)]
    state = PropagationState(phi)
    for c in state.phi_p:
        state.absorb(c)
    touched = update_related_uf(const_symbol(0, 2), state)
    assert touched == [sig.f(ADD, u, c0), sig.f(LT, c0, z)]


def test_update_related_uf_cascades(sig):
    x, y, z, w = (sig.v(n) for n in "xyzw")
    c0 = sig.c(0)
    phi = [aeq(x, c0), aeq(w, sig.f(ADD, sig.f(MUL, x, y), z))]
    state = PropagationState(phi)
    for c in state.phi_p:
        state.absorb(c)
    touched = update_related_uf(const_symbol(0, 2), state)
    assert touched == [sig.f(MUL, c0, y), sig.f(ADD, c0, z)]
    assert aeq(sig.f(MUL, c0, y), c0) in state.psi


def test_update_related_uf_leaves_other_conjuncts(sig):
    x, y, z, u, w = (sig.v(n) for n in "xyzuw")
    c0 = sig.c(0)
    diff = sig.f(SUB, y, y)
    state = PropagationState([aeq(x, c0), aeq(w, sig.f(ADD, u, x)), aeq(z, diff)])
    for c in state.phi_p:
        state.absorb(c)
    assert state.closure.apps_over(const_symbol(0, 2)) == {sig.f(ADD, u, x)}
    touched = update_related_uf(const_symbol(0, 2), state)
    assert touched == [sig.f(ADD, u, c0)]
    assert aeq(z, diff) in state.phi_p
    assert not any(e.rule_id == "arith.sub-same" for e in state.events)
    assert any(e.rule_id == "arith.sub-same" for e in apply_rules(state))


def test_ground_value_without_constant_gives_disequalities(sig):
    a, b, c = sig.v("a"), sig.v("b"), sig.v("c")
    c0, c1, c3 = sig.c(0), sig.c(1), sig.c(3)
    two = sig.f(ADD, c1, c1)
    result = propagate([aeq(a, two), aeq(b, c0), aeq(c, c3)])
    assert not result.unsat
    for k in (c0, c1, c3):
        assert anot(aeq(two, k)) in result.psi


def test_evaluate_ground_app(sig):
    c0, c1 = sig.c(0), sig.c(1)
    state = PropagationState([aeq(sig.v("x"), sig.f(ADD, c1, c1)), aeq(sig.v("y"), c0)])
    value, image = evaluate_ground_app(sig.f(ADD, c1, c1), state)
    assert value == 2 and image is None
    value, image = evaluate_ground_app(sig.f(LT, c1, c0), state)
    assert value == 0 and image is AFALSE


def test_bitwise_and_with_all_ones(sig):
    x, w, c3 = sig.v("x"), sig.v("w"), sig.c(3)
    masked = sig.f(OpKind.BVAND, x, c3)
    result = propagate([aeq(w, masked)])
    assert aeq(masked, x) in result.psi
    assert any(e.rule_id == "bw.and-x-max" for e in result.events)


def test_shift_of_zero(sig):
    x, w, c0 = sig.v("x"), sig.v("w"), sig.c(0)
    shifted = sig.f(OpKind.SLL, c0, x)
    result = propagate([aeq(w, shifted)])
    assert aeq(shifted, c0) in result.psi


def test_reduction_or_of_nonzero(sig):
    x, c0 = sig.v("x"), sig.c(0)
    bit, flag = (asym(symbol_for_term(var(n, bv(1)))) for n in ("bit", "flag"))
    one = aconst(1, 1)
    red = app(symbol_for_op(OpKind.REDOR, 2), x)
    result = propagate([anot(aeq(x, c0)), aeq(bit, red), aeq(flag, one)])
    assert aimplies([anot(aeq(x, c0))], aeq(red, one)) in result.psi
    assert any(e.rule_id == "red.or-nonzero" for e in result.events)


def test_relation_chain_decides_guard(sig):
    x, y, u, w = (sig.v(n) for n in "xyuw")
    lt, le = sig.f(LT, x, y), sig.f(LE, y, u)
    guard = sig.f(LE, u, x)
    result = propagate([lt, le, aeq(w, aite(guard, y, x))])
    assert not result.unsat
    assert aimplies([lt, le], anot(guard)) in result.psi
    assert aeq(w, x) in result.formula


def test_strict_order_on_one_constant_is_refuted(sig):
    c0 = sig.c(0)
    result = propagate([sig.f(LT, c0, c0)])
    assert result.unsat
    assert anot(sig.f(LT, c0, c0)) in result.psi


def test_lemmas_flow_into_store(sig):
    x, y, c0 = sig.v("x"), sig.v("y"), sig.c(0)
    store = LemmaStore()
    result = propagate([aeq(x, c0), aeq(y, c0), anot(sig.f(LE, y, x))], lemmas=store)
    assert store.dpl == result.psi
    assert store.drl == []
    # already known lemmas are not reported again
    again = propagate([aeq(x, c0), aeq(y, c0), anot(sig.f(LE, y, x))], lemmas=store)
    assert again.unsat and again.psi == []


def test_bound_must_be_positive(sig):
    with pytest.raises(DpmcError):
        propagate([aeq(sig.v("x"), sig.c(0))], bound=0)


def test_lemma_store_deduplicates(sig):
    store = LemmaStore()
    lemma = aeq(sig.v("x"), sig.v("y"))
    assert store.add_dpl(lemma)
    assert not store.add_dpl(lemma)
    assert not store.add_drl(lemma)
    assert not store.add_dpl(ATRUE)
    assert lemma in store and len(store) == 1
    assert store.dump_lines() == ["DPL (= x y)"]


def test_propagator_skips_barren_shapes(sig, config):
    propagator = Propagator(config)
    phi = [aeq(sig.v("x"), sig.v("y"))]
    store = LemmaStore()
    first = propagator.run(phi, store)
    second = propagator.run(phi, store)
    assert not first.skipped and second.skipped
    assert propagator.stats == {"calls": 2, "unsat": 0, "skipped": 1}


def test_propagator_cross_check_confirms_unsat(sig, config):
    config["propagation"]["debug_cross_check"] = True
    propagator = Propagator(config, SolverBackend(config))
    x, y, u, v, c0 = sig.v("x"), sig.v("y"), sig.v("u"), sig.v("v"), sig.c(0)
    phi = [aeq(x, y), aeq(u, sig.f(SUB, x, y)), aeq(v, c0), sig.f(LT, u, v)]
    assert propagator.run(phi, LemmaStore()).unsat
    assert propagator.stats["unsat"] == 1


def test_cross_check_builds_its_own_backend(sig, config):
    config["propagation"]["debug_cross_check"] = True
    propagator = Propagator(config)
    x, y, u, v, c0 = sig.v("x"), sig.v("y"), sig.v("u"), sig.v("v"), sig.c(0)
    phi = [aeq(x, y), aeq(u, sig.f(SUB, x, y)), aeq(v, c0), sig.f(LT, u, v)]
    assert propagator.run(phi, LemmaStore()).unsat


def test_apply_rules_reports_new_events(sig):
    x, v, w, c0 = sig.v("x"), sig.v("v"), sig.v("w"), sig.c(0)
    diff = sig.f(SUB, x, x)
    state = PropagationState([aeq(w, diff), aeq(v, c0)])
    for c in state.phi_p:
        state.absorb(c)
    events = apply_rules(state)
    assert any(e.rule_id == "arith.sub-same" for e in events)
    assert aeq(diff, c0) in state.psi
