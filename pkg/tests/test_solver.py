"""
Bit-level queries, unsat cores and query dumps.
"""

import random

import pytest

from dpmc.abstraction import aeq
from dpmc.errors import NotUnsat, ResourceLimit
from dpmc.ir import (
    TRUE,
    OpKind,
    bv,
    const,
    eval_concrete,
    free_vars,
    mk_and,
    mk_eq,
    mk_not,
    op,
    substitute,
    var,
)
from dpmc.oracle import CounterModel, bv_valid_exhaustive, random_system
from dpmc.solver import SolverBackend

B2 = bv(2)


def test_bv_model():
    x = var("x", B2)
    result = SolverBackend().bv_check(mk_eq(op(OpKind.ADD, x, const(1, B2)), const(0, B2)))
    assert result.is_sat
    assert result.model[x] == 3


def test_bv_unsat():
    x = var("x", B2)
    t = mk_and(op(OpKind.ULT, x, const(1, B2)), op(OpKind.NEQ, x, const(0, B2)))
    assert SolverBackend().bv_check(t).is_unsat


def test_bv_division_by_zero():
    x = var("x", bv(3))
    zero = const(0, bv(3))
    t = mk_eq(op(OpKind.UDIV, x, zero), const(7, bv(3)))
    assert SolverBackend().bv_check(mk_not(t)).is_unsat
    assert SolverBackend().bv_check(mk_not(mk_eq(op(OpKind.UREM, x, zero), x))).is_unsat


def test_unsat_core_subset():
    x, y = var("x", B2), var("y", B2)
    labeled = [
        ("a", mk_eq(x, const(0, B2))),
        ("b", mk_eq(y, const(0, B2))),
        ("c", mk_not(op(OpKind.ULE, y, x))),
        ("d", mk_eq(var("w", B2), const(1, B2))),
    ]
    core = SolverBackend().bv_unsat_core(TRUE, labeled)
    assert set(core) <= {"a", "b", "c"}
    assert {"b", "c"} <= set(core)


def test_unsat_core_of_false_assumption():
    x = var("x", B2)
    core = SolverBackend().bv_unsat_core(TRUE, [("only", op(OpKind.ULT, x, const(0, B2)))])
    assert core == ["only"]


def test_unsat_core_rejects_sat_query():
    x = var("x", B2)
    with pytest.raises(NotUnsat):
        SolverBackend().bv_unsat_core(TRUE, [("a", mk_eq(x, const(1, B2)))])


def test_minimized_bv_core(config):
    x = var("x", B2)
    config["solver"]["minimize_cores"] = True
    labeled = [(k, mk_eq(x, const(v, B2))) for k, v in (("p", 0), ("q", 1), ("r", 2))]
    core = SolverBackend(config).bv_unsat_core(TRUE, labeled)
    assert len(core) == 2


def test_conflict_budget(config):
    x, y = var("x", bv(8)), var("y", bv(8))
    config["solver"]["bv_conflict_budget"] = 1
    product = mk_eq(op(OpKind.MUL, x, y), const(143, bv(8)))
    hard = mk_and(product, op(OpKind.ULT, const(1, bv(8)), x), op(OpKind.ULT, const(1, bv(8)), y))
    backend = SolverBackend(config)
    try:
        result = backend.bv_check(hard)
    except ResourceLimit as e:
        assert e.budget == "bv_conflict_budget"
    else:
        assert result.is_sat


def test_query_dump(tmp_path, config, sig):
    config["solver"]["dump_queries"] = str(tmp_path / "queries")
    backend = SolverBackend(config)
    backend.bv_check(mk_eq(var("x", B2), const(1, B2)))
    backend.euf_check([aeq(sig.v("x"), sig.c(1))])
    files = sorted((tmp_path / "queries").glob("query_*.smt2"))
    assert [f.name for f in files] == ["query_000000.smt2", "query_000001.smt2"]
    assert "(set-logic QF_BV)" in files[0].read_text()
    assert "(set-logic QF_UF)" in files[1].read_text()
    assert backend.stats == {"euf_queries": 1, "bv_queries": 1}


def _agrees_with_evaluator(backend: SolverBackend, t, env) -> bool:
    pinned = substitute(t, {v: const(env[v], v.sort) for v in free_vars(t)})
    expected = eval_concrete(t, env)
    if t.sort.is_bool:
        claim = pinned if expected else mk_not(pinned)
        return backend.bv_check(mk_not(claim)).is_unsat
    value = const(expected, t.sort)
    return backend.bv_check(op(OpKind.NEQ, pinned, value)).is_unsat


def _blasting_matches(seeds, samples):
    backend = SolverBackend()
    for seed in seeds:
        ts = random_system(seed, state_bits=6, input_bits=2, depth=3)
        rng = random.Random(seed)
        for t in [*ts.next.values(), ts.property]:
            variables = free_vars(t)
            for _ in range(samples):
                env = {v: rng.randint(0, v.sort.max_value) for v in variables}
                assert _agrees_with_evaluator(backend, t, env), (seed, t, env)


def test_bit_blasting_matches_evaluator():
    _blasting_matches(range(10), 3)


@pytest.mark.slow
def test_bit_blasting_matches_evaluator_many():
    _blasting_matches(range(10, 110), 5)


def _random_queries(seed):
    ts = random_system(seed, state_bits=6, input_bits=2, depth=3)
    rng = random.Random(seed)
    queries = [ts.property, mk_not(ts.property)]
    nexts = list(ts.next.values())
    for f, g in zip(nexts, nexts[1:] + nexts[:1]):
        k = const(rng.randint(0, f.sort.max_value), f.sort)
        queries += [mk_eq(f, k), op(OpKind.ULT, f, k), op(OpKind.ULT, k, f)]
        if g is not f and g.sort == f.sort:
            queries.append(mk_eq(f, g))
    return queries


def _satisfiability_matches_enumeration(seeds) -> int:
    backend = SolverBackend()
    checked = 0
    for seed in seeds:
        for t in _random_queries(seed):
            assert sum(v.width for v in free_vars(t)) <= 12
            expected = isinstance(bv_valid_exhaustive(mk_not(t)), CounterModel)
            assert backend.bv_check(t).is_sat == expected, (seed, t)
            checked += 1
    return checked


def test_blasted_queries_over_free_bits_match_enumeration():
    assert _satisfiability_matches_enumeration(range(10)) >= 50


@pytest.mark.slow
def test_blasted_queries_over_free_bits_match_enumeration_many():
    assert _satisfiability_matches_enumeration(range(10, 110)) >= 500
