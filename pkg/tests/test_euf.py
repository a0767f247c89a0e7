"""
Congruence closure and the EUF decision procedure.
"""

import pytest

from dpmc.abstraction import aand, aeq, anot, aor, aite, dp_abstract
from dpmc.euf import CongruenceClosure, EufSolver
from dpmc.ir import OpKind, mk_and, mk_not
from dpmc.oracle import Valid, bv_valid_exhaustive, random_system
from dpmc.solver import SolverBackend


def test_closure_explains_transitive_merges():
    cc = CongruenceClosure()
    for n in "abcd":
        cc.add(n)
    cc.merge("a", "b", "r1")
    cc.merge("c", "d", "r3")
    cc.merge("b", "c", "r2")
    assert cc.same("a", "d")
    assert set(cc.explain("a", "c")) == {"r1", "r2"}
    assert set(cc.explain("a", "d")) == {"r1", "r2", "r3"}


def test_closure_congruence_and_tag_conflict():
    cc = CongruenceClosure()
    for n in ("x", "y"):
        cc.add(n)
    cc.add("fx", "f", ["x"])
    cc.add("fy", "f", ["y"])
    cc.add("zero", tag="0")
    cc.add("one", tag="1")
    assert not cc.same("fx", "fy")
    cc.merge("x", "y", "xy")
    assert cc.same("fx", "fy")
    assert cc.explain("fx", "fy") == ["xy"]
    cc.merge("fx", "zero", "fx0")
    cc.merge("fy", "one", "fy1")
    assert cc.conflict is not None
    assert set(cc.explain_conflict()) == {"xy", "fx0", "fy1"}


def test_sat_query_has_model(sig):
    x, y, c0 = sig.v("x"), sig.v("y"), sig.c(0)
    le = sig.f(OpKind.ULE, y, x)
    result = SolverBackend().euf_check([aeq(x, c0), aeq(y, c0), anot(le)])
    assert result.is_sat
    model = result.model
    assert model.value(x) == model.value(y) == model.value(c0)
    assert not model.holds(le)


def test_congruence_conflict(sig):
    x, y = sig.v("x"), sig.v("y")
    fx = sig.f(OpKind.BVNOT, x)
    fy = sig.f(OpKind.BVNOT, y)
    result = SolverBackend().euf_check([aeq(x, y), aeq(fx, sig.c(0)), anot(aeq(fy, sig.c(0)))])
    assert result.is_unsat


def test_predicate_congruence(sig):
    x, y, c0 = sig.v("x"), sig.v("y"), sig.c(0)
    phi = [aeq(x, c0), aeq(y, c0), sig.f(OpKind.ULE, c0, x), anot(sig.f(OpKind.ULE, y, x))]
    assert SolverBackend().euf_check(phi).is_unsat


def test_distinct_constants(sig):
    x = sig.v("x")
    assert SolverBackend().euf_check([aeq(x, sig.c(0)), aeq(x, sig.c(1))]).is_unsat
    assert SolverBackend().euf_check([aeq(x, sig.c(0)), anot(aeq(x, sig.c(1)))]).is_sat


def test_boolean_structure_and_ite(sig):
    x, y, z = sig.v("x"), sig.v("y"), sig.v("z")
    c0, c1 = sig.c(0), sig.c(1)
    lt = sig.f(OpKind.ULT, x, y)
    phi = [
        aor(aeq(x, c0), aeq(x, c1)),
        anot(aeq(x, c0)),
        aeq(z, aite(aeq(x, c1), y, c0)),
        anot(aeq(z, y)),
    ]
    assert SolverBackend().euf_check(phi).is_unsat
    result = SolverBackend().euf_check([aand(lt, aeq(y, c1))])
    assert result.is_sat and result.model.holds(lt)


def test_assumption_core(sig):
    x, y = sig.v("x"), sig.v("y")
    c0 = sig.c(0)
    lt = sig.f(OpKind.ULT, x, y)
    assumptions = [
        ("a", aeq(x, c0)),
        ("b", aeq(y, c0)),
        ("c", lt),
        ("d", aeq(sig.v("w"), c0)),
    ]
    result = SolverBackend().euf_check([anot(sig.f(OpKind.ULT, c0, c0))], assumptions)
    assert result.is_unsat
    assert set(result.core) <= {"a", "b", "c"}
    assert "c" in result.core


def test_minimized_core_is_irreducible(sig, config):
    x = sig.v("x")
    config["solver"]["minimize_cores"] = True
    assumptions = [
        ("p", aeq(x, sig.c(0))),
        ("q", aeq(x, sig.c(1))),
        ("r", aeq(x, sig.c(2))),
    ]
    result = SolverBackend(config).euf_check([], assumptions)
    assert result.is_unsat
    assert len(result.core) == 2


def test_solver_counts_iterations(sig):
    x, y = sig.v("x"), sig.v("y")
    solver = EufSolver()
    sat, model = solver.check([aeq(x, y)])
    assert sat
    assert solver.iterations >= 1
    assert model.holds(aeq(x, y))


def _abstract_queries(seed):
    system = dp_abstract(random_system(seed, state_bits=3))
    bad_next = anot(system.prime(system.prop))
    queries = [
        [*system.init, anot(system.prop)],
        [*system.init, *system.trans, bad_next],
        [system.prop, *system.trans, bad_next],
    ]
    return system.amap, queries


def _euf_unsat_is_bv_unsat(seeds) -> int:
    backend = SolverBackend()
    checked = 0
    for seed in seeds:
        amap, queries = _abstract_queries(seed)
        for query in queries:
            checked += 1
            if not backend.euf_check(query).is_unsat:
                continue
            concrete = mk_and(*(amap.gamma(n) for n in query))
            assert isinstance(bv_valid_exhaustive(mk_not(concrete)), Valid), (seed, query)
    return checked


def test_euf_unsat_implies_bit_level_unsat():
    assert _euf_unsat_is_bv_unsat(range(10)) == 30


@pytest.mark.slow
def test_euf_unsat_implies_bit_level_unsat_many():
    assert _euf_unsat_is_bv_unsat(range(10, 90)) >= 200
