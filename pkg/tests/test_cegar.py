"""
The refinement loop end to end, plus dp_refine on hand-built traces.
"""

import pytest

from dpmc.abstraction import AbstractTrace, aand, aeq, anot, dp_abstract
from dpmc.cegar import CheckResult, Verdict, dp_ic3, dp_refine
from dpmc.errors import NotSpurious, ResourceLimit
from dpmc.ic3 import IC3, ic3_check
from dpmc.ir import OpKind, bv, var
from dpmc.oracle import Valid, bv_valid_exhaustive, replay_witness
from dpmc.solver import SolverBackend


def test_fig2_safe_without_refinement(fig2, config):
    result = dp_ic3(fig2, config)
    assert result.verdict is Verdict.SAFE
    assert result.refinements == 0
    assert result.invariant


def test_fig2_propagation_lemmas(fig2, config, sig):
    result = dp_ic3(fig2, config)
    c0, c1 = sig.c(0), sig.c(1)
    assert sig.f(OpKind.ULE, c0, c0) in result.lemmas.dpl
    assert aeq(sig.f(OpKind.ADD, c0, c1), c1) in result.lemmas.dpl
    assert result.stats["dpl_count"] == len(result.lemmas.dpl)


def test_fig2_safe_by_refinement_alone(fig2, config, prop_off_config):
    off = dp_ic3(fig2, prop_off_config)
    assert off.verdict is Verdict.SAFE
    assert 1 <= off.refinements <= 20
    assert off.lemmas.dpl == []
    on = dp_ic3(fig2, config)
    assert on.refinements < off.refinements


@pytest.mark.parametrize("mode", ["prop-on", "prop-off"])
def test_bad_initial_state_is_unsafe(bad_init, config, mode):
    config["engine"]["mode"] = mode
    result = dp_ic3(bad_init, config)
    assert result.verdict is Verdict.UNSAFE
    assert result.witness.length == 0
    assert result.witness.states[0][var("x", bv(2))] == 1
    assert replay_witness(bad_init, result.witness)


def test_dpls_are_bit_level_valid(fig2, config):
    result = dp_ic3(fig2, config)
    amap = dp_abstract(fig2).amap
    for lemma in result.lemmas.dpl:
        assert isinstance(bv_valid_exhaustive(amap.gamma(lemma)), Valid), lemma


def test_refine_generalizes_pinned_window(fig2, sig):
    system = dp_abstract(fig2)
    x, y, c0 = sig.v("x"), sig.v("y"), sig.c(0)
    window = (aeq(x, c0), aeq(y, c0), anot(sig.f(OpKind.ULE, y, x)))
    trace = AbstractTrace([window], 0)
    lemma = dp_refine(trace, system)
    assert lemma is sig.f(OpKind.ULE, c0, x)
    assert SolverBackend().euf_check([*window, lemma]).is_unsat


def test_refine_without_pins(fig2, sig):
    system = dp_abstract(fig2)
    x, y = sig.v("x"), sig.v("y")
    eq, lt = aeq(x, y), sig.f(OpKind.ULT, x, y)
    lemma = dp_refine(AbstractTrace([(eq, lt)], 0), system)
    assert lemma in (anot(aand(eq, lt)), anot(aand(lt, eq)))


def test_refine_rejects_feasible_trace(bad_init):
    system = dp_abstract(bad_init)
    trace = ic3_check(system)
    with pytest.raises(NotSpurious):
        dp_refine(trace, system)


def test_budget_exhaustion_is_unknown(fig2, config, monkeypatch):
    def exhausted(self):
        raise ResourceLimit("max_frames")

    monkeypatch.setattr(IC3, "check", exhausted)
    result = dp_ic3(fig2, config)
    assert result.verdict is Verdict.UNKNOWN
    assert result.reason == "max_frames"


def test_record_is_flat():
    result = CheckResult(
        Verdict.UNKNOWN, reason="max_frames", stats={"refinements": 3}, timings={"ic3_ms": 1.23456}
    )
    assert result.record() == {
        "verdict": "UNKNOWN",
        "reason": "max_frames",
        "refinements": 3,
        "ic3_ms": 1.235,
    }
    assert result.refinements == 3
