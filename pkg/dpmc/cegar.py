"""
Counterexample-guided refinement loop around IC3.

The system is abstracted once. Each round runs IC3 against the current
lemma store; an abstract counterexample is concretized and checked with
the bit-level solver. A feasible trace becomes the witness, an infeasible
one yields a refinement lemma and the next round starts.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .abstraction import (
    ATRUE,
    AbstractSystem,
    AbstractTrace,
    ANode,
    NodeKind,
    aand,
    anot,
    asym,
    dp_abstract,
    dp_concrete,
    substitute_nodes,
    symb,
)
from .config import _get_default_config
from .errors import DpmcError, NotSpurious, NotUnsat, ResourceLimit
from .ic3 import IC3, EmptyTrace
from .ir import TRUE, ConcreteTrace, OpKind, TransitionSystem, mk_and, timed
from .propagation import LemmaStore, Propagator
from .solver import SolverBackend

logger = logging.getLogger(__name__)

__all__ = ["CheckResult", "LemmaStore", "Verdict", "dp_ic3", "dp_refine"]


class Verdict(Enum):
    SAFE = "SAFE"
    UNSAFE = "UNSAFE"
    UNKNOWN = "UNKNOWN"


@dataclass
class CheckResult:
    """Outcome of one dp_ic3 run."""

    verdict: Verdict
    invariant: Tuple[ANode, ...] = ()
    witness: Optional[ConcreteTrace] = None
    reason: Optional[str] = None
    stats: Dict[str, int] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    lemmas: LemmaStore = field(default_factory=LemmaStore)

    @property
    def refinements(self) -> int:
        return self.stats.get("refinements", 0)

    def record(self) -> Dict[str, object]:
        """Flat, JSON-ready summary."""
        out: Dict[str, object] = {"verdict": self.verdict.value}
        if self.reason:
            out["reason"] = self.reason
        out.update(self.stats)
        out.update({k: round(v, 3) for k, v in self.timings.items()})
        return out


def _ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


# refinement


def _is_pin(lit: ANode) -> bool:
    if lit.kind is not NodeKind.EQ or lit.op is not OpKind.EQ:
        return False
    a, b = lit.args
    if a.kind is not NodeKind.SYM or b.kind is not NodeKind.SYM:
        return False
    return (a.sym.is_var and b.sym.is_const) or (a.sym.is_const and b.sym.is_var)


def _pin_parts(pin: ANode) -> Tuple[ANode, ANode]:
    a, b = pin.args
    return (a, b) if a.sym.is_var else (b, a)


def _trivial(lit: ANode) -> bool:
    return lit is ATRUE or (
        lit.kind is NodeKind.EQ and lit.op is OpKind.EQ and lit.args[0] is lit.args[1]
    )


class _Refiner:
    """Core extraction and lemma shaping for one spurious trace."""

    def __init__(self, system: AbstractSystem, backend: SolverBackend):
        self.system = system
        self.amap = system.amap
        self.backend = backend

    def unsat(self, lits: Sequence[ANode]) -> bool:
        return self.backend.bv_check(mk_and(*(self.amap.gamma(l) for l in lits))).is_unsat

    def core(self, lits: Sequence[ANode]) -> Optional[List[ANode]]:
        labeled = [(l, self.amap.gamma(l)) for l in lits]
        try:
            return self.backend.bv_unsat_core(TRUE, labeled)
        except NotUnsat:
            return None

    def generalize(self, lits: List[ANode]) -> List[ANode]:
        """Drop constant pins that are not needed, then fold the rest into the other literals."""
        for pin in [l for l in lits if _is_pin(l)]:
            trial = [l for l in lits if l is not pin]
            if trial and self.unsat(trial):
                lits = trial
        for pin in [l for l in lits if _is_pin(l)]:
            if pin not in lits:
                continue
            v, c = _pin_parts(pin)
            trial = []
            for l in lits:
                if l is pin:
                    continue
                image = substitute_nodes(l, {v: c})
                if not _trivial(image) and image not in trial:
                    trial.append(image)
            if trial and self.unsat(trial):
                lits = trial
        return lits

    def lemma(self, lits: List[ANode]) -> ANode:
        return anot(aand(*self.generalize(lits)))

    def window_lemmas(self, trace: AbstractTrace) -> List[ANode]:
        out: List[ANode] = []
        for step, window in enumerate(trace.windows):
            core = self.core(list(window))
            if core is None:
                continue
            logger.debug(f"Window {step} is infeasible on its own, core of {len(core)}")
            out.append(self.lemma(core))
        return out

    def _unfold(self, length: int) -> List[Optional[Dict[ANode, ANode]]]:
        """Per step, the substitution of state symbols by terms over the step-0 symbols."""
        ts = self.system.ts
        inputs = {asym(s) for s in self.system.input_syms}
        current = [asym(s) for s in self.system.state_syms]
        steps: List[Optional[Dict[ANode, ANode]]] = [{s: s for s in current}]
        for step in range(length):
            prev = steps[-1]
            if prev is None:
                steps.append(None)
                continue
            nxt: Dict[ANode, ANode] = {}
            for v, s in zip(ts.state_vars, current):
                f = self.amap.alpha(ts.next[v])
                if step > 0 and any(n in inputs for n in _leaves(f)):
                    nxt = None
                    break
                nxt[s] = substitute_nodes(f, prev)
            steps.append(nxt)
        return steps

    def folded_lemma(self, trace: AbstractTrace) -> Tuple[Optional[ANode], bool]:
        """Whole-trace core with every step rewritten over the initial state.

        Returns the lemma (or None) and whether every literal survived folding.
        """
        steps = self._unfold(trace.length)
        inputs = {asym(s) for s in self.system.input_syms}
        primed = {asym(s): asym(c) for c, s in zip(self.system.state_syms, self.system.next_syms)}
        lits: List[ANode] = list(self.system.init)
        complete = True
        for step, window in enumerate(trace.windows):
            here = steps[step]
            there = steps[step + 1] if step + 1 < len(steps) else None
            for lit in window:
                image = self._fold(lit, step, here, there, primed, inputs)
                if image is None:
                    complete = False
                elif not _trivial(image) and image not in lits:
                    lits.append(image)
        final = steps[trace.length]
        if final is None:
            complete = False
        else:
            lits.append(substitute_nodes(anot(self.system.prop), final))
        core = self.core(lits)
        if core is None:
            return None, complete
        return self.lemma(core), complete

    @staticmethod
    def _fold(lit, step, here, there, primed, inputs) -> Optional[ANode]:
        if here is None:
            return None
        bindings: Dict[ANode, ANode] = dict(here)
        for leaf in _leaves(lit):
            if leaf in primed:
                if there is None:
                    return None
                bindings[leaf] = there[primed[leaf]]
            elif leaf in inputs and step > 0:
                return None
        return substitute_nodes(lit, bindings)


def _leaves(n: ANode) -> List[ANode]:
    return [asym(s) for s in symb(n) if s.is_var]


def dp_refine(
    trace: AbstractTrace,
    system: AbstractSystem,
    backend: Optional[SolverBackend] = None,
    lemmas: Optional[LemmaStore] = None,
    verify: bool = True,
) -> Optional[ANode]:
    """Refinement lemma refuting a spurious trace.

    Window-local cores are tried first; a trace that is only infeasible as a
    whole is folded onto the initial state. Lemmas already in `lemmas` are
    skipped. Returns None when no new lemma can be derived.
    """
    backend = backend or SolverBackend()
    if verify and backend.bv_check(dp_concrete(trace, system)).is_sat:
        raise NotSpurious(f"abstract trace of length {trace.length} is feasible")
    known = lemmas if lemmas is not None else LemmaStore()
    refiner = _Refiner(system, backend)
    for lemma in refiner.window_lemmas(trace):
        if lemma not in known and lemma is not ATRUE:
            return lemma
    lemma, complete = refiner.folded_lemma(trace)
    if lemma is None and complete:
        raise NotSpurious("folded trace is feasible but its concretization is not")
    if lemma is None or lemma in known or lemma is ATRUE:
        logger.warning(f"No new refinement lemma for trace of length {trace.length}")
        return None
    return lemma


# main loop


def _witness(ts: TransitionSystem, model: Dict, length: int) -> ConcreteTrace:
    states = [{v: model.get(timed(v, t), 0) for v in ts.state_vars} for t in range(length + 1)]
    inputs = [{v: model.get(timed(v, t), 0) for v in ts.input_vars} for t in range(length + 1)]
    return ConcreteTrace(states, inputs)


def _merge_stats(total: Dict[str, int], part: Dict[str, int]):
    for key, value in part.items():
        total[key] = total.get(key, 0) + value


def dp_ic3(ts: TransitionSystem, config: Optional[Dict] = None) -> CheckResult:
    """Decide whether ts satisfies its property."""
    from .oracle import replay_witness

    config = config or _get_default_config()
    mode = config["engine"]["mode"]
    max_refinements = config["engine"]["max_refinements"]
    timings = {"abstract_ms": 0.0, "ic3_ms": 0.0, "concretize_ms": 0.0, "refine_ms": 0.0}
    stats = {
        "refinements": 0,
        "frames": 0,
        "obligations": 0,
        "euf_queries": 0,
        "queries_skipped_by_propagation": 0,
    }
    lemmas = LemmaStore()
    backend = SolverBackend(config)
    propagator = Propagator(config, backend) if mode == "prop-on" else None

    def finish(verdict: Verdict, **kw) -> CheckResult:
        stats["dpl_count"] = len(lemmas.dpl)
        stats["drl_count"] = len(lemmas.drl)
        stats["bv_queries"] = backend.stats["bv_queries"]
        logger.info(f"{ts.name}: {verdict.value} after {stats['refinements']} refinement(s)")
        return CheckResult(verdict, stats=stats, timings=timings, lemmas=lemmas, **kw)

    start = time.perf_counter()
    system = dp_abstract(ts)
    timings["abstract_ms"] = _ms(start)

    try:
        while True:
            start = time.perf_counter()
            ic3 = IC3(system, lemmas, config, backend, propagator)
            try:
                outcome = ic3.check()
            finally:
                _merge_stats(stats, ic3.stats)
                timings["ic3_ms"] += _ms(start)
            if isinstance(outcome, EmptyTrace):
                return finish(Verdict.SAFE, invariant=outcome.invariant)

            start = time.perf_counter()
            feasible = backend.bv_check(dp_concrete(outcome, system))
            timings["concretize_ms"] += _ms(start)
            if feasible.is_sat:
                witness = _witness(ts, feasible.model, outcome.length)
                if not replay_witness(ts, witness):
                    raise DpmcError(f"witness of length {witness.length} does not replay")
                return finish(Verdict.UNSAFE, witness=witness)

            if stats["refinements"] >= max_refinements:
                raise ResourceLimit("max_refinements")
            start = time.perf_counter()
            lemma = dp_refine(outcome, system, backend, lemmas, verify=False)
            timings["refine_ms"] += _ms(start)
            if lemma is None or not lemmas.add_drl(lemma):
                return finish(Verdict.UNKNOWN, reason="no progress")
            stats["refinements"] += 1
            logger.info(f"Refinement {stats['refinements']}: {lemma!r}")
    except ResourceLimit as e:
        logger.info(f"Budget exhausted: {e.budget}")
        return finish(Verdict.UNKNOWN, reason=e.budget)
    except DpmcError as e:
        logger.error(f"Check of {ts.name} aborted: {e}")
        return finish(Verdict.UNKNOWN, reason=str(e))
