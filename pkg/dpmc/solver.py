"""
Solver backend: EUF queries over abstract formulas, BV queries over
concrete terms, unsat cores for both, optional SMT-LIB2 query dumps.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pysat.solvers import Solver

from .abstraction import AbstractFormula, ANode, abstract_script
from .bitblast import BitBlaster
from .config import _get_default_config
from .errors import NotUnsat, ResourceLimit
from .euf import EufSolver
from .ir import Term, smtlib_script

logger = logging.getLogger(__name__)


class Verdict(Enum):
    SAT = "sat"
    UNSAT = "unsat"


@dataclass
class SolverResult:
    verdict: Verdict
    model: Optional[object] = None
    core: List[object] = field(default_factory=list)

    @property
    def is_sat(self) -> bool:
        return self.verdict is Verdict.SAT

    @property
    def is_unsat(self) -> bool:
        return self.verdict is Verdict.UNSAT


class QueryDumper:
    """Writes each query as query_NNNNNN.smt2 into a directory."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.seq = 0

    def dump(self, text: str) -> Path:
        path = self.directory / f"query_{self.seq:06d}.smt2"
        self.seq += 1
        path.write_text(text, encoding="utf-8")
        return path


def _as_nodes(phi) -> List[ANode]:
    if phi is None:
        return []
    if isinstance(phi, ANode):
        return [phi]
    if isinstance(phi, AbstractFormula):
        return list(phi.clauses)
    return list(phi)


class SolverBackend:
    """Solver settings and counters shared by one checker run."""

    def __init__(self, config: Optional[Dict] = None):
        settings = (config or _get_default_config())["solver"]
        self.sat_backend = settings["sat_backend"]
        self.euf_max_iterations = settings["euf_max_iterations"]
        self.bv_conflict_budget = settings["bv_conflict_budget"]
        self.minimize_cores = settings["minimize_cores"]
        self.dumper = QueryDumper(settings["dump_queries"]) if settings["dump_queries"] else None
        self.stats = {"euf_queries": 0, "bv_queries": 0}

    # EUF

    def euf_check(
        self, phi, assumptions: Sequence[Tuple[object, ANode]] = ()
    ) -> SolverResult:
        hard = _as_nodes(phi)
        self.stats["euf_queries"] += 1
        if self.dumper:
            self.dumper.dump(
                abstract_script(hard + [n for _, n in assumptions], comment="euf query")
            )
        sat, payload = EufSolver(self.sat_backend, self.euf_max_iterations).check(
            hard, assumptions
        )
        if sat:
            return SolverResult(Verdict.SAT, model=payload)
        core = list(payload)
        if self.minimize_cores and len(core) > 1:
            core = self._minimize(core, lambda subset: self._euf_unsat(hard, subset), assumptions)
        return SolverResult(Verdict.UNSAT, core=core)

    def _euf_unsat(self, hard: List[ANode], labeled) -> bool:
        sat, _ = EufSolver(self.sat_backend, self.euf_max_iterations).check(hard, labeled)
        return not sat

    # BV

    def _bv_solve(self, t: Term, labeled: Sequence[Tuple[object, Term]]):
        blaster = BitBlaster()
        root = blaster.lit(t)
        selectors: List[int] = []
        labels: Dict[int, object] = {}
        for i, (label, term) in enumerate(labeled):
            s = blaster.pool.id(("sel", i))
            blaster.clauses.append([-s, blaster.lit(term)])
            selectors.append(s)
            labels[s] = label
        blaster.clauses.append([root])
        with Solver(name=self.sat_backend, bootstrap_with=blaster.clauses) as sat:
            if self.bv_conflict_budget:
                sat.conf_budget(self.bv_conflict_budget)
                outcome = sat.solve_limited(assumptions=selectors)
                if outcome is None:
                    raise ResourceLimit("bv_conflict_budget")
            else:
                outcome = sat.solve(assumptions=selectors)
            if outcome:
                return True, blaster.decode(sat.get_model())
            core = set(sat.get_core() or [])
            return False, [labels[s] for s in selectors if s in core]

    def bv_check(self, t: Term) -> SolverResult:
        self.stats["bv_queries"] += 1
        if self.dumper:
            self.dumper.dump(smtlib_script([t], comment="bv query"))
        sat, payload = self._bv_solve(t, ())
        if sat:
            return SolverResult(Verdict.SAT, model=payload)
        return SolverResult(Verdict.UNSAT)

    def bv_unsat_core(self, t: Term, labeled: Sequence[Tuple[object, Term]]) -> List[object]:
        """Labels of a subset of labeled whose conjunction with t is unsat."""
        self.stats["bv_queries"] += 1
        if self.dumper:
            self.dumper.dump(smtlib_script([t] + [x for _, x in labeled], comment="bv core"))
        sat, payload = self._bv_solve(t, labeled)
        if sat:
            raise NotUnsat("query with assumptions is satisfiable")
        core = list(payload)
        if self.minimize_cores and len(core) > 1:
            core = self._minimize(core, lambda subset: not self._bv_solve(t, subset)[0], labeled)
        return core

    @staticmethod
    def _minimize(core: List[object], still_unsat, labeled) -> List[object]:
        """Deletion-based: drop each label whose removal keeps the query unsat."""
        by_label = {id(label): (label, x) for label, x in labeled}
        kept = list(core)
        for label in list(core):
            trial = [l for l in kept if l is not label]
            if still_unsat([by_label[id(l)] for l in trial]):
                kept = trial
        logger.debug(f"Minimized core from {len(core)} to {len(kept)} labels")
        return kept
