"""
IC3/PDR over the abstract transition system.

Frames are kept as monotone deltas: frames[i] holds the blocked cubes whose
highest frame is i, so F_i is the union of frames[i:] (F_0 is the initial
condition). Every query is augmented with the lemma store and, when a
propagator is attached, first handed to datapath propagation; an unsat
propagation verdict answers the query without calling the solver.
"""

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .abstraction import (
    AbstractSystem,
    AbstractTrace,
    ANode,
    NodeKind,
    aand,
    aeq,
    anot,
    asym,
    subnodes,
    symb,
)
from .config import _get_default_config
from .errors import DpmcError, ResourceLimit
from .propagation import LemmaStore, Propagator
from .solver import SolverBackend, SolverResult, Verdict

logger = logging.getLogger(__name__)

Cube = Tuple[ANode, ...]


@dataclass
class EmptyTrace:
    """No abstract counterexample: the clauses form an inductive invariant."""

    invariant: Tuple[ANode, ...]
    frame: int


@dataclass
class ProofObligation:
    cube: Cube
    frame: int
    depth: int
    window: Tuple[ANode, ...]
    parent: Optional["ProofObligation"] = field(default=None, repr=False)


def clause_of(cube: Sequence[ANode]) -> ANode:
    return anot(aand(*cube))


class IC3:
    def __init__(
        self,
        system: AbstractSystem,
        lemmas: Optional[LemmaStore] = None,
        config: Optional[Dict] = None,
        backend: Optional[SolverBackend] = None,
        propagator: Optional[Propagator] = None,
    ):
        self.config = config or _get_default_config()
        self.system = system
        self.lemmas = lemmas if lemmas is not None else LemmaStore()
        self.backend = backend or SolverBackend(self.config)
        self.propagator = propagator
        self.max_frames = self.config["engine"]["max_frames"]
        self.generalize_enabled = self.config["engine"]["generalize"]
        self.init = list(system.init)
        self.trans = list(system.trans)
        self.prop = system.prop
        self.k = 0
        self.frames: List[List[Cube]] = []
        self.stats = {
            "frames": 0,
            "obligations": 0,
            "euf_queries": 0,
            "queries_skipped_by_propagation": 0,
        }
        self._instances: Dict[ANode, List[ANode]] = {}
        self._seq = itertools.count()
        self._constants = [asym(c) for c in system.constants]
        self._state_nodes = [asym(s) for s in system.state_syms]
        self._prop_has_inputs = bool(set(symb(self.prop)) & system.input_set)
        self._state_atoms = self._collect_state_atoms([self.prop] + self.init + self.trans)

    # queries

    def _lemma_instances(self) -> List[ANode]:
        out: List[ANode] = []
        for lemma in self.lemmas.all():
            inst = self._instances.get(lemma)
            if inst is None:
                inst = self._instantiate(lemma)
                self._instances[lemma] = inst
            out.extend(inst)
        return out

    def _instantiate(self, lemma: ANode) -> List[ANode]:
        """The lemma, plus its primed or unprimed copy when it sits on one side only."""
        syms = set(symb(lemma))
        cur = syms & self.system.current_set
        nxt = syms & self.system.next_set
        inp = syms & self.system.input_set
        out = [lemma]
        if cur and not nxt and not inp:
            out.append(self.system.prime(lemma))
        elif nxt and not cur and not inp:
            out.append(self.system.unprime(lemma))
        return out

    def _query(self, parts: List[ANode], assumptions: Sequence[Tuple[object, ANode]] = ()) -> SolverResult:
        if self.propagator is not None:
            outcome = self.propagator.run(parts + [n for _, n in assumptions], self.lemmas)
            if outcome.unsat:
                self.stats["queries_skipped_by_propagation"] += 1
                return SolverResult(Verdict.UNSAT, core=[label for label, _ in assumptions])
        self.stats["euf_queries"] += 1
        return self.backend.euf_check(parts + self._lemma_instances(), assumptions)

    def _frame_clauses(self, i: int) -> List[ANode]:
        if i == 0:
            return list(self.init)
        return [clause_of(c) for j in range(i, len(self.frames)) for c in self.frames[j]]

    # models

    def _collect_state_atoms(self, roots: List[ANode]) -> List[ANode]:
        allowed = self.system.current_set
        atoms: List[ANode] = []
        for m in subnodes(roots):
            if m.kind is NodeKind.PRED or (
                m.kind is NodeKind.EQ and any(a.kind is not NodeKind.SYM for a in m.args)
            ):
                if all(not s.is_var or s in allowed for s in symb(m)):
                    atoms.append(m)
        return atoms

    def extract_cube(self, model) -> Cube:
        """State cube of an EUF model: constant pins, equalities, disequalities, atom values."""
        lits: List[ANode] = []
        const_ids = {}
        for c in self._constants:
            const_ids.setdefault((c.width, model.value(c)), c)
        reps: Dict[Tuple[int, int], ANode] = {}
        for s in self._state_nodes:
            key = (s.width, model.value(s))
            if key in const_ids:
                lits.append(aeq(s, const_ids[key]))
            elif key in reps:
                lits.append(aeq(reps[key], s))
            else:
                reps[key] = s
        free = list(reps.values())
        for a, b in itertools.combinations(free, 2):
            if a.width == b.width:
                lits.append(anot(aeq(a, b)))
        for atom in self._state_atoms:
            lits.append(atom if model.holds(atom) else anot(atom))
        return tuple(dict.fromkeys(lits))

    @staticmethod
    def _window(model, parts: List[ANode]) -> Tuple[ANode, ...]:
        atoms = [m for m in subnodes(parts) if m.kind in (NodeKind.EQ, NodeKind.PRED)]
        return tuple(a if model.holds(a) else anot(a) for a in atoms)

    # main loop

    def check(self) -> Union[EmptyTrace, AbstractTrace]:
        logger.info(f"IC3 on {self.system.ts.name} with {len(self.lemmas)} lemma(s)")
        parts = self.init + [anot(self.prop)]
        result = self._query(parts)
        if result.is_sat:
            cube = self.extract_cube(result.model)
            return AbstractTrace([self._window(result.model, parts)], 0, [cube])

        self.frames = [[], []]
        self.k = 1
        if not self._prop_has_inputs:
            parts = self.init + self.trans + [anot(self.system.prime(self.prop))]
            result = self._query(parts)
            if result.is_sat:
                cube = self.extract_cube(result.model)
                return AbstractTrace([self._window(result.model, parts)], 1, [cube])
            self.frames[1].append((anot(self.prop),))

        while True:
            self.stats["frames"] = self.k
            while True:
                parts = self._frame_clauses(self.k) + [anot(self.prop)]
                result = self._query(parts)
                if result.is_unsat:
                    break
                cube = self.extract_cube(result.model)
                bad = ProofObligation(cube, self.k, 0, self._window(result.model, parts))
                trace = self._block(bad)
                if trace is not None:
                    logger.info(f"Abstract counterexample of length {trace.length}")
                    return trace
            if self.k >= self.max_frames:
                raise ResourceLimit("max_frames")
            self.k += 1
            self.frames.append([])
            fixpoint = self._push()
            if fixpoint is not None:
                return self._certify(fixpoint)

    def _block(self, bad: ProofObligation) -> Optional[AbstractTrace]:
        heap = [(bad.frame, bad.depth, next(self._seq), bad)]
        while heap:
            _, _, _, ob = heapq.heappop(heap)
            self.stats["obligations"] += 1
            if ob.frame == 0 or self._intersects_init(ob.cube):
                return self._trace(ob)
            if self._blocked(ob.cube, ob.frame):
                continue
            parts, assumptions = self._relative_query(ob.cube, ob.frame)
            result = self._query(parts, assumptions)
            if result.is_sat:
                pred = self.extract_cube(result.model)
                window = self._window(result.model, parts + [n for _, n in assumptions])
                child = ProofObligation(pred, ob.frame - 1, ob.depth + 1, window, ob)
                heapq.heappush(heap, (child.frame, child.depth, next(self._seq), child))
                heapq.heappush(heap, (ob.frame, ob.depth, next(self._seq), ob))
                continue
            cube = self.generalize(ob.cube, ob.frame, result.core)
            self._add_blocked(cube, ob.frame)
            logger.debug(f"Blocked cube of {len(cube)} literal(s) at frame {ob.frame}")
            if ob.frame < self.k:
                heapq.heappush(heap, (ob.frame + 1, ob.depth, next(self._seq), ProofObligation(
                    ob.cube, ob.frame + 1, ob.depth, ob.window, ob.parent)))
        return None

    def _trace(self, ob: ProofObligation) -> AbstractTrace:
        windows: List[Tuple[ANode, ...]] = []
        cubes: List[Cube] = []
        node = ob
        while node is not None:
            windows.append(node.window)
            cubes.append(node.cube)
            node = node.parent
        return AbstractTrace(windows, ob.depth, cubes)

    def _relative_query(self, cube: Cube, frame: int):
        """F_{frame-1} and not cube and T, with the primed cube literals as assumptions."""
        parts = self._frame_clauses(frame - 1) + [clause_of(cube)] + self.trans
        assumptions = [(j, self.system.prime(lit)) for j, lit in enumerate(cube)]
        return parts, assumptions

    def _inductive(self, cube: Sequence[ANode], frame: int) -> Tuple[bool, List[object]]:
        parts, assumptions = self._relative_query(tuple(cube), frame)
        result = self._query(parts, assumptions)
        return result.is_unsat, result.core

    def _intersects_init(self, cube: Sequence[ANode]) -> bool:
        return self._query(self.init + list(cube)).is_sat

    def _blocked(self, cube: Cube, frame: int) -> bool:
        lits = set(cube)
        return any(set(b) <= lits for j in range(frame, len(self.frames)) for b in self.frames[j])

    def generalize(self, cube: Cube, frame: int, core: Optional[List[object]] = None) -> Cube:
        """Shrink a cube whose negation is inductive relative to frame - 1."""
        lits = list(cube)
        if core is not None and len(core) < len(lits):
            keep = set(core)
            reduced = [l for j, l in enumerate(lits) if j in keep]
            for l in lits:
                if not self._intersects_init(reduced):
                    break
                if l not in reduced:
                    reduced = [x for x in lits if x in reduced or x is l]
            if reduced and not self._intersects_init(reduced) and self._inductive(reduced, frame)[0]:
                lits = reduced
        if self.generalize_enabled:
            for l in list(lits):
                if len(lits) == 1:
                    break
                trial = [x for x in lits if x is not l]
                if self._intersects_init(trial):
                    continue
                if self._inductive(trial, frame)[0]:
                    lits = trial
        return tuple(lits)

    def _add_blocked(self, cube: Cube, frame: int):
        top = frame
        while top < self.k and self._inductive(cube, top + 1)[0]:
            top += 1
        lits = set(cube)
        for i in range(1, top + 1):
            self.frames[i] = [c for c in self.frames[i] if not lits <= set(c)]
        self.frames[top].append(cube)

    def _push(self) -> Optional[int]:
        """Forward clause propagation; returns i when F_i = F_{i+1}."""
        for i in range(1, self.k):
            for cube in list(self.frames[i]):
                parts = self._frame_clauses(i) + self.trans + [self.system.prime(aand(*cube))]
                if self._query(parts).is_unsat:
                    self.frames[i].remove(cube)
                    self.frames[i + 1].append(cube)
            if not self.frames[i]:
                logger.info(f"Fixpoint at frame {i} of {self.k}")
                return i
        return None

    def _certify(self, i: int) -> EmptyTrace:
        clauses = self._frame_clauses(i + 1)
        invariant = aand(*clauses)
        lemmas = self._lemma_instances()
        checks = {
            "consecution": clauses + self.trans + [anot(self.system.prime(invariant))],
            "safety": clauses + [anot(self.prop)],
            "initiation": self.init + [anot(invariant)],
        }
        for name, parts in checks.items():
            self.stats["euf_queries"] += 1
            if self.backend.euf_check(parts + lemmas).is_sat:
                logger.error(f"Invariant certificate failed: {name}")
                raise DpmcError(f"invariant certificate failed: {name}")
        return EmptyTrace(tuple(clauses), i)


def ic3_check(
    system: AbstractSystem,
    lemmas: Optional[LemmaStore] = None,
    config: Optional[Dict] = None,
    backend: Optional[SolverBackend] = None,
    propagator: Optional[Propagator] = None,
) -> Union[EmptyTrace, AbstractTrace]:
    return IC3(system, lemmas, config, backend, propagator).check()
