"""
Datapath propagation.

Pushes constants and operator semantics into an abstract query before it
reaches the EUF solver. Each iteration substitutes constant-tagged classes
into application arguments, evaluates ground applications, applies the
rule table, resolves relational chains and collapses decided ITE guards.
Facts that are BV-valid on their own are collected as propagation lemmas
(DPLs); facts that only hold in the current query rewrite it and go no
further.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

from .abstraction import (
    AFALSE,
    ATRUE,
    AbstractFormula,
    AbstractSymbol,
    ANode,
    NodeKind,
    aand,
    abstract_smtlib,
    aeq,
    aimplies,
    anot,
    aor,
    asym,
    const_symbol,
    conjuncts,
    rebuild_node,
    subnodes,
    symb,
)
from .errors import DpmcError
from .euf import FALSE_T, TRUE_T, CongruenceClosure
from .ir import OpKind, apply_op
from .rules import Rule, pattern_value, rules_for

logger = logging.getLogger(__name__)


class LemmaStore:
    """Accumulated propagation (DPL) and refinement (DRL) lemmas of one run."""

    def __init__(self):
        self.dpl: List[ANode] = []
        self.drl: List[ANode] = []
        self._seen: Set[ANode] = set()

    def _add(self, bucket: List[ANode], lemma: ANode) -> bool:
        if lemma is ATRUE or lemma in self._seen:
            return False
        self._seen.add(lemma)
        bucket.append(lemma)
        return True

    def add_dpl(self, lemma: ANode) -> bool:
        return self._add(self.dpl, lemma)

    def add_drl(self, lemma: ANode) -> bool:
        return self._add(self.drl, lemma)

    def __contains__(self, lemma: ANode) -> bool:
        return lemma in self._seen

    def __len__(self) -> int:
        return len(self.dpl) + len(self.drl)

    def all(self) -> List[ANode]:
        return self.dpl + self.drl

    def dump_lines(self) -> List[str]:
        lines = [f"DPL {abstract_smtlib(l)}" for l in self.dpl]
        lines.extend(f"DRL {abstract_smtlib(l)}" for l in self.drl)
        return lines


class EqualityClosure:
    """Congruence closure over the term and predicate nodes of a query.

    Constants tag their class; predicate applications share classes with
    the truth sentinels once decided. Disequalities are kept as node pairs
    and checked against the classes.
    """

    def __init__(self):
        self.cc = CongruenceClosure()
        self.cc.add(TRUE_T, tag=TRUE_T)
        self.cc.add(FALSE_T, tag=FALSE_T)
        self.diseqs: List[Tuple[ANode, ANode]] = []

    def add_term(self, n: ANode):
        for m in subnodes(n):
            if m in self.cc:
                continue
            if m.kind in (NodeKind.APP, NodeKind.PRED):
                self.cc.add(m, m.sym, m.args)
            elif m.kind is NodeKind.SYM:
                self.cc.add(m, tag=m.sym if m.is_const else None)
            elif m.kind is NodeKind.ITE and not m.is_bool:
                self.cc.add(m)

    def merge(self, a: ANode, b: ANode):
        self.add_term(a)
        self.add_term(b)
        self.cc.merge(a, b, None)

    def set_truth(self, p: ANode, value: bool):
        self.add_term(p)
        self.cc.merge(p, TRUE_T if value else FALSE_T, None)

    def same(self, a: ANode, b: ANode) -> bool:
        return a is b or (a in self.cc and b in self.cc and self.cc.same(a, b))

    def const_tag(self, n: ANode) -> Optional[AbstractSymbol]:
        if n not in self.cc:
            return n.sym if n.is_const else None
        tag = self.cc.tag_of(n)
        return tag if isinstance(tag, AbstractSymbol) else None

    def truth(self, p: ANode) -> Optional[bool]:
        if p not in self.cc:
            return None
        tag = self.cc.tag_of(p)
        if tag == TRUE_T:
            return True
        if tag == FALSE_T:
            return False
        return None

    def apps_over(self, sym: AbstractSymbol) -> Set[ANode]:
        """Applications with an argument in constant sym's class, other than sym's own node."""
        node = asym(sym)
        if node not in self.cc:
            return set()
        return {
            u
            for u in self.cc.uses[self.cc.find(node)]
            if any(a is not node and self.cc.same(a, node) for a in u.args)
        }

    def representative(self, n: ANode) -> ANode:
        """Smallest member of n's class in the global symbol order."""
        if n not in self.cc:
            return n
        members = [m for m in self.cc.members[self.cc.find(n)] if isinstance(m, ANode)]
        return min(members, key=lambda m: m.skey)

    def known_distinct(self, a: ANode, b: ANode) -> bool:
        ta, tb = self.const_tag(a), self.const_tag(b)
        if ta is not None and tb is not None and ta != tb:
            return True
        if a not in self.cc or b not in self.cc:
            return False
        ra, rb = self.cc.find(a), self.cc.find(b)
        for p, q in self.diseqs:
            rp, rq = self.cc.find(p), self.cc.find(q)
            if (rp is ra and rq is rb) or (rp is rb and rq is ra):
                return True
        return False

    @property
    def conflict(self) -> bool:
        if self.cc.conflict is not None:
            return True
        return any(self.cc.same(p, q) for p, q in self.diseqs)


@dataclass
class RelationEdge:
    src: ANode
    dst: ANode
    strict: bool
    literal: ANode


class RelationGraph:
    """Order edges between closure classes, one per unit LT/LE literal.

    LT(a,b) gives a < b, not LT(a,b) gives b <= a, LE(a,b) gives a <= b and
    not LE(a,b) gives b < a.
    """

    def __init__(self, closure: EqualityClosure):
        self.closure = closure
        self.edges: List[RelationEdge] = []
        self._literals: Set[ANode] = set()

    def add_literal(self, lit: ANode) -> Optional[List[ANode]]:
        """Record a unit literal; returns the premises of a strict cycle if one closes."""
        positive = lit.kind is NodeKind.PRED
        atom = lit if positive else lit.args[0]
        if lit in self._literals:
            return None
        self._literals.add(lit)
        a, b = atom.args
        lt = atom.sym.op is OpKind.ULT
        if positive:
            edge = RelationEdge(a, b, lt, lit)
        else:
            edge = RelationEdge(b, a, not lt, lit)
        cycle = self.path(edge.dst, edge.src, strict=not edge.strict)
        self.edges.append(edge)
        if cycle is not None:
            return [lit] + cycle
        return None

    def path(self, start: ANode, goal: ANode, strict: bool) -> Optional[List[ANode]]:
        """Premises of a chain start <= ... <= goal (strict: at least one <)."""
        cc = self.closure.cc
        if start not in cc or goal not in cc:
            return None
        target = cc.find(goal)
        origin = (cc.find(start), False)
        parent: Dict[tuple, Optional[Tuple[tuple, RelationEdge]]] = {origin: None}
        queue = [origin]
        found = None
        while queue:
            state = queue.pop(0)
            cls, is_strict = state
            if cls is target and (is_strict or not strict):
                found = state
                break
            for e in self.edges:
                if cc.find(e.src) is not cls:
                    continue
                nxt = (cc.find(e.dst), is_strict or e.strict)
                if nxt not in parent:
                    parent[nxt] = (state, e)
                    queue.append(nxt)
        if found is None:
            return None
        chain: List[RelationEdge] = []
        state = found
        while parent[state] is not None:
            state, e = parent[state]
            chain.append(e)
        chain.reverse()
        premises: List[ANode] = []
        cur = start
        for e in chain:
            if cur is not e.src:
                premises.append(aeq(cur, e.src))
            premises.append(e.literal)
            cur = e.dst
        if cur is not goal:
            premises.append(aeq(cur, goal))
        return premises

    def derive(self, pred: ANode) -> Optional[Tuple[bool, List[ANode]]]:
        a, b = pred.args
        if pred.sym.op is OpKind.ULT:
            premises = self.path(a, b, strict=True)
            if premises is not None:
                return True, premises
            premises = self.path(b, a, strict=False)
            if premises is not None:
                return False, premises
        else:
            premises = self.path(a, b, strict=False)
            if premises is not None:
                return True, premises
            premises = self.path(b, a, strict=True)
            if premises is not None:
                return False, premises
        return None


@dataclass(frozen=True)
class PropagationEvent:
    kind: str
    node: ANode
    result: Optional[ANode] = None
    rule_id: Optional[str] = None

    def __str__(self) -> str:
        text = f"{self.kind} {self.node!r}"
        if self.result is not None:
            text += f" -> {self.result!r}"
        if self.rule_id:
            text += f" [{self.rule_id}]"
        return text


class _Contradiction(Exception):
    pass


class PropagationState:
    """Working state of one propagate call."""

    def __init__(self, phi: Union[AbstractFormula, Iterable[ANode]], lemmas: Optional[LemmaStore] = None):
        formula = phi if isinstance(phi, AbstractFormula) else AbstractFormula.of(*phi)
        self.phi: Tuple[ANode, ...] = formula.clauses
        self.phi_p: Tuple[ANode, ...] = formula.clauses
        self.phi_q: Optional[Tuple[ANode, ...]] = None
        self.k = 0
        self.psi: List[ANode] = []
        self.lemmas = lemmas if lemmas is not None else LemmaStore()
        self.closure = EqualityClosure()
        self.relgraph = RelationGraph(self.closure)
        self.events: List[PropagationEvent] = []
        self.symbols = frozenset(symb(self.phi))
        self.constants: List[AbstractSymbol] = sorted(
            (s for s in self.symbols if s.is_const), key=lambda s: s.order_key
        )
        self.unsat = False
        self._absorbed: Set[ANode] = set()
        self._parts: Dict[ANode, frozenset] = {}

    # bookkeeping

    def const_node(self, value: int, width: int) -> Optional[ANode]:
        """The constant node for value if its symbol occurs in the original query."""
        sym = const_symbol(value, width)
        return asym(sym) if sym in self.symbols else None

    def _event(self, kind: str, node: ANode, result: Optional[ANode] = None, rule_id: Optional[str] = None):
        event = PropagationEvent(kind, node, result, rule_id)
        self.events.append(event)
        logger.debug(f"propagation: {event}")

    def _emit(self, lemma: ANode, rule_id: str):
        if lemma is ATRUE or lemma in self.psi or lemma in self.lemmas:
            return
        if not set(symb(lemma)) <= self.symbols:
            logger.warning(f"Dropped lemma outside the query signature: {lemma!r}")
            return
        self.psi.append(lemma)
        self._event("lemma", lemma, rule_id=rule_id)

    def _emit_implication(self, premises: List[ANode], fact: ANode, rule_id: str):
        premises = [p for p in premises if p is not ATRUE]
        if fact in premises:
            return
        self._emit(aimplies(premises, fact), rule_id)

    def _check(self, reason: ANode):
        if self.closure.conflict:
            self._event("contradiction", reason)
            raise _Contradiction()

    def absorb(self, c: ANode):
        """Enter a top-level conjunct into the closure and relation graph."""
        if c in self._absorbed:
            return
        self._absorbed.add(c)
        if c is AFALSE:
            self._event("contradiction", c)
            raise _Contradiction()
        self.closure.add_term(c)
        literal = None
        if c.kind is NodeKind.EQ:
            a, b = c.args
            if c.op is OpKind.EQ:
                self.closure.merge(a, b)
            else:
                self.closure.diseqs.append((a, b))
        elif c.kind is NodeKind.PRED:
            self.closure.set_truth(c, True)
            literal = c
        elif c.kind is NodeKind.BOOL and c.op is OpKind.BVNOT and c.args[0].kind is NodeKind.PRED:
            self.closure.set_truth(c.args[0], False)
            literal = c
        self._check(c)
        atom = literal.args[0] if literal is not None and literal.kind is NodeKind.BOOL else literal
        # comparisons between constants are settled by ground evaluation
        if literal is not None and not all(self.closure.const_tag(a) for a in atom.args):
            cycle = self.relgraph.add_literal(literal)
            if cycle is not None:
                self._emit(anot(aand(*cycle)), "rel.strict-cycle")
                self._event("contradiction", literal, rule_id="rel.strict-cycle")
                raise _Contradiction()

    # one pass over the query

    def run_pass(self, focus: Optional[AbstractSymbol]) -> List[ANode]:
        touched: List[ANode] = []
        memo: Dict[Tuple[ANode, bool], ANode] = {}
        out: List[ANode] = []
        for conj in self.phi_p:
            if focus is not None and not self._mentions(conj, focus):
                new = conj
            else:
                new = self._rewrite_top(conj, memo, focus, touched)
            for c in conjuncts(new):
                if c is AFALSE:
                    self._event("contradiction", conj)
                    raise _Contradiction()
                if c not in out:
                    out.append(c)
                self.absorb(c)
        self.phi_p = tuple(out)
        return touched

    def _mentions(self, conj: ANode, focus: AbstractSymbol) -> bool:
        """Whether conj contains an application over focus's class, as the classes stand now."""
        apps = self.closure.apps_over(focus)
        if not apps:
            return False
        parts = self._parts.get(conj)
        if parts is None:
            parts = self._parts[conj] = frozenset(subnodes(conj))
        return not apps.isdisjoint(parts)

    def _rewrite_top(self, conj: ANode, memo, focus, touched) -> ANode:
        if conj.kind is NodeKind.EQ:
            # symbols on either side of a unit equation stay as they are
            sides = [
                a if a.kind is NodeKind.SYM else self._rewrite(a, memo, focus, touched)
                for a in conj.args
            ]
            return self._simplify_eq(rebuild_node(conj, sides), top=True)
        if conj.kind is NodeKind.PRED:
            return self._rewrite(conj, memo, focus, touched, top=True)
        if conj.kind is NodeKind.BOOL and conj.op is OpKind.BVNOT and conj.args[0].kind is NodeKind.PRED:
            return anot(self._rewrite(conj.args[0], memo, focus, touched, top=True))
        return self._rewrite(conj, memo, focus, touched)

    def _rewrite(self, n: ANode, memo, focus, touched, top: bool = False) -> ANode:
        key = (n, top)
        if key in memo:
            return memo[key]
        if not n.args:
            memo[key] = n
            return n
        node = rebuild_node(n, [self._rewrite(a, memo, focus, touched) for a in n.args])
        k = n.kind
        if k in (NodeKind.APP, NodeKind.PRED):
            result = self._occurrence(node, node is not n, focus, touched, top)
        elif k is NodeKind.ITE:
            result = self._simplify_ite(node)
        elif k is NodeKind.EQ:
            result = self._simplify_eq(node, top)
        else:
            result = self._simplify_bool(node)
        if result is not n:
            if k is NodeKind.PRED and result in (ATRUE, AFALSE):
                self.closure.set_truth(n, result is ATRUE)
            elif not n.is_bool:
                self.closure.merge(n, result)
            self._check(n)
        memo[key] = result
        return result

    def _occurrence(self, node: ANode, changed_child: bool, focus, touched, top: bool) -> ANode:
        self.closure.add_term(node)
        args = node.args
        tags = [self.closure.const_tag(a) for a in args]
        if focus is not None:
            focus_node = asym(focus)
            hit = any(t == focus and a is not focus_node for a, t in zip(args, tags))
            if hit or changed_child:
                form = rebuild_node(node, [focus_node if t == focus else a for a, t in zip(args, tags)])
                touched.append(form)
                self._event("touch", form)

        result = self._same_class(node)

        sub = node
        if any(t is not None for t in tags):
            sub = rebuild_node(node, [asym(t) if t is not None else a for a, t in zip(args, tags)])
            self.closure.add_term(sub)
        if all(t is not None for t in tags):
            ground = self._ground(sub)
            if ground is not None:
                return ground
            return result if result is not None else sub
        if result is not None:
            return result

        result = self._patterns(sub)
        if result is None and node.kind is NodeKind.PRED and not top:
            result = self._relations(sub)
            if result is None:
                truth = self.closure.truth(sub)
                if truth is not None:
                    result = ATRUE if truth else AFALSE
                    self._event("decide", sub, result)
        return result if result is not None else sub

    # rules

    def _target(self, rule: Rule, node: ANode, args: Tuple[ANode, ...]) -> Optional[ANode]:
        c = rule.conclusion
        if c == "TRUE":
            return ATRUE
        if c == "FALSE":
            return AFALSE
        if c in rule.pattern:
            return args[rule.pattern.index(c)]
        return self.const_node(pattern_value(c, node.width), node.width)

    def _side_premise(self, rule: Rule, args: Tuple[ANode, ...]) -> Optional[ANode]:
        name, kind = rule.side
        arg = args[rule.pattern.index(name)]
        width = arg.width
        bound = self.const_node(0 if kind == "nonzero" else (1 << width) - 1, width)
        if bound is None or not self.closure.known_distinct(arg, bound):
            return None
        return anot(aeq(arg, bound))

    @staticmethod
    def _fact(node: ANode, target: ANode) -> ANode:
        if node.kind is NodeKind.PRED:
            return node if target is ATRUE else anot(node)
        return aeq(node, target)

    def _fire(self, rule: Rule, node: ANode, premises: List[ANode]) -> Optional[ANode]:
        target = self._target(rule, node, node.args)
        if target is None:
            return None
        if rule.side:
            side = self._side_premise(rule, node.args)
            if side is None:
                return None
            premises = premises + [side]
        self._emit_implication(premises, self._fact(node, target), rule.rule_id)
        self._event("rewrite", node, target, rule.rule_id)
        return target

    def _same_class(self, node: ANode) -> Optional[ANode]:
        args = node.args
        if len(args) != 2 or not self.closure.same(args[0], args[1]):
            return None
        for rule in rules_for(node.sym.op, node.sym.arg_width, same=True):
            target = self._fire(rule, node, [aeq(args[0], args[1])])
            if target is not None:
                return target
        return None

    def _patterns(self, node: ANode) -> Optional[ANode]:
        width = node.sym.arg_width
        for rule in rules_for(node.sym.op, width, same=False):
            if not all(
                pattern_value(p, width) is None or (a.is_const and a.sym.value == pattern_value(p, width))
                for p, a in zip(rule.pattern, node.args)
            ):
                continue
            target = self._fire(rule, node, [])
            if target is not None:
                return target
        return None

    def _relations(self, node: ANode) -> Optional[ANode]:
        found = self.relgraph.derive(node)
        if found is None:
            return None
        value, premises = found
        target = ATRUE if value else AFALSE
        self._emit_implication(premises, self._fact(node, target), "rel.chain")
        self._event("rewrite", node, target, "rel.chain")
        return target

    def _ground(self, node: ANode) -> Optional[ANode]:
        value, target = evaluate_ground_app(node, self)
        if target is not None:
            self._emit(self._fact(node, target), "ground.eval")
            self._event("rewrite", node, target, "ground.eval")
            return target
        for sym in self.constants:
            if sym.width != node.width:
                continue
            other = asym(sym)
            self._emit(anot(aeq(node, other)), "ground.diseq")
            self.closure.diseqs.append((node, other))
        self._event("diseq", node, rule_id="ground.diseq")
        self._check(node)
        return None

    # structure

    def _simplify_ite(self, node: ANode) -> ANode:
        c, then, other = node.args
        if c is ATRUE or then is other:
            branch = then
        elif c is AFALSE:
            branch = other
        else:
            return node
        self._event("collapse", node, branch)
        return branch

    def _simplify_eq(self, node: ANode, top: bool) -> ANode:
        a, b = node.args
        positive = node.op is OpKind.EQ
        value = None
        if a is b:
            value = True
        elif a.is_const and b.is_const:
            value = False
        elif self.closure.same(a, b):
            # a unit equation stays a fact
            value = True if not (top and positive) else None
        elif not top and self.closure.known_distinct(a, b):
            value = False
        if value is None:
            return node
        result = ATRUE if value == positive else AFALSE
        if not top:
            self._event("rewrite", node, result)
        return result

    @staticmethod
    def _simplify_bool(node: ANode) -> ANode:
        args = node.args
        if node.op is OpKind.BVNOT:
            return anot(args[0])
        if node.op is OpKind.BVAND:
            return aand(*args)
        if node.op is OpKind.BVOR:
            return aor(*args)
        if not all(a is ATRUE or a is AFALSE for a in args):
            return node
        vals = [a is ATRUE for a in args]
        match node.op:
            case OpKind.BVXOR | OpKind.NEQ:
                value = vals[0] != vals[1]
            case OpKind.BVXNOR | OpKind.EQ:
                value = vals[0] == vals[1]
            case OpKind.BVNAND:
                value = not all(vals)
            case OpKind.BVNOR:
                value = not any(vals)
            case _:
                return node
        return ATRUE if value else AFALSE


def evaluate_ground_app(node: ANode, state: PropagationState) -> Tuple[int, Optional[ANode]]:
    """Concrete value of an application whose argument classes are all constant.

    The abstract image is returned only when that constant already occurs
    in the query; predicates map to ATRUE/AFALSE.
    """
    values = [state.closure.const_tag(a).value for a in node.args]
    value = apply_op(node.sym.op, node.sym.arg_width, *values)
    if node.kind is NodeKind.PRED:
        return value, ATRUE if value else AFALSE
    return value, state.const_node(value, node.width)


def update_related_uf(c: AbstractSymbol, state: PropagationState) -> List[ANode]:
    """Substitute constant c into the applications over its class; returns the touched forms."""
    return state.run_pass(c)


def apply_rules(state: PropagationState) -> List[PropagationEvent]:
    start = len(state.events)
    state.run_pass(None)
    return state.events[start:]


@dataclass
class PropagationResult:
    unsat: bool
    psi: List[ANode] = field(default_factory=list)
    events: List[PropagationEvent] = field(default_factory=list)
    iterations: int = 0
    formula: Tuple[ANode, ...] = ()
    skipped: bool = False

    @property
    def verdict(self) -> str:
        return "unsat" if self.unsat else "unknown"


def propagate(
    phi: Union[AbstractFormula, Iterable[ANode]], bound: int = 20, lemmas: Optional[LemmaStore] = None
) -> PropagationResult:
    """Run propagation on phi for at most bound iterations; lemmas receives the new DPLs."""
    if bound < 1:
        raise DpmcError(f"propagation bound must be positive, got {bound}")
    state = PropagationState(phi, lemmas)
    try:
        for c in state.phi_p:
            state.absorb(c)
        while state.phi_p != state.phi_q and state.k < bound:
            state.phi_q = state.phi_p
            constants = [s for s in symb(state.phi_p) if s.is_const]
            for c in constants:
                update_related_uf(c, state)
            apply_rules(state)
            state.k += 1
    except _Contradiction:
        state.unsat = True
    for lemma in state.psi:
        state.lemmas.add_dpl(lemma)
    logger.debug(
        f"Propagation {'unsat' if state.unsat else 'unknown'} after {state.k} iteration(s), "
        f"{len(state.psi)} new lemma(s)"
    )
    return PropagationResult(
        unsat=state.unsat,
        psi=list(state.psi),
        events=list(state.events),
        iterations=state.k,
        formula=state.phi_p,
    )


class Propagator:
    """Propagation with a per-run shape cache and optional EUF cross-check."""

    def __init__(self, config: Dict, backend=None):
        settings = config["propagation"]
        self.bound = settings["bound"]
        self.cache_shapes = settings["cache_shapes"]
        self.debug_cross_check = settings["debug_cross_check"]
        self.backend = backend
        self._barren: Set[frozenset] = set()
        self.stats = {"calls": 0, "unsat": 0, "skipped": 0}

    def run(self, phi: Iterable[ANode], lemmas: LemmaStore) -> PropagationResult:
        clauses = tuple(phi)
        shape = frozenset(clauses)
        self.stats["calls"] += 1
        if self.cache_shapes and shape in self._barren:
            self.stats["skipped"] += 1
            return PropagationResult(unsat=False, formula=clauses, skipped=True)
        result = propagate(clauses, self.bound, lemmas)
        if result.unsat:
            self.stats["unsat"] += 1
            if self.debug_cross_check:
                self._cross_check(clauses, lemmas)
        elif not result.psi:
            self._barren.add(shape)
        return result

    def _cross_check(self, clauses: Tuple[ANode, ...], lemmas: LemmaStore):
        from .solver import SolverBackend

        backend = self.backend or SolverBackend()
        check = backend.euf_check(list(clauses) + lemmas.dpl)
        if check.is_sat:
            logger.error(f"Propagation unsat not confirmed by EUF on {len(clauses)} conjuncts")
            raise DpmcError("propagation unsat verdict failed the EUF cross-check")
