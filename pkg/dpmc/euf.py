"""
EUF decision procedure.

Congruence closure with a proof forest for explanations, driven by a lazy
DPLL(T) loop over a pysat solver: the SAT solver proposes an assignment to
the equality and predicate atoms, the closure checks it, and every theory
conflict is returned to the solver as a blocking clause built from the
conflict's explanation.
"""

import logging
from collections import deque
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

from pysat.formula import IDPool
from pysat.solvers import Solver

from .abstraction import AFALSE, ATRUE, ANode, NodeKind, subnodes
from .errors import ResourceLimit
from .ir import OpKind

logger = logging.getLogger(__name__)


class CongruenceClosure:
    """Union-find over opaque nodes with congruence and explanations.

    Application nodes are registered with a function key and argument
    nodes. A node may carry a tag; merging two classes with different tags
    records a conflict (the closure keeps merging so explanations stay
    available).
    """

    def __init__(self):
        self.parent: Dict[Hashable, Hashable] = {}
        self.members: Dict[Hashable, List[Hashable]] = {}
        self.tags: Dict[Hashable, Tuple[Hashable, Hashable]] = {}
        self.uses: Dict[Hashable, List[Hashable]] = {}
        self.apps: Dict[Hashable, Tuple[Hashable, Tuple[Hashable, ...]]] = {}
        self.signatures: Dict[tuple, Hashable] = {}
        self.proof: Dict[Hashable, Optional[Tuple[Hashable, object]]] = {}
        self.pending: deque = deque()
        self.conflict: Optional[Tuple[Hashable, Hashable]] = None
        self.order: List[Hashable] = []

    def __contains__(self, node) -> bool:
        return node in self.parent

    def find(self, node: Hashable) -> Hashable:
        root = node
        while self.parent[root] is not root:
            root = self.parent[root]
        while self.parent[node] is not root:
            self.parent[node], node = root, self.parent[node]
        return root

    def same(self, a: Hashable, b: Hashable) -> bool:
        return self.find(a) is self.find(b)

    def tag_of(self, node: Hashable) -> Optional[Hashable]:
        entry = self.tags.get(self.find(node))
        return entry[0] if entry else None

    def tag_node(self, node: Hashable) -> Optional[Hashable]:
        entry = self.tags.get(self.find(node))
        return entry[1] if entry else None

    def add(self, node: Hashable, fkey=None, args: Sequence[Hashable] = (), tag=None):
        """Register node (arguments must already be registered)."""
        if node in self.parent:
            return
        self.parent[node] = node
        self.members[node] = [node]
        self.uses[node] = []
        self.proof[node] = None
        self.order.append(node)
        if tag is not None:
            self.tags[node] = (tag, node)
        if fkey is not None:
            args = tuple(args)
            self.apps[node] = (fkey, args)
            for a in dict.fromkeys(self.find(x) for x in args):
                self.uses[a].append(node)
            key = self._signature(node)
            other = self.signatures.get(key)
            if other is not None and self._signature(other) == key:
                self.pending.append((node, other, ("cong", node, other)))
                self._propagate()
            else:
                self.signatures[key] = node

    def _signature(self, node) -> tuple:
        fkey, args = self.apps[node]
        return (fkey,) + tuple(self.find(a) for a in args)

    def merge(self, a: Hashable, b: Hashable, reason: object):
        self.pending.append((a, b, reason))
        self._propagate()

    def _propagate(self):
        while self.pending:
            a, b, reason = self.pending.popleft()
            ra, rb = self.find(a), self.find(b)
            if ra is rb:
                continue
            self._reroot(a)
            self.proof[a] = (b, reason)
            if len(self.members[ra]) > len(self.members[rb]):
                ra, rb = rb, ra
            ta, tb = self.tags.get(ra), self.tags.get(rb)
            if ta and tb and ta[0] != tb[0] and self.conflict is None:
                self.conflict = (ta[1], tb[1])
            self.parent[ra] = rb
            self.members[rb].extend(self.members.pop(ra))
            if ta and not tb:
                self.tags[rb] = ta
            moved = self.uses.pop(ra)
            for u in moved:
                key = self._signature(u)
                other = self.signatures.get(key)
                if other is not None and other is not u and self._signature(other) == key:
                    if self.find(other) is not self.find(u):
                        self.pending.append((u, other, ("cong", u, other)))
                else:
                    self.signatures[key] = u
            self.uses[rb].extend(moved)

    def _reroot(self, node):
        prev, prev_reason = None, None
        cur = node
        while cur is not None:
            step = self.proof[cur]
            self.proof[cur] = (prev, prev_reason) if prev is not None else None
            if step is None:
                break
            prev, prev_reason = cur, step[1]
            cur = step[0]

    def _path(self, x, y) -> List[object]:
        chain = [x]
        reasons_x: List[object] = []
        cur = x
        while self.proof[cur] is not None:
            cur, reason = self.proof[cur]
            reasons_x.append(reason)
            chain.append(cur)
        index = {n: i for i, n in enumerate(chain)}
        reasons_y: List[object] = []
        cur = y
        while cur not in index:
            cur, reason = self.proof[cur]
            reasons_y.append(reason)
        return reasons_x[: index[cur]] + reasons_y

    def explain(self, a: Hashable, b: Hashable) -> List[object]:
        """Input reasons whose merges imply a = b."""
        if not self.same(a, b):
            raise ValueError("explain called on distinct classes")
        out: List[object] = []
        seen_reasons = set()
        seen_pairs = set()
        todo = [(a, b)]
        while todo:
            x, y = todo.pop()
            if x is y or (x, y) in seen_pairs:
                continue
            seen_pairs.add((x, y))
            for reason in self._path(x, y):
                if isinstance(reason, tuple) and reason and reason[0] == "cong":
                    _, p, q = reason
                    for u, v in zip(self.apps[p][1], self.apps[q][1]):
                        todo.append((u, v))
                elif reason not in seen_reasons:
                    seen_reasons.add(reason)
                    out.append(reason)
        return out

    def explain_conflict(self) -> List[object]:
        if self.conflict is None:
            return []
        return self.explain(*self.conflict)

    def classes(self) -> List[List[Hashable]]:
        """Classes in registration order of their first member."""
        seen = {}
        for n in self.order:
            seen.setdefault(self.find(n), []).append(n)
        return list(seen.values())


# Sentinels for the truth values of predicate applications
TRUE_T = "<true>"
FALSE_T = "<false>"


class EufModel:
    """Value-class assignment of a satisfiable EUF query."""

    def __init__(self, cc: CongruenceClosure, atom_values: Dict[ANode, bool]):
        self.cc = cc
        self.atom_values = atom_values
        self._ids: Dict[Hashable, int] = {}
        for i, cls in enumerate(cc.classes()):
            self._ids[cc.find(cls[0])] = i
        self._fresh = len(self._ids)
        self._extra: Dict[object, int] = {}
        self._table: Dict[tuple, int] = {}
        for node, (fkey, args) in cc.apps.items():
            key = (fkey,) + tuple(self._ids[cc.find(a)] for a in args)
            self._table.setdefault(key, self._ids[cc.find(node)])

    def _new_id(self, key) -> int:
        if key not in self._extra:
            self._extra[key] = self._fresh
            self._fresh += 1
        return self._extra[key]

    def value(self, n: ANode) -> int:
        """Class id of a term node."""
        if n in self.cc:
            return self._ids[self.cc.find(n)]
        if n.kind is NodeKind.ITE:
            return self.value(n.args[1] if self.holds(n.args[0]) else n.args[2])
        if n.kind in (NodeKind.APP, NodeKind.PRED):
            key = (n.sym,) + tuple(self.value(a) for a in n.args)
            if key in self._table:
                return self._table[key]
            return self._new_id(key)
        return self._new_id(n)

    def holds(self, n: ANode) -> bool:
        k = n.kind
        if k is NodeKind.TRUE:
            return True
        if k is NodeKind.FALSE:
            return False
        if k is NodeKind.EQ:
            same = self.value(n.args[0]) == self.value(n.args[1])
            return same if n.op is OpKind.EQ else not same
        if k is NodeKind.PRED:
            if TRUE_T not in self.cc:
                return False
            return self.value(n) == self._ids[self.cc.find(TRUE_T)]
        if k is NodeKind.ITE:
            return self.holds(n.args[1]) if self.holds(n.args[0]) else self.holds(n.args[2])
        vals = [self.holds(a) for a in n.args]
        match n.op:
            case OpKind.BVNOT:
                return not vals[0]
            case OpKind.BVAND:
                return all(vals)
            case OpKind.BVOR:
                return any(vals)
            case OpKind.BVXOR | OpKind.NEQ:
                return vals[0] != vals[1]
            case OpKind.BVXNOR | OpKind.EQ:
                return vals[0] == vals[1]
            case OpKind.BVNAND:
                return not all(vals)
            case OpKind.BVNOR:
                return not any(vals)
        raise ValueError(f"cannot evaluate {n!r}")


class EufSolver:
    """One query: hard formulas plus labeled assumptions."""

    def __init__(self, backend: str = "glucose3", max_iterations: int = 100000):
        self.backend = backend
        self.max_iterations = max_iterations
        self.pool = IDPool()
        self.clauses: List[List[int]] = []
        self.true_var = self.pool.id("true")
        self.clauses.append([self.true_var])
        self.eq_atoms: Dict[Tuple[ANode, ANode], int] = {}
        self.pred_atoms: Dict[ANode, int] = {}
        self.terms: List[ANode] = []
        self._lits: Dict[ANode, int] = {}
        self._seen_terms = set()
        self.iterations = 0

    def _register_term(self, n: ANode):
        for m in subnodes(n):
            if m.is_bool or m in self._seen_terms:
                continue
            self._seen_terms.add(m)
            self.terms.append(m)
            if m.kind is NodeKind.ITE:
                c = self.lit(m.args[0])
                self.clauses.append([-c, self._eq_lit(m, m.args[1])])
                self.clauses.append([c, self._eq_lit(m, m.args[2])])

    def _eq_lit(self, a: ANode, b: ANode) -> int:
        if a is b:
            return self.true_var
        if b.skey < a.skey:
            a, b = b, a
        if a.is_const and b.is_const:
            # distinct constants of one width
            return -self.true_var
        key = (a, b)
        v = self.eq_atoms.get(key)
        if v is None:
            v = self.pool.id(("eq", a.uid, b.uid))
            self.eq_atoms[key] = v
            self._register_term(a)
            self._register_term(b)
        return v

    def lit(self, n: ANode) -> int:
        """Tseitin literal of a boolean node."""
        cached = self._lits.get(n)
        if cached is not None:
            return cached
        k = n.kind
        if k is NodeKind.TRUE:
            result = self.true_var
        elif k is NodeKind.FALSE:
            result = -self.true_var
        elif k is NodeKind.EQ:
            v = self._eq_lit(*n.args)
            result = v if n.op is OpKind.EQ else -v
        elif k is NodeKind.PRED:
            v = self.pool.id(("pred", n.uid))
            self.pred_atoms[n] = v
            for a in n.args:
                self._register_term(a)
            result = v
        elif k is NodeKind.ITE:
            c, a, b = (self.lit(x) for x in n.args)
            v = self.pool.id(("node", n.uid))
            self.clauses.extend([[-c, -a, v], [-c, a, -v], [c, -b, v], [c, b, -v]])
            result = v
        else:
            result = self._bool_lit(n)
        self._lits[n] = result
        return result

    def _bool_lit(self, n: ANode) -> int:
        if n.op is OpKind.BVNOT:
            return -self.lit(n.args[0])
        args = [self.lit(a) for a in n.args]
        v = self.pool.id(("node", n.uid))
        match n.op:
            case OpKind.BVAND | OpKind.BVNAND:
                for a in args:
                    self.clauses.append([-v, a])
                self.clauses.append([v] + [-a for a in args])
                return v if n.op is OpKind.BVAND else -v
            case OpKind.BVOR | OpKind.BVNOR:
                for a in args:
                    self.clauses.append([v, -a])
                self.clauses.append([-v] + args)
                return v if n.op is OpKind.BVOR else -v
            case OpKind.BVXOR | OpKind.BVXNOR | OpKind.EQ | OpKind.NEQ:
                a, b = args
                self.clauses.extend([[-v, a, b], [-v, -a, -b], [v, -a, b], [v, a, -b]])
                return v if n.op in (OpKind.BVXOR, OpKind.NEQ) else -v
        raise ValueError(f"unsupported boolean node {n!r}")

    def _closure(self, model: set) -> Tuple[CongruenceClosure, Dict[ANode, bool]]:
        cc = CongruenceClosure()
        cc.add(TRUE_T, tag=TRUE_T)
        cc.add(FALSE_T, tag=FALSE_T)
        for t in self.terms:
            if t.kind is NodeKind.APP:
                cc.add(t, t.sym, t.args)
            else:
                cc.add(t, tag=t.sym if t.is_const else None)
        atom_values: Dict[ANode, bool] = {}
        for p, v in self.pred_atoms.items():
            cc.add(p, p.sym, p.args)
        for (a, b), v in self.eq_atoms.items():
            if v in model:
                cc.merge(a, b, v)
        for p, v in self.pred_atoms.items():
            value = v in model
            atom_values[p] = value
            cc.merge(p, TRUE_T if value else FALSE_T, v if value else -v)
        return cc, atom_values

    def _theory_conflict(self, cc: CongruenceClosure, model: set) -> Optional[List[int]]:
        if cc.conflict is not None:
            return cc.explain_conflict()
        for (a, b), v in self.eq_atoms.items():
            if v not in model and cc.same(a, b):
                return cc.explain(a, b) + [-v]
        return None

    def check(
        self, hard: Iterable[ANode], assumptions: Sequence[Tuple[object, ANode]] = ()
    ) -> Tuple[bool, object]:
        """(True, EufModel) or (False, list of assumption labels in the core)."""
        for n in hard:
            self.clauses.append([self.lit(n)])
        selectors: List[int] = []
        labels: Dict[int, object] = {}
        for i, (label, n) in enumerate(assumptions):
            s = self.pool.id(("sel", i))
            self.clauses.append([-s, self.lit(n)])
            selectors.append(s)
            labels[s] = label
        with Solver(name=self.backend, bootstrap_with=self.clauses) as sat:
            while True:
                self.iterations += 1
                if self.iterations > self.max_iterations:
                    raise ResourceLimit("euf_max_iterations")
                if not sat.solve(assumptions=selectors):
                    core = sat.get_core() or []
                    return False, [labels[s] for s in selectors if s in set(core)]
                model = {l for l in sat.get_model() if l > 0}
                cc, atom_values = self._closure(model)
                conflict = self._theory_conflict(cc, model)
                if conflict is None:
                    logger.debug(f"EUF sat after {self.iterations} round(s)")
                    return True, EufModel(cc, atom_values)
                sat.add_clause([-l for l in conflict])
