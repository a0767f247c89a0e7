"""
Datapath abstraction.

Constants and variables become 0-ary symbols, every datapath operator of a
given width signature becomes one shared uninterpreted function (or predicate
for ult/ule), while equality, ite and boolean structure stay interpreted.
The mapping is structural, so concretizing an abstracted term returns the
original term object.
"""

import itertools
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .errors import UnmappedSymbol
from .ir import (
    REDUCTIONS,
    FALSE,
    OpKind,
    RELATIONAL,
    UNARY,
    TRUE,
    Term,
    TermKind,
    TransitionSystem,
    bv,
    const,
    flatten_and,
    ite,
    mk_and,
    mk_eq,
    mk_not,
    next_var,
    op,
    postorder,
    smt_name,
    substitute,
    timed,
)

logger = logging.getLogger(__name__)

# Operator vocabulary of the abstract signature
UF_NAMES = {
    OpKind.ADD: "ADD",
    OpKind.SUB: "SUB",
    OpKind.MUL: "MUL",
    OpKind.UDIV: "DIV",
    OpKind.UREM: "MOD",
    OpKind.ULT: "LT",
    OpKind.ULE: "LE",
    OpKind.BVAND: "BitWiseAnd",
    OpKind.BVOR: "BitWiseOr",
    OpKind.BVXOR: "BitWiseXor",
    OpKind.BVNAND: "BitWiseNAnd",
    OpKind.BVNOR: "BitWiseNOr",
    OpKind.BVXNOR: "BitWiseXNor",
    OpKind.BVNOT: "BitWiseNot",
    OpKind.REDAND: "ReductionAnd",
    OpKind.REDOR: "ReductionOr",
    OpKind.REDXOR: "ReductionXor",
    OpKind.REDNAND: "ReductionNAnd",
    OpKind.REDNOR: "ReductionNOr",
    OpKind.REDXNOR: "ReductionXNOr",
    OpKind.SLL: "ShiftL",
    OpKind.SRL: "ShiftR",
    OpKind.SRA: "AShiftR",
    OpKind.SLA: "AShiftL",
}


class SymbolKind(Enum):
    CONST = "const"
    VAR = "var"
    FUN = "fun"
    PRED = "pred"


@dataclass(frozen=True)
class AbstractSymbol:
    """An uninterpreted symbol; equal iff the origins are equal."""

    kind: SymbolKind
    origin: Union[Term, Tuple[OpKind, int]]
    name: str = field(compare=False)
    width: int = field(compare=False)
    arity: int = field(default=0, compare=False)

    @property
    def is_const(self) -> bool:
        return self.kind is SymbolKind.CONST

    @property
    def is_var(self) -> bool:
        return self.kind is SymbolKind.VAR

    @property
    def value(self) -> Optional[int]:
        return self.origin.value if self.kind is SymbolKind.CONST else None

    @property
    def op(self) -> Optional[OpKind]:
        return self.origin[0] if self.kind in (SymbolKind.FUN, SymbolKind.PRED) else None

    @property
    def arg_width(self) -> int:
        return self.origin[1] if self.kind in (SymbolKind.FUN, SymbolKind.PRED) else self.width

    @property
    def order_key(self) -> Tuple:
        if self.kind is SymbolKind.CONST:
            return (0, self.width, self.origin.value)
        if self.kind is SymbolKind.VAR:
            return (1, self.name, self.width)
        return (2, self.name, self.width)

    def __repr__(self) -> str:
        return self.name


_symbols: Dict[object, AbstractSymbol] = {}


def symbol_for_term(t: Term) -> AbstractSymbol:
    """The 0-ary symbol of a concrete constant or variable."""
    sym = _symbols.get(t)
    if sym is None:
        if t.kind is TermKind.CONST:
            sym = AbstractSymbol(SymbolKind.CONST, t, f"c{t.value}_{t.width}", t.width)
        elif t.kind is TermKind.VAR:
            sym = AbstractSymbol(SymbolKind.VAR, t, t.name, t.width)
        else:
            raise ValueError(f"not a leaf term: {t!r}")
        _symbols[t] = sym
    return sym


def symbol_for_op(kind: OpKind, arg_width: int) -> AbstractSymbol:
    """The shared function or predicate symbol for an operator at one signature."""
    key = (kind, arg_width)
    sym = _symbols.get(key)
    if sym is None:
        name = f"{UF_NAMES[kind]}_{arg_width}"
        arity = 1 if kind in UNARY else 2
        if kind in RELATIONAL:
            sym = AbstractSymbol(SymbolKind.PRED, key, name, 1, arity)
        else:
            width = 1 if kind in REDUCTIONS else arg_width
            sym = AbstractSymbol(SymbolKind.FUN, key, name, width, arity)
        _symbols[key] = sym
    return sym


def const_symbol(value: int, width: int) -> AbstractSymbol:
    return symbol_for_term(const(value, bv(width)))


class NodeKind(Enum):
    SYM = "sym"
    APP = "app"
    ITE = "ite"
    EQ = "eq"
    PRED = "pred"
    BOOL = "bool"
    TRUE = "true"
    FALSE = "false"


class ANode:
    """Hash-consed abstract term or formula node."""

    __slots__ = ("kind", "sym", "op", "args", "width", "is_bool", "skey", "uid", "__weakref__")

    def __init__(self, kind, sym, op, args, width, is_bool, skey, uid):
        self.kind = kind
        self.sym = sym
        self.op = op
        self.args = args
        self.width = width
        self.is_bool = is_bool
        self.skey = skey
        self.uid = uid

    @property
    def is_const(self) -> bool:
        return self.kind is NodeKind.SYM and self.sym.kind is SymbolKind.CONST

    @property
    def is_atom(self) -> bool:
        return self.kind in (NodeKind.EQ, NodeKind.PRED)

    def __lt__(self, other: "ANode") -> bool:
        return self.skey < other.skey

    def __repr__(self) -> str:
        k = self.kind
        if k is NodeKind.SYM:
            return self.sym.name
        if k in (NodeKind.APP, NodeKind.PRED):
            return f"{self.sym.name}({', '.join(repr(a) for a in self.args)})"
        if k is NodeKind.ITE:
            return f"({self.args[0]!r} ? {self.args[1]!r} : {self.args[2]!r})"
        if k is NodeKind.EQ:
            sign = "=" if self.op is OpKind.EQ else "!="
            return f"({self.args[0]!r} {sign} {self.args[1]!r})"
        if k is NodeKind.BOOL:
            if self.op is OpKind.BVNOT:
                return f"!{self.args[0]!r}"
            joiner = {OpKind.BVAND: " & ", OpKind.BVOR: " | "}.get(self.op)
            if joiner:
                return "(" + joiner.join(repr(a) for a in self.args) + ")"
            return f"{self.op.value}({', '.join(repr(a) for a in self.args)})"
        return "true" if k is NodeKind.TRUE else "false"


_node_lock = threading.Lock()
_nodes: Dict[tuple, ANode] = {}
_node_uids = itertools.count(1)


def _mk(kind: NodeKind, sym=None, op_kind=None, args: Tuple[ANode, ...] = ()) -> ANode:
    key = (kind, sym, op_kind, args)
    node = _nodes.get(key)
    if node is not None:
        return node
    child_keys = tuple(a.skey for a in args)
    if kind is NodeKind.SYM:
        width, is_bool, skey = sym.width, False, (0,) + sym.order_key
    elif kind is NodeKind.APP:
        width, is_bool, skey = sym.width, False, (1, sym.name, child_keys)
    elif kind is NodeKind.ITE:
        width, is_bool, skey = args[1].width, args[1].is_bool, (2, child_keys)
    elif kind is NodeKind.EQ:
        width, is_bool, skey = 1, True, (3, op_kind.value, child_keys)
    elif kind is NodeKind.PRED:
        width, is_bool, skey = 1, True, (4, sym.name, child_keys)
    elif kind is NodeKind.BOOL:
        width, is_bool, skey = 1, True, (5, op_kind.value, child_keys)
    else:
        width, is_bool, skey = 1, True, (6 if kind is NodeKind.TRUE else 7,)
    with _node_lock:
        node = _nodes.get(key)
        if node is None:
            node = ANode(kind, sym, op_kind, args, width, is_bool, skey, next(_node_uids))
            _nodes[key] = node
    return node


ATRUE = _mk(NodeKind.TRUE)
AFALSE = _mk(NodeKind.FALSE)


def asym(sym: AbstractSymbol) -> ANode:
    return _mk(NodeKind.SYM, sym)


def aconst(value: int, width: int) -> ANode:
    return asym(const_symbol(value, width))


def app(sym: AbstractSymbol, *args: ANode) -> ANode:
    if len(args) != sym.arity:
        raise ValueError(f"{sym.name} takes {sym.arity} argument(s), got {len(args)}")
    if sym.kind is SymbolKind.PRED:
        return _mk(NodeKind.PRED, sym, None, tuple(args))
    if sym.kind is not SymbolKind.FUN:
        raise ValueError(f"{sym.name} is not a function symbol")
    return _mk(NodeKind.APP, sym, None, tuple(args))


def aite(cond: ANode, then: ANode, other: ANode) -> ANode:
    return _mk(NodeKind.ITE, None, None, (cond, then, other))


def eq_node(kind: OpKind, a: ANode, b: ANode) -> ANode:
    """Equality or disequality with argument order preserved."""
    if a.is_bool:
        return _mk(NodeKind.BOOL, None, kind, (a, b))
    return _mk(NodeKind.EQ, None, kind, (a, b))


def aeq(a: ANode, b: ANode) -> ANode:
    """Canonical (argument-ordered) equality."""
    if a is b:
        return ATRUE
    if b.skey < a.skey:
        a, b = b, a
    return eq_node(OpKind.EQ, a, b)


def abool(kind: OpKind, *args: ANode) -> ANode:
    return _mk(NodeKind.BOOL, None, kind, tuple(args))


def anot(a: ANode) -> ANode:
    if a is ATRUE:
        return AFALSE
    if a is AFALSE:
        return ATRUE
    if a.kind is NodeKind.EQ:
        flipped = OpKind.NEQ if a.op is OpKind.EQ else OpKind.EQ
        return _mk(NodeKind.EQ, None, flipped, a.args)
    if a.kind is NodeKind.BOOL and a.op is OpKind.BVNOT:
        return a.args[0]
    return _mk(NodeKind.BOOL, None, OpKind.BVNOT, (a,))


def aand(*args: ANode) -> ANode:
    items: List[ANode] = []
    for a in args:
        if a is AFALSE:
            return AFALSE
        if a is ATRUE or a in items:
            continue
        items.append(a)
    if not items:
        return ATRUE
    if len(items) == 1:
        return items[0]
    return _mk(NodeKind.BOOL, None, OpKind.BVAND, tuple(items))


def aor(*args: ANode) -> ANode:
    items: List[ANode] = []
    for a in args:
        if a is ATRUE:
            return ATRUE
        if a is AFALSE or a in items:
            continue
        items.append(a)
    if not items:
        return AFALSE
    if len(items) == 1:
        return items[0]
    return _mk(NodeKind.BOOL, None, OpKind.BVOR, tuple(items))


def aimplies(premises: Sequence[ANode], conclusion: ANode) -> ANode:
    if not premises:
        return conclusion
    return aor(*(anot(p) for p in premises), conclusion)


def rebuild_node(n: ANode, args: Sequence[ANode]) -> ANode:
    args = tuple(args)
    if args == n.args:
        return n
    return _mk(n.kind, n.sym, n.op, args)


def subnodes(roots: Union[ANode, Iterable[ANode]]) -> List[ANode]:
    """Every distinct subnode once, children first."""
    if isinstance(roots, ANode):
        roots = [roots]
    order: List[ANode] = []
    seen = set()
    for root in roots:
        stack = [(root, False)]
        while stack:
            n, expanded = stack.pop()
            if n in seen:
                continue
            if expanded:
                seen.add(n)
                order.append(n)
                continue
            stack.append((n, True))
            for a in reversed(n.args):
                if a not in seen:
                    stack.append((a, False))
    return order


def substitute_nodes(n: ANode, bindings: Dict[ANode, ANode]) -> ANode:
    if not bindings:
        return n
    done: Dict[ANode, ANode] = {}
    for m in subnodes(n):
        if m in bindings:
            done[m] = bindings[m]
        elif m.args:
            done[m] = rebuild_node(m, [done[a] for a in m.args])
        else:
            done[m] = m
    return done[n]


def conjuncts(n: ANode) -> List[ANode]:
    if n is ATRUE:
        return []
    if n.kind is NodeKind.BOOL and n.op is OpKind.BVAND:
        out: List[ANode] = []
        for a in n.args:
            out.extend(conjuncts(a))
        return out
    return [n]


def symb(phi: Union["AbstractFormula", ANode, Iterable[ANode]]) -> Tuple[AbstractSymbol, ...]:
    """Symbols occurring in phi, in the global symbol order."""
    if isinstance(phi, AbstractFormula):
        return phi.symb()
    found = {n.sym for n in subnodes(phi) if n.sym is not None}
    return tuple(sorted(found, key=lambda s: s.order_key))


@dataclass(frozen=True)
class AbstractFormula:
    """Conjunction of abstract formulas."""

    clauses: Tuple[ANode, ...] = ()

    @classmethod
    def of(cls, *parts: ANode) -> "AbstractFormula":
        out: List[ANode] = []
        for p in parts:
            for c in conjuncts(p):
                if c not in out:
                    out.append(c)
        return cls(tuple(out))

    def symb(self) -> Tuple[AbstractSymbol, ...]:
        cached = self.__dict__.get("_symb")
        if cached is None:
            cached = symb(self.clauses)
            object.__setattr__(self, "_symb", cached)
        return cached

    def as_node(self) -> ANode:
        return aand(*self.clauses)

    def __and__(self, other: "AbstractFormula") -> "AbstractFormula":
        return AbstractFormula.of(*self.clauses, *other.clauses)

    def __iter__(self):
        return iter(self.clauses)

    def __len__(self) -> int:
        return len(self.clauses)


class AbstractionMap:
    """alpha/gamma correspondence between concrete terms and abstract nodes."""

    def __init__(self):
        self.fwd: Dict[object, AbstractSymbol] = {}
        self.bwd: Dict[AbstractSymbol, object] = {}
        self._alpha: Dict[Term, ANode] = {}

    def register(self, origin, sym: AbstractSymbol) -> AbstractSymbol:
        self.fwd[origin] = sym
        self.bwd[sym] = origin
        return sym

    def alpha(self, t: Term) -> ANode:
        cached = self._alpha.get(t)
        if cached is not None:
            return cached
        for node in postorder(t):
            if node in self._alpha:
                continue
            self._alpha[node] = self._alpha_node(node)
        return self._alpha[t]

    def _alpha_node(self, t: Term) -> ANode:
        if t.kind is TermKind.CONST:
            if t.sort.is_bool:
                return ATRUE if t.value else AFALSE
            return asym(self.register(t, symbol_for_term(t)))
        if t.kind is TermKind.VAR:
            return asym(self.register(t, symbol_for_term(t)))
        args = [self._alpha[a] for a in t.args]
        if t.kind is TermKind.ITE:
            return aite(*args)
        if t.op in (OpKind.EQ, OpKind.NEQ):
            return eq_node(t.op, *args)
        if t.sort.is_bool and t.args[0].sort.is_bool:
            return abool(t.op, *args)
        key = (t.op, t.args[0].width)
        sym = self.register(key, symbol_for_op(*key))
        return app(sym, *args)

    def gamma(self, n: ANode, var_map: Optional[Dict[Term, Term]] = None) -> Term:
        """Concrete image of n; var_map renames variables (e.g. to timed copies)."""
        done: Dict[ANode, Term] = {}
        for m in subnodes(n):
            done[m] = self._gamma_node(m, [done[a] for a in m.args], var_map)
        return done[n]

    def _gamma_node(self, m: ANode, args: List[Term], var_map) -> Term:
        k = m.kind
        if k is NodeKind.TRUE:
            return TRUE
        if k is NodeKind.FALSE:
            return FALSE
        if k is NodeKind.SYM:
            origin = self.bwd.get(m.sym)
            if origin is None:
                if not m.sym.is_const:
                    raise UnmappedSymbol(m.sym.name)
                # constants of the signature's widths need no registration
                origin = m.sym.origin
            if var_map is not None and origin.kind is TermKind.VAR:
                return var_map.get(origin, origin)
            return origin
        if k in (NodeKind.APP, NodeKind.PRED):
            if m.sym not in self.bwd:
                raise UnmappedSymbol(m.sym.name)
            return op(m.sym.op, *args)
        if k is NodeKind.ITE:
            return ite(*args)
        if k is NodeKind.EQ:
            return op(m.op, *args)
        if m.op is OpKind.BVNOT:
            return mk_not(args[0])
        if m.op in (OpKind.BVAND, OpKind.BVOR) and len(args) != 2:
            result = args[0]
            for a in args[1:]:
                result = op(m.op, result, a)
            return result
        return op(m.op, *args)


@dataclass
class AbstractSystem:
    """Abstract I, T, P of a transition system plus its symbol bookkeeping."""

    ts: TransitionSystem
    amap: AbstractionMap
    init: Tuple[ANode, ...]
    trans: Tuple[ANode, ...]
    prop: ANode
    state_syms: List[AbstractSymbol]
    next_syms: List[AbstractSymbol]
    input_syms: List[AbstractSymbol]
    constants: List[AbstractSymbol]
    _prime: Dict[ANode, ANode] = field(default_factory=dict, repr=False)
    _unprime: Dict[ANode, ANode] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for cur, nxt in zip(self.state_syms, self.next_syms):
            self._prime[asym(cur)] = asym(nxt)
            self._unprime[asym(nxt)] = asym(cur)

    def prime(self, n: ANode) -> ANode:
        return substitute_nodes(n, self._prime)

    def unprime(self, n: ANode) -> ANode:
        return substitute_nodes(n, self._unprime)

    @property
    def current_set(self) -> frozenset:
        return frozenset(self.state_syms)

    @property
    def next_set(self) -> frozenset:
        return frozenset(self.next_syms)

    @property
    def input_set(self) -> frozenset:
        return frozenset(self.input_syms)

    def timed_map(self, step: int) -> Dict[Term, Term]:
        """Variable renaming for a window at step: current@step, next@step+1, inputs@step."""
        mapping: Dict[Term, Term] = {}
        for v in self.ts.state_vars:
            mapping[v] = timed(v, step)
            mapping[next_var(v)] = timed(v, step + 1)
        for v in self.ts.input_vars:
            mapping[v] = timed(v, step)
        return mapping

    def gamma_at(self, n: ANode, step: int) -> Term:
        return self.amap.gamma(n, self.timed_map(step))


def dp_abstract(ts: TransitionSystem) -> AbstractSystem:
    """Abstract I, T and P of ts; T becomes one equation v' = next(v) per state."""
    amap = AbstractionMap()
    init = tuple(amap.alpha(c) for c in flatten_and(ts.init))
    trans: List[ANode] = []
    next_syms: List[AbstractSymbol] = []
    for v in ts.state_vars:
        primed = next_var(v)
        nsym = amap.register(primed, symbol_for_term(primed))
        next_syms.append(nsym)
        trans.append(eq_node(OpKind.EQ, asym(nsym), amap.alpha(ts.next[v])))
    prop = amap.alpha(ts.property)
    state_syms = [amap.alpha(v).sym for v in ts.state_vars]
    input_syms = [amap.alpha(v).sym for v in ts.input_vars]
    constants = sorted(
        (s for s in amap.bwd if s.kind is SymbolKind.CONST), key=lambda s: s.order_key
    )
    system = AbstractSystem(
        ts=ts,
        amap=amap,
        init=init,
        trans=tuple(trans),
        prop=prop,
        state_syms=state_syms,
        next_syms=next_syms,
        input_syms=input_syms,
        constants=constants,
    )
    funs = sorted({s.name for s in amap.bwd if s.kind in (SymbolKind.FUN, SymbolKind.PRED)})
    logger.info(
        f"Abstracted {ts.name}: {len(state_syms)} states, {len(constants)} constants, "
        f"functions {funs}"
    )
    return system


@dataclass
class AbstractTrace:
    """Abstract counterexample.

    Window t holds the valued literals of the step-t query: current symbols
    at time t, primed symbols at time t+1 and inputs at time t. A trace of
    length 0 has one window over current symbols only.
    """

    windows: List[Tuple[ANode, ...]]
    length: int
    cubes: List[Tuple[ANode, ...]] = field(default_factory=list)


def dp_concrete(trace: AbstractTrace, system: AbstractSystem) -> Term:
    """Bit-level counterpart of trace over timed variables."""
    if not trace.windows:
        return TRUE
    ts = system.ts
    parts: List[Term] = []
    for step, window in enumerate(trace.windows):
        for lit in window:
            parts.append(system.gamma_at(lit, step))
    parts.extend(unrolled(ts, trace.length))
    return mk_and(*parts)


def unrolled(ts: TransitionSystem, length: int) -> List[Term]:
    """I@0, the transition equations up to length, and the negated property at length."""
    def at(t: Term, step: int) -> Term:
        mapping = {v: timed(v, step) for v in ts.state_vars}
        mapping.update({v: timed(v, step) for v in ts.input_vars})
        return substitute(t, mapping)

    parts = [at(ts.init, 0)]
    for step in range(length):
        for v in ts.state_vars:
            parts.append(mk_eq(timed(v, step + 1), at(ts.next[v], step)))
    parts.append(mk_not(at(ts.property, length)))
    return parts


_SMT_BOOL = {
    OpKind.BVAND: "and",
    OpKind.BVOR: "or",
    OpKind.BVXOR: "xor",
    OpKind.BVNOT: "not",
    OpKind.EQ: "=",
    OpKind.NEQ: "distinct",
}


def abstract_smtlib(n: ANode) -> str:
    text: Dict[ANode, str] = {}
    for m in subnodes(n):
        args = [text[a] for a in m.args]
        k = m.kind
        if k is NodeKind.SYM:
            text[m] = smt_name(m.sym.name)
        elif k in (NodeKind.APP, NodeKind.PRED):
            text[m] = f"({smt_name(m.sym.name)} {' '.join(args)})"
        elif k is NodeKind.ITE:
            text[m] = f"(ite {' '.join(args)})"
        elif k is NodeKind.EQ:
            text[m] = f"({'=' if m.op is OpKind.EQ else 'distinct'} {' '.join(args)})"
        elif k is NodeKind.BOOL:
            if m.op in _SMT_BOOL:
                text[m] = f"({_SMT_BOOL[m.op]} {' '.join(args)})"
            else:
                inner = {OpKind.BVNAND: "and", OpKind.BVNOR: "or", OpKind.BVXNOR: "xor"}[m.op]
                text[m] = f"(not ({inner} {' '.join(args)}))"
        else:
            text[m] = "true" if k is NodeKind.TRUE else "false"
    return text[n]


def abstract_script(assertions: Sequence[ANode], comment: Optional[str] = None) -> str:
    """SMT-LIB2 script over one uninterpreted sort per width."""
    syms = symb(assertions)
    widths = sorted(
        {s.width for s in syms if s.kind is not SymbolKind.PRED}
        | {s.arg_width for s in syms if s.kind in (SymbolKind.FUN, SymbolKind.PRED)}
    )
    lines = [f"; {comment}"] if comment else []
    lines.append("(set-logic QF_UF)")
    lines.extend(f"(declare-sort U{w} 0)" for w in widths)
    for s in syms:
        if s.kind in (SymbolKind.CONST, SymbolKind.VAR):
            lines.append(f"(declare-fun {smt_name(s.name)} () U{s.width})")
        else:
            domain = " ".join([f"U{s.arg_width}"] * s.arity)
            codomain = "Bool" if s.kind is SymbolKind.PRED else f"U{s.width}"
            lines.append(f"(declare-fun {smt_name(s.name)} ({domain}) {codomain})")
    for w in widths:
        consts = [smt_name(s.name) for s in syms if s.is_const and s.width == w]
        if len(consts) > 1:
            lines.append(f"(assert (distinct {' '.join(consts)}))")
    lines.extend(f"(assert {abstract_smtlib(a)})" for a in assertions)
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"

