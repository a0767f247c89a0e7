"""
Word-level IR: sorts, hash-consed terms, transition systems.

Terms are interned on construction, so structurally equal terms are the same
object and compare with `is`. Evaluation follows fixed-width unsigned
semantics with the SMT-LIB division-by-zero convention.
"""

import itertools
import logging
import threading
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .errors import DpmcError, SortMismatch

logger = logging.getLogger(__name__)


class SortKind(Enum):
    BITVEC = "bitvec"
    BOOL = "bool"


@dataclass(frozen=True)
class Sort:
    kind: SortKind
    width: int = 1

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"sort width must be positive, got {self.width}")
        if self.kind is SortKind.BOOL and self.width != 1:
            raise ValueError("bool sort has width 1")

    @property
    def is_bool(self) -> bool:
        return self.kind is SortKind.BOOL

    @property
    def max_value(self) -> int:
        return (1 << self.width) - 1

    def __str__(self) -> str:
        return "bool" if self.is_bool else f"bv{self.width}"


BOOL = Sort(SortKind.BOOL, 1)


@lru_cache(maxsize=None)
def bv(width: int) -> Sort:
    return Sort(SortKind.BITVEC, width)


class OpKind(Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    UDIV = "udiv"
    UREM = "urem"
    ULT = "ult"
    ULE = "ule"
    BVAND = "bvand"
    BVOR = "bvor"
    BVXOR = "bvxor"
    BVNAND = "bvnand"
    BVNOR = "bvnor"
    BVXNOR = "bvxnor"
    BVNOT = "bvnot"
    REDAND = "redand"
    REDOR = "redor"
    REDXOR = "redxor"
    REDNAND = "rednand"
    REDNOR = "rednor"
    REDXNOR = "redxnor"
    SLL = "sll"
    SRL = "srl"
    SRA = "sra"
    SLA = "sla"
    EQ = "eq"
    NEQ = "neq"


ARITHMETIC = frozenset({OpKind.ADD, OpKind.SUB, OpKind.MUL, OpKind.UDIV, OpKind.UREM})
RELATIONAL = frozenset({OpKind.ULT, OpKind.ULE})
BITWISE = frozenset(
    {OpKind.BVAND, OpKind.BVOR, OpKind.BVXOR, OpKind.BVNAND, OpKind.BVNOR, OpKind.BVXNOR}
)
REDUCTIONS = frozenset(
    {OpKind.REDAND, OpKind.REDOR, OpKind.REDXOR, OpKind.REDNAND, OpKind.REDNOR, OpKind.REDXNOR}
)
SHIFTS = frozenset({OpKind.SLL, OpKind.SRL, OpKind.SRA, OpKind.SLA})
EQUALITY = frozenset({OpKind.EQ, OpKind.NEQ})
UNARY = REDUCTIONS | {OpKind.BVNOT}


class TermKind(Enum):
    CONST = "const"
    VAR = "var"
    OP = "op"
    ITE = "ite"


class VarRole(Enum):
    STATE = "state"
    INPUT = "input"
    NEXT = "next"


class Term:
    """Hash-consed word-level term. Build with the module factories only."""

    __slots__ = ("kind", "sort", "op", "args", "value", "name", "role", "uid", "__weakref__")

    def __init__(self, kind, sort, op=None, args=(), value=None, name=None, role=None, uid=0):
        self.kind = kind
        self.sort = sort
        self.op = op
        self.args = args
        self.value = value
        self.name = name
        self.role = role
        self.uid = uid

    @property
    def is_const(self) -> bool:
        return self.kind is TermKind.CONST

    @property
    def is_var(self) -> bool:
        return self.kind is TermKind.VAR

    @property
    def width(self) -> int:
        return self.sort.width

    def __repr__(self) -> str:
        if self.kind is TermKind.CONST:
            return f"{self.value}:{self.sort}"
        if self.kind is TermKind.VAR:
            return self.name
        if self.kind is TermKind.ITE:
            return f"ite({self.args[0]!r}, {self.args[1]!r}, {self.args[2]!r})"
        return f"{self.op.value}({', '.join(repr(a) for a in self.args)})"


_intern_lock = threading.Lock()
_intern_table: Dict[tuple, Term] = {}
_uids = itertools.count(1)


def _intern(key: tuple, **fields) -> Term:
    with _intern_lock:
        term = _intern_table.get(key)
        if term is None:
            term = Term(uid=next(_uids), **fields)
            _intern_table[key] = term
        return term


def const(value: int, sort: Sort) -> Term:
    if not 0 <= value <= sort.max_value:
        raise ValueError(f"constant {value} out of range for {sort}")
    return _intern((TermKind.CONST, sort, value), kind=TermKind.CONST, sort=sort, value=value)


def var(name: str, sort: Sort, role: VarRole = VarRole.STATE) -> Term:
    return _intern(
        (TermKind.VAR, name, sort, role), kind=TermKind.VAR, sort=sort, name=name, role=role
    )


TRUE = const(1, BOOL)
FALSE = const(0, BOOL)


def _result_sort(kind: OpKind, args: Sequence[Term]) -> Sort:
    arity = 1 if kind in UNARY else 2
    if len(args) != arity:
        raise ValueError(f"{kind.value} takes {arity} argument(s), got {len(args)}")
    first = args[0].sort
    for a in args[1:]:
        if a.sort != first:
            raise SortMismatch(first, a.sort)
    if kind in EQUALITY:
        return BOOL
    if kind in RELATIONAL:
        if first.is_bool:
            raise SortMismatch("bitvec", first)
        return BOOL
    if kind in REDUCTIONS:
        if first.is_bool:
            raise SortMismatch("bitvec", first)
        return bv(1)
    if kind in ARITHMETIC or kind in SHIFTS:
        if first.is_bool:
            raise SortMismatch("bitvec", first)
    return first


def op(kind: OpKind, *args: Term) -> Term:
    sort = _result_sort(kind, args)
    return _intern((TermKind.OP, kind, args), kind=TermKind.OP, sort=sort, op=kind, args=args)


def ite(cond: Term, then: Term, other: Term) -> Term:
    if not cond.sort.is_bool:
        raise SortMismatch(BOOL, cond.sort)
    if then.sort != other.sort:
        raise SortMismatch(then.sort, other.sort)
    args = (cond, then, other)
    return _intern((TermKind.ITE, args), kind=TermKind.ITE, sort=then.sort, args=args)


def mk_not(t: Term) -> Term:
    return op(OpKind.BVNOT, t)


def mk_and(*terms: Term) -> Term:
    if not terms:
        return TRUE
    result = terms[0]
    for t in terms[1:]:
        result = op(OpKind.BVAND, result, t)
    return result


def mk_or(*terms: Term) -> Term:
    if not terms:
        return FALSE
    result = terms[0]
    for t in terms[1:]:
        result = op(OpKind.BVOR, result, t)
    return result


def mk_eq(a: Term, b: Term) -> Term:
    return op(OpKind.EQ, a, b)


def mk_implies(a: Term, b: Term) -> Term:
    return op(OpKind.BVOR, mk_not(a), b)


def postorder(roots: Union[Term, Iterable[Term]]) -> List[Term]:
    """Every distinct subterm once, children before parents."""
    if isinstance(roots, Term):
        roots = [roots]
    order: List[Term] = []
    seen = set()
    for root in roots:
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if t in seen:
                continue
            if expanded:
                seen.add(t)
                order.append(t)
                continue
            stack.append((t, True))
            for a in reversed(t.args):
                if a not in seen:
                    stack.append((a, False))
    return order


def free_vars(roots: Union[Term, Iterable[Term]]) -> List[Term]:
    return [t for t in postorder(roots) if t.kind is TermKind.VAR]


def rebuild(t: Term, args: Sequence[Term]) -> Term:
    if t.kind is TermKind.OP:
        return op(t.op, *args)
    if t.kind is TermKind.ITE:
        return ite(*args)
    return t


def substitute(t: Term, bindings: Dict[Term, Term]) -> Term:
    """Simultaneous structural substitution."""
    for key, image in bindings.items():
        if key.sort != image.sort:
            raise SortMismatch(key.sort, image.sort)
    if not bindings:
        return t
    done: Dict[Term, Term] = {}
    for node in postorder(t):
        if node in bindings:
            done[node] = bindings[node]
        elif node.args:
            new_args = tuple(done[a] for a in node.args)
            done[node] = node if new_args == node.args else rebuild(node, new_args)
        else:
            done[node] = node
    return done[t]


def apply_op(kind: OpKind, width: int, *vals: int) -> int:
    """Fixed-width unsigned semantics on Python ints; relations return 0/1."""
    mask = (1 << width) - 1
    a = vals[0]
    b = vals[1] if len(vals) > 1 else 0
    match kind:
        case OpKind.ADD:
            return (a + b) & mask
        case OpKind.SUB:
            return (a - b) & mask
        case OpKind.MUL:
            return (a * b) & mask
        case OpKind.UDIV:
            return mask if b == 0 else a // b
        case OpKind.UREM:
            return a if b == 0 else a % b
        case OpKind.ULT:
            return int(a < b)
        case OpKind.ULE:
            return int(a <= b)
        case OpKind.EQ:
            return int(a == b)
        case OpKind.NEQ:
            return int(a != b)
        case OpKind.BVAND:
            return a & b
        case OpKind.BVOR:
            return a | b
        case OpKind.BVXOR:
            return a ^ b
        case OpKind.BVNAND:
            return ~(a & b) & mask
        case OpKind.BVNOR:
            return ~(a | b) & mask
        case OpKind.BVXNOR:
            return ~(a ^ b) & mask
        case OpKind.BVNOT:
            return ~a & mask
        case OpKind.REDAND:
            return int(a == mask)
        case OpKind.REDOR:
            return int(a != 0)
        case OpKind.REDXOR:
            return bin(a).count("1") & 1
        case OpKind.REDNAND:
            return int(a != mask)
        case OpKind.REDNOR:
            return int(a == 0)
        case OpKind.REDXNOR:
            return 1 - (bin(a).count("1") & 1)
        case OpKind.SLL | OpKind.SLA:
            return (a << b) & mask if b < width else 0
        case OpKind.SRL:
            return a >> b if b < width else 0
        case OpKind.SRA:
            negative = (a >> (width - 1)) & 1
            if b >= width:
                return mask if negative else 0
            fill = (mask ^ (mask >> b)) if negative else 0
            return (a >> b) | fill
    raise DpmcError(f"no semantics for {kind}")


def eval_concrete(t: Term, env: Dict[Term, int]) -> Union[int, bool]:
    """Evaluate under env (Var -> unsigned int); bool-sorted terms give bool."""
    values: Dict[Term, int] = {}
    for node in postorder(t):
        if node.kind is TermKind.CONST:
            values[node] = node.value
        elif node.kind is TermKind.VAR:
            if node not in env:
                raise DpmcError(f"no value for variable {node.name}")
            values[node] = int(env[node]) & node.sort.max_value
        elif node.kind is TermKind.ITE:
            c, a, b = node.args
            values[node] = values[a] if values[c] else values[b]
        else:
            width = node.args[0].width
            values[node] = apply_op(node.op, width, *(values[a] for a in node.args))
    result = values[t]
    return bool(result) if t.sort.is_bool else result


def timed(v: Term, step: int) -> Term:
    return var(f"{v.name}@{step}", v.sort, v.role)


def next_var(v: Term) -> Term:
    return var(f"{v.name}'", v.sort, VarRole.NEXT)


def flatten_and(t: Term) -> List[Term]:
    out: List[Term] = []
    stack = [t]
    while stack:
        node = stack.pop()
        if node.kind is TermKind.OP and node.op is OpKind.BVAND and node.sort.is_bool:
            stack.extend(reversed(node.args))
        elif node is not TRUE:
            out.append(node)
    return out


@dataclass
class TransitionSystem:
    """The tuple (X, I, T, P) with functional next-state map."""

    state_vars: List[Term]
    input_vars: List[Term]
    init: Term
    next: Dict[Term, Term]
    property: Term
    name: str = "system"

    def validate(self) -> "TransitionSystem":
        allowed = set(self.state_vars) | set(self.input_vars)
        for v in self.state_vars:
            if v not in self.next:
                raise DpmcError(f"state {v.name} has no next-state function")
            if self.next[v].sort != v.sort:
                raise SortMismatch(v.sort, self.next[v].sort)
        for v in self.input_vars:
            if v in self.next:
                raise DpmcError(f"input {v.name} must not have a next-state function")
        if not self.init.sort.is_bool:
            raise SortMismatch(BOOL, self.init.sort)
        if not self.property.sort.is_bool:
            raise SortMismatch(BOOL, self.property.sort)
        for t in [self.init, self.property, *self.next.values()]:
            for v in free_vars(t):
                if v not in allowed:
                    raise DpmcError(f"free variable {v.name} is not declared")
        return self

    @property
    def state_bits(self) -> int:
        return sum(v.width for v in self.state_vars)

    @property
    def input_bits(self) -> int:
        return sum(v.width for v in self.input_vars)

    def init_values(self) -> Dict[Term, Term]:
        """Decompose init into state -> value; raises if it is not of that shape."""
        values: Dict[Term, Term] = {}
        for conjunct in flatten_and(self.init):
            if conjunct.kind is TermKind.OP and conjunct.op is OpKind.EQ:
                lhs, rhs = conjunct.args
                if lhs in self.next and lhs not in values:
                    values[lhs] = rhs
                    continue
            raise DpmcError(f"init conjunct {conjunct!r} is not a state assignment")
        return values


@dataclass
class ConcreteTrace:
    """Per-step state and input valuations; step i feeds the transition into step i+1."""

    states: List[Dict[Term, int]]
    inputs: List[Dict[Term, int]]

    @property
    def length(self) -> int:
        return len(self.states) - 1

    def env(self, step: int) -> Dict[Term, int]:
        values = dict(self.states[step])
        values.update(self.inputs[step])
        return values


_SMT_OPS = {
    OpKind.ADD: "bvadd",
    OpKind.SUB: "bvsub",
    OpKind.MUL: "bvmul",
    OpKind.UDIV: "bvudiv",
    OpKind.UREM: "bvurem",
    OpKind.ULT: "bvult",
    OpKind.ULE: "bvule",
    OpKind.BVAND: "bvand",
    OpKind.BVOR: "bvor",
    OpKind.BVXOR: "bvxor",
    OpKind.BVNAND: "bvnand",
    OpKind.BVNOR: "bvnor",
    OpKind.BVXNOR: "bvxnor",
    OpKind.BVNOT: "bvnot",
    OpKind.SLL: "bvshl",
    OpKind.SLA: "bvshl",
    OpKind.SRL: "bvlshr",
    OpKind.SRA: "bvashr",
    OpKind.EQ: "=",
    OpKind.NEQ: "distinct",
}

_SMT_BOOL_OPS = {
    OpKind.BVAND: "and",
    OpKind.BVOR: "or",
    OpKind.BVXOR: "xor",
    OpKind.BVNOT: "not",
}


def smt_name(name: str) -> str:
    if all(ch.isalnum() or ch in "_.$" for ch in name) and not name[0].isdigit():
        return name
    return f"|{name}|"


def smt_sort(sort: Sort) -> str:
    return "Bool" if sort.is_bool else f"(_ BitVec {sort.width})"


def to_smtlib(t: Term) -> str:
    """SMT-LIB2 QF_BV rendering of a concrete term."""
    text: Dict[Term, str] = {}
    for node in postorder(t):
        if node.kind is TermKind.CONST:
            if node.sort.is_bool:
                text[node] = "true" if node.value else "false"
            else:
                text[node] = f"(_ bv{node.value} {node.width})"
        elif node.kind is TermKind.VAR:
            text[node] = smt_name(node.name)
        elif node.kind is TermKind.ITE:
            text[node] = "(ite {} {} {})".format(*(text[a] for a in node.args))
        else:
            args = [text[a] for a in node.args]
            text[node] = _smt_op(node, args)
    return text[t]


def _smt_op(node: Term, args: List[str]) -> str:
    kind = node.op
    if node.sort.is_bool and kind in _SMT_BOOL_OPS and node.args[0].sort.is_bool:
        return f"({_SMT_BOOL_OPS[kind]} {' '.join(args)})"
    if node.sort.is_bool and node.args[0].sort.is_bool and kind in BITWISE:
        inner = {OpKind.BVNAND: "and", OpKind.BVNOR: "or", OpKind.BVXNOR: "xor"}[kind]
        return f"(not ({inner} {' '.join(args)}))"
    if kind in REDUCTIONS:
        x = args[0]
        width = node.args[0].width
        ones = (1 << width) - 1
        if kind in (OpKind.REDAND, OpKind.REDNAND):
            cond = f"(= {x} (_ bv{ones} {width}))"
        elif kind in (OpKind.REDOR, OpKind.REDNOR):
            cond = f"(distinct {x} (_ bv0 {width}))"
        else:
            bits = [f"((_ extract {i} {i}) {x})" for i in range(width)]
            parity = bits[0] if width == 1 else f"(bvxor {' '.join(bits)})"
            cond = f"(= {parity} #b1)"
        positive = kind in (OpKind.REDAND, OpKind.REDOR, OpKind.REDXOR)
        hit, miss = ("#b1", "#b0") if positive else ("#b0", "#b1")
        return f"(ite {cond} {hit} {miss})"
    return f"({_SMT_OPS[kind]} {' '.join(args)})"


def smtlib_script(assertions: Sequence[Term], comment: Optional[str] = None) -> str:
    lines = []
    if comment:
        lines.append(f"; {comment}")
    lines.append("(set-logic QF_BV)")
    for v in free_vars(assertions):
        lines.append(f"(declare-fun {smt_name(v.name)} () {smt_sort(v.sort)})")
    for a in assertions:
        lines.append(f"(assert {to_smtlib(a)})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def sort_key(t: Term) -> Tuple:
    """Stable ordering key independent of interning order."""
    if t.kind is TermKind.CONST:
        return (0, t.width, t.value)
    if t.kind is TermKind.VAR:
        return (1, t.name, t.width)
    return (2, repr(t))
