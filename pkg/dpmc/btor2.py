"""
BTOR2 reader and writer for the supported word-level fragment.
"""

import logging
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import ParseError, UnsupportedFeature
from .ir import (
    OpKind,
    Term,
    TermKind,
    TransitionSystem,
    VarRole,
    bv,
    const,
    ite,
    mk_and,
    mk_eq,
    mk_not,
    op,
    postorder,
    var,
)

logger = logging.getLogger(__name__)

_BINARY_BV = {
    "add": OpKind.ADD,
    "sub": OpKind.SUB,
    "mul": OpKind.MUL,
    "udiv": OpKind.UDIV,
    "urem": OpKind.UREM,
    "sll": OpKind.SLL,
    "srl": OpKind.SRL,
    "sra": OpKind.SRA,
}

_LOGIC = {
    "and": OpKind.BVAND,
    "or": OpKind.BVOR,
    "xor": OpKind.BVXOR,
    "nand": OpKind.BVNAND,
    "nor": OpKind.BVNOR,
    "xnor": OpKind.BVXNOR,
}

# tag -> (kind, swap arguments)
_RELATIONS = {
    "ult": (OpKind.ULT, False),
    "ulte": (OpKind.ULE, False),
    "ugt": (OpKind.ULT, True),
    "ugte": (OpKind.ULE, True),
}

_REDUCTIONS = {"redand": OpKind.REDAND, "redor": OpKind.REDOR, "redxor": OpKind.REDXOR}

_CONSTANTS = {"const", "constd", "consth", "one", "ones", "zero"}


def _as_bv(t: Term) -> Term:
    if t.sort.is_bool:
        return ite(t, const(1, bv(1)), const(0, bv(1)))
    return t


def _as_bool(t: Term, line: int) -> Term:
    if t.sort.is_bool:
        return t
    if t.width != 1:
        raise ParseError(line, f"expected width 1 for a condition, got {t.width}")
    return mk_eq(t, const(1, bv(1)))


class _Reader:
    """Line-by-line BTOR2 interpreter building ir terms."""

    def __init__(self, name: str):
        self.name = name
        self.sorts: Dict[int, int] = {}
        self.nodes: Dict[int, Term] = {}
        self.states: List[Term] = []
        self.inputs: List[Term] = []
        self.init: Dict[Term, Term] = {}
        self.next: Dict[Term, Term] = {}
        self.bad: Optional[Term] = None
        self.names: set = set()
        self.line = 0

    def fail(self, reason: str):
        raise ParseError(self.line, reason)

    def _int(self, token: str) -> int:
        try:
            return int(token)
        except ValueError:
            self.fail(f"expected an integer, got {token!r}")

    def sort(self, token: str) -> int:
        sid = self._int(token)
        if sid not in self.sorts:
            self.fail(f"unknown sort id {sid}")
        return self.sorts[sid]

    def ref(self, token: str) -> Term:
        nid = self._int(token)
        if abs(nid) not in self.nodes:
            self.fail(f"reference to undefined node {abs(nid)}")
        node = self.nodes[abs(nid)]
        return mk_not(node) if nid < 0 else node

    def args(self, tokens: List[str], count: int) -> List[Term]:
        if len(tokens) < count:
            self.fail(f"expected {count} operand(s)")
        return [self.ref(t) for t in tokens[:count]]

    def fresh_name(self, symbol: Optional[str], default: str) -> str:
        name = symbol or default
        if name in self.names:
            name = f"{name}_{default}"
        self.names.add(name)
        return name

    def check_width(self, term: Term, width: int):
        if term.width != width:
            self.fail(f"declared width {width} does not match computed width {term.width}")

    def feed(self, raw: str):
        text = raw.split(";", 1)[0].strip()
        if not text:
            return
        tokens = text.split()
        nid = self._int(tokens[0])
        if nid <= 0:
            self.fail("node ids must be positive")
        if len(tokens) < 2:
            self.fail("missing node kind")
        tag, rest = tokens[1], tokens[2:]

        if tag == "sort":
            if not rest:
                self.fail("missing sort kind")
            if rest[0] == "array":
                raise UnsupportedFeature("array", self.line)
            if rest[0] != "bitvec" or len(rest) < 2:
                self.fail("malformed sort")
            width = self._int(rest[1])
            if width < 1:
                self.fail("bit-vector width must be positive")
            self.sorts[nid] = width
            return
        if nid in self.nodes:
            self.fail(f"duplicate node id {nid}")

        if tag in _CONSTANTS:
            self.nodes[nid] = self.constant(tag, rest)
        elif tag in ("state", "input"):
            if not rest:
                self.fail(f"{tag} needs a sort")
            width = self.sort(rest[0])
            symbol = rest[1] if len(rest) > 1 else None
            if tag == "state":
                v = var(self.fresh_name(symbol, f"s{nid}"), bv(width), VarRole.STATE)
                self.states.append(v)
            else:
                v = var(self.fresh_name(symbol, f"i{nid}"), bv(width), VarRole.INPUT)
                self.inputs.append(v)
            self.nodes[nid] = v
        elif tag in ("init", "next"):
            if len(rest) < 3:
                self.fail(f"{tag} needs sort, state and value")
            width = self.sort(rest[0])
            state, value = self.args(rest[1:], 2)
            if state.kind is not TermKind.VAR or state.role is not VarRole.STATE:
                self.fail(f"{tag} target must be a state")
            value = _as_bv(value)
            self.check_width(value, width)
            self.check_width(state, width)
            target = self.init if tag == "init" else self.next
            if state in target:
                self.fail(f"duplicate {tag} for state {state.name}")
            target[state] = value
        elif tag == "bad":
            if self.bad is not None:
                raise UnsupportedFeature("multiple bad properties", self.line)
            (bad,) = self.args(rest, 1)
            self.bad = _as_bool(bad, self.line)
        elif tag == "output":
            self.args(rest, 1)
        else:
            self.nodes[nid] = self.operation(tag, rest)

    def constant(self, tag: str, rest: List[str]) -> Term:
        if not rest:
            self.fail(f"{tag} needs a sort")
        width = self.sort(rest[0])
        mask = (1 << width) - 1
        if tag == "zero":
            value = 0
        elif tag == "one":
            value = 1
        elif tag == "ones":
            value = mask
        else:
            if len(rest) < 2:
                self.fail(f"{tag} needs a value")
            literal = rest[1]
            try:
                if tag == "const":
                    if len(literal) != width or set(literal) - {"0", "1"}:
                        self.fail(f"binary constant {literal!r} does not have {width} bits")
                    value = int(literal, 2)
                elif tag == "constd":
                    value = int(literal, 10) & mask
                else:
                    value = int(literal, 16)
            except ValueError:
                self.fail(f"malformed {tag} value {literal!r}")
            if value > mask:
                self.fail(f"constant {literal} does not fit in {width} bits")
        return const(value, bv(width))

    def operation(self, tag: str, rest: List[str]) -> Term:
        if tag not in _BINARY_BV and tag not in _LOGIC and tag not in _RELATIONS and tag not in (
            _REDUCTIONS.keys() | {"not", "eq", "neq", "ite"}
        ):
            raise UnsupportedFeature(tag, self.line)
        if not rest:
            self.fail(f"{tag} needs a sort")
        width = self.sort(rest[0])
        operands = rest[1:]

        if tag == "ite":
            c, a, b = self.args(operands, 3)
            c = _as_bool(c, self.line)
            if not (a.sort.is_bool and b.sort.is_bool):
                a, b = _as_bv(a), _as_bv(b)
            result = ite(c, a, b)
        elif tag == "not":
            (a,) = self.args(operands, 1)
            result = mk_not(a)
        elif tag in _REDUCTIONS:
            (a,) = self.args(operands, 1)
            result = op(_REDUCTIONS[tag], _as_bv(a))
        else:
            a, b = self.args(operands, 2)
            if tag in _RELATIONS:
                kind, swap = _RELATIONS[tag]
                a, b = _as_bv(a), _as_bv(b)
                result = op(kind, b, a) if swap else op(kind, a, b)
            elif tag in ("eq", "neq"):
                if not (a.sort.is_bool and b.sort.is_bool):
                    a, b = _as_bv(a), _as_bv(b)
                result = op(OpKind.EQ if tag == "eq" else OpKind.NEQ, a, b)
            elif tag in _LOGIC:
                if not (a.sort.is_bool and b.sort.is_bool):
                    a, b = _as_bv(a), _as_bv(b)
                result = op(_LOGIC[tag], a, b)
            else:
                result = op(_BINARY_BV[tag], _as_bv(a), _as_bv(b))
        self.check_width(result, width)
        return result

    def finish(self) -> TransitionSystem:
        if self.bad is None:
            raise ParseError(self.line, "missing property")
        next_map: Dict[Term, Term] = {}
        inputs = list(self.inputs)
        for s in self.states:
            if s in self.next:
                next_map[s] = self.next[s]
            else:
                nondet = var(f"{s.name}__nondet", s.sort, VarRole.INPUT)
                inputs.append(nondet)
                next_map[s] = nondet
        init = mk_and(*(mk_eq(s, v) for s, v in self.init.items()))
        bad = self.bad
        if bad.kind is TermKind.OP and bad.op is OpKind.BVNOT and bad.sort.is_bool:
            prop = bad.args[0]
        else:
            prop = mk_not(bad)
        ts = TransitionSystem(
            state_vars=list(self.states),
            input_vars=inputs,
            init=init,
            next=next_map,
            property=prop,
            name=self.name,
        )
        return ts.validate()


def parse_btor2(text: Iterable[str], name: str = "system") -> TransitionSystem:
    """Parse BTOR2 text (a string or an iterable of lines) into a TransitionSystem."""
    lines = text.splitlines() if isinstance(text, str) else text
    reader = _Reader(name)
    for number, raw in enumerate(lines, start=1):
        reader.line = number
        reader.feed(raw)
    ts = reader.finish()
    logger.info(
        f"Parsed {name}: {len(ts.state_vars)} states, {len(ts.input_vars)} inputs, "
        f"{ts.state_bits} state bits"
    )
    return ts


def read_btor2(path) -> TransitionSystem:
    with open(path, "r", encoding="utf-8") as f:
        return parse_btor2(f.read(), name=str(path))


_TAGS = {
    OpKind.ADD: "add",
    OpKind.SUB: "sub",
    OpKind.MUL: "mul",
    OpKind.UDIV: "udiv",
    OpKind.UREM: "urem",
    OpKind.ULT: "ult",
    OpKind.ULE: "ulte",
    OpKind.BVAND: "and",
    OpKind.BVOR: "or",
    OpKind.BVXOR: "xor",
    OpKind.BVNAND: "nand",
    OpKind.BVNOR: "nor",
    OpKind.BVXNOR: "xnor",
    OpKind.BVNOT: "not",
    OpKind.REDAND: "redand",
    OpKind.REDOR: "redor",
    OpKind.REDXOR: "redxor",
    OpKind.SLL: "sll",
    OpKind.SLA: "sll",
    OpKind.SRL: "srl",
    OpKind.SRA: "sra",
    OpKind.EQ: "eq",
    OpKind.NEQ: "neq",
}

# reductions with no BTOR2 tag print as the negated positive reduction
_NEGATED_REDUCTIONS = {
    OpKind.REDNAND: OpKind.REDAND,
    OpKind.REDNOR: OpKind.REDOR,
    OpKind.REDXNOR: OpKind.REDXOR,
}


class _Writer:
    def __init__(self):
        self.lines: List[str] = []
        self.ids: Dict[Term, int] = {}
        self.sort_ids: Dict[int, int] = {}
        self.counter = 0

    def fresh(self) -> int:
        self.counter += 1
        return self.counter

    def sort(self, width: int) -> int:
        if width not in self.sort_ids:
            sid = self.fresh()
            self.sort_ids[width] = sid
            self.lines.append(f"{sid} sort bitvec {width}")
        return self.sort_ids[width]

    def emit(self, root: Term) -> int:
        for t in postorder(root):
            if t in self.ids:
                continue
            sid = self.sort(t.width)
            if t.kind is TermKind.CONST:
                nid = self.fresh()
                self.lines.append(f"{nid} const {sid} {t.value:0{t.width}b}")
            elif t.kind is TermKind.VAR:
                raise ValueError(f"undeclared variable {t.name}")
            elif t.kind is TermKind.ITE:
                nid = self.fresh()
                c, a, b = (self.ids[x] for x in t.args)
                self.lines.append(f"{nid} ite {sid} {c} {a} {b}")
            elif t.op in _NEGATED_REDUCTIONS:
                inner = self.fresh()
                self.lines.append(
                    f"{inner} {_TAGS[_NEGATED_REDUCTIONS[t.op]]} {sid} {self.ids[t.args[0]]}"
                )
                nid = self.fresh()
                self.lines.append(f"{nid} not {sid} {inner}")
            else:
                nid = self.fresh()
                operands = " ".join(str(self.ids[a]) for a in t.args)
                self.lines.append(f"{nid} {_TAGS[t.op]} {sid} {operands}")
            self.ids[t] = nid
        return self.ids[root]

    def declare(self, v: Term, tag: str):
        sid = self.sort(v.width)
        nid = self.fresh()
        self.lines.append(f"{nid} {tag} {sid} {v.name}")
        self.ids[v] = nid


def print_btor2(ts: TransitionSystem) -> str:
    """Render ts as BTOR2; parse_btor2 of the result rebuilds the same terms."""
    w = _Writer()
    for v in ts.input_vars:
        w.declare(v, "input")
    for v in ts.state_vars:
        w.declare(v, "state")
    for s, value in ts.init_values().items():
        vid = w.emit(value)
        w.lines.append(f"{w.fresh()} init {w.sort(s.width)} {w.ids[s]} {vid}")
    for s in ts.state_vars:
        nid = w.emit(ts.next[s])
        w.lines.append(f"{w.fresh()} next {w.sort(s.width)} {w.ids[s]} {nid}")
    prop = ts.property
    negated = prop.kind is TermKind.OP and prop.op is OpKind.BVNOT and prop.sort.is_bool
    if negated and not (
        prop.args[0].kind is TermKind.OP and prop.args[0].op is OpKind.BVNOT
    ):
        bad = w.emit(prop.args[0])
    else:
        bad = w.emit(mk_not(prop))
    w.lines.append(f"{w.fresh()} bad {bad}")
    return "\n".join(w.lines) + "\n"
