"""
Propagation rule table.

A rule matches one operator occurrence. Pattern entries name the argument
shape: a variable ("x", "y") or a constant of the argument width ("0", "1",
"MAX"). The conclusion is a rewrite target ("x", "y", "0", "1", "MAX") for
functions or a truth value ("TRUE", "FALSE") for predicates. `same` rules
fire when both arguments are in one equality class; `side` rules need a
known disequality of one argument against 0 or MAX.

Every rule in RULES and CHAIN_RULES must be BV-valid at widths 1..4; the
validation is run by validate_rules.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .ir import (
    ARITHMETIC,
    BITWISE,
    REDUCTIONS,
    RELATIONAL,
    SHIFTS,
    OpKind,
    Term,
    bv,
    const,
    mk_and,
    mk_eq,
    mk_implies,
    mk_not,
    op,
    var,
)

logger = logging.getLogger(__name__)

CONSTANT_PATTERNS = ("0", "1", "MAX")


def pattern_value(pattern: str, width: int) -> Optional[int]:
    if pattern == "0":
        return 0
    if pattern == "1":
        return 1
    if pattern == "MAX":
        return (1 << width) - 1
    return None


@dataclass(frozen=True)
class Rule:
    rule_id: str
    op: OpKind
    pattern: Tuple[str, ...]
    conclusion: str
    same: bool = False
    side: Optional[Tuple[str, str]] = None
    widths: Optional[Tuple[int, ...]] = None

    @property
    def family(self) -> str:
        if self.op in ARITHMETIC:
            return "arithmetic"
        if self.op in RELATIONAL:
            return "relational"
        if self.op in BITWISE:
            return "bitwise"
        if self.op in REDUCTIONS:
            return "reduction"
        return "shift"

    @property
    def is_predicate(self) -> bool:
        return self.op in RELATIONAL

    def applies_at(self, width: int) -> bool:
        return self.widths is None or width in self.widths

    def validity_term(self, width: int) -> Term:
        """Concrete implication premises -> conclusion at one argument width."""
        sort = bv(width)
        names = {"x": var("x", sort), "y": var("y", sort)}

        def operand(p: str) -> Term:
            value = pattern_value(p, width)
            return names[p] if value is None else const(value, sort)

        args = [operand(p) for p in self.pattern]
        occurrence = op(self.op, *args)
        premises: List[Term] = []
        if self.same:
            premises.append(mk_eq(args[0], args[1]))
        if self.side:
            name, kind = self.side
            bound = 0 if kind == "nonzero" else sort.max_value
            premises.append(op(OpKind.NEQ, names[name], const(bound, sort)))
        if self.is_predicate:
            fact = occurrence if self.conclusion == "TRUE" else mk_not(occurrence)
        else:
            result_sort = occurrence.sort
            value = pattern_value(self.conclusion, result_sort.width)
            target = names[self.conclusion] if value is None else const(value, result_sort)
            fact = mk_eq(occurrence, target)
        return mk_implies(mk_and(*premises), fact) if premises else fact


def _r(rule_id, kind, pattern, conclusion, **kw) -> Rule:
    return Rule(rule_id, kind, tuple(pattern), conclusion, **kw)


ARITHMETIC_RULES = [
    _r("arith.add-x-0", OpKind.ADD, ("x", "0"), "x"),
    _r("arith.add-0-y", OpKind.ADD, ("0", "y"), "y"),
    _r("arith.sub-x-0", OpKind.SUB, ("x", "0"), "x"),
    _r("arith.sub-same", OpKind.SUB, ("x", "y"), "0", same=True),
    _r("arith.mul-x-0", OpKind.MUL, ("x", "0"), "0"),
    _r("arith.mul-0-y", OpKind.MUL, ("0", "y"), "0"),
    _r("arith.mul-x-1", OpKind.MUL, ("x", "1"), "x"),
    _r("arith.mul-1-y", OpKind.MUL, ("1", "y"), "y"),
    _r("arith.div-x-1", OpKind.UDIV, ("x", "1"), "x"),
    _r("arith.div-x-0", OpKind.UDIV, ("x", "0"), "MAX"),
    _r("arith.div-0-y", OpKind.UDIV, ("0", "y"), "0", side=("y", "nonzero")),
    _r("arith.div-same", OpKind.UDIV, ("x", "y"), "1", same=True, side=("x", "nonzero")),
    _r("arith.mod-x-1", OpKind.UREM, ("x", "1"), "0"),
    _r("arith.mod-x-0", OpKind.UREM, ("x", "0"), "x"),
    _r("arith.mod-0-y", OpKind.UREM, ("0", "y"), "0"),
    _r("arith.mod-same", OpKind.UREM, ("x", "y"), "0", same=True),
]

RELATIONAL_RULES = [
    _r("rel.lt-irrefl", OpKind.ULT, ("x", "y"), "FALSE", same=True),
    _r("rel.le-refl", OpKind.ULE, ("x", "y"), "TRUE", same=True),
    _r("rel.lt-x-0", OpKind.ULT, ("x", "0"), "FALSE"),
    _r("rel.le-0-y", OpKind.ULE, ("0", "y"), "TRUE"),
    _r("rel.lt-max-y", OpKind.ULT, ("MAX", "y"), "FALSE"),
    _r("rel.le-x-max", OpKind.ULE, ("x", "MAX"), "TRUE"),
]

BITWISE_RULES = [
    _r("bw.and-x-0", OpKind.BVAND, ("x", "0"), "0"),
    _r("bw.and-0-y", OpKind.BVAND, ("0", "y"), "0"),
    _r("bw.and-x-max", OpKind.BVAND, ("x", "MAX"), "x"),
    _r("bw.and-max-y", OpKind.BVAND, ("MAX", "y"), "y"),
    _r("bw.and-same", OpKind.BVAND, ("x", "y"), "x", same=True),
    _r("bw.or-x-0", OpKind.BVOR, ("x", "0"), "x"),
    _r("bw.or-0-y", OpKind.BVOR, ("0", "y"), "y"),
    _r("bw.or-x-max", OpKind.BVOR, ("x", "MAX"), "MAX"),
    _r("bw.or-max-y", OpKind.BVOR, ("MAX", "y"), "MAX"),
    _r("bw.or-same", OpKind.BVOR, ("x", "y"), "x", same=True),
    _r("bw.xor-x-0", OpKind.BVXOR, ("x", "0"), "x"),
    _r("bw.xor-0-y", OpKind.BVXOR, ("0", "y"), "y"),
    _r("bw.xor-same", OpKind.BVXOR, ("x", "y"), "0", same=True),
    _r("bw.xnor-same", OpKind.BVXNOR, ("x", "y"), "MAX", same=True),
    _r("bw.nand-x-0", OpKind.BVNAND, ("x", "0"), "MAX"),
    _r("bw.nand-0-y", OpKind.BVNAND, ("0", "y"), "MAX"),
    _r("bw.nor-x-max", OpKind.BVNOR, ("x", "MAX"), "0"),
    _r("bw.nor-max-y", OpKind.BVNOR, ("MAX", "y"), "0"),
]

REDUCTION_RULES = [
    _r("red.and-notmax", OpKind.REDAND, ("x",), "0", side=("x", "notmax")),
    _r("red.or-nonzero", OpKind.REDOR, ("x",), "1", side=("x", "nonzero")),
    _r("red.nor-nonzero", OpKind.REDNOR, ("x",), "0", side=("x", "nonzero")),
    _r("red.nand-notmax", OpKind.REDNAND, ("x",), "1", side=("x", "notmax")),
    _r("red.xnor-notmax-w1", OpKind.REDXNOR, ("x",), "1", side=("x", "notmax"), widths=(1,)),
    _r("red.and-w1", OpKind.REDAND, ("x",), "x", widths=(1,)),
    _r("red.or-w1", OpKind.REDOR, ("x",), "x", widths=(1,)),
    _r("red.xor-w1", OpKind.REDXOR, ("x",), "x", widths=(1,)),
]

SHIFT_RULES = [
    _r("sh.shl-x-0", OpKind.SLL, ("x", "0"), "x"),
    _r("sh.shl-0-y", OpKind.SLL, ("0", "y"), "0"),
    _r("sh.shr-x-0", OpKind.SRL, ("x", "0"), "x"),
    _r("sh.shr-0-y", OpKind.SRL, ("0", "y"), "0"),
    _r("sh.ashl-x-0", OpKind.SLA, ("x", "0"), "x"),
    _r("sh.ashl-0-y", OpKind.SLA, ("0", "y"), "0"),
    _r("sh.ashr-x-0", OpKind.SRA, ("x", "0"), "x"),
    _r("sh.ashr-0-y", OpKind.SRA, ("0", "y"), "0"),
]

RULES: List[Rule] = sorted(
    ARITHMETIC_RULES + RELATIONAL_RULES + BITWISE_RULES + REDUCTION_RULES + SHIFT_RULES,
    key=lambda r: r.rule_id,
)

# Table entries as typeset, before the guards and corrections above.
# Never registered; each has a counter-model under the division-by-zero
# convention or plain bit semantics.
PRINTED_VARIANTS: List[Rule] = [
    _r("printed.div-0-y", OpKind.UDIV, ("0", "y"), "0"),
    _r("printed.div-same", OpKind.UDIV, ("x", "y"), "1", same=True),
    _r("printed.rednor-nonzero", OpKind.REDNOR, ("x",), "1", side=("x", "nonzero")),
    _r("printed.rednand-notmax", OpKind.REDNAND, ("x",), "0", side=("x", "notmax")),
    _r("printed.redxnor-notmax", OpKind.REDXNOR, ("x",), "1", side=("x", "notmax")),
]


@dataclass(frozen=True)
class ChainRule:
    """Relational implication over variables x, y, z used by the relation graph."""

    rule_id: str
    premises: Tuple[Tuple[OpKind, str, str, bool], ...]
    conclusion: Tuple[OpKind, str, str, bool]

    def validity_term(self, width: int) -> Term:
        sort = bv(width)
        names = {n: var(n, sort) for n in ("x", "y", "z")}

        def literal(spec) -> Term:
            kind, a, b, positive = spec
            atom = op(kind, names[a], names[b])
            return atom if positive else mk_not(atom)

        return mk_implies(mk_and(*(literal(p) for p in self.premises)), literal(self.conclusion))


LT, LE = OpKind.ULT, OpKind.ULE

CHAIN_RULES: List[ChainRule] = [
    ChainRule("rel.le-not-lt", ((LE, "x", "y", True),), (LT, "y", "x", False)),
    ChainRule("rel.lt-not-le", ((LT, "x", "y", True),), (LE, "y", "x", False)),
    ChainRule("rel.lt-le", ((LT, "x", "y", True),), (LE, "x", "y", True)),
    ChainRule("rel.trans-lt-lt", ((LT, "x", "y", True), (LT, "y", "z", True)), (LT, "x", "z", True)),
    ChainRule("rel.trans-le-le", ((LE, "x", "y", True), (LE, "y", "z", True)), (LE, "x", "z", True)),
    ChainRule("rel.trans-lt-le", ((LT, "x", "y", True), (LE, "y", "z", True)), (LT, "x", "z", True)),
    ChainRule("rel.trans-le-lt", ((LE, "x", "y", True), (LT, "y", "z", True)), (LT, "x", "z", True)),
    ChainRule("rel.trans-lt-lt-neg", ((LT, "x", "y", True), (LT, "y", "z", True)), (LE, "z", "x", False)),
    ChainRule("rel.trans-le-le-neg", ((LE, "x", "y", True), (LE, "y", "z", True)), (LT, "z", "x", False)),
    ChainRule("rel.trans-lt-le-neg", ((LT, "x", "y", True), (LE, "y", "z", True)), (LE, "z", "x", False)),
    ChainRule("rel.trans-le-lt-neg", ((LE, "x", "y", True), (LT, "y", "z", True)), (LE, "z", "x", False)),
    ChainRule("rel.strict-cycle", ((LT, "x", "y", True), (LE, "y", "x", True)), (LT, "x", "x", True)),
]


def rules_for(kind: OpKind, width: int, same: bool) -> List[Rule]:
    return [r for r in _BY_OP.get(kind, ()) if r.same is same and r.applies_at(width)]


_BY_OP: Dict[OpKind, List[Rule]] = {}
for _rule in RULES:
    _BY_OP.setdefault(_rule.op, []).append(_rule)


def validate_rules(
    rules: Sequence = None, widths: Sequence[int] = (1, 2, 3, 4)
) -> Dict[str, object]:
    """Exhaustively check each rule; returns rule_id -> CounterModel for failures."""
    from .oracle import CounterModel, bv_valid_exhaustive

    failures: Dict[str, object] = {}
    for rule in RULES + CHAIN_RULES if rules is None else rules:
        rule_widths = [w for w in widths if not hasattr(rule, "applies_at") or rule.applies_at(w)]
        verdict = bv_valid_exhaustive(rule.validity_term, rule_widths)
        if isinstance(verdict, CounterModel):
            failures[rule.rule_id] = verdict
            logger.warning(f"Rule {rule.rule_id} fails at width {verdict.width}: {verdict.assignment}")
    return failures
