"""
Ground-truth engines for testing.

Exhaustive bit-vector validity over small widths, explicit-state
reachability, a seeded random transition-system generator and witness
replay. Evaluation runs over numpy arrays holding every assignment at
once.
"""

import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Union

import numpy as np

from .errors import DpmcError, TooLarge
from .ir import (
    ARITHMETIC,
    BITWISE,
    EQUALITY,
    RELATIONAL,
    REDUCTIONS,
    SHIFTS,
    ConcreteTrace,
    OpKind,
    Term,
    TermKind,
    TransitionSystem,
    VarRole,
    bv,
    const,
    eval_concrete,
    free_vars,
    ite,
    mk_and,
    mk_eq,
    op,
    postorder,
    var,
)

logger = logging.getLogger(__name__)

U64 = np.uint64


@dataclass
class Valid:
    widths: List[int] = field(default_factory=list)


@dataclass
class CounterModel:
    width: int
    assignment: Dict[Term, int]

    def __str__(self) -> str:
        values = ", ".join(f"{v.name}={x}" for v, x in self.assignment.items())
        return f"width {self.width}: {values}"


@dataclass
class Reachable:
    trace: ConcreteTrace


@dataclass
class Unreachable:
    explored: int = 0


OracleVerdict = Union[Valid, CounterModel, Reachable, Unreachable]


# vectorized evaluation


def _mask(width: int):
    return U64((1 << width) - 1)


def _apply_vec(kind: OpKind, width: int, args: List[np.ndarray]) -> np.ndarray:
    mask = _mask(width)
    a = args[0]
    b = args[1] if len(args) > 1 else None
    one, zero = U64(1), U64(0)
    match kind:
        case OpKind.ADD:
            return (a + b) & mask
        case OpKind.SUB:
            return (a - b) & mask
        case OpKind.MUL:
            return (a * b) & mask
        case OpKind.UDIV:
            safe = np.where(b == zero, one, b)
            return np.where(b == zero, mask, a // safe)
        case OpKind.UREM:
            safe = np.where(b == zero, one, b)
            return np.where(b == zero, a, a % safe)
        case OpKind.ULT:
            return (a < b).astype(U64)
        case OpKind.ULE:
            return (a <= b).astype(U64)
        case OpKind.EQ:
            return (a == b).astype(U64)
        case OpKind.NEQ:
            return (a != b).astype(U64)
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
            return (a == mask).astype(U64)
        case OpKind.REDOR:
            return (a != zero).astype(U64)
        case OpKind.REDNAND:
            return (a != mask).astype(U64)
        case OpKind.REDNOR:
            return (a == zero).astype(U64)
        case OpKind.REDXOR | OpKind.REDXNOR:
            parity = np.zeros_like(a)
            for i in range(width):
                parity ^= (a >> U64(i)) & one
            return parity if kind is OpKind.REDXOR else parity ^ one
        case OpKind.SLL | OpKind.SLA | OpKind.SRL | OpKind.SRA:
            w = U64(width)
            over = b >= w
            amount = np.minimum(b, U64(width - 1) if width > 1 else zero)
            if kind in (OpKind.SLL, OpKind.SLA):
                return np.where(over, zero, (a << amount) & mask)
            if kind is OpKind.SRL:
                return np.where(over, zero, a >> amount)
            negative = ((a >> U64(width - 1)) & one) == one
            fill = np.where(negative, mask ^ (mask >> amount), zero)
            shifted = (a >> amount) | fill
            return np.where(over, np.where(negative, mask, zero), shifted)
    raise DpmcError(f"no vectorized semantics for {kind}")


def eval_vectorized(t: Term, env: Dict[Term, np.ndarray], size: int) -> np.ndarray:
    """Evaluate t over `size` assignments at once; env maps variables to uint64 arrays."""
    values: Dict[Term, np.ndarray] = {}
    for node in postorder(t):
        if node.kind is TermKind.CONST:
            values[node] = np.full(size, node.value, dtype=U64)
        elif node.kind is TermKind.VAR:
            if node not in env:
                raise DpmcError(f"no value for variable {node.name}")
            values[node] = env[node]
        elif node.kind is TermKind.ITE:
            c, a, b = (values[x] for x in node.args)
            values[node] = np.where(c != U64(0), a, b)
        else:
            width = node.args[0].width
            values[node] = _apply_vec(node.op, width, [values[a] for a in node.args])
    return values[t]


def _enumerate(variables: Sequence[Term], limit: int):
    """All joint assignments of variables as one uint64 array per variable."""
    bits = sum(v.width for v in variables)
    if bits > limit:
        raise TooLarge(bits, limit)
    size = 1 << bits
    index = np.arange(size, dtype=U64)
    env: Dict[Term, np.ndarray] = {}
    offset = 0
    for v in variables:
        env[v] = (index >> U64(offset)) & _mask(v.width)
        offset += v.width
    return env, size


# validity


def bv_valid_exhaustive(
    t: Union[Term, Callable[[int], Term]],
    widths: Iterable[int] = (1, 2, 3, 4),
    max_bits: int = 24,
) -> OracleVerdict:
    """Valid iff no assignment falsifies t.

    t is either a boolean term, checked at its own widths, or a builder
    called once per entry of widths.
    """
    if isinstance(t, Term):
        instances = [(max((v.width for v in free_vars(t)), default=1), t)]
    else:
        instances = [(w, t(w)) for w in widths]
    checked: List[int] = []
    for width, term in instances:
        if not term.sort.is_bool:
            raise DpmcError(f"validity check needs a boolean term, got {term.sort}")
        variables = sorted(free_vars(term), key=lambda v: v.name)
        env, size = _enumerate(variables, max_bits)
        result = eval_vectorized(term, env, size)
        failing = np.flatnonzero(result == U64(0))
        if failing.size:
            i = int(failing[0])
            assignment = {v: int(env[v][i]) for v in variables}
            if eval_concrete(term, assignment):
                raise DpmcError(f"counter-model for {term!r} does not replay")
            return CounterModel(width, assignment)
        checked.append(width)
    return Valid(checked)


# reachability


class _StateCodec:
    def __init__(self, variables: Sequence[Term]):
        self.variables = list(variables)
        self.offsets = []
        offset = 0
        for v in self.variables:
            self.offsets.append(offset)
            offset += v.width
        self.bits = offset

    def encode(self, env: Dict[Term, np.ndarray], size: int) -> np.ndarray:
        code = np.zeros(size, dtype=U64)
        for v, off in zip(self.variables, self.offsets):
            code |= env[v] << U64(off)
        return code

    def decode(self, code: int) -> Dict[Term, int]:
        return {
            v: (code >> off) & ((1 << v.width) - 1) for v, off in zip(self.variables, self.offsets)
        }

    def expand(self, codes: np.ndarray) -> Dict[Term, np.ndarray]:
        return {
            v: (codes >> U64(off)) & _mask(v.width) for v, off in zip(self.variables, self.offsets)
        }


def bfs_reachability(ts: TransitionSystem, max_bits: int = 20) -> OracleVerdict:
    """Breadth-first search over concrete states; inputs are free choices at every step."""
    bits = ts.state_bits + ts.input_bits
    if bits > max_bits:
        raise TooLarge(bits, max_bits)
    states = _StateCodec(ts.state_vars)
    inputs = _StateCodec(ts.input_vars)
    n_inputs = 1 << inputs.bits

    # initial states: every state valuation satisfying init under some input
    env, size = _enumerate(ts.state_vars + ts.input_vars, max_bits)
    holds = eval_vectorized(ts.init, env, size) != U64(0)
    initial = np.unique(states.encode(env, size)[holds])

    parent: Dict[int, Optional[tuple]] = {int(s): None for s in initial}
    frontier = [int(s) for s in initial]
    input_codes = np.arange(n_inputs, dtype=U64)
    explored = 0
    while frontier:
        explored += len(frontier)
        codes = np.repeat(np.array(frontier, dtype=U64), n_inputs)
        choice = np.tile(input_codes, len(frontier))
        step_env = states.expand(codes)
        step_env.update(inputs.expand(choice))
        n = codes.size

        bad = np.flatnonzero(eval_vectorized(ts.property, step_env, n) == U64(0))
        if bad.size:
            i = int(bad[0])
            trace = _rebuild(parent, int(codes[i]), int(choice[i]), states, inputs)
            logger.info(f"Reachable: bad state at depth {trace.length}")
            return Reachable(trace)

        successors = np.zeros(n, dtype=U64)
        for v, off in zip(states.variables, states.offsets):
            successors |= eval_vectorized(ts.next[v], step_env, n) << U64(off)
        next_frontier = []
        for s, src, inp in zip(successors.tolist(), codes.tolist(), choice.tolist()):
            if s not in parent:
                parent[s] = (src, inp)
                next_frontier.append(s)
        frontier = next_frontier
    logger.info(f"Unreachable: {explored} state(s) explored")
    return Unreachable(explored)


def _rebuild(parent, last: int, last_input: int, states, inputs) -> ConcreteTrace:
    codes = [last]
    choices = [last_input]
    link = parent[last]
    while link is not None:
        src, inp = link
        codes.append(src)
        choices.append(inp)
        link = parent[src]
    codes.reverse()
    choices.reverse()
    return ConcreteTrace(
        [states.decode(c) for c in codes], [inputs.decode(c) for c in choices]
    )


def replay_witness(ts: TransitionSystem, witness: ConcreteTrace) -> bool:
    """True iff the trace starts in init, follows next and ends in a property violation."""
    if len(witness.inputs) != len(witness.states):
        return False
    if not eval_concrete(ts.init, witness.env(0)):
        logger.debug("Witness does not start in an initial state")
        return False
    for step in range(witness.length):
        env = witness.env(step)
        for v in ts.state_vars:
            if eval_concrete(ts.next[v], env) != witness.states[step + 1][v]:
                logger.debug(f"Witness breaks the transition of {v.name} at step {step}")
                return False
    return not eval_concrete(ts.property, witness.env(witness.length))


# random systems

SUPPORTED_OPS = frozenset(ARITHMETIC | RELATIONAL | BITWISE | REDUCTIONS | SHIFTS | EQUALITY) | {
    OpKind.BVNOT
}


def _split_widths(rng: random.Random, bits: int) -> List[int]:
    widths: List[int] = []
    while bits > 0:
        w = rng.randint(1, min(4, bits))
        widths.append(w)
        bits -= w
    return widths


class _TermGen:
    def __init__(self, rng: random.Random, leaves: List[Term], ops: Set[OpKind]):
        self.rng = rng
        self.leaves = leaves
        self.widths = sorted({v.width for v in leaves})
        self.ops = sorted(ops, key=lambda k: k.value)

    def leaf(self, width: int) -> Term:
        pool = [v for v in self.leaves if v.width == width]
        if pool and self.rng.random() < 0.75:
            return self.rng.choice(pool)
        return const(self.rng.randint(0, (1 << width) - 1), bv(width))

    def condition(self, depth: int) -> Term:
        kinds = [k for k in self.ops if k in RELATIONAL or k in EQUALITY]
        kind = self.rng.choice(kinds or [OpKind.EQ])
        w = self.rng.choice(self.widths)
        return op(kind, self.term(w, depth - 1), self.leaf(w))

    def term(self, width: int, depth: int) -> Term:
        if depth <= 0 or self.rng.random() < 0.3:
            return self.leaf(width)
        choices = [k for k in self.ops if k not in REDUCTIONS or width == 1]
        kind = self.rng.choice(choices)
        if kind in RELATIONAL or kind in EQUALITY:
            return ite(self.condition(depth), self.term(width, depth - 1), self.leaf(width))
        if kind in REDUCTIONS:
            w = self.rng.choice(self.widths)
            return op(kind, self.term(w, depth - 1))
        if kind is OpKind.BVNOT:
            return op(kind, self.term(width, depth - 1))
        return op(kind, self.term(width, depth - 1), self.leaf(width))


def random_system(
    seed: int,
    state_bits: int = 4,
    op_mix: Optional[Iterable[OpKind]] = None,
    input_bits: int = 0,
    depth: int = 2,
) -> TransitionSystem:
    """Deterministic random system; state_bits is capped at 8."""
    if not 1 <= state_bits <= 8:
        raise DpmcError(f"state_bits must be in 1..8, got {state_bits}")
    ops = set(op_mix) if op_mix is not None else set(SUPPORTED_OPS)
    unknown = ops - SUPPORTED_OPS
    if unknown:
        raise DpmcError(f"unsupported operators in op_mix: {sorted(k.value for k in unknown)}")
    if not ops:
        raise DpmcError("op_mix is empty")
    rng = random.Random(seed)
    state_vars = [var(f"s{i}", bv(w)) for i, w in enumerate(_split_widths(rng, state_bits))]
    input_vars = [
        var(f"i{i}", bv(w), VarRole.INPUT) for i, w in enumerate(_split_widths(rng, input_bits))
    ]
    gen = _TermGen(rng, state_vars + input_vars, ops)
    init = mk_and(*(mk_eq(v, const(rng.randint(0, v.sort.max_value), v.sort)) for v in state_vars))
    nxt = {v: gen.term(v.width, depth) for v in state_vars}
    state_gen = _TermGen(rng, state_vars, ops)
    prop = state_gen.condition(2)
    return TransitionSystem(
        state_vars, input_vars, init, nxt, prop, name=f"random_{seed}"
    ).validate()
