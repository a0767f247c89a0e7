"""
Bit-blasting of word-level terms into CNF.

Bits are pysat literals, least significant first. The literal of a fixed
true variable stands for constant 1, so gates fold constants on the fly.
"""

import itertools
import logging
from typing import Dict, List, Tuple

from pysat.formula import IDPool

from .ir import OpKind, Term, TermKind, postorder

logger = logging.getLogger(__name__)

Bits = List[int]


class BitBlaster:
    def __init__(self):
        self.pool = IDPool()
        self.clauses: List[List[int]] = []
        self.T = self.pool.id("true")
        self.F = -self.T
        self.clauses.append([self.T])
        self.bits: Dict[Term, Bits] = {}
        self.var_bits: Dict[Term, Bits] = {}
        self._aux = itertools.count()

    # gates

    def new_var(self) -> int:
        return self.pool.id(("aux", next(self._aux)))

    def AND(self, a: int, b: int) -> int:
        if a == self.F or b == self.F or a == -b:
            return self.F
        if a == self.T or a == b:
            return b
        if b == self.T:
            return a
        g = self.new_var()
        self.clauses.extend([[-g, a], [-g, b], [g, -a, -b]])
        return g

    def OR(self, a: int, b: int) -> int:
        return -self.AND(-a, -b)

    def XOR(self, a: int, b: int) -> int:
        if a == self.F:
            return b
        if b == self.F:
            return a
        if a == self.T:
            return -b
        if b == self.T:
            return -a
        if a == b:
            return self.F
        if a == -b:
            return self.T
        g = self.new_var()
        self.clauses.extend([[-g, a, b], [-g, -a, -b], [g, -a, b], [g, a, -b]])
        return g

    def MUX(self, c: int, a: int, b: int) -> int:
        """c ? a : b"""
        if c == self.T or a == b:
            return a
        if c == self.F:
            return b
        g = self.new_var()
        self.clauses.extend([[-c, -a, g], [-c, a, -g], [c, -b, g], [c, b, -g]])
        return g

    def AND_ALL(self, lits: List[int]) -> int:
        result = self.T
        for l in lits:
            result = self.AND(result, l)
        return result

    def OR_ALL(self, lits: List[int]) -> int:
        result = self.F
        for l in lits:
            result = self.OR(result, l)
        return result

    # word-level circuits

    def add(self, a: Bits, b: Bits, carry: int) -> Tuple[Bits, int]:
        out = []
        for x, y in zip(a, b):
            t = self.XOR(x, y)
            out.append(self.XOR(t, carry))
            carry = self.OR(self.AND(x, y), self.AND(carry, t))
        return out, carry

    def sub(self, a: Bits, b: Bits) -> Bits:
        return self.add(a, [-y for y in b], self.T)[0]

    def mul(self, a: Bits, b: Bits) -> Bits:
        w = len(a)
        acc = [self.F] * w
        for i in range(w):
            row = [self.F if j < i else self.AND(b[i], a[j - i]) for j in range(w)]
            acc = self.add(acc, row, self.F)[0]
        return acc

    def ult(self, a: Bits, b: Bits) -> int:
        _, carry = self.add(a, [-y for y in b], self.T)
        return -carry

    def equal(self, a: Bits, b: Bits) -> int:
        return self.AND_ALL([-self.XOR(x, y) for x, y in zip(a, b)])

    def divmod(self, a: Bits, b: Bits) -> Tuple[Bits, Bits]:
        """Restoring division; b = 0 gives quotient all-ones and remainder a."""
        w = len(a)
        b_ext = b + [self.F]
        rem = [self.F] * (w + 1)
        quot = [self.F] * w
        for i in range(w - 1, -1, -1):
            shifted = [a[i]] + rem[:w]
            diff, geq = self.add(shifted, [-y for y in b_ext], self.T)
            quot[i] = geq
            rem = [self.MUX(geq, d, s) for d, s in zip(diff, shifted)]
        return quot, rem[:w]

    def shift(self, kind: OpKind, a: Bits, b: Bits) -> Bits:
        w = len(a)
        fill = a[-1] if kind is OpKind.SRA else self.F
        result = list(a)
        overflow = self.F
        for k, bit in enumerate(b):
            amount = 1 << k
            if amount >= w:
                overflow = self.OR(overflow, bit)
                continue
            if kind in (OpKind.SLL, OpKind.SLA):
                moved = [result[j - amount] if j >= amount else self.F for j in range(w)]
            else:
                moved = [result[j + amount] if j + amount < w else fill for j in range(w)]
            result = [self.MUX(bit, m, r) for m, r in zip(moved, result)]
        return [self.MUX(overflow, fill, r) for r in result]

    # terms

    def blast(self, t: Term) -> Bits:
        for node in postorder(t):
            if node not in self.bits:
                self.bits[node] = self._blast_node(node)
        return self.bits[t]

    def lit(self, t: Term) -> int:
        """Literal of a bool-sorted (or width-1) term."""
        return self.blast(t)[0]

    def _blast_node(self, t: Term) -> Bits:
        if t.kind is TermKind.CONST:
            return [self.T if (t.value >> i) & 1 else self.F for i in range(t.width)]
        if t.kind is TermKind.VAR:
            bits = [self.new_var() for _ in range(t.width)]
            self.var_bits[t] = bits
            return bits
        args = [self.bits[a] for a in t.args]
        if t.kind is TermKind.ITE:
            c = args[0][0]
            return [self.MUX(c, x, y) for x, y in zip(args[1], args[2])]
        a = args[0]
        b = args[1] if len(args) > 1 else None
        match t.op:
            case OpKind.ADD:
                return self.add(a, b, self.F)[0]
            case OpKind.SUB:
                return self.sub(a, b)
            case OpKind.MUL:
                return self.mul(a, b)
            case OpKind.UDIV:
                return self.divmod(a, b)[0]
            case OpKind.UREM:
                return self.divmod(a, b)[1]
            case OpKind.ULT:
                return [self.ult(a, b)]
            case OpKind.ULE:
                return [-self.ult(b, a)]
            case OpKind.EQ:
                return [self.equal(a, b)]
            case OpKind.NEQ:
                return [-self.equal(a, b)]
            case OpKind.BVAND:
                return [self.AND(x, y) for x, y in zip(a, b)]
            case OpKind.BVOR:
                return [self.OR(x, y) for x, y in zip(a, b)]
            case OpKind.BVXOR:
                return [self.XOR(x, y) for x, y in zip(a, b)]
            case OpKind.BVNAND:
                return [-self.AND(x, y) for x, y in zip(a, b)]
            case OpKind.BVNOR:
                return [-self.OR(x, y) for x, y in zip(a, b)]
            case OpKind.BVXNOR:
                return [-self.XOR(x, y) for x, y in zip(a, b)]
            case OpKind.BVNOT:
                return [-x for x in a]
            case OpKind.REDAND:
                return [self.AND_ALL(a)]
            case OpKind.REDOR:
                return [self.OR_ALL(a)]
            case OpKind.REDXOR:
                return [self._parity(a)]
            case OpKind.REDNAND:
                return [-self.AND_ALL(a)]
            case OpKind.REDNOR:
                return [-self.OR_ALL(a)]
            case OpKind.REDXNOR:
                return [-self._parity(a)]
            case OpKind.SLL | OpKind.SLA | OpKind.SRL | OpKind.SRA:
                return self.shift(t.op, a, b)
        raise ValueError(f"cannot bit-blast {t!r}")

    def _parity(self, bits: Bits) -> int:
        result = self.F
        for x in bits:
            result = self.XOR(result, x)
        return result

    def decode(self, model: List[int]) -> Dict[Term, int]:
        """Variable values under a SAT model; unconstrained bits read as 0."""
        true_lits = {l for l in model if l > 0}
        values: Dict[Term, int] = {}
        for v, bits in self.var_bits.items():
            value = 0
            for i, b in enumerate(bits):
                if b in true_lits:
                    value |= 1 << i
            values[v] = value
        return values
