"""
BTOR2 reading and printing.
"""

import pytest

from dpmc.btor2 import parse_btor2, print_btor2, read_btor2
from dpmc.errors import ParseError, UnsupportedFeature
from dpmc.ir import OpKind, TermKind, VarRole, bv, const, mk_and, mk_eq, op, var

X = var("x", bv(2))
Y = var("y", bv(2))


def test_fig2_structure(fig2):
    assert fig2.state_vars == [X, Y]
    assert fig2.input_vars == []
    assert fig2.init is mk_and(mk_eq(X, const(0, bv(2))), mk_eq(Y, const(0, bv(2))))
    assert fig2.property is op(OpKind.ULE, Y, X)
    nx = fig2.next[X]
    assert nx.kind is TermKind.ITE
    assert nx.args[0] is op(OpKind.ULT, X, Y)


def test_print_then_parse_rebuilds_terms(fig2):
    again = parse_btor2(print_btor2(fig2), name="again")
    assert again.state_vars == fig2.state_vars
    assert again.init is fig2.init
    assert again.property is fig2.property
    for v in fig2.state_vars:
        assert again.next[v] is fig2.next[v]


def test_constant_forms_and_swapped_relations():
    text = """
    1 sort bitvec 4
    2 sort bitvec 1
    3 state 1 a
    4 consth 1 a
    5 constd 1 3
    6 const 1 0101
    7 ones 1
    8 init 1 3 5
    9 ugt 2 3 4
    10 add 1 3 6
    11 and 1 10 7
    12 next 1 3 11
    13 output 9
    14 bad 9
    """
    ts = parse_btor2(text)
    a = var("a", bv(4))
    assert ts.init_values() == {a: const(3, bv(4))}
    # ugt a 10 reads as ult 10 a
    assert ts.property is op(OpKind.BVNOT, op(OpKind.ULT, const(10, bv(4)), a))
    assert ts.next[a] is op(OpKind.BVAND, op(OpKind.ADD, a, const(5, bv(4))), const(15, bv(4)))


def test_state_without_next_gets_nondet_input():
    text = "\n".join(
        [
            "1 sort bitvec 2",
            "2 sort bitvec 1",
            "3 state 1 s",
            "4 zero 1",
            "5 eq 2 3 4",
            "6 bad 5",
        ]
    )
    ts = parse_btor2(text)
    (nondet,) = ts.input_vars
    assert nondet.name == "s__nondet"
    assert nondet.role is VarRole.INPUT
    assert ts.next[var("s", bv(2))] is nondet


def test_concat_is_unsupported(data_dir):
    with pytest.raises(UnsupportedFeature) as info:
        read_btor2(data_dir / "concat.btor2")
    assert info.value.kind == "concat"
    assert info.value.line == 7


def test_array_sort_is_unsupported():
    with pytest.raises(UnsupportedFeature):
        parse_btor2("1 sort array 2 3\n")


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("1 sort bitvec 2\n2 state 1 x\n", "missing property"),
        ("1 sort bitvec 2\n2 state 9 x\n", "unknown sort"),
        ("1 sort bitvec 2\n2 add 1 3 4\n", "undefined node"),
        ("1 sort bitvec 2\n2 const 1 011\n", "does not have 2 bits"),
        ("1 sort bitvec 2\n2 zero 1\n3 state 1 x\n4 next 1 2 3\n", "target must be a state"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as info:
        parse_btor2(text)
    assert fragment in str(info.value)


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as info:
        parse_btor2("1 sort bitvec 2\n; comment\n3 add 1 7 8\n")
    assert info.value.line == 3
