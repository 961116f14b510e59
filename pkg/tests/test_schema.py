import hashlib

import pytest

from lgmvu.schema import (
    IllegalRecursion,
    ListOf,
    MissingRoot,
    Named,
    Prim,
    Record,
    SchemaSyntaxError,
    Sum,
    UnresolvedType,
    canonical_form,
    fingerprint,
    parse_schema,
)
from reference import string, u32

FIG7 = "type Shape = Circle | Square; global model Shape; global msg SetShape(Shape)"


def test_fig7_parses():
    schema = parse_schema(FIG7)
    assert schema.definitions["Shape"] == Sum((("Circle", None), ("Square", None)))
    assert schema.global_model == Named("Shape")
    assert schema.resolve(schema.global_msg) == Sum((("SetShape", Named("Shape")),))


def test_empty_input_misses_model_root():
    with pytest.raises(MissingRoot) as info:
        parse_schema("")
    assert info.value.which == "globalModelType"


def test_missing_msg_root():
    with pytest.raises(MissingRoot) as info:
        parse_schema("global model Int64")
    assert info.value.which == "globalMsgType"


def test_direct_self_reference():
    with pytest.raises(IllegalRecursion) as info:
        parse_schema("type T = T\nglobal model Int64\nglobal msg | X")
    assert info.value.name == "T"


def test_mutual_record_cycle():
    with pytest.raises(IllegalRecursion):
        parse_schema("type A = { b: B }\ntype B = { a: A }\nglobal model A\nglobal msg | X")


def test_recursion_through_sum_and_list_is_fine():
    schema = parse_schema(
        """
        type Tree = { label: String, kids: List Tree }
        type Expr = Lit(Int64) | Neg(Expr) | Pair(ExprPair)
        type ExprPair = { l: Expr, r: Expr }
        global model Tree
        global msg Set(Expr) | Clear
        """
    )
    assert schema.definitions["Tree"] == Record((("label", Prim("String")), ("kids", ListOf(Named("Tree")))))


def test_unresolved_name():
    with pytest.raises(UnresolvedType) as info:
        parse_schema("global model Foo\nglobal msg | A")
    assert info.value.name == "Foo"


@pytest.mark.parametrize(
    "source, line, col",
    [
        ("type = X", 1, 6),
        ("global model Int64\nglobal msg A |", 2, 15),
        ("type P = { x: Int64\nglobal model P\nglobal msg | A", 2, 1),
        ("global model Int64\nglobal msg A\ntype X = {}", 3, 10),
        ("global model Int64 $", 1, 20),
        ("global model Int64\nglobal msg A\nglobal msg B", 3, 1),
    ],
)
def test_syntax_error_positions(source, line, col):
    with pytest.raises(SchemaSyntaxError) as info:
        parse_schema(source)
    assert (info.value.line, info.value.col) == (line, col)


def test_inline_roots_and_comments():
    schema = parse_schema(
        """
        # comment
        global model { count: Int64, names: List String }  -- trailing
        global msg Inc
                 | Rename(String)
        """
    )
    assert schema.global_model == Named("GlobalModel")
    assert set(schema.definitions) == {"GlobalModel", "GlobalMsg"}


def test_leading_bar_single_variant():
    schema = parse_schema("global model Bool\nglobal msg | Toggle")
    assert schema.resolve(schema.global_msg) == Sum((("Toggle", None),))


# -- fingerprint -----------------------------------------------------------------


def test_fig7_canonical_bytes_by_hand():
    # definitions sorted by name: GlobalMsg, Shape; kinds Record=1 Sum=2 List=3 Prim=4 Named=5
    expected = (
        b"lgmvu-schema\x01"
        + u32(2)
        + string("GlobalMsg") + b"\x02" + u32(1) + string("SetShape") + b"\x01" + b"\x05" + string("Shape")
        + string("Shape") + b"\x02" + u32(2) + string("Circle") + b"\x00" + string("Square") + b"\x00"
        + b"\x05" + string("Shape")
        + b"\x05" + string("GlobalMsg")
    )
    schema = parse_schema(FIG7)
    assert canonical_form(schema) == expected
    assert fingerprint(schema) == hashlib.sha256(expected).digest()


def test_variant_order_matters():
    reordered = FIG7.replace("Circle | Square", "Square | Circle")
    assert fingerprint(parse_schema(FIG7)) != fingerprint(parse_schema(reordered))


def test_whitespace_is_erased():
    spaced = "\n\n  type   Shape =\n    Circle\n  | Square\n\nglobal model   Shape\n# note\nglobal msg SetShape( Shape )\n"
    assert fingerprint(parse_schema(FIG7)) == fingerprint(parse_schema(spaced))


def test_declaration_order_of_types_is_irrelevant():
    a = "type A = { x: Int64 }\ntype B = X | Y\nglobal model A\nglobal msg Set(B)"
    b = "type B = X | Y\ntype A = { x: Int64 }\nglobal model A\nglobal msg Set(B)"
    assert fingerprint(parse_schema(a)) == fingerprint(parse_schema(b))


@pytest.mark.parametrize(
    "mutated",
    [
        FIG7.replace("Square", "Squares"),
        FIG7.replace("Circle | Square", "Circle | Square | Star"),
        FIG7.replace("SetShape(Shape)", "SetShape(Shape) | Noop"),
        FIG7.replace("global model Shape", "global model List Shape"),
        FIG7.replace("SetShape(Shape)", "SetShape(Int64)"),
    ],
)
def test_any_semantic_change_moves_the_digest(mutated):
    assert fingerprint(parse_schema(FIG7)) != fingerprint(parse_schema(mutated))


def test_record_field_order_matters():
    a = "global model { x: Int64, y: Int64 }\nglobal msg | A"
    b = "global model { y: Int64, x: Int64 }\nglobal msg | A"
    assert fingerprint(parse_schema(a)) != fingerprint(parse_schema(b))
