import pytest

from relsql.grammar import (
    ASDLSyntaxError,
    GrammarError,
    Literal,
    format_asdl,
    node,
    parse_asdl,
    validate,
)


def num(v):
    return node("Num", value=Literal("int", str(v)))


def test_toy_grammar_shape(toy_grammar):
    assert toy_grammar.root_type == "expr"
    assert list(toy_grammar.types) == ["expr"]
    assert toy_grammar.constructor_names == ["Num", "Add"]
    add = toy_grammar.constructor("Add")
    assert [f.name for f in add.fields] == ["left", "right"]


def test_shipped_grammar(sql_grammar):
    assert sql_grammar.root_type == "sql_stmt"
    assert len(sql_grammar.constructor_names) == 38  # golden count for version 1


def test_undefined_type_is_named():
    with pytest.raises(GrammarError, match="missing_type"):
        parse_asdl("module T { expr = Bad(missing_type x) }")


@pytest.mark.parametrize("text", [
    "module T { expr = Num(int value) ",
    "module T { expr = | Num(int value) }",
    "module T { expr = Num(int value,) }",
])
def test_syntax_errors(text):
    with pytest.raises((ASDLSyntaxError, GrammarError)):
        parse_asdl(text)


def test_format_round_trip(sql_grammar):
    again = parse_asdl(format_asdl(sql_grammar))
    assert again.constructor_names == sql_grammar.constructor_names
    assert format_asdl(again) == format_asdl(sql_grammar)


def test_validate_accepts_good_trees(toy_grammar):
    assert validate(num(1), toy_grammar).ok
    assert validate(node("Add", left=num(1), right=num(2)), toy_grammar).ok


def test_validate_reports_missing_field(toy_grammar):
    report = validate(node("Add", left=num(1)), toy_grammar)
    assert not report.ok
    assert [e.field for e in report.errors] == ["right"]
    assert "cardinality" in report.errors[0].message


def test_validate_wrong_type(toy_grammar):
    report = validate(node("Add", left=num(1), right=Literal("int", "2")), toy_grammar)
    assert not report.ok


def test_validate_wrong_literal_kind(toy_grammar):
    assert not validate(node("Num", value=Literal("string", "x")), toy_grammar).ok
