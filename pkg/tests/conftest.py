from pathlib import Path

import pytest

from relsql.grammar import load_grammar, parse_asdl
from relsql.schema import load_content, load_schema

FIXTURES = Path(__file__).parent / "fixtures"

TOY_ASDL = "module Toy { expr = Num(int value) | Add(expr left, expr right) }"
SEQ_ASDL = "module Seq { stmt = Block(expr* items) \n expr = Num(int value) | Add(expr left, expr right) }"


@pytest.fixture(scope="session")
def toy_grammar():
    return parse_asdl(TOY_ASDL)


@pytest.fixture(scope="session")
def seq_grammar():
    return parse_asdl(SEQ_ASDL)


@pytest.fixture(scope="session")
def sql_grammar():
    return load_grammar()


@pytest.fixture(scope="session")
def singer():
    return load_schema(FIXTURES / "singer_tables.json")


@pytest.fixture(scope="session")
def singer_content(singer):
    return load_content(FIXTURES / "singer_content.json", singer)


# acceptance criteria report one line each; printed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
