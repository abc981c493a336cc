"""SQL subset: parsing to grammar ASTs, printing, canonical comparison."""

from .canonical import canonical, exact_match
from .lexer import SQLSyntaxError
from .parser import UnknownNameError, UnsupportedSQLError, parse_sql, sql_grammar
from .printer import PrintError, print_sql

SQLError = (SQLSyntaxError, UnknownNameError, UnsupportedSQLError)

__all__ = [
    "PrintError",
    "SQLError",
    "SQLSyntaxError",
    "UnknownNameError",
    "UnsupportedSQLError",
    "canonical",
    "exact_match",
    "parse_sql",
    "print_sql",
    "sql_grammar",
]
