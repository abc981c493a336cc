from __future__ import annotations

import re
from dataclasses import dataclass

KEYWORDS = {
    "select", "distinct", "from", "join", "inner", "on", "as", "where", "group", "by",
    "having", "order", "asc", "desc", "limit", "union", "intersect", "except", "and",
    "or", "not", "in", "like", "between", "count", "sum", "avg", "min", "max",
    "left", "right", "outer", "cross", "natural", "full", "is", "null", "exists",
    "case", "when", "then", "else", "end", "all", "any", "offset", "using",
}


class SQLSyntaxError(Exception):
    def __init__(self, msg: str, position: int):
        super().__init__(f"{msg} at position {position}")
        self.msg = msg
        self.position = position


@dataclass(frozen=True)
class Token:
    kind: str  # kw, name, number, string, op, eof
    value: str
    pos: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
    |(?P<number>\d+(?:\.\d+)?(?![A-Za-z_]))
    |(?P<name>[A-Za-z_][A-Za-z0-9_]*)
    |(?P<quoted>`[^`]*`|\[[^\]]*\])
    |(?P<string>'(?:[^']|'')*'|"(?:[^"]|"")*")
    |(?P<op><>|!=|<=|>=|[=<>(),.*;+\-/])
    """,
    re.VERBOSE,
)


def tokenize(sql: str) -> list[Token]:
    out = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise SQLSyntaxError(f"unexpected character {sql[pos]!r}", pos)
        kind, text = m.lastgroup, m.group()
        if kind == "name":
            low = text.lower()
            out.append(Token("kw" if low in KEYWORDS else "name", low, pos))
        elif kind == "quoted":
            out.append(Token("name", text[1:-1].lower(), pos))
        elif kind == "string":
            q = text[0]
            out.append(Token("string", text[1:-1].replace(q + q, q), pos))
        elif kind in ("number", "op"):
            out.append(Token(kind, text, pos))
        pos = m.end()
    if out and out[-1].value == ";" and out[-1].kind == "op":
        out.pop()
    out.append(Token("eof", "", len(sql)))
    return out
