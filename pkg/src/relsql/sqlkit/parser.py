"""Recursive-descent parser from the SQL subset to grammar-conformant ASTs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from ..grammar import AstNode, Grammar, Literal, load_grammar, make_node
from ..schema import Schema
from .lexer import SQLSyntaxError, Token, tokenize

AGG_OPS = {"count": "Count", "sum": "Sum", "avg": "Avg", "min": "Min", "max": "Max"}
CMP_OPS = {"=": "Eq", "!=": "Ne", "<>": "Ne", "<": "Lt", ">": "Gt", "<=": "Le", ">=": "Ge"}
SET_OPS = {"union": "Union", "intersect": "Intersect", "except": "Except"}


class UnsupportedSQLError(Exception):
    def __init__(self, construct: str, position: int | None = None):
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"unsupported SQL construct: {construct}{where}")
        self.construct = construct
        self.position = position


class UnknownNameError(Exception):
    def __init__(self, kind: str, name: str):
        super().__init__(f"unknown {kind} {name!r}")
        self.kind = kind
        self.name = name


@lru_cache(maxsize=None)
def sql_grammar() -> Grammar:
    return load_grammar("spider_sql")


@dataclass
class _Scope:
    tables: list[int] = field(default_factory=list)
    aliases: dict[str, int] = field(default_factory=dict)


@dataclass
class _RawCol:
    qualifier: str | None
    name: str
    pos: int


class _Parser:
    def __init__(self, sql: str, schema: Schema, grammar: Grammar):
        self.toks = tokenize(sql)
        self.i = 0
        self.schema = schema
        self.g = grammar

    # -- token helpers
    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *values: str) -> bool:
        t = self.cur
        return t.kind in ("kw", "op") and t.value in values

    def take(self, *values: str) -> bool:
        if self.at(*values):
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> Token:
        if not self.at(value):
            found = self.cur.value or "end of input"
            raise SQLSyntaxError(f"expected {value.upper()!r}, found {found!r}", self.cur.pos)
        tok = self.cur
        self.i += 1
        return tok

    def name(self) -> Token:
        tok = self.cur
        if tok.kind != "name":
            raise SQLSyntaxError(f"expected a name, found {tok.value or 'end of input'!r}", tok.pos)
        self.i += 1
        return tok

    def node(self, constructor: str, **kw) -> AstNode:
        return make_node(self.g, constructor, **kw)

    # -- statements
    def statement(self, outer: list[_Scope]) -> AstNode:
        q = self.query_core(outer)
        if self.cur.kind == "kw" and self.cur.value in SET_OPS:
            op = SET_OPS[self.cur.value]
            self.i += 1
            if self.take("all"):
                raise UnsupportedSQLError(f"{op.upper()} ALL", self.toks[self.i - 1].pos)
            right = self.statement(outer)
            q = q.replace(compound=self.node(op, query=right))
        return q

    def query_core(self, outer: list[_Scope]) -> AstNode:
        self.expect("select")
        distinct = self.take("distinct")
        raw_items = [self.raw_col_expr()]
        while self.take(","):
            raw_items.append(self.raw_col_expr())
        self.expect("from")
        scope = _Scope()
        frm = self.from_clause(scope, outer)
        scopes = [scope] + outer
        items = [self.resolve_expr(it, scopes) for it in raw_items]
        select = self.node("SelectDistinct" if distinct else "Select", first=items[0], rest=items[1:])

        where = group_by = order_by = limit = None
        if self.take("where"):
            where = self.cond(scopes)
        if self.take("group"):
            self.expect("by")
            cols = [self.col_ref(scopes)]
            while self.take(","):
                cols.append(self.col_ref(scopes))
            having = self.cond(scopes) if self.take("having") else None
            group_by = self.node("GroupBy", first=cols[0], rest=cols[1:], having=having)
        elif self.at("having"):
            raise UnsupportedSQLError("HAVING without GROUP BY", self.cur.pos)
        if self.take("order"):
            self.expect("by")
            order_by = self.order_by(scopes)
        if self.take("limit"):
            tok = self.cur
            if tok.kind != "number" or "." in tok.value:
                raise SQLSyntaxError("LIMIT expects an integer", tok.pos)
            self.i += 1
            limit = Literal("int", tok.value)
            if self.at("offset"):
                raise UnsupportedSQLError("OFFSET", self.cur.pos)
        if self.at("where", "group", "order", "limit", "having"):
            raise SQLSyntaxError(f"misplaced {self.cur.value.upper()} clause", self.cur.pos)
        return self.node("Query", select=select, **{"from": frm}, where=where,
                         group_by=group_by, order_by=order_by, limit=limit)

    def from_clause(self, scope: _Scope, outer: list[_Scope]) -> AstNode:
        first = self.table_ref(scope)
        joins = []
        while True:
            if self.at("left", "right", "outer", "cross", "natural", "full"):
                raise UnsupportedSQLError(f"{self.cur.value.upper()} JOIN", self.cur.pos)
            if self.at(","):
                raise UnsupportedSQLError("comma join", self.cur.pos)
            if not (self.at("join") or self.at("inner")):
                break
            self.take("inner")
            self.expect("join")
            t_id = self.table_ref(scope)
            if not self.at("on"):
                raise UnsupportedSQLError("JOIN without ON", self.cur.pos)
            self.i += 1
            scopes = [scope] + outer
            left = self.col_ref(scopes)
            if not self.take("="):
                raise UnsupportedSQLError("non-equality join condition", self.cur.pos)
            right = self.col_ref(scopes)
            if self.at("and", "or"):
                raise UnsupportedSQLError("compound join condition", self.cur.pos)
            joins.append(self.node("Join", table=self._table_lit(t_id), on_left=left, on_right=right))
        return self.node("From", table=self._table_lit(first), joins=joins)

    def table_ref(self, scope: _Scope) -> int:
        if self.at("("):
            raise UnsupportedSQLError("subquery in FROM", self.cur.pos)
        tok = self.name()
        try:
            t_id = self.schema.table_id(tok.value)
        except KeyError:
            raise UnknownNameError("table", tok.value) from None
        if t_id in scope.tables:
            raise UnsupportedSQLError("self-join", tok.pos)
        scope.tables.append(t_id)
        scope.aliases[tok.value] = t_id
        if self.take("as"):
            scope.aliases[self.name().value] = t_id
        elif self.cur.kind == "name":
            scope.aliases[self.name().value] = t_id
        return t_id

    def _table_lit(self, t_id: int) -> Literal:
        return Literal("identifier", self.schema.tables[t_id].name.lower())

    # -- columns
    def raw_col(self) -> _RawCol:
        tok = self.cur
        if self.take("*"):
            return _RawCol(None, "*", tok.pos)
        first = self.name()
        if self.take("."):
            if self.take("*"):
                return _RawCol(first.value, "*", first.pos)
            return _RawCol(first.value, self.name().value, first.pos)
        return _RawCol(None, first.value, first.pos)

    def raw_col_expr(self):
        tok = self.cur
        if tok.kind == "kw" and tok.value in AGG_OPS and self.peek().value == "(":
            self.i += 2
            distinct = self.take("distinct")
            col = self.raw_col()
            self._reject_arith()
            self.expect(")")
            return ("agg", AGG_OPS[tok.value], distinct, col)
        if tok.kind == "kw" and tok.value in ("case", "exists"):
            raise UnsupportedSQLError(tok.value.upper(), tok.pos)
        col = self.raw_col()
        self._reject_arith()
        return ("col", col)

    def _reject_arith(self) -> None:
        if self.at("+", "-", "/") or (self.at("*") and self.peek().kind != "kw"):
            raise UnsupportedSQLError("arithmetic expression", self.cur.pos)
        if self.at("("):
            raise UnsupportedSQLError("function call", self.cur.pos)

    def resolve(self, raw: _RawCol, scopes: list[_Scope]) -> Literal:
        schema = self.schema
        if raw.qualifier is not None:
            for scope in scopes:
                if raw.qualifier in scope.aliases:
                    t_id = scope.aliases[raw.qualifier]
                    break
            else:
                raise UnknownNameError("table", raw.qualifier)
            try:
                c_id = schema.column_id(t_id, raw.name)
            except KeyError:
                raise UnknownNameError("column", f"{raw.qualifier}.{raw.name}") from None
            return Literal("identifier", schema.qualified_name(c_id))
        if raw.name == "*":
            return Literal("identifier", schema.qualified_name(schema.wildcard_of(scopes[0].tables[0])))
        for scope in scopes:
            for t_id in scope.tables:
                try:
                    return Literal("identifier", schema.qualified_name(schema.column_id(t_id, raw.name)))
                except KeyError:
                    continue
        raise UnknownNameError("column", raw.name)

    def resolve_expr(self, raw, scopes: list[_Scope]) -> AstNode:
        if raw[0] == "col":
            return self.node("Col", column=self.resolve(raw[1], scopes))
        _, op, distinct, col = raw
        return self.node("AggDistinct" if distinct else "Agg", op=self.node(op), column=self.resolve(col, scopes))

    def col_expr(self, scopes: list[_Scope]) -> AstNode:
        return self.resolve_expr(self.raw_col_expr(), scopes)

    def col_ref(self, scopes: list[_Scope]) -> AstNode:
        raw = self.raw_col()
        self._reject_arith()
        return self.node("col_ref", column=self.resolve(raw, scopes))

    def order_by(self, scopes: list[_Scope]) -> AstNode:
        items, dirs = [], []
        while True:
            items.append(self.col_expr(scopes))
            if self.take("asc"):
                dirs.append("Asc")
            elif self.take("desc"):
                dirs.append("Desc")
            else:
                dirs.append(None)
            if not self.take(","):
                break
        given = {d for d in dirs if d is not None}
        if len(given) > 1 or (given and any(d is None for d in dirs[-1:])):
            raise UnsupportedSQLError("mixed ORDER BY directions", self.cur.pos)
        direction = given.pop() if given else "Asc"
        return self.node("OrderBy", dir=self.node(direction), first=items[0], rest=items[1:])

    # -- conditions
    def cond(self, scopes: list[_Scope]) -> AstNode:
        left = self.and_cond(scopes)
        while self.take("or"):
            left = self.node("Or", left=left, right=self.and_cond(scopes))
        return left

    def and_cond(self, scopes: list[_Scope]) -> AstNode:
        left = self.not_cond(scopes)
        while self.take("and"):
            left = self.node("And", left=left, right=self.not_cond(scopes))
        return left

    def not_cond(self, scopes: list[_Scope]) -> AstNode:
        if self.take("not"):
            return self.node("Not", cond=self.not_cond(scopes))
        if self.at("(") and not (self.peek().kind == "kw" and self.peek().value == "select"):
            self.i += 1
            inner = self.cond(scopes)
            self.expect(")")
            return inner
        return self.predicate(scopes)

    def predicate(self, scopes: list[_Scope]) -> AstNode:
        if self.at("exists"):
            raise UnsupportedSQLError("EXISTS", self.cur.pos)
        lhs = self.col_expr(scopes)
        tok = self.cur
        if tok.kind == "op" and tok.value in CMP_OPS:
            self.i += 1
            return self.node("Cmp", op=self.node(CMP_OPS[tok.value]), lhs=lhs, rhs=self.value(scopes))
        negate = self.take("not")
        if self.take("between"):
            low = self.value(scopes)
            self.expect("and")
            out = self.node("Between", lhs=lhs, low=low, high=self.value(scopes))
        elif self.take("like"):
            out = self.node("Like", lhs=lhs, pattern=self.value(scopes))
        elif self.take("in"):
            self.expect("(")
            if not self.at("select"):
                raise UnsupportedSQLError("IN with a value list", self.cur.pos)
            query = self.statement(scopes)
            self.expect(")")
            out = self.node("In", lhs=lhs, query=query)
        elif self.at("is"):
            raise UnsupportedSQLError("IS NULL", self.cur.pos)
        else:
            found = self.cur.value or "end of input"
            raise SQLSyntaxError(f"expected a comparison, found {found!r}", self.cur.pos)
        return self.node("Not", cond=out) if negate else out

    def value(self, scopes: list[_Scope]) -> AstNode:
        tok = self.cur
        if tok.kind == "number":
            self.i += 1
            return self.node("Number", value=Literal("int", tok.value))
        if self.at("-") and self.peek().kind == "number":
            self.i += 2
            return self.node("Number", value=Literal("int", "-" + self.toks[self.i - 1].value))
        if tok.kind == "string":
            self.i += 1
            if not tok.value:
                raise UnsupportedSQLError("empty string literal", tok.pos)
            return self.node("String", value=Literal("string", tok.value))
        if self.at("("):
            self.i += 1
            if not self.at("select"):
                raise UnsupportedSQLError("parenthesised value expression", self.cur.pos)
            query = self.statement(scopes)
            self.expect(")")
            return self.node("Subquery", query=query)
        if tok.kind == "kw" and tok.value in AGG_OPS:
            raise UnsupportedSQLError("aggregate on right-hand side of a comparison", tok.pos)
        if tok.kind == "kw" and tok.value == "null":
            raise UnsupportedSQLError("NULL literal", tok.pos)
        raw = self.raw_col()
        self._reject_arith()
        return self.node("ColumnValue", column=self.resolve(raw, scopes))


def parse_sql(query: str, schema: Schema, grammar: Grammar | None = None) -> AstNode:
    """Parse one SQL statement into an AST of the shipped SQL grammar.

    Table and column references are resolved against ``schema`` and stored as
    lowercase ``identifier`` literals (``table`` / ``table.column``).
    """
    p = _Parser(query, schema, grammar or sql_grammar())
    tree = p.statement([])
    if p.cur.kind != "eof":
        raise SQLSyntaxError(f"unexpected {p.cur.value!r} after statement", p.cur.pos)
    return tree
