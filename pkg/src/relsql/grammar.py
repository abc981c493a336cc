"""ASDL grammars: parsing, pretty-printing and tree validation.

Supports the subset of Zephyr ASDL used by TRANX-style grammars: sum types
with named constructors, product types, ``?`` (optional) and ``*`` (sequence)
field markers, ``--`` comments and an optional ``module Name { ... }`` wrapper.
``attributes (...)`` clauses are parsed and discarded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterator, Union

BUILTIN_TYPES = ("identifier", "int", "string")

SINGLE = "single"
OPTIONAL = "optional"
SEQUENCE = "sequence"


class ASDLSyntaxError(Exception):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.msg = msg
        self.line = line
        self.column = column


class GrammarError(Exception):
    """Semantic error in an otherwise well-formed grammar."""


@dataclass(frozen=True)
class Field:
    name: str
    type_name: str
    cardinality: str = SINGLE

    def __str__(self) -> str:
        marker = {SINGLE: "", OPTIONAL: "?", SEQUENCE: "*"}[self.cardinality]
        return f"{self.type_name}{marker} {self.name}"


@dataclass(frozen=True)
class Constructor:
    name: str
    fields: tuple[Field, ...] = ()

    def field(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)


@dataclass(frozen=True)
class TypeDef:
    name: str
    kind: str  # "sum" or "product"
    constructors: tuple[Constructor, ...]

    @property
    def is_product(self) -> bool:
        return self.kind == "product"


@dataclass(frozen=True)
class Grammar:
    types: dict[str, TypeDef]
    root_type: str
    # constructor name -> owning type name; derived, excluded from equality
    _owner: dict[str, str] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        owner: dict[str, str] = {}
        for tdef in self.types.values():
            for con in tdef.constructors:
                if con.name in owner:
                    raise GrammarError(f"duplicate constructor name {con.name!r}")
                owner[con.name] = tdef.name
        for tdef in self.types.values():
            if not tdef.constructors:
                raise GrammarError(f"sum type {tdef.name!r} has no constructors")
            if tdef.is_product and not tdef.constructors[0].fields:
                raise GrammarError(f"product type {tdef.name!r} has no fields")
            for con in tdef.constructors:
                seen = set()
                for f in con.fields:
                    if f.name in seen:
                        raise GrammarError(f"duplicate field {f.name!r} in constructor {con.name!r}")
                    seen.add(f.name)
                    if f.type_name not in self.types and f.type_name not in BUILTIN_TYPES:
                        raise GrammarError(
                            f"undefined type {f.type_name!r} referenced by field "
                            f"{con.name}.{f.name}"
                        )
        if self.root_type not in self.types:
            raise GrammarError(f"root type {self.root_type!r} is not defined")
        self._owner.update(owner)

    def constructor(self, name: str) -> Constructor:
        tdef = self.types[self._owner[name]]
        for con in tdef.constructors:
            if con.name == name:
                return con
        raise KeyError(name)

    def type_of(self, constructor_name: str) -> str:
        return self._owner[constructor_name]

    def has_constructor(self, name: str) -> bool:
        return name in self._owner

    def constructors_of(self, type_name: str) -> tuple[Constructor, ...]:
        return self.types[type_name].constructors

    @property
    def constructor_names(self) -> list[str]:
        return [c.name for t in self.types.values() for c in t.constructors]

    @property
    def fields(self) -> list[tuple[str, Field]]:
        """All ``(constructor name, field)`` pairs in declaration order."""
        return [(c.name, f) for t in self.types.values() for c in t.constructors for f in c.fields]

    @staticmethod
    def is_builtin(type_name: str) -> bool:
        return type_name in BUILTIN_TYPES


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+)
    |(?P<nl>\n)
    |(?P<comment>--[^\n]*)
    |(?P<name>[A-Za-z_][A-Za-z0-9_]*)
    |(?P<punct>[=|(),?*{}])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    value: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ASDLSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("name", "punct"):
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def _error(self, msg: str) -> ASDLSyntaxError:
        tok = self.cur
        return ASDLSyntaxError(msg, tok.line, tok.column)

    def at(self, value: str) -> bool:
        return self.cur.value == value and self.cur.kind != "eof"

    def expect(self, value: str) -> _Tok:
        if not self.at(value):
            found = self.cur.value or "end of input"
            raise self._error(f"expected {value!r}, found {found!r}")
        tok = self.cur
        self.i += 1
        return tok

    def name(self) -> str:
        if self.cur.kind != "name":
            found = self.cur.value or "end of input"
            raise self._error(f"expected a name, found {found!r}")
        tok = self.cur
        self.i += 1
        return tok.value

    def parse(self) -> list[TypeDef]:
        wrapped = False
        if self.at("module"):
            self.i += 1
            self.name()
            self.expect("{")
            wrapped = True
        defs = []
        while self.cur.kind == "name":
            defs.append(self.definition())
        if wrapped:
            self.expect("}")
        if self.cur.kind != "eof":
            raise self._error(f"unexpected {self.cur.value!r}")
        return defs

    def definition(self) -> TypeDef:
        type_name = self.name()
        self.expect("=")
        if self.at("("):
            fields = self.fields()
            self.attributes()
            return TypeDef(type_name, "product", (Constructor(type_name, fields),))
        cons = [self.constructor()]
        while self.at("|"):
            self.i += 1
            cons.append(self.constructor())
        self.attributes()
        return TypeDef(type_name, "sum", tuple(cons))

    def constructor(self) -> Constructor:
        name = self.name()
        fields: tuple[Field, ...] = ()
        if self.at("("):
            fields = self.fields()
        return Constructor(name, fields)

    def attributes(self) -> None:
        if self.at("attributes"):
            self.i += 1
            self.fields()

    def fields(self) -> tuple[Field, ...]:
        self.expect("(")
        out = []
        while True:
            type_name = self.name()
            card = SINGLE
            if self.at("?"):
                card = OPTIONAL
                self.i += 1
            elif self.at("*"):
                card = SEQUENCE
                self.i += 1
            fname = self.name() if self.cur.kind == "name" else type_name
            out.append(Field(fname, type_name, card))
            if self.at(")"):
                break
            self.expect(",")
        self.expect(")")
        return tuple(out)


def parse_asdl(text: str) -> Grammar:
    """Parse ASDL source text. The first defined type is the root type."""
    defs = _Parser(text).parse()
    if not defs:
        raise GrammarError("grammar defines no types")
    types: dict[str, TypeDef] = {}
    for d in defs:
        if d.name in types:
            raise GrammarError(f"type {d.name!r} defined twice")
        if d.name in BUILTIN_TYPES:
            raise GrammarError(f"type {d.name!r} shadows a builtin")
        types[d.name] = d
    return Grammar(types=types, root_type=defs[0].name)


def format_asdl(grammar: Grammar) -> str:
    """Pretty-print a grammar; ``parse_asdl(format_asdl(g)) == g``."""
    lines = []
    for tdef in grammar.types.values():
        if tdef.is_product:
            fields = ", ".join(str(f) for f in tdef.constructors[0].fields)
            lines.append(f"{tdef.name} = ({fields})")
            continue
        alts = []
        for con in tdef.constructors:
            if con.fields:
                alts.append(f"{con.name}({', '.join(str(f) for f in con.fields)})")
            else:
                alts.append(con.name)
        pad = " " * (len(tdef.name) + 1)
        lines.append(f"{tdef.name} = " + f"\n{pad}| ".join(alts))
    return "\n\n".join(lines) + "\n"


def load_grammar(name_or_path: str = "spider_sql") -> Grammar:
    """Load a shipped grammar by name, or any ``.asdl`` file by path."""
    if name_or_path.endswith(".asdl"):
        with open(name_or_path, encoding="utf-8") as fh:
            return parse_asdl(fh.read())
    text = resources.files("relsql.grammars").joinpath(f"{name_or_path}.asdl").read_text("utf-8")
    return parse_asdl(text)


# ---------------------------------------------------------------------------
# Trees


@dataclass(frozen=True)
class Literal:
    kind: str
    value: str

    def __repr__(self) -> str:
        return f"{self.kind}:{self.value!r}"


Child = Union["AstNode", Literal, None, tuple]


@dataclass(frozen=True)
class AstNode:
    """A typed tree node. ``children`` is an ordered tuple of ``(field, value)``.

    A value is an ``AstNode`` or ``Literal`` for single fields, ``None`` for an
    absent optional field and a tuple of those for sequence fields.
    """

    constructor: str
    children: tuple[tuple[str, Any], ...] = ()

    def __getitem__(self, name: str) -> Any:
        for k, v in self.children:
            if k == name:
                return v
        raise KeyError(name)

    def get(self, name: str, default: Any = None) -> Any:
        for k, v in self.children:
            if k == name:
                return v
        return default

    def replace(self, **kw: Any) -> "AstNode":
        kids = tuple((k, kw.pop(k) if k in kw else v) for k, v in self.children)
        if kw:
            raise KeyError(", ".join(kw))
        return AstNode(self.constructor, kids)

    def __repr__(self) -> str:
        if not self.children:
            return self.constructor
        inner = ", ".join(f"{k}={v!r}" for k, v in self.children)
        return f"{self.constructor}({inner})"

    def walk(self) -> Iterator["AstNode"]:
        yield self
        for _, v in self.children:
            items = v if isinstance(v, tuple) else (v,)
            for item in items:
                if isinstance(item, AstNode):
                    yield from item.walk()


def node(constructor: str, **children: Any) -> AstNode:
    """Build an ``AstNode``; sequence values given as lists are frozen to tuples."""
    kids = tuple((k, tuple(v) if isinstance(v, list) else v) for k, v in children.items())
    return AstNode(constructor, kids)


def make_node(grammar: Grammar, constructor: str, **children: Any) -> AstNode:
    """Like :func:`node` but orders children by the grammar's field order."""
    con = grammar.constructor(constructor)
    kids = []
    for f in con.fields:
        v = children.pop(f.name, () if f.cardinality == SEQUENCE else None)
        kids.append((f.name, tuple(v) if isinstance(v, list) else v))
    if children:
        raise KeyError(f"{constructor} has no field(s) {', '.join(children)}")
    return AstNode(constructor, tuple(kids))


@dataclass(frozen=True)
class ValidationError:
    path: str
    field: str | None
    message: str

    def __str__(self) -> str:
        where = f"{self.path}.{self.field}" if self.field else self.path
        return f"{where}: {self.message}"


@dataclass
class ValidationReport:
    errors: list[ValidationError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "valid" if self.ok else "\n".join(str(e) for e in self.errors)


_MISSING = object()


def validate(tree: Any, grammar: Grammar, type_name: str | None = None) -> ValidationReport:
    """Check a tree against ``grammar``; failures are collected, never raised."""
    report = ValidationReport()
    _check_value(tree, type_name or grammar.root_type, grammar, "$", None, report)
    return report


def _check_value(value, type_name, grammar, path, fname, report):
    if Grammar.is_builtin(type_name):
        if not isinstance(value, Literal):
            report.errors.append(ValidationError(path, fname, f"expected {type_name} literal, got {value!r}"))
        elif value.kind != type_name:
            report.errors.append(
                ValidationError(path, fname, f"literal kind {value.kind!r} where {type_name!r} expected")
            )
        elif not value.value:
            report.errors.append(ValidationError(path, fname, "empty literal"))
        return
    if not isinstance(value, AstNode):
        report.errors.append(ValidationError(path, fname, f"expected {type_name} node, got {value!r}"))
        return
    here = f"{path}.{fname}" if fname else path
    here = f"{here}<{value.constructor}>"
    if not grammar.has_constructor(value.constructor):
        report.errors.append(ValidationError(here, None, f"unknown constructor {value.constructor!r}"))
        return
    owner = grammar.type_of(value.constructor)
    if owner != type_name:
        report.errors.append(
            ValidationError(here, None, f"constructor of type {owner!r} where {type_name!r} expected")
        )
        return
    con = grammar.constructor(value.constructor)
    given = dict(value.children)
    if len(given) != len(value.children):
        report.errors.append(ValidationError(here, None, "duplicate child field"))
    for extra in given.keys() - {f.name for f in con.fields}:
        report.errors.append(ValidationError(here, extra, "no such field"))
    for f in con.fields:
        v = given.get(f.name, _MISSING)
        if f.cardinality == SINGLE:
            if v is _MISSING or v is None:
                report.errors.append(ValidationError(here, f.name, "cardinality violation: required field is missing"))
            else:
                _check_value(v, f.type_name, grammar, here, f.name, report)
        elif f.cardinality == OPTIONAL:
            if v is _MISSING:
                report.errors.append(ValidationError(here, f.name, "cardinality violation: optional field slot is missing"))
            elif v is not None:
                _check_value(v, f.type_name, grammar, here, f.name, report)
        else:
            if not isinstance(v, tuple):
                report.errors.append(ValidationError(here, f.name, "cardinality violation: sequence expected"))
            else:
                for k, item in enumerate(v):
                    _check_value(item, f.type_name, grammar, here, f"{f.name}[{k}]", report)
