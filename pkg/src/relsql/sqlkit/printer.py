"""AST to SQL text, in the canonical fully-qualified spelling."""

from __future__ import annotations

from ..grammar import AstNode, Literal, validate
from .parser import sql_grammar

_AGG = {"Count": "count", "Sum": "sum", "Avg": "avg", "Min": "min", "Max": "max"}
_CMP = {"Eq": "=", "Ne": "!=", "Lt": "<", "Gt": ">", "Le": "<=", "Ge": ">="}
_SET = {"Union": "UNION", "Intersect": "INTERSECT", "Except": "EXCEPT"}


class PrintError(ValueError):
    pass


def print_sql(tree: AstNode) -> str:
    """Render a validated SQL AST.

    Columns are printed ``table.column``; a wildcard prints as ``*`` when it
    belongs to the first FROM table of its query and as ``table.*`` otherwise.
    """
    report = validate(tree, sql_grammar())
    if not report.ok:
        raise PrintError(f"refusing to print an invalid tree:\n{report}")
    return _stmt(tree)


def _stmt(q: AstNode) -> str:
    first_table = q["from"]["table"].value
    parts = ["SELECT"]
    sel = q["select"]
    if sel.constructor == "SelectDistinct":
        parts.append("DISTINCT")
    parts.append(", ".join(_col_expr(e, first_table) for e in (sel["first"],) + sel["rest"]))
    parts.append("FROM " + _from(q["from"]))
    if q["where"] is not None:
        parts.append("WHERE " + _cond(q["where"], first_table))
    gb = q["group_by"]
    if gb is not None:
        cols = (gb["first"],) + gb["rest"]
        parts.append("GROUP BY " + ", ".join(_column(c["column"], first_table) for c in cols))
        if gb["having"] is not None:
            parts.append("HAVING " + _cond(gb["having"], first_table))
    ob = q["order_by"]
    if ob is not None:
        items = (ob["first"],) + ob["rest"]
        direction = "DESC" if ob["dir"].constructor == "Desc" else "ASC"
        parts.append("ORDER BY " + ", ".join(_col_expr(e, first_table) for e in items) + " " + direction)
    if q["limit"] is not None:
        parts.append("LIMIT " + q["limit"].value)
    comp = q["compound"]
    if comp is not None:
        parts.append(_SET[comp.constructor] + " " + _stmt(comp["query"]))
    return " ".join(parts)


def _from(f: AstNode) -> str:
    out = f["table"].value
    for j in f["joins"]:
        out += f" JOIN {j['table'].value} ON {j['on_left']['column'].value} = {j['on_right']['column'].value}"
    return out


def _column(lit: Literal, first_table: str) -> str:
    if lit.value == f"{first_table}.*":
        return "*"
    return lit.value


def _col_expr(e: AstNode, first_table: str) -> str:
    col = _column(e["column"], first_table)
    if e.constructor == "Col":
        return col
    agg = _AGG[e["op"].constructor]
    if e.constructor == "AggDistinct":
        return f"{agg}(DISTINCT {col})"
    return f"{agg}({col})"


def _value(v: AstNode, first_table: str) -> str:
    c = v.constructor
    if c == "Number":
        return v["value"].value
    if c == "String":
        return "'" + v["value"].value.replace("'", "''") + "'"
    if c == "ColumnValue":
        return _column(v["column"], first_table)
    return "(" + _stmt(v["query"]) + ")"


def _cond(c: AstNode, first_table: str) -> str:
    k = c.constructor
    if k in ("And", "Or"):
        left = _cond_operand(c["left"], k, first_table, right_side=False)
        right = _cond_operand(c["right"], k, first_table, right_side=True)
        return f"{left} {k.upper()} {right}"
    if k == "Not":
        return "NOT (" + _cond(c["cond"], first_table) + ")"
    lhs = _col_expr(c["lhs"], first_table)
    if k == "Cmp":
        return f"{lhs} {_CMP[c['op'].constructor]} {_value(c['rhs'], first_table)}"
    if k == "Between":
        return f"{lhs} BETWEEN {_value(c['low'], first_table)} AND {_value(c['high'], first_table)}"
    if k == "Like":
        return f"{lhs} LIKE {_value(c['pattern'], first_table)}"
    return f"{lhs} IN ({_stmt(c['query'])})"


def _cond_operand(c: AstNode, parent: str, first_table: str, right_side: bool) -> str:
    text = _cond(c, first_table)
    # OR under AND always needs parentheses; a same-operator right child keeps its grouping
    if (parent == "And" and c.constructor == "Or") or (right_side and c.constructor == parent):
        return f"({text})"
    return text
