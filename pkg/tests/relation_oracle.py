"""Brute-force relation labeler used as an independent oracle in tests.

Each pair is labelled from first principles, walking the precedence list
top to bottom; nothing is shared with the vectorised implementation apart
from the label names.
"""

from relsql.grammar import OPTIONAL, SINGLE, Grammar
from relsql.transitions import CopyColumn, CopyQuestion, CopyTable, Reduce



def _kind(input, p):
    return {"question": "Q", "table": "T", "column": "C"}[input.positions[p][0]]


def _rank(input, p):
    k = input.positions[p][0]
    return [q for q in input.positions if q[0] == k].index(input.positions[p])


def encoder_label(input, links, cfg, i, j):
    schema = input.schema
    ki, kj = _kind(input, i), _kind(input, j)
    xi, xj = input.positions[i][1], input.positions[j][1]
    owner = schema.column_table
    fks = set(schema.foreign_keys)
    H = cfg.horizon

    if cfg.keys:
        if ki == kj == "C":
            if (xi, xj) in fks:
                return "C→C Foreign-Key Forward"
            if (xj, xi) in fks:
                return "C→C Foreign-Key Backward"
        if ki == "C" and kj == "T":
            if any(s == xi and owner[d] == xj for s, d in fks):
                return "C→T Foreign-Key"
            if xi in schema.primary_keys and owner[xi] == xj:
                return "C→T Primary-Key"
        if ki == "T" and kj == "C":
            if any(s == xj and owner[d] == xi for s, d in fks):
                return "T→C Foreign-Key"
            if xj in schema.primary_keys and owner[xj] == xi:
                return "T→C Primary-Key"
        if ki == kj == "T":
            fwd = any(owner[s] == xi and owner[d] == xj for s, d in fks)
            bwd = any(owner[s] == xj and owner[d] == xi for s, d in fks)
            if fwd and bwd:
                return "T→T Foreign-Key Bidirectional"
            if fwd:
                return "T→T Foreign-Key Forward"
            if bwd:
                return "T→T Foreign-Key Backward"

    if cfg.table_column:
        if ki == kj == "C" and owner[xi] == owner[xj]:
            return "C→C Table Match"
        if ki == "C" and kj == "T" and owner[xi] == xj:
            return "C→T Any Table" if schema.column_list[xi].is_wildcard else "C→T Table Match"
        if ki == "T" and kj == "C" and owner[xj] == xi:
            return "T→C Any Table" if schema.column_list[xj].is_wildcard else "T→C Table Match"

    if "Q" in (ki, kj) and ki != kj:
        q, other, ok = (xi, j, kj) if ki == "Q" else (xj, i, ki)
        best = None
        for m in links:
            is_name = m.kind != "value-match-column"
            if (is_name and not cfg.nbsl) or (not is_name and not cfg.cbsl):
                continue
            if not (m.start <= q < m.end):
                continue
            tkind = "T" if m.target_kind == "table" else "C"
            if tkind != ok or input.positions[other][1] != m.target:
                continue
            rank = (m.confidence == "high", is_name)
            if best is None or rank > best[0]:
                best = (rank, m)
        if best is not None:
            m = best[1]
            what = "Name-based" if m.kind != "value-match-column" else "Content-based"
            return f"{ki}→{kj} {what} Match {m.confidence}"

    if ki == kj:
        d = max(-H, min(H, _rank(input, j) - _rank(input, i)))
        return f"{ki}→{kj} Distance {d}"
    return f"{ki}→{kj} Default"


def encoder_labels(input, links, cfg):
    n = len(input)
    return [[encoder_label(input, links, cfg, i, j) for j in range(n)] for i in range(n)]


def tree_slots(actions, grammar):
    """(parent step, child index) of every action, by recursive descent over the grammar."""
    out = []

    def walk(type_name, parent, child, pos):
        out.append((parent, child))
        a = actions[pos]
        me = pos
        pos += 1
        if Grammar.is_builtin(type_name):
            return pos
        k = 0
        for f in grammar.constructor(a.constructor).fields:
            if f.cardinality == SINGLE:
                pos = walk(f.type_name, me, k, pos)
                k += 1
            else:
                limit = 1 if f.cardinality == OPTIONAL else None
                taken = 0
                while not isinstance(actions[pos], Reduce) and (limit is None or taken < limit):
                    pos = walk(f.type_name, me, k, pos)
                    k += 1
                    taken += 1
                if f.cardinality != OPTIONAL or taken == 0:
                    out.append((me, k))
                    k += 1
                    pos += 1
        return pos

    end = walk(grammar.root_type, -1, 0, 0)
    assert end == len(actions)
    return out


def decoder_labels(actions, grammar, horizon=8, ast=True):
    info = tree_slots(actions, grammar)
    n = len(actions)
    out = [["Decoder Default"] * n for _ in range(n)]
    if not ast:
        return out
    for i in range(n):
        for j in range(n):
            (pi, si), (pj, sj) = info[i], info[j]
            if i == j:
                out[i][j] = "Identity"
            elif pj == i:
                out[i][j] = "Parent-Child"
            elif pi == j:
                out[i][j] = "Child-Parent"
            elif pi == pj:
                out[i][j] = f"Sibling-Distance {max(-horizon, min(horizon, sj - si))}"
    return out


def memory_labels(actions, input, copied_from=True):
    out = [["Memory Default"] * len(input) for _ in actions]
    if not copied_from:
        return out
    for s, a in enumerate(actions):
        key = None
        if isinstance(a, CopyQuestion):
            key = ("question", a.position)
        elif isinstance(a, CopyTable):
            key = ("table", a.table_id)
        elif isinstance(a, CopyColumn):
            key = ("column", a.column_id)
        if key is not None:
            out[s][input.positions.index(key)] = "Copied-From"
    return out
