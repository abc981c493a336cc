from __future__ import annotations

from ..grammar import AstNode, Literal

_COMMUTATIVE = ("And", "Or")


def canonical(tree):
    """Order-insensitive normal form used for exact-match comparison.

    AND/OR chains are flattened, their operands sorted and rebuilt left-deep;
    GROUP BY columns are sorted; join equalities are oriented; identifiers are
    lowercased.  Select-list and ORDER BY order are kept: they are semantic.
    """
    if isinstance(tree, Literal):
        return Literal(tree.kind, tree.value.lower()) if tree.kind == "identifier" else tree
    if isinstance(tree, tuple):
        return tuple(canonical(t) for t in tree)
    if tree is None:
        return None
    if tree.constructor in _COMMUTATIVE:
        operands = sorted((canonical(c) for c in _flatten(tree, tree.constructor)), key=repr)
        out = operands[0]
        for c in operands[1:]:
            out = AstNode(tree.constructor, (("left", out), ("right", c)))
        return out
    kids = tuple((k, canonical(v)) for k, v in tree.children)
    node = AstNode(tree.constructor, kids)
    if node.constructor == "GroupBy":
        cols = sorted((node["first"],) + node["rest"], key=repr)
        node = node.replace(first=cols[0], rest=tuple(cols[1:]))
    elif node.constructor == "Join":
        left, right = node["on_left"], node["on_right"]
        if repr(right) < repr(left):
            node = node.replace(on_left=right, on_right=left)
    return node


def _flatten(tree: AstNode, op: str):
    if isinstance(tree, AstNode) and tree.constructor == op:
        yield from _flatten(tree["left"], op)
        yield from _flatten(tree["right"], op)
    else:
        yield tree


def exact_match(a, b) -> bool:
    return canonical(a) == canonical(b)
