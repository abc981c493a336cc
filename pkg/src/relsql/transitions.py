"""Transition system over ASDL trees.

A tree is serialized depth-first, left-to-right into actions: ``ApplyRule``
opens a constructor, literal leaves are produced by ``GenLiteral`` or one of
the three copy actions, and ``Reduce`` closes a sequence field or marks an
optional field absent.  :class:`DecoderState` tracks the frontier of open
fields and yields the set of actions legal at each step.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .grammar import (
    OPTIONAL,
    SEQUENCE,
    SINGLE,
    AstNode,
    Field,
    Grammar,
    Literal,
    make_node,
)

# identifier fields with these names refer to schema elements and are only
# produced by copying a table / column from the input
TABLE_FIELDS = frozenset({"table"})
COLUMN_FIELDS = frozenset({"column"})

ROOT_FIELD_NAME = "<root>"
UNK = "<unk>"


# ---------------------------------------------------------------------------
# Actions


@dataclass(frozen=True)
class ApplyRule:
    constructor: str

    def __str__(self) -> str:
        return f"apply {self.constructor}"


@dataclass(frozen=True)
class Reduce:
    def __str__(self) -> str:
        return "reduce"


@dataclass(frozen=True)
class GenLiteral:
    kind: str
    token: str

    def __str__(self) -> str:
        return f"gen {self.kind} {json.dumps(self.token)}"


@dataclass(frozen=True)
class CopyQuestion:
    position: int

    def __str__(self) -> str:
        return f"copy-question {self.position}"


@dataclass(frozen=True)
class CopyTable:
    table_id: int

    def __str__(self) -> str:
        return f"copy-table {self.table_id}"


@dataclass(frozen=True)
class CopyColumn:
    column_id: int

    def __str__(self) -> str:
        return f"copy-column {self.column_id}"


Action = ApplyRule | Reduce | GenLiteral | CopyQuestion | CopyTable | CopyColumn
COPY_ACTIONS = (CopyQuestion, CopyTable, CopyColumn)
LITERAL_ACTIONS = (GenLiteral,) + COPY_ACTIONS


def format_actions(actions: Iterable[Action]) -> str:
    """One action per line; the stable text form used for golden files."""
    return "".join(f"{a}\n" for a in actions)


def parse_actions(text: str) -> list[Action]:
    out: list[Action] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        if head == "apply":
            out.append(ApplyRule(rest))
        elif head == "reduce":
            out.append(Reduce())
        elif head == "gen":
            kind, _, tok = rest.partition(" ")
            out.append(GenLiteral(kind, json.loads(tok)))
        elif head == "copy-question":
            out.append(CopyQuestion(int(rest)))
        elif head == "copy-table":
            out.append(CopyTable(int(rest)))
        elif head == "copy-column":
            out.append(CopyColumn(int(rest)))
        else:
            raise ValueError(f"line {lineno}: unknown action {line!r}")
    return out


# ---------------------------------------------------------------------------
# Errors


class TransitionError(Exception):
    pass


class IllegalActionError(TransitionError):
    def __init__(self, step: int, action, expected: str):
        # step is 1-based: the ordinal of the offending action
        super().__init__(f"step {step}: action {action} is illegal here; expected {expected}")
        self.step = step
        self.action = action
        self.expected = expected


class IncompleteTreeError(TransitionError):
    pass


class TrailingActionsError(TransitionError):
    pass


class LiteralError(TransitionError):
    pass


# ---------------------------------------------------------------------------
# Decoder state


class Frame(NamedTuple):
    constructor: str | None  # None for the virtual root frame
    field_index: int
    seq_count: int  # items emitted so far in the current sequence field
    step: int  # step that opened the constructor, -1 for root
    n_children: int  # actions emitted as children of this frame


class Slot(NamedTuple):
    """Where an action goes: parent constructor, field, and the parent's step."""

    constructor: str | None
    field: Field
    parent_step: int
    sibling_index: int


@dataclass(frozen=True)
class DecoderState:
    frontier: tuple[Frame, ...]
    emitted: tuple[Action, ...] = ()
    slots: tuple[Slot, ...] = ()

    @property
    def done(self) -> bool:
        return not self.frontier and bool(self.emitted)

    def __len__(self) -> int:
        return len(self.emitted)


def initial_state(grammar: Grammar) -> DecoderState:
    return DecoderState(frontier=(Frame(None, 0, 0, -1, 0),))


def _root_field(grammar: Grammar) -> Field:
    return Field(ROOT_FIELD_NAME, grammar.root_type, SINGLE)


_ROOT_FIELDS: dict[str, tuple[Field, ...]] = {}


def _frame_fields(frame: Frame, grammar: Grammar) -> tuple[Field, ...]:
    if frame.constructor is None:
        fields = _ROOT_FIELDS.get(grammar.root_type)
        if fields is None:
            fields = _ROOT_FIELDS[grammar.root_type] = (_root_field(grammar),)
        return fields
    return grammar.constructor(frame.constructor).fields


def pending_slot(state: DecoderState, grammar: Grammar) -> Slot:
    """The slot the next action fills; ``state`` must not be done."""
    if not state.frontier:
        raise TransitionError("tree is complete; no pending slot")
    top = state.frontier[-1]
    f = _frame_fields(top, grammar)[top.field_index]
    return Slot(top.constructor, f, top.step, top.n_children)


def leaf_source(f: Field) -> str | None:
    """``"table"`` / ``"column"`` for schema-reference leaves, else ``None``."""
    if f.type_name != "identifier":
        return None
    if f.name in TABLE_FIELDS:
        return "table"
    if f.name in COLUMN_FIELDS:
        return "column"
    return None


def _describe(slot: Slot, grammar: Grammar) -> str:
    f = slot.field
    where = f"{slot.constructor or 'root'}.{f.name}"
    if Grammar.is_builtin(f.type_name):
        src = leaf_source(f)
        what = f"{src} copy" if src else f"{f.type_name} literal"
    else:
        what = f"{f.type_name} constructor"
    if f.cardinality == SEQUENCE:
        what += " or reduce (sequence)"
    elif f.cardinality == OPTIONAL:
        what += " or reduce (optional)"
    return f"{what} for field {where}"


def check_action(state: DecoderState, action, grammar: Grammar, input=None) -> str | None:
    """Return ``None`` if ``action`` is structurally legal, else the violated constraint."""
    if state.done:
        return "tree is already complete"
    return _check_slot(pending_slot(state, grammar), action, grammar, input)


def _check_slot(slot: Slot, action, grammar: Grammar, input) -> str | None:
    f = slot.field
    if isinstance(action, Reduce):
        if f.cardinality == SINGLE:
            return _describe(slot, grammar)
        return None
    if isinstance(action, ApplyRule):
        if Grammar.is_builtin(f.type_name) or not grammar.has_constructor(action.constructor):
            return _describe(slot, grammar)
        if grammar.type_of(action.constructor) != f.type_name:
            return _describe(slot, grammar)
        return None
    if not Grammar.is_builtin(f.type_name):
        return _describe(slot, grammar)
    src = leaf_source(f)
    if isinstance(action, GenLiteral):
        if src is not None or action.kind != f.type_name:
            return _describe(slot, grammar)
        if not action.token:
            return "literal must be non-empty"
        return None
    if isinstance(action, CopyQuestion):
        if src is not None:
            return _describe(slot, grammar)
        if input is not None and not 0 <= action.position < input.question_length:
            return f"question position {action.position} out of range"
        return None
    if isinstance(action, CopyTable):
        if src != "table":
            return _describe(slot, grammar)
        if input is not None and not 0 <= action.table_id < input.table_count:
            return f"table id {action.table_id} out of range"
        return None
    if isinstance(action, CopyColumn):
        if src != "column":
            return _describe(slot, grammar)
        if input is not None and not 0 <= action.column_id < input.column_count:
            return f"column id {action.column_id} out of range"
        return None
    return f"unknown action {action!r}"


def step(state: DecoderState, action, grammar: Grammar, input=None) -> DecoderState:
    """Successor state after ``action``; raises :class:`IllegalActionError` if illegal."""
    if state.done:
        raise IllegalActionError(len(state.emitted) + 1, action, "tree is already complete")
    slot = pending_slot(state, grammar)
    problem = _check_slot(slot, action, grammar, input)
    if problem is not None:
        raise IllegalActionError(len(state.emitted) + 1, action, problem)
    frames = list(state.frontier)
    top = frames[-1]
    f = slot.field
    if isinstance(action, Reduce):
        top = Frame(top.constructor, top.field_index + 1, 0, top.step, top.n_children + 1)
    elif f.cardinality == SEQUENCE:
        top = Frame(top.constructor, top.field_index, top.seq_count + 1, top.step, top.n_children + 1)
    else:
        top = Frame(top.constructor, top.field_index + 1, top.seq_count, top.step, top.n_children + 1)
    frames[-1] = top
    if isinstance(action, ApplyRule) and grammar.constructor(action.constructor).fields:
        frames.append(Frame(action.constructor, 0, 0, len(state.emitted), 0))
    while frames and frames[-1].field_index == len(_frame_fields(frames[-1], grammar)):
        frames.pop()
    return DecoderState(tuple(frames), state.emitted + (action,), state.slots + (slot,))


# ---------------------------------------------------------------------------
# Vocabulary and allowed actions


@dataclass(frozen=True)
class ActionVocabulary:
    entries: tuple[tuple[str, str], ...] = ()
    min_count: int = 5

    def tokens(self, kind: str) -> list[str]:
        return [tok for k, tok in self.entries if k == kind]

    def __contains__(self, item) -> bool:
        return tuple(item) in set(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> dict:
        return {"min_count": self.min_count, "entries": [list(e) for e in self.entries]}

    @classmethod
    def from_json(cls, data: dict) -> "ActionVocabulary":
        return cls(tuple((k, t) for k, t in data["entries"]), data["min_count"])


def _literal_fields(tree: AstNode, grammar: Grammar):
    for n in tree.walk():
        con = grammar.constructor(n.constructor)
        for f in con.fields:
            if not Grammar.is_builtin(f.type_name) or leaf_source(f) is not None:
                continue
            v = n[f.name]
            for lit in v if isinstance(v, tuple) else (v,):
                if isinstance(lit, Literal):
                    yield lit


def build_vocabulary(corpus: Iterable[AstNode], grammar: Grammar, min_count: int = 5) -> ActionVocabulary:
    """Literal tokens generated at least ``min_count`` times across ``corpus``.

    Schema-reference leaves are excluded: they are always copied.
    """
    counts: Counter = Counter()
    for tree in corpus:
        for lit in _literal_fields(tree, grammar):
            counts[(lit.kind, lit.value)] += 1
    entries = sorted(e for e, c in counts.items() if c >= min_count)
    return ActionVocabulary(tuple(entries), min_count)


def allowed_actions(state: DecoderState, grammar: Grammar, vocab: ActionVocabulary | None = None,
                    input=None) -> frozenset:
    """Every action that keeps the sequence extendable to a complete valid tree."""
    if state.done:
        raise TransitionError("no actions are allowed after completion")
    f = pending_slot(state, grammar).field
    out: set = set()
    if f.cardinality != SINGLE:
        out.add(Reduce())
    if not Grammar.is_builtin(f.type_name):
        out.update(ApplyRule(c.name) for c in grammar.constructors_of(f.type_name))
        return frozenset(out)
    src = leaf_source(f)
    if src is not None:
        if input is None:
            raise TransitionError(f"field {f.name!r} copies from the schema; an encoded input is required")
        if src == "table":
            out.update(CopyTable(t) for t in range(input.table_count))
        else:
            out.update(CopyColumn(c) for c in range(input.column_count))
        return frozenset(out)
    if vocab is not None:
        out.update(GenLiteral(f.type_name, tok) for tok in vocab.tokens(f.type_name))
    if input is not None:
        out.update(CopyQuestion(i) for i in range(input.question_length))
    return frozenset(out)


# ---------------------------------------------------------------------------
# Serialization


def serialize(tree: AstNode, grammar: Grammar, input=None) -> list[Action]:
    """Depth-first, left-to-right action sequence for ``tree``.

    Without ``input`` every literal becomes ``GenLiteral``.  With an encoded
    input, schema references become table/column copies and other literals are
    copied from the first question token equal to them when one exists.
    """
    out: list[Action] = []
    _ser(tree, grammar.root_type, "", grammar, input, out)
    return out


def _ser(value, type_name: str, fname: str, grammar: Grammar, input, out: list) -> None:
    if Grammar.is_builtin(type_name):
        out.append(_literal_action(value, Field(fname, type_name), input))
        return
    out.append(ApplyRule(value.constructor))
    for f in grammar.constructor(value.constructor).fields:
        v = value[f.name]
        if f.cardinality == SINGLE:
            _ser(v, f.type_name, f.name, grammar, input, out)
        elif f.cardinality == OPTIONAL:
            if v is None:
                out.append(Reduce())
            else:
                _ser(v, f.type_name, f.name, grammar, input, out)
        else:
            for item in v:
                _ser(item, f.type_name, f.name, grammar, input, out)
            out.append(Reduce())


def _literal_action(lit: Literal, f: Field, input):
    if not isinstance(lit, Literal) or not lit.value:
        raise LiteralError(f"field {f.name!r}: literal {lit!r} is not representable")
    if input is None:
        return GenLiteral(lit.kind, lit.value)
    src = leaf_source(f)
    schema = input.schema
    if src == "table":
        try:
            return CopyTable(schema.table_id(lit.value))
        except KeyError:
            raise LiteralError(f"table {lit.value!r} is not in the schema") from None
    if src == "column":
        try:
            return CopyColumn(schema.resolve_qualified(lit.value))
        except KeyError:
            raise LiteralError(f"column {lit.value!r} is not in the schema") from None
    for i, tok in enumerate(input.question_tokens):
        if tok == lit.value:
            return CopyQuestion(i)
    return GenLiteral(lit.kind, lit.value)


def literal_of(action, kind: str, input) -> Literal:
    """The literal produced by a literal action."""
    if isinstance(action, GenLiteral):
        return Literal(action.kind, action.token)
    if input is None:
        raise TransitionError(f"{action} needs the encoded input to resolve")
    if isinstance(action, CopyQuestion):
        return Literal(kind, input.question_tokens[action.position])
    if isinstance(action, CopyTable):
        return Literal(kind, input.schema.tables[action.table_id].name.lower())
    return Literal(kind, input.schema.qualified_name(action.column_id))


def replay(actions: Sequence, grammar: Grammar, input=None) -> DecoderState:
    state = initial_state(grammar)
    for a in actions:
        if state.done:
            raise TrailingActionsError(
                f"{len(actions) - len(state.emitted)} action(s) after the tree was complete"
            )
        state = step(state, a, grammar, input)
    return state


def deserialize(actions: Sequence, grammar: Grammar, input=None) -> AstNode:
    """Rebuild the tree; inverse of :func:`serialize` on its image."""
    state = replay(actions, grammar, input)
    if not state.done:
        raise IncompleteTreeError(
            f"action sequence ended after {len(actions)} step(s) with "
            f"{len(state.frontier)} open frame(s)"
        )
    tree, _ = _build(list(actions), 0, grammar.root_type, grammar, input)
    return tree


def _build(actions: list, i: int, type_name: str, grammar: Grammar, input):
    """Build the subtree starting at ``actions[i]``; returns it and the next index."""
    a = actions[i]
    i += 1
    if Grammar.is_builtin(type_name):
        return literal_of(a, type_name, input), i
    kids = {}
    for f in grammar.constructor(a.constructor).fields:
        if f.cardinality == SINGLE:
            kids[f.name], i = _build(actions, i, f.type_name, grammar, input)
        elif f.cardinality == OPTIONAL:
            if isinstance(actions[i], Reduce):
                kids[f.name], i = None, i + 1
            else:
                kids[f.name], i = _build(actions, i, f.type_name, grammar, input)
        else:
            items = []
            while not isinstance(actions[i], Reduce):
                item, i = _build(actions, i, f.type_name, grammar, input)
                items.append(item)
            kids[f.name], i = tuple(items), i + 1
    return make_node(grammar, a.constructor, **kids), i


# ---------------------------------------------------------------------------
# Random rollouts


def min_heights(grammar: Grammar) -> dict[str, int]:
    """Minimum number of nested constructors needed to complete each type."""
    h = {t: float("inf") for t in grammar.types}
    for b in ("identifier", "int", "string"):
        h[b] = 0
    changed = True
    while changed:
        changed = False
        for tdef in grammar.types.values():
            for con in tdef.constructors:
                need = [h[f.type_name] for f in con.fields if f.cardinality == SINGLE]
                val = 1 + max(need, default=0)
                if val < h[tdef.name]:
                    h[tdef.name] = val
                    changed = True
    return h


def _con_height(con, h) -> float:
    return 1 + max((h[f.type_name] for f in con.fields if f.cardinality == SINGLE), default=0)


def _order_key(a) -> tuple:
    # any fixed total order works; sets iterate in hash order
    return (type(a).__name__, *a.__dict__.values())


def random_rollout(grammar: Grammar, rng: np.random.Generator, vocab: ActionVocabulary | None = None,
                   input=None, max_depth: int = 6, max_seq: int = 3,
                   literal_fallback: str = "x") -> list:
    """Sample uniformly from the allowed actions until the tree is complete.

    Past ``max_depth`` open frames only the shallowest completions are kept and
    sequences longer than ``max_seq`` are closed, so every rollout terminates.
    """
    h = min_heights(grammar)
    state = initial_state(grammar)
    while not state.done:
        allowed = allowed_actions(state, grammar, vocab, input)
        slot = pending_slot(state, grammar)
        f = slot.field
        depth = len(state.frontier)
        choices = sorted(allowed, key=_order_key)
        if f.cardinality == SEQUENCE and state.frontier[-1].seq_count >= max_seq:
            choices = [Reduce()]
        elif depth >= max_depth:
            if Reduce() in allowed:
                choices = [Reduce()]
            elif not Grammar.is_builtin(f.type_name):
                cons = [a for a in choices if isinstance(a, ApplyRule)]
                best = min(_con_height(grammar.constructor(a.constructor), h) for a in cons)
                choices = [a for a in cons if _con_height(grammar.constructor(a.constructor), h) == best]
        if not choices:
            # builtin leaf with an empty vocabulary and no input to copy from
            choices = [GenLiteral(f.type_name, literal_fallback)]
        state = step(state, choices[rng.integers(len(choices))], grammar, input)
    return list(state.emitted)


# ---------------------------------------------------------------------------
# Output space of the decoder


class ActionSpace:
    """Indexes decoder outputs: grammar actions and vocabulary literals first,
    then one pointer slot per memory position of the encoded input."""

    def __init__(self, grammar: Grammar, vocab: ActionVocabulary):
        self.grammar = grammar
        self.vocab = vocab
        actions: list = [ApplyRule(c) for c in grammar.constructor_names]
        actions.append(Reduce())
        actions.extend(GenLiteral(k, t) for k, t in vocab.entries)
        self.leaf_kinds = ("identifier", "int", "string")
        actions.extend(GenLiteral(k, UNK) for k in self.leaf_kinds)
        self.actions = actions
        self.index = {a: i for i, a in enumerate(actions)}

    @property
    def size(self) -> int:
        return len(self.actions)

    def encode(self, action, input) -> int:
        """Output index of ``action``; unknown generated literals map to ``<unk>``."""
        if isinstance(action, GenLiteral) and action not in self.index:
            action = GenLiteral(action.kind, UNK)
        if isinstance(action, COPY_ACTIONS):
            return self.size + input.position_of(action)
        return self.index[action]

    def decode(self, idx: int, input):
        if idx < self.size:
            return self.actions[idx]
        return input.copy_action(idx - self.size)

    def mask(self, allowed: Iterable, input) -> np.ndarray:
        m = np.zeros(self.size + len(input.positions), dtype=bool)
        for a in allowed:
            m[self.encode(a, input)] = True
        return m
