"""Relation-label matrices for encoder, decoder and memory attention.

Every position pair gets exactly one label id.  Encoder pairs are labelled by
precedence: key relations over table-column relations over schema linking
over relative distance, and the typed default when nothing applies.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .linking import HIGH, NAME_COLUMN, NAME_TABLE, VALUE_COLUMN, LinkMatch
from .schema import Schema
from .transitions import CopyColumn, CopyQuestion, CopyTable, DecoderState, Slot, pending_slot

Q, T, C = "Q", "T", "C"
KIND_CODES = {"question": Q, "table": T, "column": C}
CONFIDENCES = ("high", "low")

COLUMN_TABLE = "column-table"
TABLE_COLUMN_NESTED = "table-column-nested"
ORDERINGS = (COLUMN_TABLE, TABLE_COLUMN_NESTED)


@dataclass(frozen=True)
class RelationConfig:
    nbsl: bool = True
    cbsl: bool = True
    table_column: bool = True
    keys: bool = True
    ast: bool = True
    copied_from: bool = True
    q_to_s: bool = True
    s_to_q: bool = True
    horizon: int = 8


class RelationSchema:
    """Dense label ids for every relation of the encoder, decoder and memory.

    With horizon ``D`` there are ``R = 8 * D + 46`` labels: three encoder
    distance families and one sibling-distance family of ``2D + 1`` labels
    each, plus 42 fixed labels.
    """

    def __init__(self, horizon: int = 8):
        if horizon < 0:
            raise ValueError("horizon must be non-negative")
        self.horizon = horizon
        d_range = range(-horizon, horizon + 1)
        labels: list[str] = []
        for pair in ("Q→Q", "C→C", "T→T"):
            labels += [f"{pair} Distance {d}" for d in d_range]
        labels += [
            "C→C Table Match",
            "C→T Any Table",
            "C→T Table Match",
            "T→C Any Table",
            "T→C Table Match",
            "C→C Foreign-Key Forward",
            "C→C Foreign-Key Backward",
            "C→T Foreign-Key",
            "C→T Primary-Key",
            "T→C Foreign-Key",
            "T→C Primary-Key",
            "T→T Foreign-Key Forward",
            "T→T Foreign-Key Backward",
            "T→T Foreign-Key Bidirectional",
        ]
        for pair in ("Q→C", "Q→T", "C→Q", "T→Q"):
            labels += [f"{pair} Name-based Match {c}" for c in CONFIDENCES]
        for pair in ("Q→C", "C→Q"):
            labels += [f"{pair} Content-based Match {c}" for c in CONFIDENCES]
        labels += [f"{a}→{b} Default" for a in (Q, C, T) for b in (Q, C, T)]
        labels.append("Default")
        labels += ["Parent-Child", "Child-Parent", "Identity"]
        labels += [f"Sibling-Distance {d}" for d in d_range]
        labels.append("Decoder Default")
        labels += ["Copied-From", "Memory Default"]
        self.labels = tuple(labels)
        self.ids = {name: i for i, name in enumerate(labels)}
        assert len(labels) == self.closed_form(horizon)

    @staticmethod
    def closed_form(horizon: int) -> int:
        return 8 * horizon + 46

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, name: str) -> int:
        return self.ids[name]

    def name(self, label_id: int) -> str:
        return self.labels[label_id]

    def distance(self, pair: str, d: int) -> int:
        d = max(-self.horizon, min(self.horizon, d))
        return self.ids[f"{pair} Distance {d}"]

    def sibling(self, d: int) -> int:
        d = max(-self.horizon, min(self.horizon, d))
        return self.ids[f"Sibling-Distance {d}"]

    def typed_default(self, a: str, b: str) -> int:
        return self.ids[f"{a}→{b} Default"]

    @property
    def padding(self) -> int:
        return self.ids["Default"]

    @property
    def decoder_padding(self) -> int:
        return self.ids["Decoder Default"]

    @property
    def memory_padding(self) -> int:
        return self.ids["Memory Default"]


# ---------------------------------------------------------------------------
# Layout


@dataclass(frozen=True)
class EncodedInput:
    """Order of the encoder's memory positions: question tokens, then schema."""

    positions: tuple[tuple[str, int], ...]
    question_tokens: tuple[str, ...]
    schema: Schema
    ordering: str = COLUMN_TABLE
    _where: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        for p, key in enumerate(self.positions):
            self._where[key] = p

    @property
    def question_length(self) -> int:
        return len(self.question_tokens)

    @property
    def table_count(self) -> int:
        return len(self.schema.tables)

    @property
    def column_count(self) -> int:
        return self.schema.num_columns

    def __len__(self) -> int:
        return len(self.positions)

    def position(self, kind: str, payload: int) -> int:
        return self._where[(kind, payload)]

    def position_of(self, action) -> int:
        if isinstance(action, CopyQuestion):
            return self._where[("question", action.position)]
        if isinstance(action, CopyTable):
            return self._where[("table", action.table_id)]
        if isinstance(action, CopyColumn):
            return self._where[("column", action.column_id)]
        raise TypeError(f"{action!r} is not a copy action")

    def copy_action(self, position: int):
        kind, payload = self.positions[position]
        return {"question": CopyQuestion, "table": CopyTable, "column": CopyColumn}[kind](payload)

    def kinds(self) -> list[str]:
        return [KIND_CODES[k] for k, _ in self.positions]

    def describe(self, position: int) -> str:
        kind, i = self.positions[position]
        if kind == "question":
            return f"Q{i}:{self.question_tokens[i]}"
        if kind == "table":
            return f"T{i}:{self.schema.tables[i].name.lower()}"
        return f"C{i}:{self.schema.qualified_name(i)}"


def build_layout(schema: Schema, question_tokens: Sequence[str], ordering: str = COLUMN_TABLE,
                 shuffle_seed: int | None = None) -> EncodedInput:
    """Lay out question tokens followed by schema elements.

    ``column-table`` puts every column before every table; ``table-column-nested``
    follows each table with its own columns.  A ``shuffle_seed`` permutes table
    order and the column order inside each table.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}; expected one of {ORDERINGS}")
    tables = list(range(len(schema.tables)))
    cols_of = {t: schema.table_columns(t) for t in tables}
    if shuffle_seed is not None:
        rng = np.random.default_rng(shuffle_seed)
        tables = [tables[i] for i in rng.permutation(len(tables))]
        for t in sorted(cols_of):
            cols = cols_of[t]
            cols_of[t] = [cols[i] for i in rng.permutation(len(cols))]
    positions = [("question", i) for i in range(len(question_tokens))]
    if ordering == COLUMN_TABLE:
        positions += [("column", c) for t in tables for c in cols_of[t]]
        positions += [("table", t) for t in tables]
    else:
        for t in tables:
            positions.append(("table", t))
            positions += [("column", c) for c in cols_of[t]]
    return EncodedInput(tuple(positions), tuple(question_tokens), schema, ordering)


# ---------------------------------------------------------------------------
# Encoder relations


@dataclass
class RelationMatrix:
    ids: np.ndarray
    attention_mask: np.ndarray | None = None

    def names(self, rs: RelationSchema) -> list[list[str]]:
        return [[rs.name(int(i)) for i in row] for row in self.ids]


def segment_mask(input: EncodedInput, cfg: RelationConfig) -> np.ndarray:
    """Boolean attention mask between the question and schema segments."""
    is_q = np.array([k == "question" for k, _ in input.positions])
    is_s = ~is_q
    mask = np.ones((len(input), len(input)), dtype=bool)
    if not cfg.q_to_s:
        mask[np.ix_(is_q, is_s)] = False
    if not cfg.s_to_q:
        mask[np.ix_(is_s, is_q)] = False
    return mask


def encoder_relations(input: EncodedInput, links: Iterable[LinkMatch], cfg: RelationConfig = RelationConfig(),
                      rs: RelationSchema | None = None) -> RelationMatrix:
    rs = rs or RelationSchema(cfg.horizon)
    schema = input.schema
    n = len(input)
    kinds = np.array(input.kinds())
    ids = np.empty((n, n), dtype=np.int64)
    for a in (Q, C, T):
        for b in (Q, C, T):
            ids[np.ix_(kinds == a, kinds == b)] = rs.typed_default(a, b)

    # relative distances within each kind, by order of appearance
    for k, pair in ((Q, "Q→Q"), (C, "C→C"), (T, "T→T")):
        idx = np.flatnonzero(kinds == k)
        rank = np.arange(len(idx))
        dist = np.clip(rank[None, :] - rank[:, None], -rs.horizon, rs.horizon)
        table = np.array([rs.distance(pair, d) for d in range(-rs.horizon, rs.horizon + 1)])
        ids[np.ix_(idx, idx)] = table[dist + rs.horizon]

    # schema linking: low before high, content before name; later writes win
    links = list(links)
    for m in links:
        if not (0 <= m.start < m.end <= input.question_length):
            raise ValueError(f"link span [{m.start}, {m.end}) outside question of length {input.question_length}")
        limit = input.table_count if m.target_kind == "table" else input.column_count
        if not 0 <= m.target < limit:
            raise ValueError(f"link target {m.target_kind} {m.target} out of range")
    ordered = sorted(links, key=lambda m: (m.confidence == HIGH, m.kind != VALUE_COLUMN))
    for m in ordered:
        if m.kind == VALUE_COLUMN and not cfg.cbsl:
            continue
        if m.kind in (NAME_TABLE, NAME_COLUMN) and not cfg.nbsl:
            continue
        tgt = input.position(m.target_kind, m.target)
        code = T if m.target_kind == "table" else C
        what = "Content-based" if m.kind == VALUE_COLUMN else "Name-based"
        for qi in range(m.start, m.end):
            qp = input.position("question", qi)
            ids[qp, tgt] = rs[f"Q→{code} {what} Match {m.confidence}"]
            ids[tgt, qp] = rs[f"{code}→Q {what} Match {m.confidence}"]

    col_pos = {c: input.position("column", c) for c in range(input.column_count)}
    tab_pos = {t: input.position("table", t) for t in range(input.table_count)}
    owner = schema.column_table

    if cfg.table_column:
        for t in range(input.table_count):
            cols = [col_pos[c] for c in schema.table_columns(t)]
            ids[np.ix_(cols, cols)] = rs["C→C Table Match"]
        for c, cp in col_pos.items():
            tp = tab_pos[owner[c]]
            wild = schema.column_list[c].is_wildcard
            ids[cp, tp] = rs["C→T Any Table" if wild else "C→T Table Match"]
            ids[tp, cp] = rs["T→C Any Table" if wild else "T→C Table Match"]

    if cfg.keys:
        for pk in schema.primary_keys:
            ids[col_pos[pk], tab_pos[owner[pk]]] = rs["C→T Primary-Key"]
            ids[tab_pos[owner[pk]], col_pos[pk]] = rs["T→C Primary-Key"]
        table_links = set()
        for src, dst in schema.foreign_keys:
            ids[col_pos[dst], col_pos[src]] = rs["C→C Foreign-Key Backward"]
        for src, dst in schema.foreign_keys:
            ids[col_pos[src], col_pos[dst]] = rs["C→C Foreign-Key Forward"]
            ids[col_pos[src], tab_pos[owner[dst]]] = rs["C→T Foreign-Key"]
            ids[tab_pos[owner[dst]], col_pos[src]] = rs["T→C Foreign-Key"]
            table_links.add((owner[src], owner[dst]))
        for a, b in table_links:
            if (b, a) in table_links:
                ids[tab_pos[a], tab_pos[b]] = rs["T→T Foreign-Key Bidirectional"]
            else:
                ids[tab_pos[a], tab_pos[b]] = rs["T→T Foreign-Key Forward"]
                ids[tab_pos[b], tab_pos[a]] = rs["T→T Foreign-Key Backward"]

    return RelationMatrix(ids, segment_mask(input, cfg))


# ---------------------------------------------------------------------------
# Decoder self-attention relations


def _pair_label(si: Slot, sj: Slot, i: int, j: int, rs: RelationSchema) -> int:
    if i == j:
        return rs["Identity"]
    if sj.parent_step == i:
        return rs["Parent-Child"]
    if si.parent_step == j:
        return rs["Child-Parent"]
    if si.parent_step == sj.parent_step:
        return rs.sibling(sj.sibling_index - si.sibling_index)
    return rs.decoder_padding


def decoder_slots(state: DecoderState, grammar=None, include_pending: bool = True) -> list[Slot]:
    slots = list(state.slots)
    if include_pending and not state.done and grammar is not None:
        slots.append(pending_slot(state, grammar))
    return slots


def decoder_relations(slots: Sequence[Slot] | DecoderState, cfg: RelationConfig = RelationConfig(),
                      rs: RelationSchema | None = None, grammar=None) -> RelationMatrix:
    """Labels between decoding steps from the AST structure of their slots.

    ``slots`` is one entry per step (pass a :class:`DecoderState` plus
    ``grammar`` to include the pending step).
    """
    rs = rs or RelationSchema(cfg.horizon)
    if isinstance(slots, DecoderState):
        slots = decoder_slots(slots, grammar)
    n = len(slots)
    if not cfg.ast:
        return RelationMatrix(np.full((n, n), rs.decoder_padding, dtype=np.int64))
    ids = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            ids[i, j] = _pair_label(slots[i], slots[j], i, j, rs)
    return RelationMatrix(ids)


class IncrementalDecoderRelations:
    """Grows the decoder relation matrix one step at a time."""

    def __init__(self, cfg: RelationConfig = RelationConfig(), rs: RelationSchema | None = None,
                 capacity: int = 64):
        self.cfg = cfg
        self.rs = rs or RelationSchema(cfg.horizon)
        self.slots: list[Slot] = []
        self._ids = np.full((capacity, capacity), self.rs.decoder_padding, dtype=np.int64)

    def append(self, slot: Slot) -> None:
        t = len(self.slots)
        if t == len(self._ids):
            grown = np.full((2 * t, 2 * t), self.rs.decoder_padding, dtype=np.int64)
            grown[:t, :t] = self._ids
            self._ids = grown
        self.slots.append(slot)
        if self.cfg.ast:
            for j in range(t + 1):
                self._ids[t, j] = _pair_label(slot, self.slots[j], t, j, self.rs)
                self._ids[j, t] = _pair_label(self.slots[j], slot, j, t, self.rs)

    @property
    def ids(self) -> np.ndarray:
        n = len(self.slots)
        return self._ids[:n, :n]


# ---------------------------------------------------------------------------
# Memory relations


def memory_relations(actions: Sequence, input: EncodedInput, cfg: RelationConfig = RelationConfig(),
                     rs: RelationSchema | None = None) -> RelationMatrix:
    """Row ``s`` marks the input position copied by action ``s`` (if any)."""
    rs = rs or RelationSchema(cfg.horizon)
    ids = np.full((len(actions), len(input)), rs.memory_padding, dtype=np.int64)
    if cfg.copied_from:
        for s, a in enumerate(actions):
            if isinstance(a, (CopyQuestion, CopyTable, CopyColumn)):
                ids[s, input.position_of(a)] = rs["Copied-From"]
    return RelationMatrix(ids)


# ---------------------------------------------------------------------------
# Debug dump


def dump_csv(matrix: RelationMatrix, rs: RelationSchema, row_names: Sequence[str],
             col_names: Sequence[str] | None = None) -> str:
    """Relation matrix as CSV of label names, with a header row and column."""
    col_names = row_names if col_names is None else col_names
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(col_names))
    for name, row in zip(row_names, matrix.ids):
        w.writerow([name] + [rs.name(int(i)) for i in row])
    return buf.getvalue()
