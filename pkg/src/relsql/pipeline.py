"""Turns (question, SQL, schema) examples into the arrays the model consumes."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grammar import AstNode, Grammar
from .linking import LinkConfig, link, normalize, tokenize_question
from .relations import (
    COLUMN_TABLE,
    EncodedInput,
    RelationConfig,
    RelationSchema,
    build_layout,
    decoder_relations,
    encoder_relations,
)
from .schema import ContentIndex, Schema
from .sqlkit import parse_sql
from .transitions import (
    ROOT_FIELD_NAME,
    ActionSpace,
    ActionVocabulary,
    CopyColumn,
    CopyQuestion,
    CopyTable,
    allowed_actions,
    initial_state,
    serialize,
    step,
)

log = logging.getLogger(__name__)

PAD, CLS, UNK_CHAR = "[PAD]", "[CLS]", "[UNK]"
MAX_CHARS = 12


# ---------------------------------------------------------------------------
# Input vocabularies


def schema_words(schema: Schema) -> list[str]:
    out = []
    for t in schema.tables:
        out += normalize(t.display_name).split()
    for c in schema.column_list:
        out += ["*"] if c.is_wildcard else normalize(c.display_name).split()
        out.append(c.data_type)
    return out


@dataclass
class TokenVocab:
    """Words seen in training plus single characters for the out-of-vocabulary fallback."""

    words: list[str]
    chars: list[str]
    _w: dict = field(default_factory=dict, repr=False)
    _c: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._w = {w: i for i, w in enumerate(self.words)}
        self._c = {c: i for i, c in enumerate(self.chars)}

    def __len__(self) -> int:
        return len(self.words) + len(self.chars)

    def bag(self, token: str) -> list[tuple[int, float]]:
        """Embedding rows and weights for ``token``."""
        tok = token.lower()
        if tok in self._w:
            return [(self._w[tok], 1.0)]
        chars = list(tok[:MAX_CHARS]) or [UNK_CHAR]
        w = 1.0 / len(chars)
        unk = self._c[UNK_CHAR]
        return [(len(self.words) + self._c.get(ch, unk), w) for ch in chars]

    def to_json(self) -> dict:
        return {"words": self.words, "chars": self.chars}

    @classmethod
    def from_json(cls, d: dict) -> "TokenVocab":
        return cls(list(d["words"]), list(d["chars"]))


def build_token_vocab(questions: Sequence[Sequence[str]], schemas: Sequence[Schema], min_count: int = 2) -> TokenVocab:
    counts: Counter = Counter()
    chars: set = set()
    for toks in questions:
        for t in toks:
            counts[t.lower()] += 1
            chars.update(t.lower())
    for s in schemas:
        for w in schema_words(s):
            counts[w] += min_count  # schema words are always kept
            chars.update(w)
    words = [PAD, CLS] + sorted(w for w, n in counts.items() if n >= min_count and w not in (PAD, CLS))
    return TokenVocab(words, [UNK_CHAR] + sorted(chars))


@dataclass
class DecoderVocab:
    """Index spaces for the decoder input embeddings."""

    n_actions: int  # grammar/vocabulary outputs; copies embed by kind
    fields: list[tuple[str, str]]
    types: list[str]

    def __post_init__(self):
        self.field_index = {f: i for i, f in enumerate(self.fields)}
        self.type_index = {t: i for i, t in enumerate(self.types)}

    @property
    def copy_question(self) -> int:
        return self.n_actions

    @property
    def copy_table(self) -> int:
        return self.n_actions + 1

    @property
    def copy_column(self) -> int:
        return self.n_actions + 2

    @property
    def start(self) -> int:
        return self.n_actions + 3

    @property
    def n_action_embeddings(self) -> int:
        return self.n_actions + 4

    @classmethod
    def build(cls, grammar: Grammar, space: ActionSpace) -> "DecoderVocab":
        fields = [("", ROOT_FIELD_NAME)]
        for name in grammar.constructor_names:
            fields += [(name, f.name) for f in grammar.constructor(name).fields]
        types = sorted(grammar.types) + ["identifier", "int", "string"]
        return cls(space.size, fields, types)

    def action_id(self, action, space: ActionSpace, input) -> int:
        if isinstance(action, CopyQuestion):
            return self.copy_question
        if isinstance(action, CopyTable):
            return self.copy_table
        if isinstance(action, CopyColumn):
            return self.copy_column
        return space.encode(action, input)

    def slot_ids(self, slot) -> tuple[int, int]:
        return self.field_index[(slot.constructor or "", slot.field.name)], self.type_index[slot.field.type_name]


# ---------------------------------------------------------------------------
# Featurized examples


@dataclass
class Featurized:
    input: EncodedInput
    db_id: str
    tree: AstNode | None
    # stage 1
    s1_bags: list  # per token: [(row, weight), ...]
    s1_seg: np.ndarray  # 0 question, 1 schema
    gather: np.ndarray  # memory position -> stage-1 index
    enc_rel: np.ndarray
    # decoder (teacher forcing); None when no gold tree
    actions: list | None = None
    targets: np.ndarray | None = None
    prev: np.ndarray | None = None
    field_ids: np.ndarray | None = None
    type_ids: np.ndarray | None = None
    dec_rel: np.ndarray | None = None
    mem_rel: np.ndarray | None = None
    valid: np.ndarray | None = None  # allowed outputs per step


@dataclass
class Featurizer:
    grammar: Grammar
    space: ActionSpace
    tokens: TokenVocab
    dvocab: DecoderVocab
    rel_cfg: RelationConfig = RelationConfig()
    ordering: str = COLUMN_TABLE
    shuffle_seed: int | None = None
    max_input_len: int = 256
    link_cfg: LinkConfig = LinkConfig()

    def __post_init__(self):
        self.rs = RelationSchema(self.rel_cfg.horizon)

    def layout(self, question: str, schema: Schema, index: int = 0) -> EncodedInput:
        seed = None if self.shuffle_seed is None else self.shuffle_seed + index
        return build_layout(schema, tokenize_question(question), self.ordering, seed)

    def stage1(self, inp: EncodedInput):
        """Stage-1 token bags and segment ids, and the memory gather index."""
        schema = inp.schema
        pieces: list[list[str]] = [[CLS] + list(inp.question_tokens)]
        for kind, i in inp.positions[inp.question_length:]:
            if kind == "table":
                pieces.append([CLS] + normalize(schema.tables[i].display_name).split())
            else:
                col = schema.column_list[i]
                name = ["*"] if col.is_wildcard else normalize(col.display_name).split()
                pieces.append([CLS, col.data_type] + name)
        total = sum(map(len, pieces))
        if total > self.max_input_len:
            log.warning("input of %d tokens truncated to %d", total, self.max_input_len)
            pieces = _truncate(pieces, self.max_input_len)
        toks, seg, gather = [], [], []
        for k, piece in enumerate(pieces):
            if k == 0:
                gather += list(range(1, len(piece)))
            else:
                gather.append(len(toks))
            toks += piece
            seg += [0 if k == 0 else 1] * len(piece)
        if len(gather) != len(inp):
            raise ValueError("input is too long to keep every memory position")
        bags = [self.tokens.bag(t) if t != CLS else [(self.tokens._w[CLS], 1.0)] for t in toks]
        return bags, np.array(seg, dtype=np.int64), np.array(gather, dtype=np.int64)

    def encode_input(self, question: str, schema: Schema, content: ContentIndex | None, index: int = 0):
        inp = self.layout(question, schema, index)
        links = link(list(inp.question_tokens), schema, content, self.link_cfg)
        rel = encoder_relations(inp, links, self.rel_cfg, self.rs)
        bags, seg, gather = self.stage1(inp)
        return inp, rel.ids, bags, seg, gather

    def featurize(self, question: str, schema: Schema, content: ContentIndex | None, sql: str | None = None,
                  index: int = 0, tree: AstNode | None = None) -> Featurized:
        inp, enc_rel, bags, seg, gather = self.encode_input(question, schema, content, index)
        if tree is None and sql is not None:
            tree = parse_sql(sql, schema, self.grammar)
        f = Featurized(inp, schema.db_id, tree, bags, seg, gather, enc_rel)
        if tree is not None:
            self._teacher(f, serialize(tree, self.grammar, inp))
        return f

    def _teacher(self, f: Featurized, actions: list) -> None:
        inp, space, dv = f.input, self.space, self.dvocab
        n = len(actions)
        state = initial_state(self.grammar)
        valid = np.zeros((n, space.size + len(inp)), dtype=bool)
        for t, a in enumerate(actions):
            valid[t] = space.mask(allowed_actions(state, self.grammar, space.vocab, inp), inp)
            state = step(state, a, self.grammar, inp)
        f.actions = actions
        f.valid = valid
        f.targets = np.array([space.encode(a, inp) for a in actions], dtype=np.int64)
        f.prev = np.array([dv.start] + [dv.action_id(a, space, inp) for a in actions[:-1]], dtype=np.int64)
        ids = [dv.slot_ids(s) for s in state.slots]
        f.field_ids = np.array([i for i, _ in ids], dtype=np.int64)
        f.type_ids = np.array([j for _, j in ids], dtype=np.int64)
        f.dec_rel = decoder_relations(list(state.slots), self.rel_cfg, self.rs).ids
        f.mem_rel = self.memory_rows(actions[:-1], inp, n)

    def memory_rows(self, previous: list, inp: EncodedInput, n: int) -> np.ndarray:
        """Memory relations where row ``t`` reflects the action emitted before step ``t``."""
        out = np.full((n, len(inp)), self.rs.memory_padding, dtype=np.int64)
        if self.rel_cfg.copied_from:
            for t, a in enumerate(previous[: n - 1]):
                if isinstance(a, (CopyQuestion, CopyTable, CopyColumn)):
                    out[t + 1, inp.position_of(a)] = self.rs["Copied-From"]
        return out


def _truncate(pieces: list[list[str]], limit: int) -> list[list[str]]:
    pieces = [list(p) for p in pieces]
    # shorten schema names first (never their separator), then the question
    while sum(map(len, pieces)) > limit:
        longest = max(range(1, len(pieces)), key=lambda k: len(pieces[k]), default=None)
        if longest is not None and len(pieces[longest]) > 2:
            pieces[longest].pop()
        elif len(pieces[0]) > 1:
            pieces[0].pop()
        else:
            break
    return pieces


# ---------------------------------------------------------------------------
# Batching


@dataclass
class Batch:
    s1_idx: np.ndarray  # (B, L, K)
    s1_w: np.ndarray  # (B, L, K)
    s1_pos: np.ndarray  # (B, L)
    s1_seg: np.ndarray  # (B, L)
    s1_mask: np.ndarray  # (B, L, L)
    gather: np.ndarray  # (B, N)
    mem_real: np.ndarray  # (B, N)
    enc_rel: np.ndarray  # (B, N, N)
    enc_mask: np.ndarray  # (B, N, N)
    n_out: int  # action-space size (pointer logits follow)
    prev: np.ndarray | None = None  # (B, T)
    field_ids: np.ndarray | None = None
    type_ids: np.ndarray | None = None
    dec_rel: np.ndarray | None = None  # (B, T, T)
    dec_mask: np.ndarray | None = None  # (B, T, T)
    mem_rel: np.ndarray | None = None  # (B, T, N)
    mem_mask: np.ndarray | None = None  # (B, T, N)
    targets: np.ndarray | None = None  # (B, T)
    weights: np.ndarray | None = None  # (B, T)
    valid: np.ndarray | None = None  # (B, T, V + N), allowed outputs
    real_out: np.ndarray | None = None  # (B, T, V + N), every non-padding output


def stage1_mask(seg: np.ndarray, length: int, rel_cfg: RelationConfig) -> np.ndarray:
    """Attention mask for one padded stage-1 sequence."""
    n = len(seg)
    m = np.zeros((length, length), dtype=bool)
    is_q, is_s = seg == 0, seg == 1
    block = np.ones((n, n), dtype=bool)
    if not rel_cfg.q_to_s:
        block[np.ix_(is_q, is_s)] = False
    if not rel_cfg.s_to_q:
        block[np.ix_(is_s, is_q)] = False
    m[:n, :n] = block
    m[n:, :n] = True  # padding rows look at real tokens; their outputs are unused
    return m


def encoder_batch(items: Sequence[Featurized], rs: RelationSchema, rel_cfg: RelationConfig, n_out: int,
                  dtype=np.float32) -> Batch:
    b = len(items)
    L = max(len(f.s1_bags) for f in items)
    K = max(len(bag) for f in items for bag in f.s1_bags)
    N = max(len(f.input) for f in items)
    s1_idx = np.zeros((b, L, K), dtype=np.int64)
    s1_w = np.zeros((b, L, K), dtype=dtype)
    s1_seg = np.zeros((b, L), dtype=np.int64)
    s1_mask = np.zeros((b, L, L), dtype=bool)
    gather = np.zeros((b, N), dtype=np.int64)
    mem_real = np.zeros((b, N), dtype=bool)
    enc_rel = np.full((b, N, N), rs.padding, dtype=np.int64)
    for i, f in enumerate(items):
        for j, bag in enumerate(f.s1_bags):
            for k, (row, w) in enumerate(bag):
                s1_idx[i, j, k] = row
                s1_w[i, j, k] = w
        n1 = len(f.s1_bags)
        s1_seg[i, :n1] = f.s1_seg
        s1_mask[i] = stage1_mask(f.s1_seg, L, rel_cfg)
        n = len(f.input)
        gather[i, :n] = f.gather
        mem_real[i, :n] = True
        enc_rel[i, :n, :n] = f.enc_rel
    enc_mask = np.broadcast_to(mem_real[:, None, :], (b, N, N)).copy()
    s1_pos = np.broadcast_to(np.arange(L), (b, L)).copy()
    return Batch(s1_idx, s1_w, s1_pos, s1_seg, s1_mask, gather, mem_real, enc_rel, enc_mask, n_out)


def make_batch(items: Sequence[Featurized], rs: RelationSchema, rel_cfg: RelationConfig, n_out: int,
               dtype=np.float32) -> Batch:
    batch = encoder_batch(items, rs, rel_cfg, n_out, dtype)
    b, N = batch.gather.shape
    T = max(len(f.targets) for f in items)
    prev = np.zeros((b, T), dtype=np.int64)
    fid = np.zeros((b, T), dtype=np.int64)
    tid = np.zeros((b, T), dtype=np.int64)
    dec_rel = np.full((b, T, T), rs.decoder_padding, dtype=np.int64)
    mem_rel = np.full((b, T, N), rs.memory_padding, dtype=np.int64)
    targets = np.zeros((b, T), dtype=np.int64)
    weights = np.zeros((b, T), dtype=dtype)
    valid = np.zeros((b, T, n_out + N), dtype=bool)
    real_out = np.zeros((b, T, n_out + N), dtype=bool)
    dec_real = np.zeros((b, T), dtype=bool)
    for i, f in enumerate(items):
        t, n = len(f.targets), len(f.input)
        prev[i, :t] = f.prev
        fid[i, :t] = f.field_ids
        tid[i, :t] = f.type_ids
        dec_rel[i, :t, :t] = f.dec_rel
        mem_rel[i, :t, :n] = f.mem_rel
        targets[i, :t] = f.targets
        weights[i, :t] = 1.0
        valid[i, :t, : n_out + n] = f.valid
        valid[i, t:, 0] = True  # padding steps: any admissible entry, weight 0
        real_out[i, :, :n_out] = True
        real_out[i, :, n_out:n_out + n] = True
        dec_real[i, :t] = True
    causal = np.tril(np.ones((T, T), dtype=bool))
    batch.dec_mask = causal[None] & (dec_real[:, None, :] | ~dec_real[:, :, None])
    batch.mem_mask = np.broadcast_to(batch.mem_real[:, None, :], (b, T, N)).copy()
    batch.prev, batch.field_ids, batch.type_ids = prev, fid, tid
    batch.dec_rel, batch.mem_rel = dec_rel, mem_rel
    batch.targets, batch.weights, batch.valid, batch.real_out = targets, weights, valid, real_out
    return batch


def output_space(grammar: Grammar, trees: Sequence[AstNode], min_count: int = 5) -> tuple[ActionSpace, DecoderVocab]:
    from .transitions import build_vocabulary

    vocab = build_vocabulary(trees, grammar, min_count)
    space = ActionSpace(grammar, vocab)
    return space, DecoderVocab.build(grammar, space)


def vocab_from_json(grammar: Grammar, d: dict) -> tuple[ActionSpace, DecoderVocab]:
    space = ActionSpace(grammar, ActionVocabulary.from_json(d))
    return space, DecoderVocab.build(grammar, space)

