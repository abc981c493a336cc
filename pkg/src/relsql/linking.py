"""Heuristic schema linking.

Question n-grams are compared at the character level with table and column
names (name-based) and with column cell values (content-based).  Exact
matches after normalization are high confidence; a character n-gram overlap of
at least ``partial_threshold`` is low confidence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .schema import ContentIndex, Schema

NAME_TABLE = "name-match-table"
NAME_COLUMN = "name-match-column"
VALUE_COLUMN = "value-match-column"
HIGH = "high"
LOW = "low"

_TOKEN_RE = re.compile(r"\d+(?:\.\d+)?|\w+|[^\w\s]")
_PUNCT_RE = re.compile(r"[^\w\s]|_")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


@dataclass(frozen=True)
class LinkConfig:
    max_ngram: int = 5
    char_gram: int = 5
    partial_threshold: float = 0.5
    min_partial_len: int = 3
    # partial (low-confidence) spans may not start or end with one of these
    stopwords: frozenset[str] = frozenset(
        "a an the of in on at for to from with by and or is are was were what which who "
        "how many much show list give find all each their its that this".split()
    )


@dataclass(frozen=True)
class LinkMatch:
    start: int  # question token span [start, end)
    end: int
    target_kind: str  # "table" or "column"
    target: int
    kind: str
    confidence: str

    @property
    def span(self) -> range:
        return range(self.start, self.end)


def tokenize_question(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def normalize(text: str) -> str:
    """Lowercase, split snake_case and camelCase, drop punctuation, collapse spaces."""
    text = _CAMEL_RE.sub(" ", text)
    text = _PUNCT_RE.sub(" ", text.lower())
    return " ".join(text.split())


def char_grams(text: str, n: int) -> set[str]:
    if len(text) <= n:
        return {text}
    return {text[i:i + n] for i in range(len(text) - n + 1)}


def partial_ratio(a: str, b: str, cfg: LinkConfig = LinkConfig()) -> float:
    """Share of the shorter string's character n-grams found in the longer one."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if len(short) < cfg.min_partial_len:
        return 0.0
    n = min(cfg.char_gram, len(short))
    grams = char_grams(short, n)
    return len(grams & char_grams(long_, n)) / len(grams)


def _ngrams(tokens: list[str], max_n: int):
    """Yield ``(start, end, normalized text)`` for spans of non-empty tokens."""
    norm = [normalize(t) for t in tokens]
    for start in range(len(tokens)):
        for end in range(start + 1, min(len(tokens), start + max_n) + 1):
            if not norm[end - 1]:
                break
            yield start, end, " ".join(norm[start:end])


def _match(tokens, targets: Iterable[tuple[str, int, str, str]], cfg: LinkConfig) -> list[LinkMatch]:
    """``targets`` holds ``(target kind, id, match kind, normalized text)``."""
    targets = [t for t in targets if t[3]]
    cands = []
    for start, end, text in _ngrams(tokens, cfg.max_ngram):
        n_tok = end - start
        words = text.split()
        partial_ok = words[0] not in cfg.stopwords and words[-1] not in cfg.stopwords
        for t_kind, t_id, m_kind, name in targets:
            if text == name:
                cands.append(LinkMatch(start, end, t_kind, t_id, m_kind, HIGH))
            elif partial_ok and n_tok <= len(name.split()) and partial_ratio(text, name, cfg) >= cfg.partial_threshold:
                cands.append(LinkMatch(start, end, t_kind, t_id, m_kind, LOW))
    return _longest(cands)


def _longest(cands: list[LinkMatch]) -> list[LinkMatch]:
    # per target: high before low, then longer spans; overlapping losers dropped
    cands = sorted(set(cands), key=lambda m: (m.target_kind, m.target, m.kind, m.confidence != HIGH,
                                              -(m.end - m.start), m.start))
    kept: list[LinkMatch] = []
    for m in cands:
        clash = any(
            k.target_kind == m.target_kind and k.target == m.target and k.kind == m.kind
            and k.start < m.end and m.start < k.end
            for k in kept
        )
        if not clash:
            kept.append(m)
    return sorted(kept, key=lambda m: (m.start, m.end, m.target_kind, m.target, m.kind))


def link_names(tokens: list[str], schema: Schema, cfg: LinkConfig = LinkConfig()) -> list[LinkMatch]:
    """Name-based matches of question n-grams against table and column names."""
    targets = [("table", t, NAME_TABLE, normalize(tab.display_name)) for t, tab in enumerate(schema.tables)]
    targets += [
        ("column", c, NAME_COLUMN, normalize(col.display_name))
        for c, col in enumerate(schema.column_list)
        if not col.is_wildcard
    ]
    return _match(tokens, targets, cfg)


def link_content(tokens: list[str], index: ContentIndex, cfg: LinkConfig = LinkConfig()) -> list[LinkMatch]:
    """Content-based matches of question n-grams against column cell values."""
    targets = []
    for c_id in sorted(index.cells):
        for cell in dict.fromkeys(normalize(v) for v in index.cells[c_id]):
            targets.append(("column", c_id, VALUE_COLUMN, cell))
    return _match(tokens, targets, cfg)


def link(tokens: list[str], schema: Schema, index: ContentIndex | None = None,
         cfg: LinkConfig = LinkConfig()) -> list[LinkMatch]:
    out = link_names(tokens, schema, cfg)
    if index is not None:
        out += link_content(tokens, index, cfg)
    return sorted(out, key=lambda m: (m.start, m.end, m.target_kind, m.target, m.kind))
