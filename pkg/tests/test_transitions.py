from pathlib import Path

import numpy as np
import pytest

from relsql.grammar import Literal, node, validate
from relsql.linking import tokenize_question
from relsql.relations import build_layout
from relsql.sqlkit import parse_sql
from relsql.transitions import (
    ActionSpace,
    ActionVocabulary,
    ApplyRule,
    CopyColumn,
    CopyQuestion,
    CopyTable,
    GenLiteral,
    IllegalActionError,
    IncompleteTreeError,
    Reduce,
    TrailingActionsError,
    allowed_actions,
    build_vocabulary,
    deserialize,
    format_actions,
    initial_state,
    parse_actions,
    random_rollout,
    replay,
    serialize,
    step,
)

FIXTURES = Path(__file__).parent / "fixtures"


def num(v):
    return node("Num", value=Literal("int", str(v)))


def handwritten(singer):
    lines = (FIXTURES / "handwritten_queries.sql").read_text().splitlines()
    return [parse_sql(s, singer) for s in lines if s.strip()]


def test_serialize_add(toy_grammar):
    tree = node("Add", left=num(1), right=num(2))
    assert serialize(tree, toy_grammar) == [
        ApplyRule("Add"), ApplyRule("Num"), GenLiteral("int", "1"), ApplyRule("Num"), GenLiteral("int", "2"),
    ]


def test_serialize_leaf(toy_grammar):
    assert serialize(num(7), toy_grammar) == [ApplyRule("Num"), GenLiteral("int", "7")]


def test_empty_sequence_is_apply_then_reduce(seq_grammar):
    assert serialize(node("Block", items=()), seq_grammar) == [ApplyRule("Block"), Reduce()]


def test_deserialize_inverts(toy_grammar, seq_grammar):
    tree = node("Add", left=num(1), right=node("Add", left=num(2), right=num(3)))
    assert deserialize(serialize(tree, toy_grammar), toy_grammar) == tree
    block = node("Block", items=(num(1), tree))
    assert deserialize(serialize(block, seq_grammar), seq_grammar) == block


def test_deserialize_empty_is_incomplete(toy_grammar):
    with pytest.raises(IncompleteTreeError):
        deserialize([], toy_grammar)


def test_deserialize_reports_step(toy_grammar):
    with pytest.raises(IllegalActionError) as info:
        deserialize([ApplyRule("Num"), ApplyRule("Num")], toy_grammar)
    assert info.value.step == 2


def test_trailing_actions(toy_grammar):
    with pytest.raises(TrailingActionsError):
        deserialize([ApplyRule("Num"), GenLiteral("int", "1"), Reduce()], toy_grammar)


def test_reduce_at_start_is_illegal(toy_grammar):
    with pytest.raises(IllegalActionError):
        step(initial_state(toy_grammar), Reduce(), toy_grammar)


def test_initial_allowed(toy_grammar):
    assert allowed_actions(initial_state(toy_grammar), toy_grammar) == {ApplyRule("Num"), ApplyRule("Add")}


def test_int_leaf_allows_vocab_and_copies(toy_grammar, singer):
    vocab = ActionVocabulary((("int", "1"), ("int", "2"), ("string", "x")))
    inp = build_layout(singer, ["how", "many", "3"])
    state = step(initial_state(toy_grammar), ApplyRule("Num"), toy_grammar)
    got = allowed_actions(state, toy_grammar, vocab, inp)
    assert got == {GenLiteral("int", "1"), GenLiteral("int", "2"), CopyQuestion(0), CopyQuestion(1), CopyQuestion(2)}


def test_sequence_allows_elements_and_reduce(seq_grammar):
    state = step(initial_state(seq_grammar), ApplyRule("Block"), seq_grammar)
    assert allowed_actions(state, seq_grammar) == {ApplyRule("Num"), ApplyRule("Add"), Reduce()}


def test_schema_leaves_copy_only(sql_grammar, singer):
    inp = build_layout(singer, ["x"])
    state = replay([ApplyRule("Query"), ApplyRule("Select"), ApplyRule("Col")], sql_grammar, inp)
    got = allowed_actions(state, sql_grammar, ActionVocabulary((("identifier", "x"),)), inp)
    assert got == {CopyColumn(c) for c in range(singer.num_columns)}
    state = replay(serialize(parse_sql("SELECT name FROM singer", singer), sql_grammar, inp)[:6], sql_grammar, inp)
    assert allowed_actions(state, sql_grammar, None, inp) == {CopyTable(0), CopyTable(1)}


def test_vocabulary_threshold(toy_grammar):
    trees = [num(5)] * 5 + [num(4)] * 4
    vocab = build_vocabulary(trees, toy_grammar, min_count=5)
    assert ("int", "5") in vocab
    assert ("int", "4") not in vocab
    assert len(build_vocabulary([], toy_grammar)) == 0


def test_schema_references_never_enter_vocabulary(sql_grammar, singer):
    vocab = build_vocabulary(handwritten(singer) * 5, sql_grammar, min_count=1)
    assert not vocab.tokens("identifier")
    assert "2014" in vocab.tokens("int")


def test_copy_serialization_round_trip(sql_grammar, singer):
    q = tokenize_question("Which singers performed in 2014 ?")
    inp = build_layout(singer, q)
    tree = parse_sql("SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM concert WHERE year = 2014)",
                     singer, sql_grammar)
    acts = serialize(tree, sql_grammar, inp)
    assert CopyQuestion(q.index("2014")) in acts
    assert not any(isinstance(a, GenLiteral) for a in acts)
    assert deserialize(acts, sql_grammar, inp) == tree


def test_action_text_round_trip(sql_grammar, singer):
    for tree in handwritten(singer):
        acts = serialize(tree, sql_grammar)
        assert parse_actions(format_actions(acts)) == acts


def test_gold_actions_inside_allowed_set(sql_grammar, singer):
    trees = handwritten(singer)
    vocab = build_vocabulary(trees, sql_grammar, min_count=1)
    inp = build_layout(singer, ["find", "singers"])
    for tree in trees:
        state = initial_state(sql_grammar)
        for a in serialize(tree, sql_grammar, inp):
            assert a in allowed_actions(state, sql_grammar, vocab, inp)
            state = step(state, a, sql_grammar, inp)
        assert state.done


def test_allowed_actions_are_all_legal_and_completable(sql_grammar, singer):
    # oracle: every allowed action must step without error and admit a completion
    rng = np.random.default_rng(3)
    vocab = ActionVocabulary((("int", "1"), ("string", "x")))
    inp = build_layout(singer, ["a", "b"])
    for trial in range(30):
        prefix = random_rollout(sql_grammar, rng, vocab, inp, max_depth=4)
        cut = int(rng.integers(len(prefix)))
        state = replay(prefix[:cut], sql_grammar, inp)
        for a in sorted(allowed_actions(state, sql_grammar, vocab, inp), key=str):
            nxt = step(state, a, sql_grammar, inp)
            if not nxt.done:
                assert allowed_actions(nxt, sql_grammar, vocab, inp)


def test_random_rollouts_valid(sql_grammar, singer):
    rng = np.random.default_rng(0)
    inp = build_layout(singer, ["q"])
    vocab = ActionVocabulary((("int", "1"),))
    for _ in range(300):
        acts = random_rollout(sql_grammar, rng, vocab, inp)
        tree = deserialize(acts, sql_grammar, inp)
        assert validate(tree, sql_grammar).ok
        assert deserialize(serialize(tree, sql_grammar, inp), sql_grammar, inp) == tree


def test_action_space_indexing(sql_grammar, singer):
    vocab = ActionVocabulary((("int", "1"),))
    space = ActionSpace(sql_grammar, vocab)
    inp = build_layout(singer, ["a", "b"])
    assert space.size == 38 + 1 + 1 + 3
    for a in [ApplyRule("Query"), Reduce(), GenLiteral("int", "1"), CopyQuestion(1), CopyTable(1), CopyColumn(4)]:
        assert space.decode(space.encode(a, inp), inp) == a
    assert space.decode(space.encode(GenLiteral("int", "77"), inp), inp) == GenLiteral("int", "<unk>")
    m = space.mask({Reduce(), CopyColumn(0)}, inp)
    assert m.shape == (space.size + len(inp),) and m.sum() == 2
