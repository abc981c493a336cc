import numpy as np
import pytest

from relsql.grammar import validate
from relsql.nn.decode import greedy_decode
from relsql.train import evaluate

from toy_setup import TINY, Toy


@pytest.fixture(scope="module")
def toy():
    return Toy(n=100)


def test_constrained_decoding_yields_valid_trees(toy):
    feats = toy.feats(range(12))
    m = toy.model(dtype=np.float32, **TINY)
    preds = greedy_decode(m, toy.fz, feats, constrain=True, max_steps=200, batch_size=5)
    assert len(preds) == 12
    for p in preds:
        if p.error is None:
            assert validate(p.tree, toy.grammar).ok
        else:
            assert "no complete tree" in p.error


def test_unconstrained_illegal_counts_as_wrong(toy):
    feats = toy.feats(range(12))
    m = toy.model(dtype=np.float32, **TINY)
    preds = greedy_decode(m, toy.fz, feats, constrain=False, max_steps=40)
    illegal = [p for p in preds if p.error and "illegal" in p.error]
    assert illegal  # an untrained model emits structurally illegal actions
    assert all(p.tree is None for p in illegal)
    res = evaluate(m, toy.fz, feats, constrain=False, max_steps=40)
    assert res.invalid >= len(illegal) and res.correct <= res.total - res.invalid


def test_batching_does_not_change_predictions(toy):
    feats = toy.feats(range(10))
    m = toy.model(dtype=np.float32, **TINY)
    a = greedy_decode(m, toy.fz, feats, max_steps=60, batch_size=10)
    b = greedy_decode(m, toy.fz, feats, max_steps=60, batch_size=3)
    assert [p.actions for p in a] == [p.actions for p in b]
