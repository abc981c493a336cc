import math

import numpy as np
import pytest

from relsql.nn.attention import rat_attention, rat_attention_backward, rat_attention_forward
from relsql.nn.functional import (
    dropout_backward,
    dropout_forward,
    layer_norm_backward,
    layer_norm_forward,
    masked_cross_entropy,
    scatter_rows,
    softmax,
)

from gradcheck import numeric_grad, rel_error


def weights(rng, d_x, d_z, n_rel, dh):
    return (rng.normal(size=(d_x, d_z)), rng.normal(size=(d_x, d_z)), rng.normal(size=(d_x, d_z)),
            rng.normal(size=(n_rel, dh)))


def vanilla(x, wq, wk, wv, heads):
    # textbook multi-head attention, one head at a time
    d_z = wq.shape[1]
    dh = d_z // heads
    out = []
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        q, k, v = x @ wq[:, sl], x @ wk[:, sl], x @ wv[:, sl]
        s = q @ k.T / math.sqrt(dh)
        s = np.exp(s - s.max(axis=1, keepdims=True))
        out.append((s / s.sum(axis=1, keepdims=True)) @ v)
    return np.concatenate(out, axis=1)


def test_zero_relations_reduce_to_vanilla():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 8))
    wq, wk, wv, table = weights(rng, 8, 8, 3, 4)
    ids = rng.integers(3, size=(6, 6))
    got = rat_attention(x, wq, wk, wv, 2, ids, np.zeros_like(table))
    np.testing.assert_allclose(got, vanilla(x, wq, wk, wv, 2), atol=1e-6, rtol=0)
    np.testing.assert_allclose(rat_attention(x, wq, wk, wv, 2), vanilla(x, wq, wk, wv, 2), atol=1e-6, rtol=0)


def test_single_position():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 4))
    wq, wk, wv, table = weights(rng, 4, 4, 2, 4)
    z = rat_attention(x, wq, wk, wv, 1, np.array([[1]]), table)
    np.testing.assert_allclose(z, x @ wv + table[1], atol=1e-12)


def test_two_position_scalar_oracle():
    x = [0.5, -1.2]
    wq, wk, wv = 0.7, -0.3, 1.1
    r = [[0.2, -0.4], [0.9, 0.1]]
    expect = []
    for i in range(2):
        e = [(x[i] * wq) * (x[j] * wk + r[i][j]) for j in range(2)]
        den = math.exp(e[0]) + math.exp(e[1])
        a = [math.exp(v) / den for v in e]
        expect.append(sum(a[j] * (x[j] * wv + r[i][j]) for j in range(2)))
    table = np.array([[0.2], [-0.4], [0.9], [0.1]])
    ids = np.array([[0, 1], [2, 3]])
    got = rat_attention(np.array(x)[:, None], np.array([[wq]]), np.array([[wk]]), np.array([[wv]]), 1, ids, table)
    np.testing.assert_allclose(got[:, 0], expect, atol=1e-6, rtol=0)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 7, 9)) * 30
    np.testing.assert_allclose(softmax(x, axis=-1).sum(axis=-1), 1.0, atol=1e-12)


def test_mask_blocks_positions():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 8))
    wq, wk, wv, table = weights(rng, 8, 8, 2, 4)
    mask = np.tril(np.ones((4, 4), dtype=bool))
    ids = np.zeros((4, 4), dtype=int)
    base = rat_attention(x, wq, wk, wv, 2, ids, table, mask)
    x2 = x.copy()
    x2[3] += 5.0
    moved = rat_attention(x2, wq, wk, wv, 2, ids, table, mask)
    np.testing.assert_allclose(moved[:3], base[:3], atol=1e-12)


def test_shape_errors():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, 3, 8))
    wq, wk, wv, table = weights(rng, 8, 6, 2, 3)
    with pytest.raises(ValueError):
        rat_attention_forward(x, x, wq, wk, wv, 4)
    with pytest.raises(ValueError):
        rat_attention_forward(x, x, wq, wk, wv, 2, np.zeros((1, 3, 2), dtype=int), table)


@pytest.mark.parametrize("cross", [False, True])
def test_gradient_check(cross):
    # d=8, H=2, n=5 in double precision
    rng = np.random.default_rng(5)
    n, m = 5, (4 if cross else 5)
    xq = rng.normal(size=(2, n, 8))
    xkv = rng.normal(size=(2, m, 8)) if cross else xq
    wq, wk, wv, table = weights(rng, 8, 8, 6, 4)
    ids = rng.integers(5, size=(2, n, m))  # row 5 never used
    mask = rng.random((2, n, m)) < 0.8
    mask[..., 0] = True
    up = rng.normal(size=(2, n, 8))

    def loss():
        out, _ = rat_attention_forward(xq, xkv, wq, wk, wv, 2, ids, table, mask)
        return float((out * up).sum())

    _, cache = rat_attention_forward(xq, xkv, wq, wk, wv, 2, ids, table, mask)
    dxq, dxkv, dwq, dwk, dwv, dtab = rat_attention_backward(up, cache, wq, wk, wv, table)
    if not cross:
        dxq = dxq + dxkv
    worst = max(
        rel_error(dxq, numeric_grad(loss, xq)),
        rel_error(dwq, numeric_grad(loss, wq)),
        rel_error(dwk, numeric_grad(loss, wk)),
        rel_error(dwv, numeric_grad(loss, wv)),
        rel_error(dtab, numeric_grad(loss, table)),
    )
    if cross:
        worst = max(worst, rel_error(dxkv, numeric_grad(loss, xkv)))
    assert worst < 1e-4
    assert np.all(dtab[5] == 0.0)


def test_scatter_rows_matches_add_at():
    rng = np.random.default_rng(6)
    ids = rng.integers(7, size=(3, 4))
    vals = rng.normal(size=(3, 4, 5))
    ref = np.zeros((7, 5))
    np.add.at(ref, ids.reshape(-1), vals.reshape(-1, 5))
    np.testing.assert_allclose(scatter_rows(ids, vals, 7), ref, atol=1e-12)


def test_layer_norm_gradient():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 6))
    g, b = rng.normal(size=6), rng.normal(size=6)
    up = rng.normal(size=(3, 6))
    f = lambda: float((layer_norm_forward(x, g, b)[0] * up).sum())
    dx, dg, db = layer_norm_backward(up, layer_norm_forward(x, g, b)[1])
    assert rel_error(dx, numeric_grad(f, x)) < 1e-5
    assert rel_error(dg, numeric_grad(f, g)) < 1e-5
    assert rel_error(db, numeric_grad(f, b)) < 1e-5


def test_masked_cross_entropy_gradient():
    rng = np.random.default_rng(8)
    logits = rng.normal(size=(2, 3, 5))
    targets = rng.integers(3, size=(2, 3))
    valid = np.ones((2, 3, 5), dtype=bool)
    valid[..., 4] = False
    w = np.array([[1, 1, 0], [1, 0, 0]], dtype=float)
    loss, d = masked_cross_entropy(logits, targets, valid, w)
    num = numeric_grad(lambda: masked_cross_entropy(logits, targets, valid, w)[0], logits)
    assert rel_error(d, num) < 1e-5
    assert np.all(d[..., 4] == 0)


def test_dropout_inverted_scaling():
    x = np.ones((200, 200))
    out, keep = dropout_forward(x, 0.25, np.random.default_rng(9), train=True)
    assert abs(out.mean() - 1.0) < 0.02
    np.testing.assert_array_equal(dropout_backward(x, keep), out)
    same, keep = dropout_forward(x, 0.25, np.random.default_rng(9), train=False)
    assert same is x and keep is None
