"""Forward/backward pairs for the primitive layers.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward`` takes
the upstream gradient and the cache and returns input gradients (and
parameter gradients where there are parameters).
"""

from __future__ import annotations

import numpy as np

NEG_INF = -1e30


def scatter_rows(ids, values, n_rows):
    """Sum rows of ``values`` (M, d) into an (n_rows, d) array by row ids (M,)."""
    ids = np.asarray(ids).reshape(-1)
    d = values.shape[-1]
    values = values.reshape(-1, d)
    flat = (ids[:, None] * d + np.arange(d)).reshape(-1)
    out = np.bincount(flat, weights=values.reshape(-1), minlength=n_rows * d)
    return out.reshape(n_rows, d).astype(values.dtype, copy=False)


def linear_forward(x, w, b=None):
    out = x @ w
    if b is not None:
        out = out + b
    return out, x


def linear_backward(dout, x, w, with_bias=True):
    d_in = w.shape[0]
    x2 = x.reshape(-1, d_in)
    d2 = dout.reshape(-1, dout.shape[-1])
    dw = x2.T @ d2
    db = d2.sum(axis=0) if with_bias else None
    dx = dout @ w.T
    return dx, dw, db


def layer_norm_forward(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_backward(dout, cache):
    xhat, inv, gamma = cache
    d = xhat.shape[-1]
    dgamma = (dout * xhat).reshape(-1, d).sum(axis=0)
    dbeta = dout.reshape(-1, d).sum(axis=0)
    dxhat = dout * gamma
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def dropout_forward(x, p, rng, train):
    if not train or p <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * keep, keep


def dropout_backward(dout, keep):
    return dout if keep is None else dout * keep


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dout, probs, axis=-1):
    return probs * (dout - (dout * probs).sum(axis=axis, keepdims=True))


def masked_cross_entropy(logits, targets, valid, weights):
    """Mean negative log-likelihood over target positions.

    ``logits``: (..., K); ``valid``: bool (..., K) of admissible outputs;
    ``targets``: int (...); ``weights``: float (...) with 0 for padding.
    Returns ``(loss, dlogits)``.
    """
    masked = np.where(valid, logits, NEG_INF)
    z = masked - masked.max(axis=-1, keepdims=True)
    e = np.exp(z) * valid
    s = e.sum(axis=-1, keepdims=True)
    logp = z - np.log(s)
    tgt_logp = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    total = weights.sum()
    loss = -(tgt_logp * weights).sum() / total
    probs = e / s
    d = probs
    onehot = np.zeros_like(d)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    d = (d - onehot) * (weights / total)[..., None]
    return loss, d.astype(logits.dtype)
