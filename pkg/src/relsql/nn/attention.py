"""Relation-aware multi-head attention with a hand-written backward pass.

For head ``h`` with ``dh = d_z / H``::

    e_ij = x_i Wq (x_j Wk + r_ij)^T / sqrt(dh)
    a_ij = softmax_j(e_ij)
    z_i  = sum_j a_ij (x_j Wv + r_ij)

``r_ij`` is the row of the relation table selected by the label id of pair
``(i, j)``; the same vectors serve keys and values and are shared by all
heads.  Batched shapes: queries (B, n, d_x), keys/values (B, m, d_kv),
relation ids (B, n, m), mask (B, n, m) with True where attention is allowed.
"""

from __future__ import annotations

import numpy as np

from .functional import NEG_INF, scatter_rows, softmax, softmax_backward


def _split(x, heads):
    b, n, d = x.shape
    return x.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)


def _merge(x):
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def rat_attention_forward(xq, xkv, wq, wk, wv, heads, rel_ids=None, rel_table=None, mask=None):
    """Returns concatenated per-head outputs (B, n, d_z) and a cache."""
    d_z = wq.shape[1]
    if d_z % heads:
        raise ValueError(f"d_z={d_z} is not divisible by {heads} heads")
    if xq.ndim != 3 or xkv.ndim != 3 or xq.shape[0] != xkv.shape[0]:
        raise ValueError("expected batched inputs (B, n, d)")
    if rel_ids is not None and rel_ids.shape != (xq.shape[0], xq.shape[1], xkv.shape[1]):
        raise ValueError(f"relation ids {rel_ids.shape} do not match ({xq.shape[0]}, {xq.shape[1]}, {xkv.shape[1]})")
    dh = d_z // heads
    scale = 1.0 / np.sqrt(dh)
    q = _split(xq @ wq, heads)  # (B, H, n, dh)
    k = _split(xkv @ wk, heads)  # (B, H, m, dh)
    v = _split(xkv @ wv, heads)
    e = q @ k.transpose(0, 1, 3, 2)
    r = None
    if rel_ids is not None:
        r = rel_table[rel_ids]  # (B, n, m, dh)
        e = e + (q.transpose(0, 2, 1, 3) @ r.transpose(0, 1, 3, 2)).transpose(0, 2, 1, 3)
    e = e * scale
    if mask is not None:
        e = np.where(mask[:, None, :, :], e, NEG_INF)
    a = softmax(e, axis=-1)
    z = a @ v
    if r is not None:
        z = z + (a.transpose(0, 2, 1, 3) @ r).transpose(0, 2, 1, 3)
    cache = (xq, xkv, q, k, v, r, a, scale, heads, rel_ids)
    return _merge(z), cache


def rat_attention_backward(dz, cache, wq, wk, wv, rel_table=None):
    """Returns ``(dxq, dxkv, dwq, dwk, dwv, drel_table)``."""
    xq, xkv, q, k, v, r, a, scale, heads, rel_ids = cache
    dz = _split(dz, heads)  # (B, H, n, dh)
    da = dz @ v.transpose(0, 1, 3, 2)
    dv = a.transpose(0, 1, 3, 2) @ dz
    dr = None
    if r is not None:
        da = da + (dz.transpose(0, 2, 1, 3) @ r.transpose(0, 1, 3, 2)).transpose(0, 2, 1, 3)
        dr = a.transpose(0, 2, 3, 1) @ dz.transpose(0, 2, 1, 3)  # (B, n, m, dh)
    de = softmax_backward(da, a) * scale
    dq = de @ k
    dk = de.transpose(0, 1, 3, 2) @ q
    if r is not None:
        dq = dq + (de.transpose(0, 2, 1, 3) @ r).transpose(0, 2, 1, 3)
        dr = dr + de.transpose(0, 2, 3, 1) @ q.transpose(0, 2, 1, 3)
    dq, dk, dv = _merge(dq), _merge(dk), _merge(dv)
    d_in = xq.shape[-1]
    dwq = xq.reshape(-1, d_in).T @ dq.reshape(-1, dq.shape[-1])
    d_kv = xkv.shape[-1]
    dwk = xkv.reshape(-1, d_kv).T @ dk.reshape(-1, dk.shape[-1])
    dwv = xkv.reshape(-1, d_kv).T @ dv.reshape(-1, dv.shape[-1])
    dxq = dq @ wq.T
    dxkv = dk @ wk.T + dv @ wv.T
    dtable = None
    if r is not None:
        dtable = scatter_rows(rel_ids, dr, rel_table.shape[0])
    return dxq, dxkv, dwq, dwk, dwv, dtable


def rat_attention(x, wq, wk, wv, heads, rel_ids=None, rel_table=None, mask=None):
    """Unbatched self-attention convenience wrapper: ``x`` is (n, d_x)."""
    rel = None if rel_ids is None else np.asarray(rel_ids)[None]
    m = None if mask is None else np.asarray(mask, dtype=bool)[None]
    out, _ = rat_attention_forward(x[None], x[None], wq, wk, wv, heads, rel, rel_table, m)
    return out[0]
