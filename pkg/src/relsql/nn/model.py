"""Two-stage relation-aware encoder, relation-aware decoder and pointer head.

All parameters live in one flat ``dict[str, ndarray]``; ``loss_and_grads``
runs the forward pass with caches and the hand-written backward pass and
returns gradients under the same keys.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from .attention import rat_attention_backward, rat_attention_forward


@dataclass(frozen=True)
class AttentionConfig:
    d_x: int
    d_z: int
    heads: int
    layers: int
    ff_dim: int
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.d_z % self.heads:
            raise ValueError(f"d_z={self.d_z} is not divisible by H={self.heads}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")


@dataclass(frozen=True)
class ModelConfig:
    n_tokens: int  # stage-1 word + character rows
    n_out: int  # action-space size; pointer logits follow
    n_action_emb: int
    n_fields: int
    n_types: int
    n_relations: int
    d_enc: int = 64
    enc_heads: int = 4
    stage1_layers: int = 2
    stage2_layers: int = 2
    enc_ff: int = 128
    d_action: int = 16
    d_field: int = 16
    d_type: int = 16
    dec_heads: int = 4
    dec_layers: int = 2
    dec_ff: int = 96
    pointer_dim: int = 50
    dropout: float = 0.1
    max_input_len: int = 256
    max_decode_len: int = 128

    @property
    def d_dec(self) -> int:
        return self.d_action + self.d_field + self.d_type

    def attention(self, which: str) -> AttentionConfig:
        if which == "stage1":
            return AttentionConfig(self.d_enc, self.d_enc, self.enc_heads, self.stage1_layers, self.enc_ff, self.dropout)
        if which == "stage2":
            return AttentionConfig(self.d_enc, self.d_enc, self.enc_heads, self.stage2_layers, self.enc_ff, self.dropout)
        return AttentionConfig(self.d_dec, self.d_dec, self.dec_heads, self.dec_layers, self.dec_ff, self.dropout)

    def to_json(self) -> dict:
        return asdict(self)


def init_params(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    for which in ("stage1", "stage2", "decoder"):
        cfg.attention(which)  # validates head divisibility
    p: dict[str, np.ndarray] = {}

    def xavier(name, fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        p[name] = rng.uniform(-lim, lim, size=(fan_in, fan_out))

    def normal(name, shape, std):
        p[name] = rng.normal(0.0, std, size=shape)

    def ln(pre, d):
        p[pre + "g"] = np.ones(d)
        p[pre + "b"] = np.zeros(d)

    def attn(pre, d_q, d_kv, d_z, rel_dim):
        xavier(pre + "wq", d_q, d_z)
        xavier(pre + "wk", d_kv, d_z)
        xavier(pre + "wv", d_kv, d_z)
        xavier(pre + "wo", d_z, d_q)
        p[pre + "bo"] = np.zeros(d_q)
        if rel_dim:
            normal(pre + "rel", (cfg.n_relations, rel_dim), 0.1)

    def ff(pre, d, h):
        xavier(pre + "w1", d, h)
        p[pre + "b1"] = np.zeros(h)
        xavier(pre + "w2", h, d)
        p[pre + "b2"] = np.zeros(d)

    d, dd = cfg.d_enc, cfg.d_dec
    normal("emb.tok", (cfg.n_tokens, d), d ** -0.5)
    normal("emb.pos", (cfg.max_input_len, d), d ** -0.5)
    normal("emb.seg", (2, d), d ** -0.5)
    ln("emb.ln.", d)
    for stage, n in (("s1", cfg.stage1_layers), ("s2", cfg.stage2_layers)):
        for i in range(n):
            pre = f"{stage}.{i}."
            attn(pre + "att.", d, d, d, d // cfg.enc_heads if stage == "s2" else 0)
            ln(pre + "ln1.", d)
            ff(pre + "ff.", d, cfg.enc_ff)
            ln(pre + "ln2.", d)
    normal("dec.act", (cfg.n_action_emb, cfg.d_action), cfg.d_action ** -0.5)
    normal("dec.field", (cfg.n_fields, cfg.d_field), cfg.d_field ** -0.5)
    normal("dec.type", (cfg.n_types, cfg.d_type), cfg.d_type ** -0.5)
    normal("dec.pos", (cfg.max_decode_len, dd), dd ** -0.5)
    ln("dec.ln.", dd)
    for i in range(cfg.dec_layers):
        pre = f"dec.{i}."
        attn(pre + "self.", dd, dd, dd, dd // cfg.dec_heads)
        ln(pre + "ln1.", dd)
        attn(pre + "mem.", dd, d, dd, dd // cfg.dec_heads)
        ln(pre + "ln2.", dd)
        ff(pre + "ff.", dd, cfg.dec_ff)
        ln(pre + "ln3.", dd)
    normal("out.w", (dd, cfg.n_out), 0.01)
    p["out.b"] = np.zeros(cfg.n_out)
    normal("ptr.q", (dd, cfg.pointer_dim), 0.01)
    xavier("ptr.k", d, cfg.pointer_dim)
    return {k: v.astype(dtype) for k, v in p.items()}


# ---------------------------------------------------------------------------
# Sublayers


def _attn_fwd(p, pre, xq, xkv, heads, rel, mask, drop, rng, train, self_attention):
    table = p.get(pre + "rel")
    z, ac = rat_attention_forward(xq, xkv, p[pre + "wq"], p[pre + "wk"], p[pre + "wv"], heads,
                                  rel if table is not None else None, table, mask)
    o, _ = F.linear_forward(z, p[pre + "wo"], p[pre + "bo"])
    o, dc = F.dropout_forward(o, drop, rng, train)
    return xq + o, (ac, z, dc, self_attention)


def _attn_bwd(p, g, pre, dh, cache):
    ac, z, dc, self_attention = cache
    do = F.dropout_backward(dh, dc)
    dz, dwo, dbo = F.linear_backward(do, z, p[pre + "wo"])
    _acc(g, pre + "wo", dwo)
    _acc(g, pre + "bo", dbo)
    table = p.get(pre + "rel")
    dxq, dxkv, dwq, dwk, dwv, dtab = rat_attention_backward(dz, ac, p[pre + "wq"], p[pre + "wk"], p[pre + "wv"], table)
    _acc(g, pre + "wq", dwq)
    _acc(g, pre + "wk", dwk)
    _acc(g, pre + "wv", dwv)
    if table is not None:
        _acc(g, pre + "rel", dtab)
    dxq = dxq + dh  # residual
    if self_attention:
        return dxq + dxkv, None
    return dxq, dxkv


def _ff_fwd(p, pre, x, drop, rng, train):
    h, _ = F.linear_forward(x, p[pre + "w1"], p[pre + "b1"])
    h, rc = F.relu_forward(h)
    o, _ = F.linear_forward(h, p[pre + "w2"], p[pre + "b2"])
    o, dc = F.dropout_forward(o, drop, rng, train)
    return x + o, (x, h, rc, dc)


def _ff_bwd(p, g, pre, dy, cache):
    x, h, rc, dc = cache
    do = F.dropout_backward(dy, dc)
    dh, dw2, db2 = F.linear_backward(do, h, p[pre + "w2"])
    dh = F.relu_backward(dh, rc)
    dx, dw1, db1 = F.linear_backward(dh, x, p[pre + "w1"])
    _acc(g, pre + "w1", dw1)
    _acc(g, pre + "b1", db1)
    _acc(g, pre + "w2", dw2)
    _acc(g, pre + "b2", db2)
    return dx + dy


def _ln_fwd(p, pre, x):
    return F.layer_norm_forward(x, p[pre + "g"], p[pre + "b"])


def _ln_bwd(g, pre, dy, cache):
    dx, dg, db = F.layer_norm_backward(dy, cache)
    _acc(g, pre + "g", dg)
    _acc(g, pre + "b", db)
    return dx


def _acc(g, name, value):
    if name in g:
        g[name] += value
    else:
        g[name] = value.copy() if isinstance(value, np.ndarray) else value


def _scatter_rows(g, name, shape, idx, values, dtype):
    _acc(g, name, F.scatter_rows(idx, values.reshape(-1, shape[1]), shape[0]).astype(dtype, copy=False))


# ---------------------------------------------------------------------------
# Model


class RatModel:
    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.params = params

    @classmethod
    def create(cls, cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> "RatModel":
        return cls(cfg, init_params(cfg, np.random.default_rng(seed), dtype))

    @property
    def dtype(self):
        return self.params["emb.tok"].dtype

    def astype(self, dtype) -> "RatModel":
        return RatModel(self.cfg, {k: v.astype(dtype) for k, v in self.params.items()})

    # -- encoder ----------------------------------------------------------

    def encode(self, batch, train=False, rng=None):
        """Memory (B, N, d_enc) plus the cache for :meth:`encode_backward`."""
        p, cfg = self.params, self.cfg
        drop = cfg.dropout if train else 0.0
        L = batch.s1_idx.shape[1]
        if L > cfg.max_input_len:
            raise ValueError(f"stage-1 length {L} exceeds max_input_len={cfg.max_input_len}")
        rows = p["emb.tok"][batch.s1_idx]  # (B, L, K, d)
        x = (rows * batch.s1_w[..., None]).sum(axis=2)
        x = x + p["emb.pos"][batch.s1_pos] + p["emb.seg"][batch.s1_seg]
        x, ln0 = _ln_fwd(p, "emb.ln.", x)
        x, dc0 = F.dropout_forward(x, drop, rng, train)
        caches = []
        for i in range(cfg.stage1_layers):
            pre = f"s1.{i}."
            h, ac = _attn_fwd(p, pre + "att.", x, x, cfg.enc_heads, None, batch.s1_mask, drop, rng, train, True)
            h, l1 = _ln_fwd(p, pre + "ln1.", h)
            h2, fc = _ff_fwd(p, pre + "ff.", h, drop, rng, train)
            x, l2 = _ln_fwd(p, pre + "ln2.", h2)
            caches.append((ac, l1, fc, l2))
        b_idx = np.arange(x.shape[0])[:, None]
        m = x[b_idx, batch.gather]  # (B, N, d)
        caches2 = []
        for i in range(cfg.stage2_layers):
            pre = f"s2.{i}."
            h, ac = _attn_fwd(p, pre + "att.", m, m, cfg.enc_heads, batch.enc_rel, batch.enc_mask, drop, rng, train, True)
            h, l1 = _ln_fwd(p, pre + "ln1.", h)
            h2, fc = _ff_fwd(p, pre + "ff.", h, drop, rng, train)
            m, l2 = _ln_fwd(p, pre + "ln2.", h2)
            caches2.append((ac, l1, fc, l2))
        return m, (batch, ln0, dc0, caches, caches2, x.shape)

    def encode_backward(self, dm, cache, g):
        p, cfg = self.params, self.cfg
        batch, ln0, dc0, caches, caches2, xshape = cache
        for i in reversed(range(cfg.stage2_layers)):
            pre = f"s2.{i}."
            ac, l1, fc, l2 = caches2[i]
            dh2 = _ln_bwd(g, pre + "ln2.", dm, l2)
            dh = _ff_bwd(p, g, pre + "ff.", dh2, fc)
            dh = _ln_bwd(g, pre + "ln1.", dh, l1)
            dm, _ = _attn_bwd(p, g, pre + "att.", dh, ac)
        b, L, d = xshape
        flat = (np.arange(b)[:, None] * L + batch.gather).reshape(-1)
        dx = F.scatter_rows(flat, dm, b * L).reshape(xshape)
        for i in reversed(range(cfg.stage1_layers)):
            pre = f"s1.{i}."
            ac, l1, fc, l2 = caches[i]
            dh2 = _ln_bwd(g, pre + "ln2.", dx, l2)
            dh = _ff_bwd(p, g, pre + "ff.", dh2, fc)
            dh = _ln_bwd(g, pre + "ln1.", dh, l1)
            dx, _ = _attn_bwd(p, g, pre + "att.", dh, ac)
        dx = F.dropout_backward(dx, dc0)
        dx = _ln_bwd(g, "emb.ln.", dx, ln0)
        d = dx.shape[-1]
        _scatter_rows(g, "emb.pos", p["emb.pos"].shape, batch.s1_pos, dx, dx.dtype)
        _scatter_rows(g, "emb.seg", p["emb.seg"].shape, batch.s1_seg, dx, dx.dtype)
        drows = dx[:, :, None, :] * batch.s1_w[..., None]
        _scatter_rows(g, "emb.tok", p["emb.tok"].shape, batch.s1_idx, drows.reshape(-1, d), dx.dtype)

    # -- decoder ----------------------------------------------------------

    def decode(self, memory, batch, train=False, rng=None):
        """Output logits (B, T, n_out + N) before masking, plus a cache."""
        p, cfg = self.params, self.cfg
        drop = cfg.dropout if train else 0.0
        T = batch.prev.shape[1]
        if T > cfg.max_decode_len:
            raise ValueError(f"{T} decoding steps exceed max_decode_len={cfg.max_decode_len}")
        y = np.concatenate([p["dec.act"][batch.prev], p["dec.field"][batch.field_ids], p["dec.type"][batch.type_ids]],
                           axis=-1)
        y = y + p["dec.pos"][:T]
        y, ln0 = _ln_fwd(p, "dec.ln.", y)
        y, dc0 = F.dropout_forward(y, drop, rng, train)
        caches = []
        for i in range(cfg.dec_layers):
            pre = f"dec.{i}."
            h, sc = _attn_fwd(p, pre + "self.", y, y, cfg.dec_heads, batch.dec_rel, batch.dec_mask, drop, rng, train, True)
            h, l1 = _ln_fwd(p, pre + "ln1.", h)
            h2, mc = _attn_fwd(p, pre + "mem.", h, memory, cfg.dec_heads, batch.mem_rel, batch.mem_mask, drop, rng,
                               train, False)
            h2, l2 = _ln_fwd(p, pre + "ln2.", h2)
            h3, fc = _ff_fwd(p, pre + "ff.", h2, drop, rng, train)
            y, l3 = _ln_fwd(p, pre + "ln3.", h3)
            caches.append((sc, l1, mc, l2, fc, l3))
        act, _ = F.linear_forward(y, p["out.w"], p["out.b"])
        pq = y @ p["ptr.q"]
        pk = memory @ p["ptr.k"]
        scale = 1.0 / np.sqrt(cfg.pointer_dim)
        ptr = (pq @ pk.transpose(0, 2, 1)) * scale
        logits = np.concatenate([act, ptr], axis=-1)
        return logits, (batch, ln0, dc0, caches, y, pq, pk, memory, scale)

    def decode_backward(self, dlogits, cache, g):
        p, cfg = self.params, self.cfg
        batch, ln0, dc0, caches, y, pq, pk, memory, scale = cache
        n_out = cfg.n_out
        dact, dptr = dlogits[..., :n_out], dlogits[..., n_out:] * scale
        dy, dw, db = F.linear_backward(dact, y, p["out.w"])
        _acc(g, "out.w", dw)
        _acc(g, "out.b", db)
        dpq = dptr @ pk
        dpk = dptr.transpose(0, 2, 1) @ pq
        dy = dy + dpq @ p["ptr.q"].T
        _acc(g, "ptr.q", y.reshape(-1, y.shape[-1]).T @ dpq.reshape(-1, dpq.shape[-1]))
        _acc(g, "ptr.k", memory.reshape(-1, memory.shape[-1]).T @ dpk.reshape(-1, dpk.shape[-1]))
        dmem = dpk @ p["ptr.k"].T
        for i in reversed(range(cfg.dec_layers)):
            pre = f"dec.{i}."
            sc, l1, mc, l2, fc, l3 = caches[i]
            dh3 = _ln_bwd(g, pre + "ln3.", dy, l3)
            dh2 = _ff_bwd(p, g, pre + "ff.", dh3, fc)
            dh2 = _ln_bwd(g, pre + "ln2.", dh2, l2)
            dh, dm = _attn_bwd(p, g, pre + "mem.", dh2, mc)
            dmem = dmem + dm
            dh = _ln_bwd(g, pre + "ln1.", dh, l1)
            dy, _ = _attn_bwd(p, g, pre + "self.", dh, sc)
        dy = F.dropout_backward(dy, dc0)
        dy = _ln_bwd(g, "dec.ln.", dy, ln0)
        T = dy.shape[1]
        pos = np.zeros_like(p["dec.pos"])
        pos[:T] = dy.sum(axis=0)
        _acc(g, "dec.pos", pos)
        da, df = cfg.d_action, cfg.d_field
        _scatter_rows(g, "dec.act", p["dec.act"].shape, batch.prev, dy[..., :da], dy.dtype)
        _scatter_rows(g, "dec.field", p["dec.field"].shape, batch.field_ids, dy[..., da:da + df], dy.dtype)
        _scatter_rows(g, "dec.type", p["dec.type"].shape, batch.type_ids, dy[..., da + df:], dy.dtype)
        return dmem

    def decode_next(self, memory, past: list, t: int, prev, field_ids, type_ids, self_rel, mem_rel, mem_mask):
        """Logits (B, n_out + N) for step ``t`` alone, reusing cached layer inputs.

        ``past[l]`` holds layer ``l``'s inputs at steps ``< t`` (B, t, d) and is
        extended in place; ``self_rel`` is (B, t + 1), ``mem_rel`` and
        ``mem_mask`` are (B, N).  Matches :meth:`decode` at position ``t``.
        """
        p, cfg = self.params, self.cfg
        if t >= cfg.max_decode_len:
            raise ValueError(f"step {t} exceeds max_decode_len={cfg.max_decode_len}")
        y = np.concatenate([p["dec.act"][prev], p["dec.field"][field_ids], p["dec.type"][type_ids]], axis=-1)
        y = (y + p["dec.pos"][t])[:, None, :]
        y, _ = _ln_fwd(p, "dec.ln.", y)
        for i in range(cfg.dec_layers):
            pre = f"dec.{i}."
            keys = y if past[i] is None else np.concatenate([past[i], y], axis=1)
            past[i] = keys
            h, _ = _attn_fwd(p, pre + "self.", y, keys, cfg.dec_heads, self_rel[:, None, :], None, 0.0, None, False,
                             False)
            h, _ = _ln_fwd(p, pre + "ln1.", h)
            h2, _ = _attn_fwd(p, pre + "mem.", h, memory, cfg.dec_heads, mem_rel[:, None, :], mem_mask[:, None, :],
                              0.0, None, False, False)
            h2, _ = _ln_fwd(p, pre + "ln2.", h2)
            h3, _ = _ff_fwd(p, pre + "ff.", h2, 0.0, None, False)
            y, _ = _ln_fwd(p, pre + "ln3.", h3)
        y = y[:, 0]
        act = y @ p["out.w"] + p["out.b"]
        ptr = np.einsum("bp,bnp->bn", y @ p["ptr.q"], memory @ p["ptr.k"]) / np.sqrt(cfg.pointer_dim)
        return np.concatenate([act, ptr], axis=-1)

    # -- training objective ----------------------------------------------

    def loss(self, batch, constrain: bool = True, train: bool = False, rng=None) -> float:
        memory, _ = self.encode(batch, train, rng)
        logits, _ = self.decode(memory, batch, train, rng)
        valid = batch.valid if constrain else batch.real_out
        loss, _ = F.masked_cross_entropy(logits, batch.targets, valid, batch.weights)
        return float(loss)

    def loss_and_grads(self, batch, constrain: bool = True, train: bool = True, rng=None):
        memory, ecache = self.encode(batch, train, rng)
        logits, dcache = self.decode(memory, batch, train, rng)
        valid = batch.valid if constrain else batch.real_out
        loss, dlogits = F.masked_cross_entropy(logits, batch.targets, valid, batch.weights)
        g: dict[str, np.ndarray] = {}
        dmem = self.decode_backward(dlogits, dcache, g)
        self.encode_backward(dmem, ecache, g)
        for k, v in self.params.items():
            if k not in g:
                g[k] = np.zeros_like(v)
            elif g[k].dtype != v.dtype:
                g[k] = g[k].astype(v.dtype)
        return float(loss), g
