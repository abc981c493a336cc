"""Greedy decoding, with or without the grammar mask."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from ..grammar import AstNode
from ..relations import IncrementalDecoderRelations
from ..transitions import (
    COPY_ACTIONS,
    DecoderState,
    TransitionError,
    allowed_actions,
    check_action,
    deserialize,
    initial_state,
    pending_slot,
    step,
)
from .functional import NEG_INF


@dataclass
class Prediction:
    actions: list = field(default_factory=list)
    tree: AstNode | None = None
    error: str | None = None  # set when decoding produced no valid tree


def output_mask(state: DecoderState, fz, inp, width: int, constrain: bool) -> np.ndarray:
    """Admissible output entries for the next step, padded to ``width``."""
    m = np.zeros(width, dtype=bool)
    if constrain:
        allowed = allowed_actions(state, fz.grammar, fz.space.vocab, inp)
        m[: fz.space.size + len(inp)] = fz.space.mask(allowed, inp)
    else:
        m[: fz.space.size + len(inp)] = True
    return m


def choose(logits: np.ndarray, mask: np.ndarray) -> int:
    return int(np.argmax(np.where(mask, logits, NEG_INF)))


class _Run:
    def __init__(self, fz, feat):
        self.feat = feat
        self.state = initial_state(fz.grammar)
        self.prev = [fz.dvocab.start]
        self.fields: list[int] = []
        self.types: list[int] = []
        self.rel = IncrementalDecoderRelations(fz.rel_cfg, fz.rs)
        self.copies: list[int | None] = [None]  # memory position copied by the previous action
        self.pred = Prediction()
        self.finished = False


def _decoder_inputs(runs, fz, n_mem: int):
    b, t = len(runs), len(runs[0].fields)
    rs = fz.rs
    ns = SimpleNamespace()
    ns.prev = np.array([r.prev for r in runs], dtype=np.int64)
    ns.field_ids = np.array([r.fields for r in runs], dtype=np.int64)
    ns.type_ids = np.array([r.types for r in runs], dtype=np.int64)
    ns.dec_rel = np.stack([r.rel.ids for r in runs])
    ns.dec_mask = np.broadcast_to(np.tril(np.ones((t, t), dtype=bool)), (b, t, t))
    ns.mem_rel = np.full((b, t, n_mem), rs.memory_padding, dtype=np.int64)
    ns.mem_mask = np.zeros((b, t, n_mem), dtype=bool)
    for i, r in enumerate(runs):
        ns.mem_mask[i, :, : len(r.feat.input)] = True
        if fz.rel_cfg.copied_from:
            for s, pos in enumerate(r.copies):
                if pos is not None:
                    ns.mem_rel[i, s, pos] = rs["Copied-From"]
    return ns


def greedy_decode(model, fz, feats, constrain: bool = True, max_steps: int = 80, batch_size: int = 64) -> list[Prediction]:
    """Decode every featurized input; illegal unconstrained choices end that input with an error."""
    from ..pipeline import encoder_batch

    rs = fz.rs
    max_steps = min(max_steps, model.cfg.max_decode_len)
    out: list[Prediction] = []
    for lo in range(0, len(feats), batch_size):
        chunk = feats[lo:lo + batch_size]
        eb = encoder_batch(chunk, rs, fz.rel_cfg, fz.space.size, model.dtype)
        memory, _ = model.encode(eb)
        runs = [_Run(fz, f) for f in chunk]
        b, n_mem = memory.shape[:2]
        width = fz.space.size + n_mem
        past: list = [None] * model.cfg.dec_layers
        self_rel = np.full((b, max_steps), rs.decoder_padding, dtype=np.int64)
        mem_mask = eb.mem_real
        for t in range(max_steps):
            if all(r.finished for r in runs):
                break
            prev = np.full(b, fz.dvocab.start, dtype=np.int64)
            fids = np.zeros(b, dtype=np.int64)
            tids = np.zeros(b, dtype=np.int64)
            mem_rel = np.full((b, n_mem), rs.memory_padding, dtype=np.int64)
            for i, r in enumerate(runs):
                if r.finished:
                    continue  # keeps computing on filler inputs; results are ignored
                slot = pending_slot(r.state, fz.grammar)
                fids[i], tids[i] = fz.dvocab.slot_ids(slot)
                r.fields.append(int(fids[i]))
                r.types.append(int(tids[i]))
                r.rel.append(slot)
                self_rel[i, : t + 1] = r.rel.ids[t]
                prev[i] = r.prev[t]
                if fz.rel_cfg.copied_from and r.copies[t] is not None:
                    mem_rel[i, r.copies[t]] = rs["Copied-From"]
            logits = model.decode_next(memory, past, t, prev, fids, tids, self_rel[:, : t + 1], mem_rel, mem_mask)
            for i, r in enumerate(runs):
                if r.finished:
                    continue
                inp = r.feat.input
                mask = output_mask(r.state, fz, inp, width, constrain)
                action = fz.space.decode(choose(logits[i], mask), inp)
                problem = check_action(r.state, action, fz.grammar, inp)
                r.pred.actions.append(action)
                if problem is not None:
                    r.pred.error = f"step {t + 1}: {action} is illegal: {problem}"
                    r.finished = True
                    continue
                r.state = step(r.state, action, fz.grammar, inp)
                r.prev.append(fz.dvocab.action_id(action, fz.space, inp))
                r.copies.append(inp.position_of(action) if isinstance(action, COPY_ACTIONS) else None)
                if r.state.done:
                    r.finished = True
        for r in runs:
            if r.pred.error is None:
                if not r.state.done:
                    r.pred.error = f"no complete tree within {max_steps} steps"
                else:
                    r.pred.tree = deserialize(r.pred.actions, fz.grammar, r.feat.input)
            out.append(r.pred)
    return out


def decode_step(model, fz, memory: np.ndarray, feat, state: DecoderState, actions: list, constrain: bool = True):
    """Logits for the step after ``actions`` and the greedy choice.

    ``memory`` is (N, d_enc) for ``feat``'s input.  Structurally illegal
    choices are returned as-is when ``constrain`` is off.
    """
    if state.done:
        raise TransitionError("decoding is complete")
    run = _Run(fz, feat)
    replayed = initial_state(fz.grammar)
    for a in list(actions) + [None]:
        slot = pending_slot(replayed, fz.grammar)
        f_id, t_id = fz.dvocab.slot_ids(slot)
        run.fields.append(f_id)
        run.types.append(t_id)
        run.rel.append(slot)
        if a is None:
            break
        replayed = step(replayed, a, fz.grammar, feat.input)
        run.prev.append(fz.dvocab.action_id(a, fz.space, feat.input))
        run.copies.append(feat.input.position_of(a) if isinstance(a, COPY_ACTIONS) else None)
    ns = _decoder_inputs([run], fz, memory.shape[0])
    logits, _ = model.decode(memory[None], ns)
    last = logits[0, -1]
    mask = output_mask(state, fz, feat.input, len(last), constrain)
    idx = choose(last, mask)
    shown = np.where(mask, last, -np.inf)
    return shown, fz.space.decode(idx, feat.input)
