"""Corpus loading, training loop, evaluation and whole-experiment runs."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ConfigError, ExperimentConfig, TrainConfig
from .grammar import load_grammar
from .linking import tokenize_question
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.decode import greedy_decode
from .nn.model import ModelConfig, RatModel
from .nn.optim import Adam, linear_warmup_decay
from .pipeline import Featurized, Featurizer, build_token_vocab, make_batch, output_space, vocab_from_json
from .pipeline import TokenVocab
from .relations import RelationConfig
from .schema import ContentIndex, Schema, load_content, load_schemas
from .sqlkit import SQLError, exact_match, parse_sql
from .toydata import Example, load_examples

log = logging.getLogger(__name__)


class TrainingError(Exception):
    pass


@dataclass
class Corpus:
    schemas: dict[str, Schema]
    contents: dict[str, ContentIndex]
    splits: dict[str, list[Example]]


def load_corpus(cfg: ExperimentConfig) -> Corpus:
    cfg.check_paths()
    schemas = load_schemas(cfg.path(cfg.tables))
    contents = {}
    cdir = cfg.path(cfg.content_dir)
    if cdir is not None and cdir.is_dir():
        for db_id, s in schemas.items():
            p = cdir / f"{db_id}.json"
            if p.exists():
                contents[db_id] = load_content(p, s)
    splits = {}
    for name, fname in (("train", cfg.train_file), ("dev", cfg.dev_file), ("test", cfg.test_file)):
        rows = load_examples(cfg.path(fname))
        missing = {e.db_id for e in rows} - set(schemas)
        if missing:
            raise ConfigError(f"{fname}: unknown db_id(s) {sorted(missing)}")
        splits[name] = rows
    return Corpus(schemas, contents, splits)


# ---------------------------------------------------------------------------
# Featurization


def featurize_split(fz: Featurizer, corpus: Corpus, rows: list[Example], offset: int = 0) -> list[Featurized]:
    out = []
    for i, e in enumerate(rows):
        s = corpus.schemas[e.db_id]
        try:
            out.append(fz.featurize(e.question, s, corpus.contents.get(e.db_id), e.sql, index=offset + i))
        except SQLError as exc:
            log.warning("skipping %s example %r: %s", e.db_id, e.sql, exc)
    return out


def build_featurizer(cfg: ExperimentConfig, corpus: Corpus) -> Featurizer:
    grammar = load_grammar(cfg.grammar)
    train = corpus.splits["train"]
    trees = []
    for e in train:
        try:
            trees.append(parse_sql(e.sql, corpus.schemas[e.db_id], grammar))
        except SQLError:
            pass
    space, dvocab = output_space(grammar, trees, cfg.vocab_min_count)
    tokens = build_token_vocab([tokenize_question(e.question) for e in train], list(corpus.schemas.values()),
                               cfg.token_min_count)
    return Featurizer(grammar, space, tokens, dvocab, cfg.relations, cfg.ordering, cfg.shuffle_seed,
                      cfg.model.get("max_input_len", 256))


def model_config(cfg: ExperimentConfig, fz: Featurizer) -> ModelConfig:
    return ModelConfig(
        n_tokens=len(fz.tokens), n_out=fz.space.size, n_action_emb=fz.dvocab.n_action_embeddings,
        n_fields=len(fz.dvocab.fields), n_types=len(fz.dvocab.types), n_relations=len(fz.rs), **cfg.model,
    )


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EvalResult:
    correct: int
    total: int
    invalid: int  # predictions that did not form a valid tree

    @property
    def exact_match(self) -> float:
        return self.correct / self.total if self.total else 0.0


def evaluate(model: RatModel, fz: Featurizer, feats: list[Featurized], constrain: bool = True,
             max_steps: int = 80) -> EvalResult:
    preds = greedy_decode(model, fz, feats, constrain=constrain, max_steps=max_steps)
    correct = invalid = 0
    for p, f in zip(preds, feats):
        if p.tree is None:
            invalid += 1
        elif exact_match(p.tree, f.tree):
            correct += 1
    return EvalResult(correct, len(feats), invalid)


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    best_params: dict
    best_step: int
    best_val: float
    metrics: list = field(default_factory=list)
    seconds: float = 0.0


def _check_finite(loss: float, step: int, lr: float, model: RatModel) -> None:
    if math.isfinite(loss):
        return
    norms = {k: float(np.linalg.norm(v)) for k, v in model.params.items()}
    worst = sorted(norms.items(), key=lambda kv: -kv[1] if math.isfinite(kv[1]) else -math.inf)[:3]
    bad = [k for k, v in norms.items() if not math.isfinite(v)]
    raise TrainingError(f"non-finite loss {loss} at step {step} (lr={lr:g}); non-finite params: {bad[:5]}; "
                        f"largest param norms: {worst}")


def train(model: RatModel, fz: Featurizer, train_feats: list[Featurized], dev_feats: list[Featurized],
          tcfg: TrainConfig, metrics_path: str | Path | None = None) -> TrainResult:
    """Teacher-forced training with Adam; keeps the parameters with the best dev exact match."""
    if not train_feats:
        raise TrainingError("no trainable examples")
    rng = np.random.default_rng(tcfg.seed)
    opt = Adam(model.params)
    order: list[int] = []
    best = TrainResult({k: v.copy() for k, v in model.params.items()}, 0, -1.0)
    window: list[float] = []
    mfile = open(metrics_path, "w") if metrics_path else None
    start = time.perf_counter()
    try:
        for stp in range(1, tcfg.steps + 1):
            lr = linear_warmup_decay(stp, tcfg.peak_lr, tcfg.warmup_steps, tcfg.steps)
            total: dict[str, np.ndarray] | None = None
            losses = []
            for _ in range(tcfg.grad_accum):
                if len(order) < tcfg.batch:
                    order += [int(i) for i in rng.permutation(len(train_feats))]
                picked, order = order[: tcfg.batch], order[tcfg.batch:]
                batch = make_batch([train_feats[i] for i in picked], fz.rs, fz.rel_cfg, fz.space.size, model.dtype)
                loss, grads = model.loss_and_grads(batch, constrain=tcfg.constrain_train, train=True, rng=rng)
                _check_finite(loss, stp, lr, model)
                losses.append(loss)
                if total is None:
                    total = grads
                else:
                    for k in total:
                        total[k] += grads[k]
            if tcfg.grad_accum > 1:
                for k in total:
                    total[k] /= tcfg.grad_accum
            opt.update(model.params, total, lr)
            window.append(float(np.mean(losses)))
            val = None
            if stp % tcfg.eval_every == 0 or stp == tcfg.steps:
                val = evaluate(model, fz, dev_feats, tcfg.constrain_infer, tcfg.max_decode_steps).exact_match
                if val > best.best_val:
                    best = TrainResult({k: v.copy() for k, v in model.params.items()}, stp, val)
            if stp % tcfg.log_every == 0 or val is not None:
                row = {"step": stp, "loss": round(float(np.mean(window)), 6), "lr": lr, "val_exact_match": val}
                best.metrics.append(row)
                window = []
                if mfile:
                    mfile.write(json.dumps(row) + "\n")
                    mfile.flush()
                log.info("step %d loss %.4f lr %.2e val %s", stp, row["loss"], lr, val)
    finally:
        if mfile:
            mfile.close()
    best.seconds = time.perf_counter() - start
    return best


# ---------------------------------------------------------------------------
# Whole experiments


def checkpoint_meta(cfg: ExperimentConfig, fz: Featurizer, mcfg: ModelConfig, extra: dict | None = None) -> dict:
    meta = {
        "model": mcfg.to_json(),
        "experiment": cfg.to_json(),
        "action_vocab": fz.space.vocab.to_json(),
        "token_vocab": fz.tokens.to_json(),
    }
    meta.update(extra or {})
    return meta


def load_trained(path: str | Path) -> tuple[RatModel, Featurizer, ExperimentConfig]:
    from .config import experiment_from_dict

    params, meta = load_checkpoint(path)
    cfg = experiment_from_dict(meta["experiment"])
    grammar = load_grammar(cfg.grammar)
    space, dvocab = vocab_from_json(grammar, meta["action_vocab"])
    fz = Featurizer(grammar, space, TokenVocab.from_json(meta["token_vocab"]), dvocab, cfg.relations, cfg.ordering,
                    cfg.shuffle_seed, cfg.model.get("max_input_len", 256))
    return RatModel(ModelConfig(**meta["model"]), params), fz, cfg


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, corpus: Corpus | None = None,
                   eval_unconstrained: bool = False) -> dict:
    """Train on the train split, select on dev, report held-out test exact match."""
    out = Path(out_dir) if out_dir is not None else cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    with threadpool_limits(limits=1):
        corpus = corpus or load_corpus(cfg)
        fz = build_featurizer(cfg, corpus)
        feats = {name: featurize_split(fz, corpus, rows, offset=k * 1_000_000)
                 for k, (name, rows) in enumerate(corpus.splits.items())}
        mcfg = model_config(cfg, fz)
        model = RatModel.create(mcfg, seed=cfg.train.seed)
        result = train(model, fz, feats["train"], feats["dev"], cfg.train, out / "metrics.jsonl")
        model.params = result.best_params
        test = evaluate(model, fz, feats["test"], cfg.train.constrain_infer, cfg.train.max_decode_steps)
        summary = {
            "best_step": result.best_step,
            "dev_exact_match": result.best_val,
            "test_exact_match": test.exact_match,
            "test_invalid": test.invalid,
            "test_total": test.total,
            "train_seconds": round(result.seconds, 1),
        }
        if eval_unconstrained:
            other = evaluate(model, fz, feats["test"], not cfg.train.constrain_infer, cfg.train.max_decode_steps)
            summary["test_exact_match_flipped_inference"] = other.exact_match
        save_checkpoint(out / "model.ckpt", model.params, checkpoint_meta(cfg, fz, mcfg, {"summary": summary}))
    with open(out / "result.json", "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    return summary


__all__ = [
    "Corpus",
    "EvalResult",
    "RelationConfig",
    "TrainResult",
    "TrainingError",
    "build_featurizer",
    "evaluate",
    "load_corpus",
    "load_trained",
    "model_config",
    "run_experiment",
    "train",
]
