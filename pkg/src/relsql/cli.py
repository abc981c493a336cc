"""Command-line entry point.

Exit codes: 0 success, 1 validation or directional-check failure, 2 I/O or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import OUTPUT_ENV, ConfigError, apply_override, experiment_from_dict, load_config
from .schema import SchemaError

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2

log = logging.getLogger("relsql")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# roundtrip


def read_examples(path: str | Path) -> list[dict]:
    """JSON lines or a JSON list; each item needs ``db_id`` and ``sql`` (or ``query``)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        if text.lstrip().startswith("["):
            rows = json.loads(text)
        else:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from None
    for i, r in enumerate(rows):
        if not isinstance(r, dict) or "db_id" not in r or not ("sql" in r or "query" in r):
            raise ConfigError(f"{path}: item {i} needs db_id and sql/query")
    return rows


def roundtrip_report(rows: list[dict], schemas: dict) -> dict:
    from .grammar import load_grammar
    from .relations import build_layout
    from .sqlkit import SQLError, exact_match, parse_sql, print_sql
    from .transitions import TransitionError, deserialize, serialize
    from .linking import tokenize_question

    grammar = load_grammar("spider_sql")
    report = {"ok": 0, "parse-unsupported": 0, "roundtrip-mismatch": 0, "mismatches": []}
    for i, r in enumerate(rows):
        sql = r.get("sql", r.get("query"))
        schema = schemas.get(r["db_id"])
        if schema is None:
            raise ConfigError(f"example {i}: unknown db_id {r['db_id']!r}")
        try:
            tree = parse_sql(sql, schema, grammar)
        except SQLError:
            report["parse-unsupported"] += 1
            continue
        try:
            inp = build_layout(schema, tokenize_question(r.get("question", "")))
            back = deserialize(serialize(tree, grammar, inp), grammar, inp)
            again = parse_sql(print_sql(back), schema, grammar)
            same = exact_match(again, tree)
        except (TransitionError, *SQLError) as exc:
            same, again = False, exc
        if same:
            report["ok"] += 1
        else:
            report["roundtrip-mismatch"] += 1
            report["mismatches"].append({"index": i, "sql": sql})
    return report


def cmd_roundtrip(args) -> int:
    from .schema import load_schemas

    rows = read_examples(args.examples)
    report = roundtrip_report(rows, load_schemas(args.tables))
    total = len(rows)
    print(f"ok {report['ok']}/{total}  parse-unsupported {report['parse-unsupported']}  "
          f"roundtrip-mismatch {report['roundtrip-mismatch']}")
    for m in report["mismatches"][:20]:
        print(f"  mismatch #{m['index']}: {m['sql']}")
    return EXIT_FAIL if report["roundtrip-mismatch"] else EXIT_OK


# ---------------------------------------------------------------------------
# relations


def relations_dump(cfg, split: str, index: int, which: str) -> str:
    from .pipeline import Featurizer, build_token_vocab, output_space
    from .grammar import load_grammar
    from .linking import link
    from .relations import dump_csv, encoder_relations, RelationSchema
    from .sqlkit import parse_sql
    from .train import load_corpus

    corpus = load_corpus(cfg)
    rows = corpus.splits[split]
    if not 0 <= index < len(rows):
        raise UsageError(f"index {index} out of range for {split} split of {len(rows)} examples")
    ex = rows[index]
    schema = corpus.schemas[ex.db_id]
    content = corpus.contents.get(ex.db_id)
    rs = RelationSchema(cfg.relations.horizon)
    grammar = load_grammar(cfg.grammar)
    space, dvocab = output_space(grammar, [])
    fz = Featurizer(grammar, space, build_token_vocab([], []), dvocab, cfg.relations, cfg.ordering,
                    cfg.shuffle_seed)
    inp = fz.layout(ex.question, schema, index)
    names = [inp.describe(p) for p in range(len(inp))]
    if which == "encoder":
        links = link(list(inp.question_tokens), schema, content, fz.link_cfg)
        return dump_csv(encoder_relations(inp, links, cfg.relations, rs), rs, names)
    from .relations import RelationMatrix, decoder_relations
    from .transitions import replay, serialize

    actions = serialize(parse_sql(ex.sql, schema, grammar), grammar, inp)
    steps = [f"{t}:{a}" for t, a in enumerate(actions)]
    if which == "decoder":
        state = replay(actions, grammar, inp)
        return dump_csv(decoder_relations(list(state.slots), cfg.relations, rs), rs, steps)
    return dump_csv(RelationMatrix(fz.memory_rows(actions[:-1], inp, len(actions))), rs, steps, names)


def cmd_relations(args) -> int:
    cfg = load_config(args.config, args.set)
    text = relations_dump(cfg, args.split, args.index, args.which)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / eval / ablate


def cmd_train(args) -> int:
    from .train import run_experiment

    cfg = load_config(args.config, args.set)
    out = cfg.resolved_output_dir()
    summary = run_experiment(cfg, out)
    print(json.dumps(summary, sort_keys=True))
    print(f"test exact match: {summary['test_exact_match']:.4f}  (checkpoint: {out / 'model.ckpt'})")
    return EXIT_OK


def cmd_eval(args) -> int:
    from threadpoolctl import threadpool_limits

    from .toydata import load_examples
    from .train import Corpus, evaluate, featurize_split, load_corpus, load_trained

    model, fz, cfg = load_trained(args.checkpoint)
    if args.config:
        cfg = load_config(args.config, args.set)
    elif args.set:
        data = cfg.to_json()
        for item in args.set:
            apply_override(data, item)
        cfg = experiment_from_dict(data)
    corpus = load_corpus(cfg)
    rows = load_examples(args.examples) if args.examples else corpus.splits[args.split]
    corpus = Corpus(corpus.schemas, corpus.contents, {"eval": rows})
    with threadpool_limits(limits=1):
        feats = featurize_split(fz, corpus, rows)
        constrain = not args.unconstrained
        res = evaluate(model, fz, feats, constrain, cfg.train.max_decode_steps)
    print(json.dumps({"exact_match": res.exact_match, "correct": res.correct, "total": res.total,
                      "invalid": res.invalid, "constrained": constrain}, sort_keys=True))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .ablate import resolve_rows, run_sweep

    cfg = load_config(args.config, args.set)
    rows = resolve_rows(args.sweep)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise ConfigError("no seeds given")
    res = run_sweep(cfg, rows, seeds, cfg.resolved_output_dir())
    print(res.table())
    if res.errors:
        for row, errs in res.errors.items():
            for e in errs:
                print(f"error in {row}: {e}")
    return EXIT_OK if all(c.passed for c in res.checks) and not res.errors else EXIT_FAIL


def cmd_gen_toy_data(args) -> int:
    from .toydata import write_corpus

    counts = write_corpus(args.out, n=args.count, seed=args.seed)
    print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parse / print helpers


def cmd_parse(args) -> int:
    from .grammar import load_grammar
    from .relations import build_layout
    from .schema import load_schema
    from .sqlkit import parse_sql
    from .transitions import format_actions, serialize

    schema = load_schema(args.tables, args.db_id)
    grammar = load_grammar("spider_sql")
    tree = parse_sql(args.sql, schema, grammar)
    if args.actions:
        print(format_actions(serialize(tree, grammar, build_layout(schema, []))))
    else:
        print(repr(tree))
    return EXIT_OK


def cmd_print(args) -> int:
    from .grammar import load_grammar
    from .relations import build_layout
    from .schema import load_schema
    from .sqlkit import print_sql
    from .transitions import deserialize, parse_actions

    schema = load_schema(args.tables, args.db_id)
    grammar = load_grammar("spider_sql")
    text = Path(args.actions).read_text() if args.actions != "-" else sys.stdin.read()
    print(print_sql(deserialize(parse_actions(text), grammar, build_layout(schema, []))))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relsql", description="Relation-aware text-to-SQL toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, required=True):
        sp.add_argument("config", nargs=None if required else "?", help="experiment JSON config")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (dotted, JSON value), repeatable")

    sp = sub.add_parser("roundtrip", help="parse -> actions -> tree -> SQL -> parse identity check")
    sp.add_argument("examples", help="JSON/JSONL examples with db_id and sql or query")
    sp.add_argument("tables", help="tables.json")
    sp.set_defaults(func=cmd_roundtrip)

    sp = sub.add_parser("relations", help="dump a relation matrix as CSV of label names")
    with_config(sp)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--split", choices=("train", "dev", "test"), default="train")
    sp.add_argument("--which", choices=("encoder", "decoder", "memory"), default="encoder")
    sp.add_argument("--out", help="write to a file instead of stdout")
    sp.set_defaults(func=cmd_relations)

    sp = sub.add_parser("train", help=f"train, select on dev, report test (output dir: config or ${OUTPUT_ENV})")
    with_config(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--config", help="override the config stored in the checkpoint")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sp.add_argument("--split", choices=("train", "dev", "test"), default="test")
    sp.add_argument("--examples", help="JSONL examples instead of a split")
    sp.add_argument("--unconstrained", action="store_true", help="decode without the grammar mask")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="train one model per sweep row and seed; print the comparison")
    with_config(sp)
    sp.add_argument("--sweep", required=True, help="comma list of rows or sweep names (constraining, structure, masks)")
    sp.add_argument("--seeds", default="0,1,2")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("gen-toy-data", help="write the seeded toy corpus")
    sp.add_argument("out")
    sp.add_argument("--count", type=int, default=1500)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gen_toy_data)

    sp = sub.add_parser("parse", help="parse one SQL query into a tree or actions")
    sp.add_argument("tables")
    sp.add_argument("sql")
    sp.add_argument("--db-id")
    sp.add_argument("--actions", action="store_true", help="print the action sequence")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("print", help="turn an action sequence (one per line) back into SQL")
    sp.add_argument("tables")
    sp.add_argument("actions", help="file with actions, or - for stdin")
    sp.add_argument("--db-id")
    sp.set_defaults(func=cmd_print)
    return p


def main(argv: list[str] | None = None) -> int:
    from .sqlkit import SQLError
    from .transitions import TransitionError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, TransitionError, *SQLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
