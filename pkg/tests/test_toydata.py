import json

from relsql import toydata
from relsql.grammar import load_grammar, validate
from relsql.sqlkit import parse_sql


def test_schemas_and_content():
    schemas = toydata.build_schemas()
    assert len(schemas) == 5
    for s in schemas.values():
        content = toydata.build_content(s)
        content.validate(s)
        assert s.primary_keys


def test_generate_is_seeded():
    a = toydata.generate(100, seed=3)
    assert a == toydata.generate(100, seed=3)
    assert a != toydata.generate(100, seed=4)


def test_every_query_parses():
    g = load_grammar()
    schemas = toydata.build_schemas()
    for e in toydata.generate(300, seed=1):
        assert validate(parse_sql(e.sql, schemas[e.db_id], g), g).ok


def test_split_sizes():
    parts = toydata.split(toydata.generate(200), seed=1)
    assert [len(parts[k]) for k in ("train", "dev", "test")] == [150, 20, 30]


def test_write_corpus(tmp_path):
    counts = toydata.write_corpus(tmp_path, n=100, seed=0)
    assert sum(counts.values()) == 100
    assert len(json.loads((tmp_path / "tables.json").read_text())) == 5
    assert len(list((tmp_path / "content").glob("*.json"))) == 5
    rows = toydata.load_examples(tmp_path / "train.jsonl")
    assert len(rows) == counts["train"]
