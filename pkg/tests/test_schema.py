import json

import pytest

from relsql.schema import (
    SchemaError,
    content_to_json,
    load_content,
    load_schema,
    load_schemas,
    save_schemas,
    schema_from_spider,
    schema_to_spider,
)

from conftest import FIXTURES


def entry():
    return json.loads((FIXTURES / "singer_tables.json").read_text())[0]


def test_load_injects_wildcards(singer):
    assert [t.name for t in singer.tables] == ["singer", "concert"]
    assert singer.num_columns == 10  # 8 real columns + one wildcard per table
    for t in range(2):
        assert singer.column_list[singer.wildcard_of(t)].is_wildcard
        assert singer.table_columns(t)[0] == singer.wildcard_of(t)


def test_keys_are_remapped(singer):
    sid = singer.column_id("singer", "singer_id")
    cid = singer.column_id("concert", "singer_id")
    assert singer.foreign_keys == ((cid, sid),)
    assert sid in singer.primary_keys
    assert singer.column_id("concert", "concert_id") in singer.primary_keys


def test_qualified_names(singer):
    c = singer.column_id("concert", "year")
    assert singer.qualified_name(c) == "concert.year"
    assert singer.resolve_qualified("CONCERT.Year") == c
    assert singer.column_list[c].display_name == "year"


def test_empty_tables_rejected():
    e = entry()
    e["table_names_original"] = e["table_names"] = []
    with pytest.raises(SchemaError):
        schema_from_spider(e)


def test_dangling_foreign_key():
    e = entry()
    e["foreign_keys"] = [[8, 42]]
    with pytest.raises(SchemaError, match="42"):
        schema_from_spider(e)


def test_duplicate_column():
    e = entry()
    e["column_names_original"][2] = [0, "singer_id"]
    with pytest.raises(SchemaError, match="duplicate"):
        schema_from_spider(e)


def test_malformed_json(tmp_path):
    p = tmp_path / "tables.json"
    p.write_text('[{"db_id": ')
    with pytest.raises(SchemaError, match="malformed"):
        load_schemas(p)


def test_spider_round_trip(singer, tmp_path):
    assert schema_from_spider(schema_to_spider(singer)) == singer
    save_schemas([singer], tmp_path / "t.json")
    assert load_schema(tmp_path / "t.json") == singer


def test_content_keys(singer, singer_content):
    country = singer.column_id("singer", "country")
    assert "France" in singer_content.cells[country]
    again = content_to_json(singer_content, singer)
    assert again["singer.country"][-1] == "France"


def test_content_unknown_key(singer, tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"singer.height": ["1"]}')
    with pytest.raises(SchemaError):
        load_content(p, singer)
