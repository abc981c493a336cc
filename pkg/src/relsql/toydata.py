"""Seeded toy text-to-SQL corpus over five small synthetic databases.

Tables inside a database deliberately share column names (``name``, ``city``,
``age``) so that picking the right column needs the table structure, and
question values are drawn from the stored cell contents so content linking
has something to find.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schema import Column, ContentIndex, Schema, Table, content_to_json, save_schemas

# (table, plural, [(column, type, natural name)], primary key)
_DBS: dict[str, dict] = {
    "concert_hall": {
        "tables": [
            ("singer", "singers", [("singer_id", "number"), ("name", "text"), ("country", "text"), ("age", "number")]),
            ("concert", "concerts", [("concert_id", "number"), ("name", "text"), ("year", "number"),
                                     ("singer_id", "number")]),
        ],
        "fks": [(("concert", "singer_id"), ("singer", "singer_id"))],
    },
    "school": {
        "tables": [
            ("student", "students", [("student_id", "number"), ("name", "text"), ("city", "text"), ("age", "number")]),
            ("teacher", "teachers", [("teacher_id", "number"), ("name", "text"), ("city", "text"),
                                     ("salary", "number")]),
            ("class", "classes", [("class_id", "number"), ("room", "text"), ("size", "number"),
                                  ("teacher_id", "number")]),
        ],
        "fks": [(("class", "teacher_id"), ("teacher", "teacher_id"))],
    },
    "shop": {
        "tables": [
            ("product", "products", [("product_id", "number"), ("name", "text"), ("category", "text"),
                                     ("price", "number")]),
            ("store", "stores", [("store_id", "number"), ("name", "text"), ("city", "text"), ("size", "number")]),
            ("sale", "sales", [("sale_id", "number"), ("quantity", "number"), ("product_id", "number"),
                               ("store_id", "number")]),
        ],
        "fks": [(("sale", "product_id"), ("product", "product_id")), (("sale", "store_id"), ("store", "store_id"))],
    },
    "league": {
        "tables": [
            ("team", "teams", [("team_id", "number"), ("name", "text"), ("city", "text"), ("founded", "number")]),
            ("player", "players", [("player_id", "number"), ("name", "text"), ("position", "text"),
                                   ("age", "number"), ("team_id", "number")]),
        ],
        "fks": [(("player", "team_id"), ("team", "team_id"))],
    },
    "library": {
        "tables": [
            ("author", "authors", [("author_id", "number"), ("name", "text"), ("country", "text"),
                                   ("birth_year", "number")]),
            ("book", "books", [("book_id", "number"), ("title", "text"), ("genre", "text"), ("pages", "number"),
                               ("author_id", "number")]),
        ],
        "fks": [(("book", "author_id"), ("author", "author_id"))],
    },
}

_CELLS: dict[str, list[str]] = {
    "singer.name": ["Adele", "Bono", "Shakira", "Sting", "Rihanna", "Drake"],
    "singer.country": ["France", "Spain", "Canada", "Brazil", "Japan", "Italy"],
    "concert.name": ["Overture", "Echoes", "Nightfall", "Horizon", "Serenade", "Aurora"],
    "student.name": ["Alice", "Boris", "Chen", "Dana", "Emeka", "Farah"],
    "student.city": ["Boston", "Denver", "Austin", "Seattle", "Chicago", "Miami"],
    "teacher.name": ["Hughes", "Ivanova", "Jensen", "Kumar", "Lopez", "Moreau"],
    "teacher.city": ["Portland", "Dallas", "Atlanta", "Phoenix", "Detroit", "Tampa"],
    "class.room": ["A101", "B202", "C303", "D404", "E505", "F606"],
    "product.name": ["Kettle", "Lamp", "Blender", "Toaster", "Mirror", "Stool"],
    "product.category": ["Kitchen", "Lighting", "Garden", "Bath", "Office", "Outdoor"],
    "store.name": ["Northgate", "Riverside", "Lakeview", "Hilltop", "Seaside", "Westfield"],
    "store.city": ["Leeds", "Bristol", "Glasgow", "Cardiff", "Belfast", "Oxford"],
    "team.name": ["Falcons", "Tigers", "Wolves", "Sharks", "Eagles", "Comets"],
    "team.city": ["Madrid", "Lisbon", "Vienna", "Prague", "Dublin", "Oslo"],
    "player.position": ["Goalkeeper", "Defender", "Midfielder", "Forward", "Winger", "Sweeper"],
    "author.name": ["Austen", "Borges", "Calvino", "Dickens", "Eliot", "Flaubert"],
    "author.country": ["England", "Argentina", "Italy", "France", "Russia", "Ireland"],
    "book.title": ["Emma", "Ficciones", "Middlemarch", "Persuasion", "Ulysses", "Dubliners"],
    "book.genre": ["Novel", "Poetry", "Mystery", "Fantasy", "Satire", "Drama"],
}

# ranges for numbers mentioned in questions
_NUMBERS: dict[str, tuple[int, int]] = {
    "age": (18, 60), "year": (1990, 2020), "salary": (30000, 90000), "size": (10, 40),
    "price": (5, 200), "quantity": (1, 50), "founded": (1900, 2000), "birth_year": (1800, 1950),
    "pages": (100, 900),
}

SPLITS = ("train", "dev", "test")


def build_schemas() -> dict[str, Schema]:
    out = {}
    for db_id, spec in _DBS.items():
        tables, col_ids = [], {}
        cid = 0
        for tname, _, cols in spec["tables"]:
            columns = [Column("*", "text")]
            cid += 1
            for cname, ctype in cols:
                columns.append(Column(cname, ctype, cname.replace("_", " ")))
                col_ids[(tname, cname)] = cid
                cid += 1
            tables.append(Table(tname, tuple(columns), tname))
        pks = frozenset(col_ids[(t, cols[0][0])] for t, _, cols in spec["tables"])
        fks = tuple((col_ids[s], col_ids[d]) for s, d in spec["fks"])
        out[db_id] = Schema(db_id, tuple(tables), fks, pks)
    return out


def build_content(schema: Schema) -> ContentIndex:
    cells = {}
    for c, col in enumerate(schema.column_list):
        key = schema.qualified_name(c)
        if key in _CELLS:
            cells[c] = tuple(_CELLS[key])
    return ContentIndex(cells)


@dataclass(frozen=True)
class Example:
    question: str
    sql: str
    db_id: str

    def to_json(self) -> dict:
        return {"question": self.question, "sql": self.sql, "db_id": self.db_id}


# ---------------------------------------------------------------------------
# Templates


class _Db:
    def __init__(self, db_id: str):
        spec = _DBS[db_id]
        self.db_id = db_id
        self.tables = {t: (plural, [c for c, _ in cols], {c: ty for c, ty in cols})
                       for t, plural, cols in spec["tables"]}
        self.fks = spec["fks"]

    def plural(self, t):
        return self.tables[t][0]

    def text_cols(self, t):
        return [c for c in self.tables[t][1] if f"{t}.{c}" in _CELLS]

    def num_cols(self, t):
        return [c for c in self.tables[t][1] if c in _NUMBERS]

    def any_cols(self, t):
        return self.text_cols(t) + self.num_cols(t)


def _nat(c: str) -> str:
    return c.replace("_", " ")


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


_AGGS = [("average", "avg"), ("maximum", "max"), ("minimum", "min"), ("total", "sum")]
_CMPS = [("greater than", ">"), ("above", ">"), ("less than", "<"), ("below", "<")]


def _num(rng, c):
    lo, hi = _NUMBERS[c]
    return int(rng.integers(lo, hi + 1))


def _t_select(db, t, rng):
    c = _pick(rng, db.any_cols(t))
    q = _pick(rng, ["show the {c} of all {T}", "list the {c} of every {t}", "what are the {c} values of {T}"])
    return q.format(c=_nat(c), T=db.plural(t), t=t), f"SELECT {t}.{c} FROM {t}"


def _t_count(db, t, rng):
    q = _pick(rng, ["how many {T} are there", "count the number of {T}", "what is the number of {T}"])
    return q.format(T=db.plural(t)), f"SELECT count(*) FROM {t}"


def _t_agg(db, t, rng):
    c = _pick(rng, db.num_cols(t))
    word, fn = _pick(rng, _AGGS)
    return f"what is the {word} {_nat(c)} of {db.plural(t)}", f"SELECT {fn}({t}.{c}) FROM {t}"


def _t_where_str(db, t, rng):
    tc = _pick(rng, db.text_cols(t))
    c = _pick(rng, [x for x in db.any_cols(t) if x != tc])
    v = _pick(rng, _CELLS[f"{t}.{tc}"])
    return (f"show the {_nat(c)} of {db.plural(t)} whose {_nat(tc)} is {v}",
            f"SELECT {t}.{c} FROM {t} WHERE {t}.{tc} = '{v}'")


def _t_where_num(db, t, rng):
    nc = _pick(rng, db.num_cols(t))
    c = _pick(rng, [x for x in db.any_cols(t) if x != nc])
    word, op = _pick(rng, _CMPS)
    n = _num(rng, nc)
    return (f"which {db.plural(t)} have {_nat(nc)} {word} {n} ? give their {_nat(c)}",
            f"SELECT {t}.{c} FROM {t} WHERE {t}.{nc} {op} {n}")


def _t_count_where(db, t, rng):
    tc = _pick(rng, db.text_cols(t))
    v = _pick(rng, _CELLS[f"{t}.{tc}"])
    return (f"how many {db.plural(t)} have {_nat(tc)} {v}",
            f"SELECT count(*) FROM {t} WHERE {t}.{tc} = '{v}'")


def _t_order(db, t, rng):
    nc = _pick(rng, db.num_cols(t))
    c1 = _pick(rng, db.text_cols(t))
    desc = bool(rng.integers(2))
    word = "descending" if desc else "ascending"
    return (f"list the {_nat(c1)} and {_nat(nc)} of {db.plural(t)} sorted by {_nat(nc)} in {word} order",
            f"SELECT {t}.{c1}, {t}.{nc} FROM {t} ORDER BY {t}.{nc} {'DESC' if desc else 'ASC'}")


def _t_distinct(db, t, rng):
    tc = _pick(rng, db.text_cols(t))
    return f"list the distinct {_nat(tc)} of {db.plural(t)}", f"SELECT DISTINCT {t}.{tc} FROM {t}"


def _t_group(db, t, rng):
    tc = _pick(rng, db.text_cols(t))
    return (f"for each {_nat(tc)} , how many {db.plural(t)} are there",
            f"SELECT {t}.{tc}, count(*) FROM {t} GROUP BY {t}.{tc}")


def _t_superlative(db, t, rng):
    nc = _pick(rng, db.num_cols(t))
    c = _pick(rng, db.text_cols(t))
    desc = bool(rng.integers(2))
    word = "highest" if desc else "lowest"
    return (f"which {t} has the {word} {_nat(nc)} ? show its {_nat(c)}",
            f"SELECT {t}.{c} FROM {t} ORDER BY {t}.{nc} {'DESC' if desc else 'ASC'} LIMIT 1")


def _t_top_n(db, t, rng):
    nc = _pick(rng, db.num_cols(t))
    c = _pick(rng, db.text_cols(t))
    n = int(rng.integers(2, 6))
    return (f"show the {_nat(c)} of the top {n} {db.plural(t)} by {_nat(nc)}",
            f"SELECT {t}.{c} FROM {t} ORDER BY {t}.{nc} DESC LIMIT {n}")


def _t_between(db, t, rng):
    nc = _pick(rng, db.num_cols(t))
    c = _pick(rng, [x for x in db.any_cols(t) if x != nc])
    a, b = sorted((_num(rng, nc), _num(rng, nc)))
    if a == b:
        b += 1
    return (f"show the {_nat(c)} of {db.plural(t)} with {_nat(nc)} between {a} and {b}",
            f"SELECT {t}.{c} FROM {t} WHERE {t}.{nc} BETWEEN {a} AND {b}")


def _t_or(db, t, rng):
    tc = _pick(rng, db.text_cols(t))
    c = _pick(rng, [x for x in db.any_cols(t) if x != tc])
    v1, v2 = rng.choice(_CELLS[f"{t}.{tc}"], size=2, replace=False)
    return (f"show the {_nat(c)} of {db.plural(t)} whose {_nat(tc)} is {v1} or {v2}",
            f"SELECT {t}.{c} FROM {t} WHERE {t}.{tc} = '{v1}' OR {t}.{tc} = '{v2}'")


def _t_and(db, t, rng):
    tc = _pick(rng, db.text_cols(t))
    nc = _pick(rng, db.num_cols(t))
    c = _pick(rng, [x for x in db.any_cols(t) if x not in (tc, nc)] or [tc])
    v = _pick(rng, _CELLS[f"{t}.{tc}"])
    n = _num(rng, nc)
    return (f"show the {_nat(c)} of {db.plural(t)} whose {_nat(tc)} is {v} and {_nat(nc)} is above {n}",
            f"SELECT {t}.{c} FROM {t} WHERE {t}.{tc} = '{v}' AND {t}.{nc} > {n}")


def _t_above_avg(db, t, rng):
    nc = _pick(rng, db.num_cols(t))
    c = _pick(rng, db.text_cols(t))
    return (f"which {db.plural(t)} have {_nat(nc)} above the average ? show their {_nat(c)}",
            f"SELECT {t}.{c} FROM {t} WHERE {t}.{nc} > (SELECT avg({t}.{nc}) FROM {t})")


def _t_except(db, t, rng):
    nc = _pick(rng, db.num_cols(t))
    tc = _pick(rng, db.text_cols(t))
    c = _pick(rng, [x for x in db.text_cols(t) if x != tc] or [tc])
    v = _pick(rng, _CELLS[f"{t}.{tc}"])
    n = _num(rng, nc)
    return (f"show the {_nat(c)} of {db.plural(t)} with {_nat(nc)} above {n} except those whose {_nat(tc)} is {v}",
            f"SELECT {t}.{c} FROM {t} WHERE {t}.{nc} > {n} EXCEPT SELECT {t}.{c} FROM {t} WHERE {t}.{tc} = '{v}'")


def _t_having(db, t, rng):
    tc = _pick(rng, db.text_cols(t))
    n = int(rng.integers(1, 6))
    return (f"which {_nat(tc)} values have more than {n} {db.plural(t)}",
            f"SELECT {t}.{tc} FROM {t} GROUP BY {t}.{tc} HAVING count(*) > {n}")


def _fk(db, rng):
    (ct, cc), (pt, pc) = _pick(rng, db.fks)
    return ct, cc, pt, pc


def _t_join(db, t, rng):
    ct, cc, pt, pc = _fk(db, rng)
    a = _pick(rng, db.text_cols(ct) or db.num_cols(ct))
    b = _pick(rng, db.text_cols(pt))
    return (f"show the {_nat(a)} of each {ct} and the {_nat(b)} of its {pt}",
            f"SELECT {ct}.{a}, {pt}.{b} FROM {ct} JOIN {pt} ON {ct}.{cc} = {pt}.{pc}")


def _t_join_where(db, t, rng):
    ct, cc, pt, pc = _fk(db, rng)
    a = _pick(rng, db.text_cols(ct) or db.num_cols(ct))
    tc = _pick(rng, db.text_cols(pt))
    v = _pick(rng, _CELLS[f"{pt}.{tc}"])
    return (f"show the {_nat(a)} of {db.plural(ct)} whose {pt} has {_nat(tc)} {v}",
            f"SELECT {ct}.{a} FROM {ct} JOIN {pt} ON {ct}.{cc} = {pt}.{pc} WHERE {pt}.{tc} = '{v}'")


def _t_not_in(db, t, rng):
    ct, cc, pt, pc = _fk(db, rng)
    b = _pick(rng, db.text_cols(pt))
    return (f"show the {_nat(b)} of {db.plural(pt)} that have no {ct}",
            f"SELECT {pt}.{b} FROM {pt} WHERE {pt}.{pc} NOT IN (SELECT {ct}.{cc} FROM {ct})")


def _t_join_count(db, t, rng):
    ct, cc, pt, pc = _fk(db, rng)
    b = _pick(rng, db.text_cols(pt))
    return (f"for each {pt} , show its {_nat(b)} and the number of {db.plural(ct)}",
            f"SELECT {pt}.{b}, count(*) FROM {ct} JOIN {pt} ON {ct}.{cc} = {pt}.{pc} GROUP BY {pt}.{b}")


SINGLE_TABLE = [_t_select, _t_count, _t_agg, _t_where_str, _t_where_num, _t_count_where, _t_order, _t_distinct,
                _t_group, _t_superlative, _t_top_n, _t_between, _t_or, _t_and, _t_above_avg, _t_except,
                _t_having]
MULTI_TABLE = [_t_join, _t_join_where, _t_not_in, _t_join_count]
TEMPLATES = SINGLE_TABLE + MULTI_TABLE


def generate(n: int = 1500, seed: int = 0) -> list[Example]:
    """``n`` distinct examples, cycling templates and databases."""
    rng = np.random.default_rng(seed)
    dbs = [_Db(d) for d in _DBS]
    seen: set[tuple[str, str]] = set()
    out: list[Example] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 50 * n:
            raise RuntimeError(f"could only generate {len(out)} distinct examples")
        db = _pick(rng, dbs)
        tmpl = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
        usable = [t for t in db.tables if db.text_cols(t) and db.num_cols(t)]
        t = _pick(rng, usable)
        question, sql = tmpl(db, t, rng)
        key = (db.db_id, question)
        if key in seen:
            continue
        seen.add(key)
        out.append(Example(question, sql, db.db_id))
    return out


def split(examples: list[Example], dev: float = 0.1, test: float = 0.15, seed: int = 0) -> dict[str, list[Example]]:
    rng = np.random.default_rng(seed + 1)
    order = rng.permutation(len(examples))
    n_dev, n_test = int(len(examples) * dev), int(len(examples) * test)
    pick = [examples[i] for i in order]
    return {"dev": pick[:n_dev], "test": pick[n_dev:n_dev + n_test], "train": pick[n_dev + n_test:]}


def write_corpus(out_dir: str | os.PathLike, n: int = 1500, seed: int = 0) -> dict[str, int]:
    """Write ``tables.json``, ``content/<db>.json`` and ``<split>.jsonl`` files."""
    out = Path(out_dir)
    (out / "content").mkdir(parents=True, exist_ok=True)
    schemas = build_schemas()
    save_schemas(schemas.values(), out / "tables.json")
    for db_id, schema in schemas.items():
        with open(out / "content" / f"{db_id}.json", "w") as f:
            json.dump(content_to_json(build_content(schema), schema), f, indent=1, sort_keys=True)
    counts = {}
    for name, rows in split(generate(n, seed), seed=seed).items():
        with open(out / f"{name}.jsonl", "w") as f:
            for ex in rows:
                f.write(json.dumps(ex.to_json()) + "\n")
        counts[name] = len(rows)
    return counts


def load_examples(path: str | os.PathLike) -> list[Example]:
    rows = []
    with open(path) as f:
        for line in f:
            if line.strip():
                d = json.loads(line)
                rows.append(Example(d["question"], d["sql"], d["db_id"]))
    return rows
