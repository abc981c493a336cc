"""Small in-memory toy setup shared by model-level tests."""

import numpy as np

from relsql import toydata
from relsql.grammar import load_grammar
from relsql.linking import tokenize_question
from relsql.nn.model import ModelConfig, RatModel
from relsql.pipeline import Featurizer, build_token_vocab, make_batch, output_space
from relsql.relations import RelationConfig
from relsql.sqlkit import parse_sql

TINY = dict(d_enc=8, enc_heads=2, enc_ff=8, d_action=4, d_field=4, d_type=4, dec_heads=2, dec_ff=8,
            pointer_dim=6, dropout=0.0, stage1_layers=1, stage2_layers=1, dec_layers=1)


class Toy:
    def __init__(self, rel_cfg=RelationConfig(), n=200):
        self.grammar = load_grammar()
        self.schemas = toydata.build_schemas()
        self.contents = {k: toydata.build_content(v) for k, v in self.schemas.items()}
        self.examples = toydata.generate(n, seed=0)
        trees = [parse_sql(e.sql, self.schemas[e.db_id], self.grammar) for e in self.examples]
        space, dvocab = output_space(self.grammar, trees)
        tokens = build_token_vocab([tokenize_question(e.question) for e in self.examples], list(self.schemas.values()))
        self.fz = Featurizer(self.grammar, space, tokens, dvocab, rel_cfg)

    def feats(self, idx):
        return [self.fz.featurize(e.question, self.schemas[e.db_id], self.contents[e.db_id], e.sql, index=i)
                for i, e in ((i, self.examples[i]) for i in idx)]

    def batch(self, idx, dtype=np.float64):
        return make_batch(self.feats(idx), self.fz.rs, self.fz.rel_cfg, self.fz.space.size, dtype)

    def model(self, seed=0, dtype=np.float64, **overrides):
        fz = self.fz
        cfg = ModelConfig(len(fz.tokens), fz.space.size, fz.dvocab.n_action_embeddings, len(fz.dvocab.fields),
                          len(fz.dvocab.types), len(fz.rs), **overrides)
        return RatModel.create(cfg, seed, dtype)
