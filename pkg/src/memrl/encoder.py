"""Data encoders: raw stream items -> k-dimensional memory vectors."""

from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .tasks import MAX_SENTENCE_LEN


@lru_cache(maxsize=None)
def position_weights(length, dim):
    """Word-position weighting for bag-of-words sentence embeddings.

    w[j,s] = (1 - j/J) - (s/dim)(1 - 2j/J) with 1-based j, s; J = length.
    """
    j = np.arange(1, length + 1)[:, None] / length
    s = np.arange(1, dim + 1)[None, :] / dim
    w = (1.0 - j) - s * (1.0 - 2.0 * j)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=8192)
def masked_weights(tokens, dim):
    """Position weights with padding positions zeroed out. Read-only."""
    w = position_weights(len(tokens), dim).copy()
    w[np.asarray(tokens) == 0] = 0.0
    w.setflags(write=False)
    return w


class ValueSumEncoder:
    """Entry vector = sum over hops of the solver's value-memory sentence
    embedding (position-encoded bag of words per hop). Shares the solver's
    embedding tables, so downstream gradients reach them."""

    def __init__(self, solver):
        self.solver = solver
        self.dim = solver.dim

    def encode(self, tokens):
        self.solver.check_tokens(tokens)
        w = masked_weights(tokens, self.dim)
        parts = None
        for table in self.solver.value_tables():
            term = ad.weighted_embed_sum(table, tokens, w)
            parts = term if parts is None else ad.add(parts, term)
        return parts

    def encode_nograd(self, tokens):
        self.solver.check_tokens(tokens)
        w = masked_weights(tokens, self.dim)
        out = np.zeros(self.dim)
        for table in self.solver.value_tables():
            out += (w * table.data[np.asarray(tokens)]).sum(axis=0)
        return out


class GruEncoder:
    """Alternative encoder: own word embeddings run through a GRU; the final
    hidden state is the entry vector."""

    def __init__(self, store, vocab_size, dim, rng, prefix="encoder"):
        self.dim = dim
        self.vocab_size = vocab_size
        emb = rng.normal(0.0, 0.1, size=(vocab_size, dim))
        emb[0] = 0.0
        self.emb = store.parameter(f"{prefix}/emb", emb)
        self.w = store.parameter(f"{prefix}/gru_w", rng.normal(0.0, 0.1, (3 * dim, dim)))
        self.u = store.parameter(f"{prefix}/gru_u", rng.normal(0.0, 0.1, (3 * dim, dim)))
        self.b = store.parameter(f"{prefix}/gru_b", np.zeros(3 * dim))

    def check_tokens(self, tokens):
        if max(tokens) >= self.vocab_size:
            raise ValueError(f"token id {max(tokens)} outside vocabulary")

    def encode(self, tokens):
        self.check_tokens(tokens)
        rows = ad.embed_rows(self.emb, tokens)
        h = ad.constant(np.zeros(self.dim))
        for j, tok in enumerate(tokens):
            if tok == 0:
                continue
            h = ad.gru_cell(ad.take_row(rows, j), h, self.w, self.u, self.b)
        return h

    def encode_nograd(self, tokens):
        with ad.no_grad():
            return self.encode(tokens).data
