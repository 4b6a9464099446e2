"""Multi-hop memory-network QA solver.

Reads whatever sentences survive in memory: per hop, attention over the
entries' input embeddings, a weighted sum of their value embeddings, and an
additive update of the query state. Adjacent weight tying is structural: hop
h's value table is hop h+1's input table, the question uses the first table,
and the output projection is the last table itself.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoder import masked_weights


@dataclass
class Answer:
    logits: object  # Tensor in graph mode, ndarray otherwise
    predicted: int


class MemN2N:
    def __init__(self, store, vocab_size, dim=20, hops=3, temporal=True,
                 max_time=64, rng=None, prefix="solver"):
        self.vocab_size = vocab_size
        self.dim = dim
        self.hops = hops
        self.temporal = temporal
        self.max_time = max_time
        # Linear start: hop attention runs unnormalized during early solver
        # training to escape the uniform-softmax local minimum, then switches
        # to softmax for good.
        self.linear_attention = False
        rng = rng or np.random.default_rng(0)
        self.tables = []
        self.time_tables = []
        for h in range(hops + 1):
            emb = rng.normal(0.0, 0.1, size=(vocab_size, dim))
            emb[0] = 0.0
            self.tables.append(store.parameter(f"{prefix}/emb{h + 1}", emb))
            if temporal:
                self.time_tables.append(store.parameter(
                    f"{prefix}/time{h + 1}", rng.normal(0.0, 0.1, (max_time, dim))))

    def value_tables(self):
        """Value-memory tables of the three hops (tables 2..hops+1)."""
        return self.tables[1:]

    def check_tokens(self, tokens):
        if max(tokens) >= self.vocab_size:
            raise ValueError(f"token id {max(tokens)} outside vocabulary")

    def _entry_matrix(self, table_idx, entries):
        rows = []
        for tokens, timestep in entries:
            w = masked_weights(tokens, self.dim)
            rows.append(ad.weighted_embed_sum(self.tables[table_idx], tokens, w))
        mat = ad.stack_rows(rows)
        if self.temporal:
            steps = [min(t, self.max_time - 1) for _, t in entries]
            mat = ad.add(mat, ad.embed_rows(self.time_tables[table_idx], steps))
        return mat

    def solve(self, entries, question_tokens, return_attention=False):
        """Graph-mode read. entries: list of (tokens, source_timestep)."""
        if not entries:
            raise ValueError("cannot solve with an empty memory")
        self.check_tokens(question_tokens)
        for tokens, _ in entries:
            self.check_tokens(tokens)
        u = ad.weighted_embed_sum(
            self.tables[0], question_tokens, masked_weights(question_tokens, self.dim))
        mats = [self._entry_matrix(h, entries) for h in range(self.hops + 1)]
        attn_scores = []
        for h in range(self.hops):
            scores = ad.matvec(mats[h], u)
            attn_scores.append(scores)
            p = scores if self.linear_attention else ad.softmax_vec(scores)
            o = ad.matvec(ad.transpose(mats[h + 1]), p)
            u = ad.add(u, o)
        logits = ad.matvec(self.tables[self.hops], u)
        answer = Answer(logits=logits, predicted=int(np.argmax(logits.data)))
        if return_attention:
            return answer, attn_scores
        return answer

    def _entry_rows(self, entry, cache):
        """Per-table embedding rows of one entry; cacheable within a rollout
        (parameters are frozen between optimizer steps)."""
        tokens, timestep = entry
        if cache is not None and timestep in cache:
            return cache[timestep]
        w = masked_weights(tokens, self.dim)
        idx = np.asarray(tokens)
        rows = []
        for h in range(self.hops + 1):
            row = (w * self.tables[h].data[idx]).sum(axis=0)
            if self.temporal:
                row = row + self.time_tables[h].data[min(timestep, self.max_time - 1)]
            rows.append(row)
        if cache is not None:
            cache[timestep] = rows
        return rows

    def solve_supervised(self, entries, question_tokens, gold, support_indices,
                         teacher_force=False, attention_coef=1.0):
        """Training-only forward with supporting-fact attention supervision.

        support_indices = (pickup_idx, move_idx) within `entries`. The hop
        targets are (pickup, move, move). With teacher_force the gold one-hot
        replaces the soft attention (bootstraps the cross-hop binding);
        attention_coef weights per-hop cross-entropy toward the targets.
        Returns the combined loss for this example.
        """
        ip, im = support_indices
        u = ad.weighted_embed_sum(
            self.tables[0], question_tokens, masked_weights(question_tokens, self.dim))
        mats = [self._entry_matrix(h, entries) for h in range(self.hops + 1)]
        targets = [ip] + [im] * (self.hops - 1)
        extras = []
        for h in range(self.hops):
            scores = ad.matvec(mats[h], u)
            if attention_coef:
                extras.append(ad.scale(ad.cross_entropy(scores, targets[h]), attention_coef))
            if teacher_force:
                onehot = np.zeros(len(entries))
                onehot[targets[h]] = 1.0
                p = ad.constant(onehot)
            else:
                p = ad.softmax_vec(scores)
            u = ad.add(u, ad.matvec(ad.transpose(mats[h + 1]), p))
        logits = ad.matvec(self.tables[self.hops], u)
        loss = ad.cross_entropy(logits, gold)
        for term in extras:
            loss = ad.add(loss, term)
        return loss

    def predict(self, entries, question_tokens, cache=None):
        """Plain-numpy read; mirrors solve() op for op."""
        if not entries:
            raise ValueError("cannot solve with an empty memory")
        per_entry = [self._entry_rows(e, cache) for e in entries]
        embs = [np.stack([rows[h] for rows in per_entry], axis=0)
                for h in range(self.hops + 1)]
        wq = masked_weights(question_tokens, self.dim)
        u = (wq * self.tables[0].data[np.asarray(question_tokens)]).sum(axis=0)
        for h in range(self.hops):
            scores = (embs[h] * u[None, :]).sum(axis=1)
            if self.linear_attention:
                p = scores
            else:
                e = np.exp(scores - scores.max())
                p = e / e.sum()
            c = np.ascontiguousarray(embs[h + 1].T)
            u = u + (c * p[None, :]).sum(axis=1)
        logits = (self.tables[self.hops].data * u[None, :]).sum(axis=1)
        return Answer(logits=logits, predicted=int(np.argmax(logits)))

    @staticmethod
    def loss(answer, gold):
        return ad.cross_entropy(answer.logits, gold)


def reward(answer, gold):
    """Accuracy reward: 1.0 on an exact answer match, else 0.0."""
    return 1.0 if answer.predicted == int(gold) else 0.0
