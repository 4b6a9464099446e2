"""Independent scalar oracles for the policy formulas and RL returns.

Everything here is computed with plain Python loops over scalars, mirroring
the written formulas directly; no code is shared with the library. np.exp /
np.tanh serve as the scalar transcendental functions (the library applies
the same ufuncs elementwise, so exact 64-bit agreement is meaningful).
"""

import numpy as np


def softmax_scalar(xs):
    m = xs[0]
    for x in xs[1:]:
        if x > m:
            m = x
    exps = [np.exp(x - m) for x in xs]
    s = 0.0
    for e in exps:
        s += e
    return [e / s for e in exps]


def sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def dot_scalar(a, b):
    s = 0.0
    for x, y in zip(a, b):
        s += x * y
    return s


def independent_policy_oracle(memory, entry, usage, w_gate, b_gate):
    """Replacement distribution of the slot-vs-incoming scorer.

    a_i = softmax_i(m_i . e); gate_i = sigmoid(w . m_i + b);
    g_i = a_i - gate_i * v_i ; pi = softmax(g); v' = 0.1 v + 0.9 a.
    """
    n = len(memory)
    a = softmax_scalar([dot_scalar(memory[i], entry) for i in range(n)])
    gate = [sigmoid_scalar(dot_scalar(w_gate, memory[i]) + b_gate) for i in range(n)]
    g = [a[i] - gate[i] * usage[i] for i in range(n)]
    pi = softmax_scalar(g)
    new_usage = [0.1 * usage[i] + 0.9 * a[i] for i in range(n)]
    return pi, g, new_usage


def _matmul_scalar(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            s = 0.0
            for t in range(inner):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


def _mlp3_scalar(x, p):
    """x: list of rows; p: dict of lists-of-lists (w1,b1,w2,b2,w3,b3)."""
    def layer(rows, w, b, relu):
        out = []
        for r in rows:
            o = []
            for j in range(len(b)):
                s = 0.0
                for t in range(len(r)):
                    s += r[t] * w[t][j]
                s += b[j]
                if relu and s < 0.0:
                    s = 0.0
                o.append(s)
            out.append(o)
        return out
    h = layer(x, p["w1"], p["b1"], True)
    h = layer(h, p["w2"], p["b2"], True)
    h = layer(h, p["w3"], p["b3"], False)
    return [r[0] for r in h]


def transformer_policy_oracle(tokens, pe, wq, wk, wv, wo, heads, mlp):
    """Eviction distribution of the self-attention policy.

    tokens: (slots + incoming) as lists; pe: position rows added first.
    Per head: A = softmax(Q K^T / sqrt(k/H)); o = A V; concat; h = o Wo;
    pi = softmax over rows of MLP(h).
    """
    t = len(tokens)
    k = len(tokens[0])
    dh = k // heads
    x = [[tokens[i][s] + pe[i][s] for s in range(k)] for i in range(t)]
    q = _matmul_scalar(x, wq)
    kk = _matmul_scalar(x, wk)
    v = _matmul_scalar(x, wv)
    scale = 1.0 / np.sqrt(dh)
    o = [[0.0] * k for _ in range(t)]
    for hh in range(heads):
        c0 = hh * dh
        for i in range(t):
            scores = []
            for j in range(t):
                s = 0.0
                for d in range(dh):
                    s += q[i][c0 + d] * kk[j][c0 + d]
                scores.append(s * scale)
            att = softmax_scalar(scores)
            for d in range(dh):
                s = 0.0
                for j in range(t):
                    s += att[j] * v[j][c0 + d]
                o[i][c0 + d] = s
    h = _matmul_scalar(o, wo)
    logits = _mlp3_scalar(h, mlp)
    return softmax_scalar(logits), logits


def returns_oracle(rewards, gamma):
    """Brute-force double loop: G_t = sum_j gamma^j R_{t+j}."""
    out = []
    for t in range(len(rewards)):
        g = 0.0
        for j in range(len(rewards) - t):
            g += (gamma ** j) * rewards[t + j]
        out.append(g)
    return out


def replay_answer(support_sentences, vocab, token_id):
    """Rule-based QA: replay only the given facts; an object sits wherever
    its holder last moved."""
    holder = {}
    where = {}
    for words in support_sentences:
        if len(words) >= 4 and words[1] == "took":
            holder[words[3]] = words[0]
        elif len(words) >= 5 and words[1] == "went":
            where[words[0]] = words[4]
    def answer(obj):
        p = holder.get(obj)
        if p is None or p not in where:
            return None
        return token_id[where[p]]
    return answer
