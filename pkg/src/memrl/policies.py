"""The external memory and its eviction policies.

Rule policies (fifo / lifo / uniform) and three learned families:

  independent  - scores each slot against the incoming entry only, via an
                 attention EMA and a learned per-slot discount gate; acts
                 over the N existing slots.
  bigru        - bidirectional GRU over (slots..., incoming), per-position
                 MLP head; acts over N+1 indices (index N drops the newcomer).
  transformer  - multi-head self-attention over the same token sequence with
                 sinusoidal slot-position encodings; same head and arity.

Action semantics: index i < N evicts slot i (remaining slots compact,
preserving order, and the new entry appends at the tail); index N discards
the incoming entry and leaves memory untouched.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

USAGE_DECAY = 0.1  # v <- 0.1 v + 0.9 a


@dataclass
class EncodedEntry:
    vector: object  # (k,) Tensor
    source_timestep: int
    source_tokens: tuple


class MemoryState:
    """Ordered bank of at most `capacity` entries plus per-slot usage EMA."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("memory needs at least one slot")
        self.capacity = capacity
        self.slots = []
        self.usage = []

    def __len__(self):
        return len(self.slots)

    @property
    def is_full(self):
        return len(self.slots) >= self.capacity

    def append(self, entry):
        if self.is_full:
            raise ValueError("append on a full memory")
        self.slots.append(entry)
        self.usage.append(0.0)

    def apply_action(self, action, entry):
        """Evict slot `action` and append, or drop the entry if action == N."""
        n = len(self.slots)
        if action == n:
            return None
        evicted = self.slots.pop(action)
        self.usage.pop(action)
        self.slots.append(entry)
        self.usage.append(0.0)
        return evicted

    def source_timesteps(self):
        return [s.source_timestep for s in self.slots]

    def solver_view(self):
        return [(s.source_tokens, s.source_timestep) for s in self.slots]


@dataclass
class PolicyOutput:
    probs: np.ndarray
    logits: object = None  # Tensor when the policy is learned
    hidden: object = None  # (arity, d) Tensor feeding the value network
    new_usage: np.ndarray = None
    always_sample: bool = False


def select_action(output, mode, rng):
    """Pick an eviction index: multinomial in sample mode, lowest-index
    argmax in argmax mode. Random rule policies always sample."""
    if mode == "sample" or output.always_sample:
        r = rng.random()
        return int(np.searchsorted(np.cumsum(output.probs), r, side="right").clip(0, len(output.probs) - 1))
    if mode != "argmax":
        raise ValueError(f"unknown mode {mode!r}")
    return int(np.argmax(output.probs))


@dataclass
class ActionRecord:
    action: int
    probs: np.ndarray
    log_prob: object = None
    entropy: object = None
    hidden: object = None
    evicted: object = None  # EncodedEntry or None when the newcomer was dropped


class FifoPolicy:
    name = "fifo"
    trainable = False

    def forward(self, mem, entry):
        probs = np.zeros(len(mem) + 1)
        probs[0] = 1.0
        return PolicyOutput(probs=probs)


class LifoPolicy:
    name = "lifo"
    trainable = False

    def forward(self, mem, entry):
        probs = np.zeros(len(mem) + 1)
        probs[-1] = 1.0
        return PolicyOutput(probs=probs)


class UniformPolicy:
    name = "uniform"
    trainable = False

    def forward(self, mem, entry):
        n = len(mem)
        probs = np.zeros(n + 1)
        probs[:n] = 1.0 / n
        return PolicyOutput(probs=probs, always_sample=True)


class IndependentPolicy:
    """Slot-vs-incoming attention with usage EMA and a learned discount gate.

    a = softmax(m_i . e); v' = 0.1 v + 0.9 a; gate = sigmoid(w . m_i + b);
    pi = softmax(a - gate * v). Acts over the N slots only.
    """

    name = "emr_independent"
    trainable = True

    def __init__(self, store, dim, rng, prefix="policy"):
        self.dim = dim
        self.w_gate = store.parameter(f"{prefix}/gate_w", rng.normal(0.0, 0.1, dim))
        self.b_gate = store.parameter(f"{prefix}/gate_b", np.zeros(1))

    def forward(self, mem, entry):
        m = ad.stack_rows([s.vector for s in mem.slots])
        a = ad.softmax_vec(ad.matvec(m, entry.vector))
        gate = ad.sigmoid(ad.add(ad.matvec(m, self.w_gate), self.b_gate))
        v_prev = ad.constant(np.asarray(mem.usage))
        g = ad.sub(a, ad.mul(gate, v_prev))
        probs = ad.softmax_vec(g)
        new_usage = USAGE_DECAY * np.asarray(mem.usage) + (1.0 - USAGE_DECAY) * a.data
        hidden = ad.stack_rows([s.vector for s in mem.slots] + [entry.vector])
        return PolicyOutput(probs=probs.data.copy(), logits=g, hidden=hidden,
                            new_usage=new_usage)


def _mlp3(store, prefix, in_dim, mid_dim, rng):
    return {
        "w1": store.parameter(f"{prefix}/mlp_w1", rng.normal(0.0, 0.1, (in_dim, mid_dim))),
        "b1": store.parameter(f"{prefix}/mlp_b1", np.zeros(mid_dim)),
        "w2": store.parameter(f"{prefix}/mlp_w2", rng.normal(0.0, 0.1, (mid_dim, mid_dim))),
        "b2": store.parameter(f"{prefix}/mlp_b2", np.zeros(mid_dim)),
        "w3": store.parameter(f"{prefix}/mlp_w3", rng.normal(0.0, 0.1, (mid_dim, 1))),
        "b3": store.parameter(f"{prefix}/mlp_b3", np.zeros(1)),
    }


def _mlp3_rows(p, x):
    """Three-layer ReLU MLP applied per row of x; returns (rows,) scores."""
    h = ad.relu(ad.affine(x, p["w1"], p["b1"]))
    h = ad.relu(ad.affine(h, p["w2"], p["b2"]))
    return ad.squeeze_col(ad.affine(h, p["w3"], p["b3"]))


class BiGRUPolicy:
    """Bidirectional GRU over (slots..., incoming); per-position MLP head."""

    name = "emr_bigru"
    trainable = True

    def __init__(self, store, dim, rng, hidden=None, prefix="policy"):
        self.dim = dim
        self.hidden = hidden or dim
        h = self.hidden
        self.fw = (store.parameter(f"{prefix}/fw_w", rng.normal(0.0, 0.1, (3 * h, dim))),
                   store.parameter(f"{prefix}/fw_u", rng.normal(0.0, 0.1, (3 * h, h))),
                   store.parameter(f"{prefix}/fw_b", np.zeros(3 * h)))
        self.bw = (store.parameter(f"{prefix}/bw_w", rng.normal(0.0, 0.1, (3 * h, dim))),
                   store.parameter(f"{prefix}/bw_u", rng.normal(0.0, 0.1, (3 * h, h))),
                   store.parameter(f"{prefix}/bw_b", np.zeros(3 * h)))
        self.mlp = _mlp3(store, prefix, 2 * h, dim, rng)

    def forward(self, mem, entry):
        tokens = [s.vector for s in mem.slots] + [entry.vector]
        zero = ad.constant(np.zeros(self.hidden))
        hs = []
        h = zero
        for x in tokens:
            h = ad.gru_cell(x, h, *self.fw)
            hs.append(h)
        bs = []
        h = zero
        for x in reversed(tokens):
            h = ad.gru_cell(x, h, *self.bw)
            bs.append(h)
        bs.reverse()
        hidden = ad.concat_cols([ad.stack_rows(hs), ad.stack_rows(bs)])
        logits = _mlp3_rows(self.mlp, hidden)
        probs = ad.softmax_vec(logits)
        return PolicyOutput(probs=probs.data.copy(), logits=logits, hidden=hidden)


def sinusoid_table(max_len, dim):
    pos = np.arange(max_len)[:, None]
    i = np.arange(dim)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    table = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return table


class TransformerPolicy:
    """Multi-head self-attention over (slots..., incoming) plus sinusoidal
    slot-position encodings; per-position MLP head."""

    name = "emr_transformer"
    trainable = True

    def __init__(self, store, dim, rng, heads=4, max_tokens=64, prefix="policy"):
        if dim % heads:
            raise ValueError(f"embed dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.pe = sinusoid_table(max_tokens, dim)
        self.wq = store.parameter(f"{prefix}/wq", rng.normal(0.0, 0.1, (dim, dim)))
        self.wk = store.parameter(f"{prefix}/wk", rng.normal(0.0, 0.1, (dim, dim)))
        self.wv = store.parameter(f"{prefix}/wv", rng.normal(0.0, 0.1, (dim, dim)))
        self.wo = store.parameter(f"{prefix}/wo", rng.normal(0.0, 0.1, (dim, dim)))
        self.mlp = _mlp3(store, prefix, dim, dim, rng)
        self.use_position = True

    def forward(self, mem, entry):
        tokens = [s.vector for s in mem.slots] + [entry.vector]
        x = ad.stack_rows(tokens)
        if self.use_position:
            x = ad.add(x, ad.constant(self.pe[: len(tokens)]))
        hidden = ad.multihead_attention(x, self.wq, self.wk, self.wv, self.wo, self.heads)
        logits = _mlp3_rows(self.mlp, hidden)
        probs = ad.softmax_vec(logits)
        return PolicyOutput(probs=probs.data.copy(), logits=logits, hidden=hidden)


class ValueNet:
    """Set-pooled state value with a recurrent summary across timesteps.

    s = rho(sum_i h_i) with rho = Linear-ReLU-Linear; g = GRU(s, g_prev);
    V = MLP(g). Permutation-invariant in the h_i by construction.
    """

    def __init__(self, store, in_dim, dim, rng, prefix="value"):
        self.dim = dim
        self.r1w = store.parameter(f"{prefix}/rho_w1", rng.normal(0.0, 0.1, (in_dim, dim)))
        self.r1b = store.parameter(f"{prefix}/rho_b1", np.zeros(dim))
        self.r2w = store.parameter(f"{prefix}/rho_w2", rng.normal(0.0, 0.1, (dim, dim)))
        self.r2b = store.parameter(f"{prefix}/rho_b2", np.zeros(dim))
        self.gru = (store.parameter(f"{prefix}/gru_w", rng.normal(0.0, 0.1, (3 * dim, dim))),
                    store.parameter(f"{prefix}/gru_u", rng.normal(0.0, 0.1, (3 * dim, dim))),
                    store.parameter(f"{prefix}/gru_b", np.zeros(3 * dim)))
        self.mlp = _mlp3(store, prefix, dim, dim, rng)

    def initial_state(self):
        return ad.constant(np.zeros(self.dim))

    def estimate(self, hidden, state):
        pooled = ad.sum_rows(hidden)
        s = ad.affine_vec(ad.relu(ad.affine_vec(pooled, self.r1w, self.r1b)),
                          self.r2w, self.r2b)
        g = ad.gru_cell(s, state, *self.gru)
        v = _mlp3_rows(self.mlp, ad.stack_rows([g]))
        return v, g


POLICY_NAMES = ("fifo", "lifo", "uniform", "emr_independent", "emr_bigru", "emr_transformer")


def build_policy(name, store, dim, rng, heads=4, hidden=None):
    if name == "fifo":
        return FifoPolicy()
    if name == "lifo":
        return LifoPolicy()
    if name == "uniform":
        return UniformPolicy()
    if name == "emr_independent":
        return IndependentPolicy(store, dim, rng)
    if name == "emr_bigru":
        return BiGRUPolicy(store, dim, rng, hidden=hidden)
    if name == "emr_transformer":
        return TransformerPolicy(store, dim, rng, heads=heads)
    raise ValueError(f"unknown policy {name!r}")


def append_or_evict(mem, entry, policy, mode, rng):
    """Admit an encoded entry, consulting the policy once memory is full.

    Returns an ActionRecord for the decision, or None when the entry was
    appended without one.
    """
    if not mem.is_full:
        mem.append(entry)
        return None
    out = policy.forward(mem, entry)
    action = select_action(out, mode, rng)
    record = ActionRecord(action=action, probs=out.probs, hidden=out.hidden)
    if out.logits is not None and ad.grad_enabled():
        lp = ad.log_softmax_vec(out.logits)
        record.log_prob = ad.pick(lp, action)
        record.entropy = ad.entropy_of_logits(out.logits)
    if out.new_usage is not None:
        mem.usage = list(out.new_usage)
    if policy.name == "emr_independent" and action >= len(mem.slots):
        raise ValueError("independent policy cannot drop the incoming entry")
    record.evicted = mem.apply_action(action, entry)
    return record
