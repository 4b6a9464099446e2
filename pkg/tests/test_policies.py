"""Memory / eviction-policy behavior, oracle equivalence, and properties."""

import numpy as np
import pytest

from memrl import autodiff as ad
from memrl.params import ParameterStore
from memrl.policies import (BiGRUPolicy, EncodedEntry, IndependentPolicy,
                            MemoryState, TransformerPolicy, UniformPolicy,
                            ValueNet, append_or_evict, build_policy,
                            select_action, sinusoid_table)
from oracles import independent_policy_oracle, transformer_policy_oracle


def entry(vec, t=0):
    return EncodedEntry(ad.constant(np.asarray(vec, float)), t, (0,))


def filled_memory(rng, n, k, t0=0):
    mem = MemoryState(n)
    for i in range(n):
        mem.append(entry(rng.standard_normal(k), t0 + i))
    return mem


# ---------------------------------------------------------------------------
# memory mechanics
# ---------------------------------------------------------------------------

def test_append_below_capacity_records_nothing():
    rng = np.random.default_rng(0)
    mem = MemoryState(5)
    for i in range(3):
        rec = append_or_evict(mem, entry(rng.standard_normal(4), i),
                              build_policy("fifo", None, 4, rng), "argmax", rng)
        assert rec is None
    assert len(mem) == 3


def test_fifo_evicts_oldest():
    rng = np.random.default_rng(0)
    mem = filled_memory(rng, 3, 4, t0=1)  # timesteps 1,2,3
    pol = build_policy("fifo", None, 4, rng)
    append_or_evict(mem, entry(rng.standard_normal(4), 9), pol, "argmax", rng)
    assert mem.source_timesteps() == [2, 3, 9]


def test_lifo_drops_incoming():
    rng = np.random.default_rng(0)
    mem = filled_memory(rng, 3, 4)
    pol = build_policy("lifo", None, 4, rng)
    for t in range(10, 14):
        rec = append_or_evict(mem, entry(rng.standard_normal(4), t), pol, "argmax", rng)
        assert rec.evicted is None
    assert mem.source_timesteps() == [0, 1, 2]


def test_eviction_preserves_capacity_and_order():
    rng = np.random.default_rng(1)
    for action in range(4):
        mem = filled_memory(rng, 4, 3, t0=0)
        ts = mem.source_timesteps()
        mem.apply_action(action, entry(rng.standard_normal(3), 99))
        expect = [t for i, t in enumerate(ts) if i != action] + [99]
        assert mem.source_timesteps() == expect
        assert len(mem) == 4
    mem = filled_memory(rng, 4, 3)
    mem.apply_action(4, entry(rng.standard_normal(3), 99))  # drop newcomer
    assert mem.source_timesteps() == [0, 1, 2, 3]


def test_uniform_frequencies_within_3_sigma():
    rng = np.random.default_rng(2)
    n, draws = 5, 100_000
    pol = UniformPolicy()
    mem = filled_memory(rng, n, 3)
    counts = np.zeros(n + 1)
    for _ in range(draws):
        out = pol.forward(mem, entry(np.zeros(3)))
        counts[select_action(out, "argmax", rng)] += 1
    p = 1.0 / n
    sigma = np.sqrt(draws * p * (1 - p))
    assert counts[n] == 0
    for i in range(n):
        assert abs(counts[i] - draws * p) < 3 * sigma


def test_argmax_tie_breaks_lowest_index():
    from memrl.policies import PolicyOutput
    out = PolicyOutput(probs=np.array([0.3, 0.3, 0.3, 0.1]))
    assert select_action(out, "argmax", np.random.default_rng(0)) == 0


# ---------------------------------------------------------------------------
# EMR-Independent
# ---------------------------------------------------------------------------

def build_independent(rng, k=4):
    store = ParameterStore()
    pol = IndependentPolicy(store, k, rng)
    return pol, store


def test_independent_identical_slots_symmetric():
    rng = np.random.default_rng(3)
    pol, _ = build_independent(rng, 4)
    v = rng.standard_normal(4)
    mem = MemoryState(2)
    mem.append(entry(v, 0))
    mem.append(entry(v, 1))
    out = pol.forward(mem, entry(rng.standard_normal(4), 2))
    a = ad.softmax_vec(ad.matvec(ad.stack_rows([s.vector for s in mem.slots]),
                                 mem.slots[0].vector)).data
    assert out.probs[0] == pytest.approx(out.probs[1])
    assert out.probs.sum() == pytest.approx(1.0)


def test_independent_zero_gate_reduces_to_attention_softmax():
    rng = np.random.default_rng(4)
    pol, store = build_independent(rng, 4)
    store["policy/gate_w"].data[:] = 0.0
    store["policy/gate_b"].data[:] = 0.0
    mem = filled_memory(rng, 3, 4)
    e = entry(rng.standard_normal(4), 7)
    out = pol.forward(mem, e)
    m = np.stack([s.vector.data for s in mem.slots])
    a = np.exp((m * e.vector.data).sum(1) - (m * e.vector.data).sum(1).max())
    a /= a.sum()
    # gate = 0.5 but usage = 0, so pi = softmax(a)
    expect = np.exp(a - a.max())
    expect /= expect.sum()
    assert np.allclose(out.probs, expect, rtol=0, atol=1e-15)


@pytest.mark.parametrize("trial", range(50))
def test_independent_matches_scalar_oracle_exactly(trial, kernel_backend):
    rng = np.random.default_rng(200 + trial)
    n = int(rng.integers(2, 5))
    k = int(rng.integers(2, 5))
    pol, store = build_independent(rng, k)
    mem = filled_memory(rng, n, k)
    mem.usage = list(rng.random(n))
    e = entry(rng.standard_normal(k), n)
    out = pol.forward(mem, e)
    pi, logits, new_usage = independent_policy_oracle(
        [list(s.vector.data) for s in mem.slots], list(e.vector.data),
        list(mem.usage), list(store["policy/gate_w"].data),
        float(store["policy/gate_b"].data[0]))
    assert out.probs.tolist() == pi
    assert out.new_usage.tolist() == new_usage


def test_independent_usage_ema_update_and_reset():
    rng = np.random.default_rng(5)
    pol, _ = build_independent(rng, 4)
    mem = filled_memory(rng, 3, 4)
    mem.usage = [0.5, 0.25, 0.125]
    e = entry(rng.standard_normal(4), 9)
    out = pol.forward(mem, e)
    old = np.array([0.5, 0.25, 0.125])
    m = np.stack([s.vector.data for s in mem.slots])
    sc = (m * e.vector.data).sum(1)
    a = np.exp(sc - sc.max()); a /= a.sum()
    assert np.allclose(out.new_usage, 0.1 * old + 0.9 * a)
    rec = append_or_evict(mem, e, pol, "argmax", rng)
    keep = [i for i in range(3) if i != rec.action]
    assert mem.usage[:-1] == [out.new_usage[i] for i in keep]
    assert mem.usage[-1] == 0.0  # fresh slot starts with no usage history


# ---------------------------------------------------------------------------
# EMR-biGRU
# ---------------------------------------------------------------------------

def build_bigru(rng, k=4):
    store = ParameterStore()
    return BiGRUPolicy(store, k, rng), store


def test_bigru_arity_and_distribution():
    rng = np.random.default_rng(6)
    pol, _ = build_bigru(rng, 4)
    for n in (2, 3, 5):
        mem = filled_memory(rng, n, 4)
        out = pol.forward(mem, entry(rng.standard_normal(4), n))
        assert out.probs.shape == (n + 1,)
        assert out.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_bigru_palindrome_with_mirrored_weights_gives_symmetric_pi():
    # fw == bw and an MLP blind to the half-order makes a palindromic token
    # sequence produce a palindromic distribution.
    rng = np.random.default_rng(7)
    store = ParameterStore()
    pol = BiGRUPolicy(store, 4, rng)
    for a, b in (("policy/fw_w", "policy/bw_w"), ("policy/fw_u", "policy/bw_u"),
                 ("policy/fw_b", "policy/bw_b")):
        store[b].data[:] = store[a].data
    w1 = store["policy/mlp_w1"].data
    w1[4:] = w1[:4]  # first layer treats forward and backward halves alike
    vecs = [rng.standard_normal(4) for _ in range(2)]
    tokens = [vecs[0], vecs[1], vecs[0]]  # palindrome incl. incoming entry
    mem = MemoryState(2)
    mem.append(entry(tokens[0], 0))
    mem.append(entry(tokens[1], 1))
    out = pol.forward(mem, entry(tokens[2], 2))
    assert np.allclose(out.probs, out.probs[::-1], rtol=1e-12, atol=1e-14)


def test_bigru_action_arity_includes_incoming():
    rng = np.random.default_rng(8)
    pol, _ = build_bigru(rng, 4)
    mem = filled_memory(rng, 3, 4)
    out = pol.forward(mem, entry(rng.standard_normal(4), 3))
    assert len(out.probs) == 4  # 3 slots + the incoming entry


def test_bigru_drop_action_reproduces_lifo_step():
    rng = np.random.default_rng(9)
    pol, _ = build_bigru(rng, 4)
    mem = filled_memory(rng, 3, 4)
    before = mem.source_timesteps()
    mem.apply_action(3, entry(rng.standard_normal(4), 9))
    assert mem.source_timesteps() == before


# ---------------------------------------------------------------------------
# EMR-Transformer
# ---------------------------------------------------------------------------

def build_transformer(rng, k=4, heads=2):
    store = ParameterStore()
    return TransformerPolicy(store, k, rng, heads=heads), store


def test_transformer_rejects_bad_head_count():
    rng = np.random.default_rng(10)
    store = ParameterStore()
    with pytest.raises(ValueError):
        TransformerPolicy(store, 6, rng, heads=4)


def test_transformer_uniform_attention_on_equal_tokens():
    rng = np.random.default_rng(11)
    pol, _ = build_transformer(rng, 4, heads=1)
    pol.use_position = False
    v = rng.standard_normal(4)
    x = ad.constant(np.stack([v, v, v]))
    att_out = ad.multihead_attention(x, pol.wq, pol.wk, pol.wv, pol.wo, 1)
    # all rows identical -> each row of the attention output identical
    assert np.allclose(att_out.data[0], att_out.data[1])
    assert np.allclose(att_out.data[1], att_out.data[2])


def test_transformer_distribution_sums_to_one():
    rng = np.random.default_rng(12)
    pol, _ = build_transformer(rng, 4, heads=2)
    for n in (2, 4):
        mem = filled_memory(rng, n, 4)
        out = pol.forward(mem, entry(rng.standard_normal(4), n))
        assert out.probs.shape == (n + 1,)
        assert abs(out.probs.sum() - 1.0) < 1e-12


@pytest.mark.parametrize("trial", range(50))
def test_transformer_matches_scalar_oracle_exactly(trial, kernel_backend):
    rng = np.random.default_rng(300 + trial)
    n = int(rng.integers(1, 4))
    heads = int(rng.integers(1, 3))
    k = int(2 * heads * rng.integers(1, 2))  # divisible by heads, k <= 4
    pol, store = build_transformer(rng, k, heads=heads)
    mem = filled_memory(rng, n, k)
    e = entry(rng.standard_normal(k), n)
    out = pol.forward(mem, e)
    mlp = {key: store[f"policy/mlp_{key}"].data.tolist()
           for key in ("w1", "b1", "w2", "b2", "w3", "b3")}
    tokens = [list(s.vector.data) for s in mem.slots] + [list(e.vector.data)]
    pi, logits = transformer_policy_oracle(
        tokens, pol.pe[: n + 1].tolist(), store["policy/wq"].data.tolist(),
        store["policy/wk"].data.tolist(), store["policy/wv"].data.tolist(),
        store["policy/wo"].data.tolist(), heads, mlp)
    assert out.probs.tolist() == pi


def test_transformer_permutation_equivariant_without_positions():
    rng = np.random.default_rng(13)
    pol, _ = build_transformer(rng, 4, heads=2)
    pol.use_position = False
    vecs = [rng.standard_normal(4) for _ in range(4)]
    e = rng.standard_normal(4)
    mem = MemoryState(4)
    for i, v in enumerate(vecs):
        mem.append(entry(v, i))
    base = pol.forward(mem, entry(e, 9)).probs
    perm = [2, 0, 3, 1]
    mem2 = MemoryState(4)
    for i, j in enumerate(perm):
        mem2.append(entry(vecs[j], i))
    swapped = pol.forward(mem2, entry(e, 9)).probs
    assert np.allclose(swapped[:4], base[perm], rtol=1e-10, atol=1e-12)
    assert swapped[4] == pytest.approx(base[4], rel=1e-10)


def test_sinusoid_table_shape_and_range():
    t = sinusoid_table(16, 6)
    assert t.shape == (16, 6)
    assert np.abs(t).max() <= 1.0


# ---------------------------------------------------------------------------
# value network
# ---------------------------------------------------------------------------

def build_value(rng, in_dim=4, k=4):
    store = ParameterStore()
    return ValueNet(store, in_dim, k, rng), store


def test_value_permutation_invariant():
    rng = np.random.default_rng(14)
    vn, _ = build_value(rng)
    h = rng.standard_normal((5, 4))
    state = vn.initial_state()
    v1, _ = vn.estimate(ad.constant(h), state)
    v2, _ = vn.estimate(ad.constant(h[::-1].copy()), state)
    assert v1.data[0] == pytest.approx(v2.data[0], rel=1e-12)


def test_value_deterministic_at_zero():
    rng = np.random.default_rng(15)
    vn, _ = build_value(rng)
    z = ad.constant(np.zeros((3, 4)))
    v1, _ = vn.estimate(z, vn.initial_state())
    v2, _ = vn.estimate(z, vn.initial_state())
    assert v1.data[0] == v2.data[0]


def test_value_recurrent_state_matters():
    rng = np.random.default_rng(16)
    vn, _ = build_value(rng)
    h_now = ad.constant(rng.standard_normal((3, 4)))
    # history A: one prior step; history B: a different prior step
    _, sa = vn.estimate(ad.constant(rng.standard_normal((3, 4))), vn.initial_state())
    _, sb = vn.estimate(ad.constant(rng.standard_normal((3, 4))), vn.initial_state())
    va, _ = vn.estimate(h_now, sa)
    vb, _ = vn.estimate(h_now, sb)
    assert va.data[0] != vb.data[0]


def test_policy_distribution_validity_en_masse():
    # 1000 random states across the learned families: sums to 1 +- 1e-6 and
    # the documented arity.
    rng = np.random.default_rng(17)
    store = ParameterStore()
    pols = [IndependentPolicy(store, 4, rng, prefix="pi"),
            BiGRUPolicy(store, 4, rng, prefix="pb"),
            TransformerPolicy(store, 4, rng, heads=2, prefix="pt")]
    for i in range(1000):
        pol = pols[i % 3]
        n = int(rng.integers(2, 6))
        mem = filled_memory(rng, n, 4)
        mem.usage = list(rng.random(n))
        out = pol.forward(mem, entry(rng.standard_normal(4), n))
        arity = n if pol.name == "emr_independent" else n + 1
        assert out.probs.shape == (arity,)
        assert abs(out.probs.sum() - 1.0) <= 1e-6
        assert (out.probs >= 0).all()
