"""Model bundle: one ParameterStore wiring solver, encoder, policy and value
network together, with enough metadata in checkpoints to rebuild the bundle
for evaluation and inspection."""

from dataclasses import dataclass

import numpy as np

from .encoder import GruEncoder, ValueSumEncoder
from .params import ParameterStore
from .policies import ValueNet, build_policy
from .solver import MemN2N
from .tasks import VOCAB_SIZE


@dataclass
class Models:
    store: ParameterStore
    solver: MemN2N
    encoder: object
    policy: object
    value_net: object  # None for rule policies and plain policy-gradient runs
    meta: dict


def build_models(policy="emr_bigru", algorithm="a2c", embed_dim=20, heads=4,
                 hops=3, temporal=True, encoder="memn2n_value_sum",
                 vocab_size=VOCAB_SIZE, max_time=64, seed=0):
    meta = {
        "policy": policy, "algorithm": algorithm, "embed_dim": embed_dim,
        "heads": heads, "hops": hops, "temporal": temporal, "encoder": encoder,
        "vocab_size": vocab_size, "max_time": max_time,
    }
    rng = np.random.default_rng(seed + 7919)
    store = ParameterStore()
    solver = MemN2N(store, vocab_size, dim=embed_dim, hops=hops,
                    temporal=temporal, max_time=max_time, rng=rng)
    if encoder == "memn2n_value_sum":
        enc = ValueSumEncoder(solver)
    elif encoder == "gru":
        enc = GruEncoder(store, vocab_size, embed_dim, rng)
    else:
        raise ValueError(f"unknown encoder {encoder!r}")
    pol = build_policy(policy, store, embed_dim, rng, heads=heads)
    value_net = None
    if algorithm == "a2c" and pol.trainable:
        in_dim = 2 * embed_dim if policy == "emr_bigru" else embed_dim
        value_net = ValueNet(store, in_dim, embed_dim, rng)
    return Models(store=store, solver=solver, encoder=enc, policy=pol,
                  value_net=value_net, meta=meta)


def save_checkpoint(models, path, extra=None):
    meta = dict(models.meta)
    if extra:
        meta.update(extra)
    models.store.save(path, meta)


def load_checkpoint(path):
    """Rebuild a bundle from checkpoint metadata and load its weights."""
    from .params import load_arrays

    meta, _ = load_arrays(path)
    models = build_models(
        policy=meta["policy"], algorithm=meta["algorithm"],
        embed_dim=meta["embed_dim"], heads=meta["heads"], hops=meta["hops"],
        temporal=meta["temporal"], encoder=meta["encoder"],
        vocab_size=meta["vocab_size"], max_time=meta["max_time"])
    models.store.load(path)
    models.meta.update(meta)
    return models
