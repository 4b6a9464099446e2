"""Flat key=value training configuration."""

import hashlib
from dataclasses import dataclass, fields


@dataclass
class TrainConfig:
    algorithm: str = "a2c"  # a2c | reinforce_diff
    policy: str = "emr_bigru"
    memory_slots: int = 5
    embed_dim: int = 20
    heads: int = 4
    hops: int = 3
    temporal: bool = True
    encoder: str = "memn2n_value_sum"
    discount: float = 0.1
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    solver_coef: float = 1.0
    learning_rate: float = 0.0005
    grad_clip: float = 40.0
    workers: int = 1
    total_steps: int = 400000
    seed: int = 0
    train_episodes: int = 2000
    eval_episodes: int = 200
    eval_every: int = 22500
    split: str = "noisy"  # noisy | original
    out_dir: str = "runs/out"
    init_checkpoint: str = ""
    pretrain_steps: int = 0
    pretrain_batch: int = 8
    pretrain_target: float = 0.96
    pretrain_lr: float = 0.001
    pretrain_forced_steps: int = 6000
    pretrain_supervised_steps: int = 6000
    data: str = ""
    eval_data: str = ""

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if self.algorithm not in ("a2c", "reinforce_diff"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.split not in ("noisy", "original"):
            raise ValueError(f"unknown split {self.split!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def digest(self):
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


def _parse_value(field_type, raw):
    if field_type is bool:
        low = raw.lower()
        if low in ("on", "true", "1", "yes"):
            return True
        if low in ("off", "false", "0", "no"):
            return False
        raise ValueError(f"bad boolean {raw!r}")
    return field_type(raw)


def parse_config(text):
    """Parse key=value lines (# comments and blank lines allowed)."""
    spec = {f.name: f.type for f in fields(TrainConfig)}
    types = {"str": str, "int": int, "float": float, "bool": bool}
    kwargs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in spec:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        kwargs[key] = _parse_value(types[spec[key]], raw)
    return TrainConfig(**kwargs)


def load_config(path):
    with open(path) as f:
        return parse_config(f.read())


def dump_config(cfg):
    out = []
    for f in fields(TrainConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "on" if v else "off"
        out.append(f"{f.name}={v}")
    return "\n".join(out) + "\n"
