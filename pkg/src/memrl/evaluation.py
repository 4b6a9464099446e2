"""Evaluation protocol: QA accuracy and the solvable rate.

solvable asks whether a question's full supporting-fact set survives in
memory at question time; it depends only on memory contents, never on the
trained solver (the perfect-solver reading). Reports break both metrics down
per noise level and are reproducible given (checkpoint, dataset, slots, seed).
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .rollout import memory_solvable, rollout

solvable = memory_solvable


@dataclass
class EvalReport:
    accuracy: float
    solvable: float
    n_questions: int
    memory_slots: int
    per_noise: dict = field(default_factory=dict)
    seed: int = 0
    config_digest: str = ""

    def to_json(self):
        return json.dumps({
            "accuracy": self.accuracy,
            "solvable": self.solvable,
            "n_questions": self.n_questions,
            "memory_slots": self.memory_slots,
            "per_noise": self.per_noise,
            "seed": self.seed,
            "config_digest": self.config_digest,
        }, sort_keys=True, indent=2)

    def csv_row(self, policy):
        return [policy, self.memory_slots, f"{self.accuracy:.6f}",
                f"{self.solvable:.6f}", self.n_questions, self.seed, self.config_digest]


CSV_HEADER = ["policy", "memory_slots", "accuracy", "solvable", "n_questions",
              "seed", "config_digest"]


def evaluate(models, episodes, memory_slots, seed=0, config_digest="",
             collect_inspection=False):
    """Argmax rollouts over a dataset; aggregates accuracy and solvable."""
    rng = np.random.default_rng(seed)
    ok = sv = total = 0
    per = {}
    traces = []
    for ep in episodes:
        res = rollout(ep, models, memory_slots, "argmax", rng,
                      collect_inspection=collect_inspection)
        key = f"{ep.noise_fraction:.2f}"
        bucket = per.setdefault(key, {"correct": 0, "solvable": 0, "questions": 0})
        for out in res.outcomes:
            ok += out.correct
            sv += out.solvable
            total += 1
            bucket["correct"] += out.correct
            bucket["solvable"] += out.solvable
            bucket["questions"] += 1
        if collect_inspection:
            traces.append({"noise_fraction": ep.noise_fraction, "questions": res.inspection})
    for bucket in per.values():
        q = bucket["questions"]
        bucket["accuracy"] = bucket.pop("correct") / q
        bucket["solvable"] = bucket["solvable"] / q
    report = EvalReport(accuracy=ok / total, solvable=sv / total, n_questions=total,
                        memory_slots=memory_slots,
                        per_noise=dict(sorted(per.items())), seed=seed,
                        config_digest=config_digest)
    if collect_inspection:
        return report, traces
    return report


def inspection_stats(traces):
    """Over solvable questions in episodes that contain noise: how often were
    both supports retained while at least one noise fact had been evicted?

    (Solvable already means both supports survived; the extra condition is
    the evicted-noise half of the claim.)
    """
    hits = total = 0
    for tr in traces:
        if tr["noise_fraction"] <= 0.0:
            continue
        for q in tr["questions"]:
            if not q["solvable"]:
                continue
            total += 1
            hits += q["evicted_noise_so_far"] >= 1
    return {"questions": total, "retained_and_evicted_noise": hits,
            "fraction": hits / total if total else 0.0}


def format_trace(trace, vocab):
    """Human-readable dump of one episode's retained memory per question."""
    lines = []
    for q in trace["questions"]:
        lines.append(f"question @t={q['question_timestep']}: "
                     f"predicted={vocab[q['predicted']]} gold={vocab[q['answer']]} "
                     f"correct={q['correct']} solvable={q['solvable']} "
                     f"noise_evicted={q['evicted_noise_so_far']}")
        for slot in q["retained"]:
            words = " ".join(vocab[t] for t in slot["tokens"] if t)
            tag = " [support]" if slot["support"] else (" [noise]" if slot["noise"] else "")
            lines.append(f"    t={slot['timestep']:3d}  {words}{tag}")
    return "\n".join(lines)
