"""Joint training of the eviction policy and the solver.

Advantage actor-critic with the terminal reward, or plain policy gradient
with the per-step difference reward. Multi-worker mode is synchronous: each
worker rolls out on its own parameter snapshot, gradients are averaged into
the master store, one Adam step is taken, and snapshots resync. Single-worker
runs are bit-reproducible given a seed.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .models import build_models, save_checkpoint
from .rollout import rollout
from .tasks import EPISODE_LEN, generate_split

CURVE_COLUMNS = ["step", "train_accuracy", "eval_accuracy", "eval_solvable",
                 "policy_loss", "value_loss", "entropy"]


def discounted_returns(rewards, gamma):
    """G_t = sum_j gamma^j R_{t+j}, evaluated as the literal double sum."""
    out = []
    n = len(rewards)
    for t in range(n):
        g = 0.0
        for j in range(n - t):
            g += (gamma ** j) * rewards[t + j]
        out.append(g)
    return out


def _fold_sum(terms):
    if not terms:
        return None
    return ad.sum_all(ad.concat_vecs(terms))


@dataclass
class UpdateStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    steps: int = 0


def build_loss(results, cfg):
    """Combined scalar loss over one worker's rollouts; also reports floats.

    Policy gradient uses the advantage (a2c: discounted return minus the
    value estimate, detached; reinforce_diff: the raw difference reward).
    Value loss is the squared return error; the entropy bonus is subtracted;
    solver cross-entropy joins with its own coefficient.
    """
    policy_terms, value_terms, entropy_terms = [], [], []
    stats = UpdateStats()
    for res in results:
        rewards = [r.reward for r in res.records]
        if cfg.algorithm == "a2c":
            targets = discounted_returns(rewards, cfg.discount)
        else:
            targets = rewards  # non-episodic: no accumulation across steps
        for rec, g in zip(res.records, targets):
            if rec.log_prob is None:
                continue
            adv = g - float(rec.value.data[0]) if rec.value is not None else g
            policy_terms.append(ad.scale(rec.log_prob, -adv))
            entropy_terms.append(rec.entropy)
            if rec.value is not None:
                value_terms.append(ad.square(ad.sub(rec.value, ad.constant([g]))))
            stats.steps += 1
    parts = []
    pl = _fold_sum(policy_terms)
    if pl is not None:
        parts.append(pl)
        stats.policy_loss = float(pl.data[0])
    vl = _fold_sum(value_terms)
    if vl is not None:
        parts.append(ad.scale(vl, cfg.value_coef))
        stats.value_loss = float(vl.data[0])
    ent = _fold_sum(entropy_terms)
    if ent is not None:
        parts.append(ad.scale(ent, -cfg.entropy_coef))
        stats.entropy = float(ent.data[0]) / max(1, stats.steps)
    ce_terms = [l for res in results for l in res.solver_losses]
    ce = _fold_sum(ce_terms)
    if ce is not None:
        parts.append(ad.scale(ce, cfg.solver_coef))
    total = parts[0] if parts else None
    for p in parts[1:]:
        total = ad.add(total, p)
    return total, stats


def apply_update(results, models, cfg):
    """One optimizer step from one batch of rollouts (single store)."""
    total, stats = build_loss(results, cfg)
    if total is not None:
        if not np.isfinite(total.data[0]):
            raise FloatingPointError(
                f"non-finite loss: policy={stats.policy_loss} value={stats.value_loss}")
        ad.backward(total)
        models.store.clip_gradients(cfg.grad_clip)
        models.store.adam_step(cfg.learning_rate)
    return stats


def a2c_update(results, models, cfg):
    if cfg.algorithm != "a2c":
        raise ValueError("a2c_update requires algorithm=a2c")
    return apply_update(results, models, cfg)


def reinforce_update(results, models, cfg):
    if cfg.algorithm != "reinforce_diff":
        raise ValueError("reinforce_update requires algorithm=reinforce_diff")
    return apply_update(results, models, cfg)


# ---------------------------------------------------------------------------
# solver pretraining on oracle memories
# ---------------------------------------------------------------------------

def oracle_memory(episode, question, rng, max_size=15):
    """Supporting facts plus random earlier distractors, in stream order."""
    facts = [it for it in episode.items if it.kind == "fact" and it.timestep < question.timestep]
    sup = [it for it in facts if it.timestep in question.supports]
    rest = [it for it in facts if it.timestep not in question.supports]
    size = int(rng.integers(2, max_size + 1))
    extra = min(max(0, size - 2), len(rest))
    if extra:
        pick = rng.choice(len(rest), size=extra, replace=False)
        sup = sup + [rest[i] for i in pick]
    sup.sort(key=lambda it: it.timestep)
    return [(it.tokens, it.timestep) for it in sup]


def _question_instances(episodes):
    out = []
    for ep in episodes:
        for q in ep.questions():
            out.append((ep, q))
    return out


def solver_oracle_accuracy(models, episodes, rng):
    ok = 0
    total = 0
    for ep, q in _question_instances(episodes):
        mem = oracle_memory(ep, q, rng)
        ans = models.solver.predict(mem, q.tokens)
        ok += ans.predicted == q.answer
        total += 1
    return ok / max(1, total)


def pretrain_solver(models, cfg, episodes, eval_episodes, log=None):
    """Train the solver alone on oracle memories until the target held-out
    accuracy (or the example budget) is reached.

    Three phases over the budget: teacher-forced attention with per-hop
    supervision toward the annotated supports (the soft-attention read is
    stuck in a uniform local minimum otherwise), then soft attention with the
    same supervision, then plain answer cross-entropy. Steps count training
    examples. Returns (steps_used, accuracy, history).
    """
    rng = np.random.default_rng(cfg.seed + 555)
    eval_rng_seed = cfg.seed + 556
    pool = _question_instances(episodes)
    order = rng.permutation(len(pool))
    history = []
    steps = 0
    acc = solver_oracle_accuracy(models, eval_episodes, np.random.default_rng(eval_rng_seed))
    history.append((0, acc))
    cursor = 0
    eval_interval = max(cfg.pretrain_batch * 32, 2000)
    next_eval = eval_interval
    forced_until = min(cfg.pretrain_forced_steps, cfg.pretrain_steps // 4)
    supervised_until = forced_until + min(cfg.pretrain_supervised_steps,
                                          cfg.pretrain_steps // 4)
    while steps < cfg.pretrain_steps and acc < cfg.pretrain_target:
        losses = []
        for _ in range(cfg.pretrain_batch):
            ep, q = pool[order[cursor % len(order)]]
            cursor += 1
            mem = oracle_memory(ep, q, rng)
            if steps < supervised_until:
                sup = sorted(q.supports)
                ip = next(i for i, (_, t) in enumerate(mem) if t == sup[0])
                im = next(i for i, (_, t) in enumerate(mem) if t == sup[1])
                losses.append(models.solver.solve_supervised(
                    mem, q.tokens, q.answer, (ip, im),
                    teacher_force=steps < forced_until, attention_coef=1.0))
            else:
                ans = models.solver.solve(mem, q.tokens)
                losses.append(models.solver.loss(ans, q.answer))
            steps += 1
        total = ad.scale(_fold_sum(losses), 1.0 / len(losses))
        ad.backward(total)
        models.store.clip_gradients(cfg.grad_clip)
        models.store.adam_step(cfg.pretrain_lr)
        if steps >= next_eval:
            next_eval += eval_interval
            acc = solver_oracle_accuracy(
                models, eval_episodes, np.random.default_rng(eval_rng_seed))
            history.append((steps, acc))
            if log:
                log(f"pretrain step {steps}: oracle-memory accuracy {acc:.3f}")
    acc = solver_oracle_accuracy(models, eval_episodes, np.random.default_rng(eval_rng_seed))
    history.append((steps, acc))
    return steps, acc, history


# ---------------------------------------------------------------------------
# the outer loop
# ---------------------------------------------------------------------------

def _load_or_generate(path, seed, count, original):
    if path:
        from .tasks import read_episodes
        return read_episodes(path)
    return generate_split(seed, count, original=original)


def train(cfg, log=print):
    """Full training run; writes curves and checkpoints under cfg.out_dir.

    Returns a summary dict with the final and best evaluation metrics.
    """
    from .evaluation import evaluate

    os.makedirs(cfg.out_dir, exist_ok=True)
    original = cfg.split == "original"
    train_eps = _load_or_generate(cfg.data, cfg.seed, cfg.train_episodes, original)
    eval_eps = _load_or_generate(cfg.eval_data, cfg.seed + 100003, cfg.eval_episodes, original)

    reward_scheme = "terminal" if cfg.algorithm == "a2c" else "difference"
    master = build_models(policy=cfg.policy, algorithm=cfg.algorithm,
                          embed_dim=cfg.embed_dim, heads=cfg.heads, hops=cfg.hops,
                          temporal=cfg.temporal, encoder=cfg.encoder, seed=cfg.seed)
    if cfg.init_checkpoint:
        loaded = master.store.load_partial(cfg.init_checkpoint)
        if log:
            log(f"initialized {len(loaded)} arrays from {cfg.init_checkpoint}")
    if cfg.pretrain_steps > 0:
        steps, acc, _ = pretrain_solver(master, cfg, train_eps, eval_eps[: max(10, len(eval_eps) // 2)], log)
        if log:
            log(f"solver pretraining: {steps} steps, oracle accuracy {acc:.3f}")

    if cfg.workers == 1:
        workers = [master]
    else:
        workers = [build_models(policy=cfg.policy, algorithm=cfg.algorithm,
                                embed_dim=cfg.embed_dim, heads=cfg.heads, hops=cfg.hops,
                                temporal=cfg.temporal, encoder=cfg.encoder, seed=cfg.seed)
                   for _ in range(cfg.workers)]
        for w in workers:
            w.store.sync_values(master.store)
    worker_rngs = [np.random.default_rng([cfg.seed, 1000 + w]) for w in range(cfg.workers)]
    data_rng = np.random.default_rng(cfg.seed + 13)

    curves_path = os.path.join(cfg.out_dir, "curves.csv")
    curve_file = open(curves_path, "w", newline="")
    writer = csv.writer(curve_file)
    writer.writerow(CURVE_COLUMNS)

    def run_eval():
        rep = evaluate(master, eval_eps, cfg.memory_slots, seed=cfg.seed + 41,
                       config_digest=cfg.digest())
        return rep

    meta_extra = {"memory_slots": cfg.memory_slots, "seed": cfg.seed}
    save_checkpoint(master, os.path.join(cfg.out_dir, "last.ckpt"), meta_extra)

    env_steps = 0
    next_eval = 0
    best = None
    train_ok = train_q = 0
    order = []
    cursor = 0
    summary = {"curves": curves_path, "out_dir": cfg.out_dir}

    while True:
        if env_steps >= next_eval:
            report = run_eval()
            row = [env_steps,
                   train_ok / train_q if train_q else 0.0,
                   report.accuracy, report.solvable, 0.0, 0.0, 0.0]
            score = (report.accuracy + report.solvable) / 2.0
            if best is None or score > best[0]:
                best = (score, env_steps, report)
                save_checkpoint(master, os.path.join(cfg.out_dir, "best.ckpt"), meta_extra)
            next_eval += cfg.eval_every
            train_ok = train_q = 0
        else:
            row = None
        if env_steps >= cfg.total_steps:
            if row is not None:
                writer.writerow(_fmt_row(row))
            break

        batch_stats = UpdateStats()
        for w in range(cfg.workers):
            if cursor >= len(order):
                order = list(data_rng.permutation(len(train_eps)))
                cursor = 0
            ep = train_eps[order[cursor]]
            cursor += 1
            res = rollout(ep, workers[w], cfg.memory_slots, "sample", worker_rngs[w],
                          reward_scheme=reward_scheme)
            for out in res.outcomes:
                train_ok += out.correct
                train_q += 1
            total, stats = build_loss([res], cfg)
            if total is not None:
                if not np.isfinite(total.data[0]):
                    raise FloatingPointError("non-finite training loss")
                ad.backward(total)
            batch_stats.policy_loss += stats.policy_loss
            batch_stats.value_loss += stats.value_loss
            batch_stats.entropy += stats.entropy
        if cfg.workers > 1:
            master.store.accumulate_gradients([w.store for w in workers])
            for w in workers:
                w.store.zero_grads()
        master.store.clip_gradients(cfg.grad_clip)
        master.store.adam_step(cfg.learning_rate)
        if cfg.workers > 1:
            for w in workers:
                w.store.sync_values(master.store)
        env_steps += EPISODE_LEN * cfg.workers
        if row is not None:
            row[4] = batch_stats.policy_loss / cfg.workers
            row[5] = batch_stats.value_loss / cfg.workers
            row[6] = batch_stats.entropy / cfg.workers
            writer.writerow(_fmt_row(row))

    curve_file.close()
    save_checkpoint(master, os.path.join(cfg.out_dir, "last.ckpt"), meta_extra)
    final = run_eval()
    summary["final_accuracy"] = final.accuracy
    summary["final_solvable"] = final.solvable
    if best is not None:
        summary["best_accuracy"] = best[2].accuracy
        summary["best_solvable"] = best[2].solvable
        summary["best_step"] = best[1]
    if log:
        log(f"done: final accuracy {final.accuracy:.3f}, solvable {final.solvable:.3f}")
    return summary


def _fmt_row(row):
    return [row[0]] + [f"{v:.6f}" for v in row[1:]]
