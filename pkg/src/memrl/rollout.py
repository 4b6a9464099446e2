"""Streaming rollouts: feed an episode through the memory under a policy.

Facts are encoded and admitted (evicting once the memory is full); questions
are answered by the solver from whatever survived. Training mode samples
actions and records the learning signal; argmax mode follows the policy
deterministically and collects metrics only.

Reward schemes
  terminal    - every eviction decision receives the 0/1 correctness of the
                next question answered after it (steps after the last
                question receive 0).
  difference  - each decision receives acc(t) - acc(t-1), where acc is the
                solver's 0/1 correctness on the upcoming question evaluated
                against the post-action memory.
The upcoming question is used for reward computation only; the policy never
sees it.
"""

from dataclasses import dataclass, field

from . import autodiff as ad
from .policies import ActionRecord, EncodedEntry, MemoryState, append_or_evict
from .solver import reward as accuracy_reward


@dataclass
class StepRecord:
    decision_timestep: int
    action: int
    log_prob: object = None
    entropy: object = None
    value: object = None
    reward: float = 0.0
    done: bool = False


@dataclass
class QuestionOutcome:
    timestep: int
    correct: bool
    solvable: bool


@dataclass
class RolloutResult:
    records: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    solver_losses: list = field(default_factory=list)
    inspection: list = field(default_factory=list)


def memory_solvable(mem, question):
    retained = set(mem.source_timesteps())
    return all(t in retained for t in question.supports)


def _next_question(episode, timestep):
    for it in episode.items[timestep + 1 :]:
        if it.kind == "question":
            return it
    return None


def _predict_correct(models, mem, question, cache=None):
    ans = models.solver.predict(mem.solver_view(), question.tokens, cache=cache)
    return ans.predicted == question.answer


def rollout(episode, models, capacity, mode, rng, reward_scheme=None,
            collect_inspection=False):
    if mode == "argmax":
        with ad.no_grad():
            return _run(episode, models, capacity, mode, rng, None, collect_inspection)
    return _run(episode, models, capacity, mode, rng, reward_scheme, collect_inspection)


def _run(episode, models, capacity, mode, rng, reward_scheme, collect_inspection):
    mem = MemoryState(capacity)
    res = RolloutResult()
    training = mode == "sample"
    v_state = models.value_net.initial_state() if (training and models.value_net) else None
    acc_prev = None
    evicted_noise = 0
    noise_by_timestep = {it.timestep: it.is_noise for it in episode.items if it.kind == "fact"}
    pred_cache = {}

    for item in episode.items:
        if item.kind == "fact":
            vec = models.encoder.encode(item.tokens)
            entry = EncodedEntry(vec, item.timestep, item.tokens)
            if reward_scheme == "difference" and mem.is_full and acc_prev is None:
                nq = _next_question(episode, item.timestep - 1)
                acc_prev = float(_predict_correct(models, mem, nq, pred_cache)) if nq else 0.0
            rec = append_or_evict(mem, entry, models.policy, mode, rng)
            if rec is None:
                continue
            if rec.evicted is not None and noise_by_timestep.get(rec.evicted.source_timestep):
                evicted_noise += 1
            step = StepRecord(decision_timestep=item.timestep, action=rec.action,
                              log_prob=rec.log_prob, entropy=rec.entropy)
            if v_state is not None:
                step.value, v_state = models.value_net.estimate(rec.hidden, v_state)
            if reward_scheme == "difference":
                nq = _next_question(episode, item.timestep)
                acc_t = float(_predict_correct(models, mem, nq, pred_cache)) if nq else acc_prev
                step.reward = acc_t - acc_prev
                acc_prev = acc_t
            res.records.append(step)
        else:
            solvable = memory_solvable(mem, item)
            if training:
                ans = models.solver.solve(mem.solver_view(), item.tokens)
                res.solver_losses.append(models.solver.loss(ans, item.answer))
            else:
                ans = models.solver.predict(mem.solver_view(), item.tokens)
            correct = accuracy_reward(ans, item.answer) == 1.0
            res.outcomes.append(QuestionOutcome(item.timestep, correct, solvable))
            if collect_inspection:
                res.inspection.append({
                    "question_timestep": item.timestep,
                    "predicted": ans.predicted,
                    "answer": item.answer,
                    "correct": correct,
                    "solvable": solvable,
                    "evicted_noise_so_far": evicted_noise,
                    "retained": [
                        {
                            "timestep": s.source_timestep,
                            "tokens": list(s.source_tokens),
                            "noise": bool(noise_by_timestep.get(s.source_timestep, False)),
                            "support": s.source_timestep in item.supports,
                        }
                        for s in mem.slots
                    ],
                })
    if res.records:
        res.records[-1].done = True
    if reward_scheme == "terminal":
        assign_terminal_rewards(res.records, res.outcomes)
    return res


def assign_terminal_rewards(records, outcomes):
    """Each decision is paid by the next question answered after it."""
    for rec in records:
        rec.reward = 0.0
        for out in outcomes:
            if out.timestep > rec.decision_timestep:
                rec.reward = 1.0 if out.correct else 0.0
                break
