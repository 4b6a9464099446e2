"""Synthetic streaming-QA episode generator.

Each episode is 45 items: 5 blocks of 8 facts followed by one question.
A storyline per question: a person picks up an object and later moves to a
location; the question "where is the <object>" is answerable from exactly
those two facts (the pickup and the last subsequent move). Remaining fact
slots hold harmless distractor moves and, in noisy episodes, off-topic noise
sentences built from a disjoint vocabulary.
"""

import json
from dataclasses import dataclass

import numpy as np

PAD = "<pad>"
PERSONS = ["john", "mary", "sandra", "daniel", "emily", "peter"]
LOCATIONS = ["kitchen", "garden", "office", "bathroom", "bedroom", "hallway"]
OBJECTS = ["apple", "football", "milk", "book", "suitcase"]
TASK_WORDS = ["went", "to", "the", "took", "where", "is"]
NOISE_NOUNS = ["dog", "cat", "bird", "fish"]
NOISE_VERBS = ["barked", "meowed", "chirped", "swam", "slept", "wandered"]
NOISE_EXTRA = ["happily", "quietly"]

VOCAB = [PAD] + PERSONS + LOCATIONS + OBJECTS + TASK_WORDS + NOISE_NOUNS + NOISE_VERBS + NOISE_EXTRA
TOKEN_ID = {w: i for i, w in enumerate(VOCAB)}
VOCAB_SIZE = len(VOCAB)

MAX_SENTENCE_LEN = 8
FACTS_PER_BLOCK = 8
QUESTIONS_PER_EPISODE = 5
FACTS_PER_EPISODE = FACTS_PER_BLOCK * QUESTIONS_PER_EPISODE
EPISODE_LEN = FACTS_PER_EPISODE + QUESTIONS_PER_EPISODE
NOISE_LEVELS = (0.0, 0.30, 0.45, 0.60)

# How far behind its question each supporting fact may sit, in fact slots.
MAX_MOVE_DISTANCE = 8
MAX_PICKUP_REACH = 13


def fact_item_position(slot):
    """Stream position of the slot-th fact (questions interleave every 8)."""
    return slot + slot // FACTS_PER_BLOCK


def question_item_position(block):
    return (block + 1) * (FACTS_PER_BLOCK + 1) - 1


QUESTION_POSITIONS = tuple(question_item_position(b) for b in range(QUESTIONS_PER_EPISODE))


@dataclass(frozen=True)
class StreamItem:
    kind: str  # "fact" | "question"
    timestep: int
    tokens: tuple
    answer: int | None = None
    supports: tuple | None = None  # item positions of the two supporting facts
    is_noise: bool = False


@dataclass(frozen=True)
class Episode:
    items: tuple
    vocabulary_size: int = VOCAB_SIZE

    @property
    def noise_fraction(self):
        n = sum(1 for it in self.items if it.kind == "fact" and it.is_noise)
        return n / FACTS_PER_EPISODE

    def facts(self):
        return [it for it in self.items if it.kind == "fact"]

    def questions(self):
        return [it for it in self.items if it.kind == "question"]


def _pad(words):
    ids = [TOKEN_ID[w] for w in words]
    if len(ids) > MAX_SENTENCE_LEN:
        raise ValueError(f"sentence too long: {words}")
    return tuple(ids + [0] * (MAX_SENTENCE_LEN - len(ids)))


def _move(person, loc):
    return _pad([person, "went", "to", "the", loc])


def _pickup(person, obj):
    return _pad([person, "took", "the", obj])


def _question(obj):
    return _pad(["where", "is", "the", obj])


def _noise(rng):
    words = ["the", NOISE_NOUNS[rng.integers(len(NOISE_NOUNS))],
             NOISE_VERBS[rng.integers(len(NOISE_VERBS))]]
    if rng.random() < 0.5:
        words.append(NOISE_EXTRA[rng.integers(len(NOISE_EXTRA))])
    return _pad(words)


def decode(tokens):
    return " ".join(VOCAB[t] for t in tokens if t != 0)


def generate_episode(seed, noise_level=0.0):
    """One 45-item episode at the given noise fraction of the 40 facts."""
    if not any(abs(noise_level - lv) < 1e-9 for lv in NOISE_LEVELS):
        raise ValueError(f"noise_level must be one of {NOISE_LEVELS}")
    rng = np.random.default_rng(seed)
    persons = list(rng.permutation(PERSONS))[:QUESTIONS_PER_EPISODE]
    objects = list(rng.permutation(OBJECTS))
    n_noise = round(noise_level * FACTS_PER_EPISODE)

    facts = {}  # fact slot -> (tokens, is_noise)
    questions = []

    def free_in(lo, hi):
        return [s for s in range(lo, hi) if s not in facts]

    # Supports first: the final move inside the question's own block, the
    # pickup up to MAX_PICKUP_REACH slots further back.
    extras = []
    for b in range(QUESTIONS_PER_EPISODE):
        hi = (b + 1) * FACTS_PER_BLOCK
        # slot 0 can never host the move: the pickup has to come first
        cand2 = [s for s in free_in(hi - MAX_MOVE_DISTANCE, hi) if s >= 1]
        s2 = int(cand2[rng.integers(len(cand2))])
        cand1 = free_in(max(0, s2 - MAX_PICKUP_REACH), s2)
        s1 = int(cand1[rng.integers(len(cand1))])
        person, obj = persons[b], objects[b]
        answer = LOCATIONS[rng.integers(len(LOCATIONS))]
        facts[s1] = (_pickup(person, obj), False)
        facts[s2] = (_move(person, answer), False)
        questions.append((b, person, obj, answer, s1, s2))
        # optional distractors from the same storyline
        if rng.random() < 0.3:
            pre = free_in(max(0, s1 - 4), s1)
            if pre:
                extras.append((int(pre[rng.integers(len(pre))]),
                               _move(person, LOCATIONS[rng.integers(len(LOCATIONS))])))
        if rng.random() < 0.3:
            mid = free_in(s1 + 1, s2)
            if mid:
                extras.append((int(mid[rng.integers(len(mid))]),
                               _move(person, LOCATIONS[rng.integers(len(LOCATIONS))])))

    budget = FACTS_PER_EPISODE - len(facts) - n_noise
    for slot, tokens in extras:
        if budget <= 0:
            break
        if slot not in facts:
            facts[slot] = (tokens, False)
            budget -= 1

    free = free_in(0, FACTS_PER_EPISODE)
    noise_slots = rng.choice(len(free), size=n_noise, replace=False) if n_noise else []
    noise_set = {free[i] for i in noise_slots}
    for s in noise_set:
        facts[s] = (_noise(rng), True)

    # Fillers: moves that cannot disturb any answer. A storyline person is
    # safe only after their question has passed; the spare person always is.
    spare = [p for p in PERSONS if p not in persons]
    done_after = {persons[b]: question_item_position(b) for b in range(QUESTIONS_PER_EPISODE)}
    for s in free_in(0, FACTS_PER_EPISODE):
        pos = fact_item_position(s)
        safe = spare + [p for p, q in done_after.items() if q < pos]
        person = safe[rng.integers(len(safe))]
        facts[s] = (_move(person, LOCATIONS[rng.integers(len(LOCATIONS))]), False)

    items = []
    for slot in range(FACTS_PER_EPISODE):
        tokens, is_noise = facts[slot]
        items.append(StreamItem("fact", fact_item_position(slot), tokens, is_noise=is_noise))
    for b, person, obj, answer, s1, s2 in questions:
        items.append(StreamItem(
            "question", question_item_position(b), _question(obj),
            answer=TOKEN_ID[answer],
            supports=(fact_item_position(s1), fact_item_position(s2)),
        ))
    items.sort(key=lambda it: it.timestep)
    return Episode(items=tuple(items))


def split_noise_levels(episode_count):
    """Noise-level counts: one tenth each at 0.30/0.45/0.60, rest zero."""
    tenth = episode_count // 10
    return [episode_count - 3 * tenth, tenth, tenth, tenth]


def generate_split(seed, episode_count, original=False):
    """A reproducible list of episodes with the standard noise mix.

    original=True forces every episode to zero noise.
    """
    if episode_count < 10 and not original:
        raise ValueError("noise-mixed splits need at least 10 episodes")
    rng = np.random.default_rng(seed)
    if original:
        levels = [0.0] * episode_count
    else:
        counts = split_noise_levels(episode_count)
        levels = [lv for lv, c in zip(NOISE_LEVELS, counts) for _ in range(c)]
        levels = [levels[i] for i in rng.permutation(episode_count)]
    return [generate_episode(rng.integers(2**63), lv) for lv in levels]


# -- serialization -----------------------------------------------------------

def write_episodes(path, episodes):
    """One JSON object per line; a blank line separates episodes."""
    with open(path, "w") as f:
        for e, ep in enumerate(episodes):
            if e:
                f.write("\n")
            for it in ep.items:
                rec = {
                    "kind": it.kind,
                    "tokens": list(it.tokens),
                    "answer": it.answer,
                    "supports": sorted(it.supports) if it.supports else None,
                    "noise": it.is_noise,
                }
                f.write(json.dumps(rec) + "\n")


def read_episodes(path):
    episodes = []
    current = []

    def close():
        if current:
            episodes.append(Episode(items=tuple(current)))
            current.clear()

    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                close()
                continue
            try:
                rec = json.loads(line)
                item = StreamItem(
                    kind=rec["kind"],
                    timestep=len(current),
                    tokens=tuple(rec["tokens"]),
                    answer=rec["answer"],
                    supports=tuple(rec["supports"]) if rec["supports"] else None,
                    is_noise=bool(rec["noise"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: malformed record at line {lineno}: {exc}") from exc
            current.append(item)
    close()
    return episodes


def write_vocabulary(path):
    """One token per line; the line's 0-based index is the token id."""
    with open(path, "w") as f:
        for w in VOCAB:
            f.write(w + "\n")
