"""Pilot: does RL beat the rule baselines on the noisy split at N=5?"""
import sys, time
import numpy as np
from memrl import tasks
from memrl.config import TrainConfig
from memrl.training import train, pretrain_solver
from memrl.models import build_models, save_checkpoint, load_checkpoint
from memrl.evaluation import evaluate

SEED = int(sys.argv[1]) if len(sys.argv) > 1 else 0
ALG = sys.argv[2] if len(sys.argv) > 2 else "a2c"
POL = sys.argv[3] if len(sys.argv) > 3 else "emr_bigru"
EPISODES = int(sys.argv[4]) if len(sys.argv) > 4 else 2500

t0 = time.time()
# shared pretrained solver
pre = build_models(policy="fifo", algorithm="a2c", seed=SEED)
cfgp = TrainConfig(seed=SEED, pretrain_steps=50000, pretrain_target=0.97)
train_eps = tasks.generate_split(SEED, 400)
evalz = tasks.generate_split(SEED + 100003, 60, original=True)
steps, acc, _ = pretrain_solver(pre, cfgp, train_eps, evalz)
ck = f"/tmp/pilot_pretrain_{SEED}.ckpt"
save_checkpoint(pre, ck)
print(f"[{time.time()-t0:.0f}s] pretrained solver: {acc:.3f} ({steps} steps)", flush=True)

# rule baselines with the pretrained solver
eval_eps = tasks.generate_split(SEED + 100003, 200)
for rule in ("fifo", "lifo", "uniform"):
    mb = build_models(policy=rule, algorithm="a2c", seed=SEED)
    mb.store.load_partial(ck)
    rep = evaluate(mb, eval_eps, 5, seed=SEED + 41)
    print(f"  {rule:8s}: accuracy={rep.accuracy:.3f} solvable={rep.solvable:.3f}", flush=True)

cfg = TrainConfig(policy=POL, algorithm=ALG, memory_slots=5,
                  total_steps=45*EPISODES, train_episodes=1500, eval_episodes=150,
                  eval_every=45*250, seed=SEED, out_dir=f"/tmp/pilot_{POL}_{ALG}_{SEED}",
                  init_checkpoint=ck, pretrain_steps=0)
summary = train(cfg, log=lambda s: print(f"[{time.time()-t0:.0f}s] {s}", flush=True))
print(summary, flush=True)
import csv
with open(summary["curves"]) as f:
    for row in csv.reader(f):
        print(",".join(row), flush=True)
