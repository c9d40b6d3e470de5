"""Fixture-tuning harness: trains once, then reports uniques/MAR/diversity
against the random baseline under several evaluation seeds.  Not shipped;
development aid only."""

import sys
import time
from collections import Counter

import numpy as np

from uavtest import data_path, runner, agent as agent_mod
from uavtest.analysis import cliffs_delta, mar
from uavtest.config import load_run_config
from uavtest.report import compile_report, render_report

EPISODES = int(sys.argv[1]) if len(sys.argv) > 1 else 300
SEEDS = [int(s) for s in sys.argv[2].split(",")] if len(sys.argv) > 2 else [101, 202, 303]

t0 = time.time()
cfg = load_run_config(data_path("arducopter.cfg")).with_episodes(EPISODES)
res = agent_mod.train(cfg.train, cfg.machine, cfg.schema, cfg.constraints,
                      runner.sim_env_factory(cfg))
print(f"train {EPISODES} eps: {time.time()-t0:.0f}s  "
      f"last-30 mean R={np.mean(res.episode_rewards[-30:]):.1f}")

# MAR comparison over the training run vs a same-length random run
rand_train = agent_mod.random_baseline(
    cfg.train, cfg.machine, cfg.schema, cfg.constraints,
    runner.sim_env_factory(cfg), episodes=EPISODES)
window = min(350, EPISODES - 1)
m_ai = mar(res.episode_rewards, window).values
m_rd = mar([t.cumulative for t in rand_train], window).values
frac = np.mean([a > b for a, b in zip(m_ai, m_rd)])
print(f"MAR window {window}: learned beats random at {frac:.0%} of indices")

deltas = []
for seed in SEEDS:
    ecfg = cfg.with_seed(seed)
    fac = runner.sim_env_factory(ecfg)
    ev = agent_mod.evaluate(res.policy, ecfg.train, ecfg.machine, ecfg.schema,
                            ecfg.constraints, fac, episodes=100)
    bl = agent_mod.random_baseline(ecfg.train, ecfg.machine, ecfg.schema,
                                   ecfg.constraints, fac, episodes=100)
    rep = compile_report(ev, bl, cfg.constraints, initial_state=cfg.machine.initial)
    deltas.append(rep.cliffs)
    print(f"--- seed {seed}: uniques learned={rep.subject_unique} random={rep.baseline_unique}, "
          f"diversity {rep.subject_diversity.score:.3f} vs {rep.baseline_diversity.score:.3f}, "
          f"delta={rep.cliffs:+.3f}")
    if seed == SEEDS[0]:
        print(render_report(rep))
        acts = Counter(s.action for t in ev[:10] for s in t.steps)
        print("eval action mix (10 eps):", acts.most_common(10))
print("deltas >= 0:", sum(1 for d in deltas if d >= 0), "of", len(deltas))
print(f"total {time.time()-t0:.0f}s")
