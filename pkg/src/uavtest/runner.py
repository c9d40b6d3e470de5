"""Run orchestration: wires configs, environments, the agent, and output
files together.  The CLI is a thin shell over these functions; tests call
them directly.

Output directory layout (all files deterministic for a fixed seed):

* ``traces.txt``  - line-delimited episode traces
* ``model.ckpt``  - the policy network (weights + action names)
* ``train_state.ckpt`` - full training state, resumable
* ``mar.txt``     - plot data: ``<episode> <MAR>`` per line
* ``report.txt`` / ``report.dat`` - comparison table and records
* ``script_<n>.txt`` - exported test script for one episode
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import agent as agent_mod
from .analysis import mar
from .config import RunConfig
from .lstm import LstmNetwork, network_from_bytes
from .report import compile_report, export_script, render_report, report_records
from .sim import SimulatorEnv
from .traces import read_traces, write_traces

__all__ = [
    "sim_env_factory",
    "run_train",
    "run_eval",
    "run_baseline",
    "run_report",
    "run_export_script",
]


def sim_env_factory(cfg: RunConfig):
    """Per-episode environments: episode ``k`` always sees the seed stream
    ``[run seed, k]``, so learned and baseline runs face the same weather."""

    def factory(episode: int):
        env = SimulatorEnv(cfg.sim, cfg.machine, cfg.schema)
        env.reset(seed=[cfg.sim.seed, episode])
        return env

    return factory


def _mar_text(rewards) -> str:
    if not rewards:
        return ""
    window = min(350, len(rewards))
    series = mar(rewards, window)
    lines = []
    for i, value in enumerate(series.values):
        episode = window - 1 + i
        lines.append(f"{episode} {value!r}")
    return "\n".join(lines) + "\n"


def run_train(cfg: RunConfig, out_dir, episodes: int | None = None,
              resume: str | None = None, quiet: bool = True) -> Path:
    """Train and write traces/checkpoints/MAR data; returns the out dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if episodes is not None:
        cfg = cfg.with_episodes(episodes)

    resume_bytes = None
    append = False
    if resume is not None:
        resume_bytes = Path(resume).read_bytes()
        append = True

    trace_path = out / "traces.txt"
    if not append:
        trace_path.write_text("", encoding="utf-8")

    def trace_sink(trace):
        write_traces(trace_path, [trace], append=True)
        if not quiet:
            print(
                f"episode {trace.episode}: {trace.terminal}, "
                f"R={trace.cumulative:.3f}, steps={len(trace.steps)}"
            )

    def state_sink(data: bytes):
        (out / "train_state.ckpt").write_bytes(data)

    result = agent_mod.train(
        cfg.train,
        cfg.machine,
        cfg.schema,
        cfg.constraints,
        sim_env_factory(cfg),
        trace_sink=trace_sink,
        state_sink=state_sink,
        resume_bytes=resume_bytes,
    )
    from .lstm import save_network

    save_network(result.policy, out / "model.ckpt", extra={"trained_episodes": cfg.train.training_episodes})
    (out / "mar.txt").write_text(_mar_text(result.episode_rewards), encoding="utf-8")
    return out


def _load_model(path) -> LstmNetwork:
    net, _meta, _named = network_from_bytes(Path(path).read_bytes())
    return net


def run_eval(cfg: RunConfig, model_path, out_dir, episodes: int | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    policy = _load_model(model_path)
    traces = agent_mod.evaluate(
        policy,
        cfg.train,
        cfg.machine,
        cfg.schema,
        cfg.constraints,
        sim_env_factory(cfg),
        episodes=episodes,
    )
    write_traces(out / "traces.txt", traces)
    return out


def run_baseline(cfg: RunConfig, out_dir, episodes: int | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = agent_mod.random_baseline(
        cfg.train,
        cfg.machine,
        cfg.schema,
        cfg.constraints,
        sim_env_factory(cfg),
        episodes=episodes,
    )
    write_traces(out / "traces.txt", traces)
    return out


def run_report(cfg: RunConfig, subject_dir, baseline_dir, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    subject = read_traces(Path(subject_dir) / "traces.txt")
    baseline = read_traces(Path(baseline_dir) / "traces.txt")
    report = compile_report(
        subject, baseline, cfg.constraints, initial_state=cfg.machine.initial
    )
    (out / "report.txt").write_text(render_report(report), encoding="utf-8")
    (out / "report.dat").write_text(report_records(report), encoding="utf-8")
    return out


def run_export_script(cfg: RunConfig, model_path, out_dir, episode: int = 0) -> Path:
    """Run one exploitation episode and export it as a test script."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    policy = _load_model(model_path)
    traces = agent_mod.evaluate(
        policy,
        cfg.train,
        cfg.machine,
        cfg.schema,
        cfg.constraints,
        sim_env_factory(cfg),
        episodes=episode + 1,
    )
    trace = traces[episode]
    script = export_script(trace, cfg.templates)
    path = out / f"script_{episode}.txt"
    path.write_text(script, encoding="utf-8")
    write_traces(out / f"script_{episode}_trace.txt", [trace])
    return path
