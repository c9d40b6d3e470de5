"""Episode traces: in-memory records plus the line-delimited file format.

One step per line, followed by one footer per episode::

    <episode>,<tick>,<state>,<action>,<correct 0/1>,<failed ids ;-joined>,<reward>
    <episode>,<terminal kind>,<cumulative reward>

Rewards are integers by construction; the cumulative reward is written with
``repr`` so the file round-trips bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import StateTuple

__all__ = [
    "TraceError",
    "TraceStep",
    "EpisodeTrace",
    "compute_reward",
    "cumulative_reward",
    "format_trace",
    "parse_traces",
    "write_traces",
    "read_traces",
    "verify_trace_arithmetic",
]

TERMINALS = ("goal", "crashed", "step-limit", "aborted")


class TraceError(ValueError):
    pass


def compute_reward(action_correct: bool, m: int) -> int:
    """+1 for a correct action plus one per violated constraint; a flat -1
    for an incorrect action regardless of violations."""
    if m < 0:
        raise TraceError(f"violation count must be non-negative, got {m}")
    return 1 + m if action_correct else -1


def cumulative_reward(rewards, gamma: float) -> float:
    """Discounted sum over one episode: sum of gamma^t * r_t."""
    if not 0.0 <= gamma <= 1.0:
        raise TraceError(f"gamma must be in [0, 1], got {gamma}")
    total = 0.0
    factor = 1.0
    for r in rewards:
        total += factor * r
        factor *= gamma
    return total


@dataclass(frozen=True)
class TraceStep:
    tick: int
    state: str  # flight state after the action
    action: str
    correct: bool
    failed_ids: tuple[str, ...]
    reward: int
    state_tuple: StateTuple | None = None


@dataclass
class EpisodeTrace:
    episode: int
    steps: list[TraceStep] = field(default_factory=list)
    terminal: str = "aborted"
    cumulative: float = 0.0

    def finish(self, terminal: str, gamma: float) -> "EpisodeTrace":
        if terminal not in TERMINALS:
            raise TraceError(f"unknown terminal kind {terminal!r}")
        self.terminal = terminal
        self.cumulative = cumulative_reward([s.reward for s in self.steps], gamma)
        return self

    def transition_set(self, initial_state: str) -> frozenset[tuple[str, str, str]]:
        """Correct-action transition triples (state, action, next state)."""
        triples = set()
        prev = initial_state
        for s in self.steps:
            if s.correct:
                triples.add((prev, s.action, s.state))
            prev = s.state
        return frozenset(triples)


def format_trace(trace: EpisodeTrace) -> str:
    lines = []
    for s in trace.steps:
        ids = ";".join(s.failed_ids)
        lines.append(
            f"{trace.episode},{s.tick},{s.state},{s.action},{int(s.correct)},{ids},{s.reward}"
        )
    lines.append(f"{trace.episode},{trace.terminal},{trace.cumulative!r}")
    return "\n".join(lines) + "\n"


def parse_traces(text: str) -> list[EpisodeTrace]:
    traces: dict[int, EpisodeTrace] = {}
    order: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) == 3:
            episode, terminal, cum = parts
            ep = int(episode)
            trace = traces.get(ep)
            if trace is None:
                trace = traces.setdefault(ep, EpisodeTrace(ep))
                order.append(ep)
            if terminal not in TERMINALS:
                raise TraceError(f"line {lineno}: unknown terminal {terminal!r}")
            trace.terminal = terminal
            trace.cumulative = float(cum)
        elif len(parts) == 7:
            episode, tick, state, action, correct, ids, reward = parts
            ep = int(episode)
            if ep not in traces:
                traces[ep] = EpisodeTrace(ep)
                order.append(ep)
            traces[ep].steps.append(
                TraceStep(
                    tick=int(tick),
                    state=state,
                    action=action,
                    correct=bool(int(correct)),
                    failed_ids=tuple(i for i in ids.split(";") if i),
                    reward=int(reward),
                )
            )
        else:
            raise TraceError(f"line {lineno}: expected 3 or 7 fields, got {len(parts)}")
    return [traces[ep] for ep in order]


def write_traces(path, traces, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="\n") as fh:
        for trace in traces:
            fh.write(format_trace(trace))


def read_traces(path) -> list[EpisodeTrace]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_traces(fh.read())


def verify_trace_arithmetic(trace: EpisodeTrace, gamma: float) -> None:
    """Check the reward identity and the footer recomputation; raises
    ``TraceError`` on any mismatch."""
    for s in trace.steps:
        expected = compute_reward(s.correct, len(s.failed_ids))
        if s.reward != expected:
            raise TraceError(
                f"episode {trace.episode} tick {s.tick}: reward {s.reward} != "
                f"compute_reward({s.correct}, {len(s.failed_ids)}) = {expected}"
            )
    expected_r = cumulative_reward([s.reward for s in trace.steps], gamma)
    if trace.cumulative != expected_r:
        raise TraceError(
            f"episode {trace.episode}: footer {trace.cumulative!r} != "
            f"recomputed {expected_r!r}"
        )
