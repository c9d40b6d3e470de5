"""DQN training and evaluation over the flight environment.

The policy is the hand-rolled LSTM Q-network; decisions are made from a
fixed-length history window of encoded state tuples (zero-padded at episode
start) so replay samples stay independent while the recurrent layers still
see temporal context.  Exploration follows an exponentially decaying
epsilon-greedy schedule whose step counter advances once per action.

Training performs one gradient update per environment step once the replay
buffer holds a full batch: TD targets come from a target network that is
re-synced from the policy every ``target_update`` episodes, the loss is the
Huber loss, and the optimizer is Adam.  Checkpoints capture everything the
loop needs (networks, Adam moments, replay ring, RNG state, reward history),
so a resumed run reproduces an uninterrupted one bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .constraints import evaluate as evaluate_constraints
from .domain import DomainSchema, StateTuple, to_state_tuple
from .kvformat import ConfigError
from .lstm import (
    AdamState,
    LstmNetwork,
    adam_step,
    backward_batch,
    forward_batch,
    init_network,
    network_from_bytes,
    network_to_bytes,
)
from .sim import RUNNING
from .statemachine import FlightStateMachine
from .traces import EpisodeTrace, TraceStep, compute_reward

__all__ = [
    "TrainConfig",
    "TrainResult",
    "ReplayMemory",
    "AgentError",
    "epsilon",
    "select_action",
    "encode_state_tuple",
    "train",
    "evaluate",
    "random_baseline",
]


class AgentError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    replay_capacity: int = 1024
    target_update: int = 10  # episodes between target-network syncs
    gamma: float = 0.999
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay: float = 100.0  # agent steps
    training_episodes: int = 1000
    evaluation_episodes: int = 100
    history_len: int = 4
    hidden_dim: int = 10
    lstm_layers: int = 3
    checkpoint_interval: int = 50  # episodes
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if self.eps_end > self.eps_start:
            raise ConfigError("eps_end must not exceed eps_start")
        for name in (
            "batch_size",
            "replay_capacity",
            "target_update",
            "training_episodes",
            "evaluation_episodes",
            "history_len",
            "hidden_dim",
            "lstm_layers",
            "checkpoint_interval",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.eps_decay <= 0:
            raise ConfigError("eps_decay must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


def epsilon(step: int, cfg: TrainConfig) -> float:
    """Exploration probability after ``step`` agent actions."""
    if step < 0:
        raise AgentError("step must be non-negative")
    return cfg.eps_end + (cfg.eps_start - cfg.eps_end) * math.exp(-step / cfg.eps_decay)


def select_action(policy: LstmNetwork, window: np.ndarray, eps: float, rng) -> int:
    """Epsilon-greedy: explore uniformly over the full action space (action
    legality is judged by the environment afterwards), otherwise take the
    arg-max Q of the window's final step."""
    if not 0.0 <= eps <= 1.0:
        raise AgentError("eps must be in [0, 1]")
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(0, policy.action_count))
    q, _, _, _ = forward_batch(policy, window[None, :, :])
    return int(np.argmax(q[0, -1]))


# normalization divisors per tuple slot (bounds from the flight envelope)
_DIVISORS = np.array([300.0, 100.0, 100.0, 180.0, 180.0, 180.0, 360.0, 100.0, 5000.0])


def encode_state_tuple(t: StateTuple, state_index: dict[str, int]) -> np.ndarray:
    """Ten inputs: flight-state index scaled to [0, 1], then the nine
    numeric slots scaled by their envelope bounds."""
    try:
        idx = state_index[t.s0]
    except KeyError:
        raise AgentError(f"state {t.s0!r} missing from the encoder index") from None
    count = max(len(state_index) - 1, 1)
    return np.concatenate(
        [[idx / count], np.asarray(t.numbers(), dtype=np.float64) / _DIVISORS]
    )


class ReplayMemory:
    """Ring buffer of experiences with uniform sampling."""

    def __init__(self, capacity: int, history_len: int, input_dim: int = 10):
        self.capacity = capacity
        self.history_len = history_len
        self.input_dim = input_dim
        self.windows: list[np.ndarray] = []
        self.actions: list[int] = []
        self.rewards: list[float] = []
        self.next_windows: list[np.ndarray] = []
        self.dones: list[bool] = []
        self.pos = 0

    def __len__(self) -> int:
        return len(self.windows)

    def push(self, window, action, reward, next_window, done) -> None:
        if len(self.windows) < self.capacity:
            self.windows.append(window)
            self.actions.append(action)
            self.rewards.append(reward)
            self.next_windows.append(next_window)
            self.dones.append(done)
        else:
            i = self.pos
            self.windows[i] = window
            self.actions[i] = action
            self.rewards[i] = reward
            self.next_windows[i] = next_window
            self.dones[i] = done
        self.pos = (self.pos + 1) % self.capacity

    def sample(self, batch_size: int, rng):
        idx = rng.choice(len(self.windows), size=batch_size, replace=False)
        x = np.stack([self.windows[i] for i in idx])
        x_next = np.stack([self.next_windows[i] for i in idx])
        a = np.array([self.actions[i] for i in idx], dtype=np.int64)
        r = np.array([self.rewards[i] for i in idx], dtype=np.float64)
        d = np.array([self.dones[i] for i in idx], dtype=np.float64)
        return x, a, r, x_next, d


@dataclass
class TrainResult:
    policy: LstmNetwork
    traces: list[EpisodeTrace]
    episode_rewards: list[float]
    state_bytes: bytes


class _Loop:
    """Shared episode-walking machinery for training, evaluation, and the
    random baseline."""

    def __init__(self, cfg, sm, schema, constraints):
        if not sm.flat:
            raise AgentError("the agent needs a flattened machine")
        self.cfg = cfg
        self.sm = sm
        self.schema = schema
        self.constraints = constraints
        self.state_index = {name: i for i, name in enumerate(sm.state_names())}
        self.actions = sm.events

    def fresh_window(self) -> np.ndarray:
        return np.zeros((self.cfg.history_len, 10))

    def shift(self, window: np.ndarray, encoding: np.ndarray) -> np.ndarray:
        return np.vstack([window[1:], encoding[None, :]])

    def observe_window(self, window, env):
        snap = env.observe()
        enc = encode_state_tuple(to_state_tuple(snap), self.state_index)
        return self.shift(window, enc)


def _run_episode(loop: _Loop, env, episode: int, choose, on_transition=None):
    """Walk one episode to termination.  ``choose(window) -> action index``;
    ``on_transition`` sees (window, action, reward, next_window, done)."""
    trace = EpisodeTrace(episode)
    window = loop.observe_window(loop.fresh_window(), env)
    terminal = "aborted"
    while True:
        action_idx = choose(window)
        action = loop.actions[action_idx]
        try:
            outcome = env.step(action)
        except Exception:
            trace.finish("aborted", loop.cfg.gamma)
            return trace
        result = evaluate_constraints(loop.constraints, outcome.snapshot)
        reward = compute_reward(outcome.action_correct, result.m)
        status = env.is_terminal()
        done = status != RUNNING
        next_window = loop.observe_window(window, env)
        trace.steps.append(
            TraceStep(
                tick=outcome.snapshot.tick,
                state=outcome.flight_state,
                action=action,
                correct=outcome.action_correct,
                failed_ids=result.failed,
                reward=reward,
                state_tuple=to_state_tuple(outcome.snapshot),
            )
        )
        if on_transition is not None:
            on_transition(window, action_idx, reward, next_window, done)
        window = next_window
        if done:
            terminal = status
            break
    trace.finish(terminal, loop.cfg.gamma)
    return trace


# ---------------------------------------------------------------------------
# training


def train(
    cfg: TrainConfig,
    sm: FlightStateMachine,
    schema: DomainSchema,
    constraints,
    env_factory,
    trace_sink=None,
    state_sink=None,
    resume_bytes: bytes | None = None,
) -> TrainResult:
    """Run the training loop for ``cfg.training_episodes`` episodes.

    ``env_factory(episode)`` returns a fresh, already-reset environment.
    ``trace_sink`` receives each finished ``EpisodeTrace``; ``state_sink``
    receives checkpoint bytes every ``checkpoint_interval`` episodes and at
    the end.  ``resume_bytes`` restores a previous checkpoint and continues
    it up to the same total episode count.
    """
    loop = _Loop(cfg, sm, schema, constraints)

    if resume_bytes is not None:
        state = _restore_train_state(resume_bytes, cfg, loop)
    else:
        policy = init_network(cfg.seed, 10, cfg.hidden_dim, cfg.lstm_layers, loop.actions)
        state = _TrainState(
            policy=policy,
            target=policy.copy(),
            adam=AdamState.for_network(policy),
            replay=ReplayMemory(cfg.replay_capacity, cfg.history_len),
            rng=np.random.default_rng([cfg.seed, 0xA9E17]),
            global_step=0,
            episode_next=0,
            episode_rewards=[],
        )

    traces: list[EpisodeTrace] = []

    def choose(window):
        eps = epsilon(state.global_step, cfg)
        state.global_step += 1
        return select_action(state.policy, window, eps, state.rng)

    def learn(window, action_idx, reward, next_window, done):
        state.replay.push(window, action_idx, float(reward), next_window, done)
        if len(state.replay) < cfg.batch_size:
            return
        x, a, r, x_next, d = state.replay.sample(cfg.batch_size, state.rng)
        q_next, _, _, _ = forward_batch(state.target, x_next)
        targets = r + cfg.gamma * q_next[:, -1, :].max(axis=1) * (1.0 - d)
        _q, _h, _c, cache = forward_batch(state.policy, x, need_cache=True)
        _loss, grads = backward_batch(state.policy, x, cache, a, targets)
        adam_step(state.policy, grads, state.adam, cfg.learning_rate)

    for episode in range(state.episode_next, cfg.training_episodes):
        env = env_factory(episode)
        trace = _run_episode(loop, env, episode, choose, on_transition=learn)
        state.episode_rewards.append(trace.cumulative)
        traces.append(trace)
        if trace_sink is not None:
            trace_sink(trace)
        state.episode_next = episode + 1
        if (episode + 1) % cfg.target_update == 0:
            state.target = state.policy.copy()
        if state_sink is not None and (episode + 1) % cfg.checkpoint_interval == 0:
            state_sink(_train_state_bytes(state, cfg))

    final_bytes = _train_state_bytes(state, cfg)
    if state_sink is not None:
        state_sink(final_bytes)
    return TrainResult(state.policy, traces, list(state.episode_rewards), final_bytes)


@dataclass
class _TrainState:
    policy: LstmNetwork
    target: LstmNetwork
    adam: AdamState
    replay: ReplayMemory
    rng: np.random.Generator
    global_step: int
    episode_next: int
    episode_rewards: list[float]


_RESUME_KEYS = (
    "learning_rate",
    "batch_size",
    "replay_capacity",
    "target_update",
    "gamma",
    "eps_start",
    "eps_end",
    "eps_decay",
    "history_len",
    "hidden_dim",
    "lstm_layers",
    "seed",
)


def _train_state_bytes(state: _TrainState, cfg: TrainConfig) -> bytes:
    replay = state.replay
    n = len(replay)
    h = cfg.history_len
    meta = {
        "episode_next": state.episode_next,
        "global_step": state.global_step,
        "adam_step": state.adam.step,
        "replay_pos": replay.pos,
        "replay_size": n,
        "rng_state": json.dumps(state.rng.bit_generator.state, sort_keys=True),
        "config": {k: getattr(cfg, k) for k in _RESUME_KEYS},
    }
    arrays = [
        ("target", state.target.params),
        ("adam_m", state.adam.m),
        ("adam_v", state.adam.v),
        ("episode_rewards", np.array(state.episode_rewards, dtype=np.float64)),
        ("replay_windows", np.stack(replay.windows).ravel() if n else np.empty(0)),
        ("replay_next", np.stack(replay.next_windows).ravel() if n else np.empty(0)),
        ("replay_actions", np.array(replay.actions, dtype=np.float64)),
        ("replay_rewards", np.array(replay.rewards, dtype=np.float64)),
        ("replay_dones", np.array(replay.dones, dtype=np.float64)),
    ]
    return network_to_bytes(state.policy, extra=meta, extra_arrays=arrays)


def _restore_train_state(data: bytes, cfg: TrainConfig, loop: _Loop) -> _TrainState:
    policy, meta, named = network_from_bytes(data)
    if "config" not in meta:
        raise AgentError("checkpoint does not hold a training state")
    saved = meta["config"]
    current = {k: getattr(cfg, k) for k in _RESUME_KEYS}
    if saved != current:
        diff = {k: (saved.get(k), current[k]) for k in current if saved.get(k) != current[k]}
        raise AgentError(f"checkpoint config mismatch: {diff}")
    if tuple(policy.actions) != tuple(loop.actions):
        raise AgentError("checkpoint action names do not match the machine events")
    target = policy.copy()
    target.params = named["target"].copy()
    adam = AdamState.for_network(policy)
    adam.m = named["adam_m"].copy()
    adam.v = named["adam_v"].copy()
    adam.step = int(meta["adam_step"])
    replay = ReplayMemory(cfg.replay_capacity, cfg.history_len)
    n = int(meta["replay_size"])
    if n:
        windows = named["replay_windows"].reshape(n, cfg.history_len, 10)
        next_windows = named["replay_next"].reshape(n, cfg.history_len, 10)
        replay.windows = [windows[i].copy() for i in range(n)]
        replay.next_windows = [next_windows[i].copy() for i in range(n)]
        replay.actions = [int(a) for a in named["replay_actions"]]
        replay.rewards = [float(r) for r in named["replay_rewards"]]
        replay.dones = [bool(d) for d in named["replay_dones"]]
    replay.pos = int(meta["replay_pos"])
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(meta["rng_state"])
    return _TrainState(
        policy=policy,
        target=target,
        adam=adam,
        replay=replay,
        rng=rng,
        global_step=int(meta["global_step"]),
        episode_next=int(meta["episode_next"]),
        episode_rewards=[float(r) for r in named["episode_rewards"]],
    )


# ---------------------------------------------------------------------------
# evaluation and baseline


def evaluate(
    policy: LstmNetwork,
    cfg: TrainConfig,
    sm: FlightStateMachine,
    schema: DomainSchema,
    constraints,
    env_factory,
    episodes: int | None = None,
    trace_sink=None,
) -> list[EpisodeTrace]:
    """Pure exploitation: epsilon pinned to zero, no replay, no learning."""
    loop = _Loop(cfg, sm, schema, constraints)
    if tuple(policy.actions) != tuple(loop.actions):
        raise AgentError(
            f"model was trained on {len(policy.actions)} actions but the machine "
            f"declares {len(loop.actions)}"
        )
    if policy.input_dim != 10:
        raise AgentError(f"model input width {policy.input_dim} != 10")
    count = cfg.evaluation_episodes if episodes is None else episodes
    traces = []
    rng = np.random.default_rng(0)  # never consulted at eps=0
    for episode in range(count):
        env = env_factory(episode)
        trace = _run_episode(
            loop, env, episode, lambda w: select_action(policy, w, 0.0, rng)
        )
        traces.append(trace)
        if trace_sink is not None:
            trace_sink(trace)
    return traces


def random_baseline(
    cfg: TrainConfig,
    sm: FlightStateMachine,
    schema: DomainSchema,
    constraints,
    env_factory,
    episodes: int | None = None,
    trace_sink=None,
) -> list[EpisodeTrace]:
    """Uniform-random action at every step with the same plumbing and trace
    schema as the learned tester."""
    loop = _Loop(cfg, sm, schema, constraints)
    rng = np.random.default_rng([cfg.seed, 0xBA5E])
    count = cfg.evaluation_episodes if episodes is None else episodes
    action_count = len(loop.actions)
    traces = []
    for episode in range(count):
        env = env_factory(episode)
        trace = _run_episode(
            loop, env, episode, lambda w: int(rng.integers(0, action_count))
        )
        traces.append(trace)
        if trace_sink is not None:
            trace_sink(trace)
    return traces
