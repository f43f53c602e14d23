"""Tabular Q-learning used as a worst-case search over discrete SUT inputs.

Rewards come from the oracle: every environment step is one recorded query.
For the scheduler environment the reward is the negated QoS score of the
demand pattern the agent moves to, so maximising return drives the agent
towards the patterns the scheduler serves worst.

Update rule per step (no terminal states, episodes are truncated):

    Q[s, a] <- (1 - alpha) * Q[s, a] + alpha * (r + gamma * max_a' Q[s', a'])

Ties between actions always go to the lowest action index."""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ConfigError
from .trace import TraceRecorder

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from start to end over the first decay_fraction of episodes"""

    start: float = 1.0
    end: float = 0.05
    decay_fraction: float = 0.8

    def __post_init__(self):
        if not (0 <= self.end <= 1 and 0 <= self.start <= 1):
            raise ConfigError("epsilon must be within [0, 1]")
        if not 0 < self.decay_fraction <= 1:
            raise ConfigError("decay_fraction must be within (0, 1]")

    @classmethod
    def constant(cls, epsilon) -> "EpsilonSchedule":
        return cls(start=epsilon, end=epsilon)

    def value(self, episode: int, episodes: int) -> float:
        horizon = self.decay_fraction * episodes
        if episode >= horizon:
            return self.end
        return self.start + (self.end - self.start) * episode / horizon


@dataclass(frozen=True)
class QParams:
    alpha: float = 0.5
    gamma: float = 0.9
    episodes: int = 300
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be within (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must be within [0, 1)")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")


# ---------------------------------------------------------------- environments
class Environment:
    """Deterministic discrete environment whose rewards come from an oracle.

    Subclasses set `states`, `actions` and `episode_len` and define the
    transition plus how a step turns into oracle params and back."""

    states: List[Any]
    actions: List[str]
    episode_len: int
    # reward = reward_sign * score
    reward_sign: float = 1.0

    def _check(self):
        if not self.states or not self.actions:
            raise ConfigError("environment needs non-empty state and action spaces")
        if self.episode_len < 1:
            raise ConfigError("episode_len must be >= 1")
        self.index = {s: i for i, s in enumerate(self.states)}

    def reset(self, rng: np.random.Generator):
        raise NotImplementedError

    def transition(self, state, action: int):
        raise NotImplementedError

    def query_params(self, state, action: int, next_state) -> dict:
        raise NotImplementedError


class SchedulerEnv(Environment):
    """States are per-UE demand tuples within [lo, hi]; action 0 keeps the
    demands, then each UE has an increase and a decrease action (clipped)"""

    reward_sign = -1.0

    def __init__(self, ues, demand_range, capacity, tti_count=1, priorities=None, episode_len=6):
        if ues < 1:
            raise ConfigError("scheduler environment needs at least one UE")
        lo, hi = demand_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"demand_range must satisfy 1 <= lo <= hi, got {demand_range}")
        self.ues, self.lo, self.hi = ues, lo, hi
        self.episode_len = episode_len
        self.states = list(itertools.product(range(lo, hi + 1), repeat=ues))
        self.actions = ["stay"] + [f"{d}{i}" for i in range(ues) for d in ("inc", "dec")]
        self.request = {
            "ue_demands": [lo] * ues,
            "priorities": list(priorities or [1.0] * ues),
            "capacity": capacity,
            "tti_count": tti_count,
        }
        self._check()

    def reset(self, rng):
        return self.states[int(rng.integers(len(self.states)))]

    def transition(self, state, action):
        if action == 0:
            return state
        ue, direction = divmod(action - 1, 2)
        demands = list(state)
        demands[ue] = min(self.hi, max(self.lo, demands[ue] + (1 if direction == 0 else -1)))
        return tuple(demands)

    def query_params(self, state, action, next_state):
        return {"ue_demands": list(next_state)}


class TabularMdp(Environment):
    """Deterministic MDP given as transition and reward tables"""

    def __init__(self, next_state: Sequence[Sequence[int]], rewards: Sequence[Sequence[float]], episode_len=10, start: Optional[int] = 0):
        self.next_state = [list(row) for row in next_state]
        self.rewards = [list(row) for row in rewards]
        self.states = list(range(len(self.next_state)))
        n_actions = len(self.next_state[0]) if self.next_state else 0
        self.actions = [f"a{i}" for i in range(n_actions)]
        self.episode_len = episode_len
        self.start = start
        self._check()

    def reset(self, rng):
        if self.start is None:
            return int(rng.integers(len(self.states)))
        return self.start

    def transition(self, state, action):
        return self.next_state[state][action]

    def query_params(self, state, action, next_state):
        return {"state": state, "action": action}

    def reward_table(self) -> Dict[Tuple[int, int], float]:
        return {(s, a): self.rewards[s][a] for s in self.states for a in range(len(self.actions))}


def two_state_chain(episode_len=10, start=0) -> TabularMdp:
    """State 0 pays nothing; moving to state 1 and staying there pays 1 per step.
    Optimal: move from 0, stay in 1."""
    return TabularMdp(
        next_state=[[0, 1], [1, 0]],
        rewards=[[0.0, 0.0], [1.0, 0.0]],
        episode_len=episode_len,
        start=start,
    )


# -------------------------------------------------------------------- planning
def value_iteration(mdp: TabularMdp, gamma: float, tol: float = 1e-12, max_iter: int = 100_000):
    """(state values, greedy policy) of a tabular MDP"""
    n_actions = len(mdp.actions)
    values = np.zeros(len(mdp.states))
    for _ in range(max_iter):
        q = np.array(
            [[mdp.rewards[s][a] + gamma * values[mdp.next_state[s][a]] for a in range(n_actions)] for s in mdp.states]
        )
        updated = q.max(axis=1)
        delta = np.max(np.abs(updated - values))
        values = updated
        if delta < tol:
            break
    policy = [int(np.argmax(row)) for row in q]
    return values, policy


# -------------------------------------------------------------------- learning
@dataclass
class RlResult:
    q_table: np.ndarray
    states: List[Any]
    actions: List[str]
    worst_state: Any
    worst_score: float
    worst_trajectory: List[dict]
    episode_returns: List[float]

    def greedy_policy(self) -> List[int]:
        return [int(np.argmax(row)) for row in self.q_table]

    def greedy_action(self, state) -> int:
        return int(np.argmax(self.q_table[self.states.index(state)]))

    def to_dict(self):
        def label(s):
            return list(s) if isinstance(s, tuple) else s

        return {
            "states": [label(s) for s in self.states],
            "actions": list(self.actions),
            "q_table": [[float(v) for v in row] for row in self.q_table],
            "greedy_policy": self.greedy_policy(),
            "worst_state": label(self.worst_state),
            "worst_score": self.worst_score,
            "worst_trajectory": self.worst_trajectory,
            "episode_returns": list(self.episode_returns),
        }


def _choose(q_row, epsilon, rng) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(len(q_row)))
    return int(np.argmax(q_row))


def rl_explore(env: Environment, params: QParams, recorder: TraceRecorder, rng: np.random.Generator) -> RlResult:
    needed = params.episodes * env.episode_len
    if needed > recorder.remaining:
        raise ConfigError(f"{params.episodes} episodes of {env.episode_len} steps exceed the budget of {recorder.remaining}")

    q = np.zeros((len(env.states), len(env.actions)))
    worst = (None, float("inf"), [])
    returns = []

    for episode in range(params.episodes):
        epsilon = params.epsilon.value(episode, params.episodes)
        state = env.reset(rng)
        trajectory, total = [], 0.0
        for step in range(env.episode_len):
            s = env.index[state]
            action = _choose(q[s], epsilon, rng)
            next_state = env.transition(state, action)
            obs = recorder.query(
                env.query_params(state, action, next_state),
                episode=episode,
                state=list(state) if isinstance(state, tuple) else state,
                action=action,
                next_state=list(next_state) if isinstance(next_state, tuple) else next_state,
            )
            reward = env.reward_sign * obs.score
            recorder.trace.iterations[-1]["reward"] = reward
            trajectory.append({"state": state, "action": action, "reward": reward, "next_state": next_state})
            total += reward

            s_next = env.index[next_state]
            target = reward + params.gamma * np.max(q[s_next])
            q[s, action] = (1 - params.alpha) * q[s, action] + params.alpha * target

            if obs.score < worst[1]:
                worst = (next_state, obs.score, trajectory)
            state = next_state
        returns.append(total)

    worst_state, worst_score, worst_trajectory = worst

    def label(s):
        return list(s) if isinstance(s, tuple) else s

    logger.debug(f"Q-learning worst score {worst_score} at {worst_state}")
    return RlResult(
        q_table=q,
        states=list(env.states),
        actions=list(env.actions),
        worst_state=worst_state,
        worst_score=worst_score,
        worst_trajectory=[
            dict(t, state=label(t["state"]), next_state=label(t["next_state"])) for t in worst_trajectory
        ],
        episode_returns=returns,
    )
