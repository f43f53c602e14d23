"""Run one AI testing session from the `ai` map of a run_ai_session step.

    ai:
      method: fuzz            # sensitivity | fuzz | adversarial | rl
      op: demodulate          # SUT operation queried (not for adversarial/rl)
      request: {...}          # base request; space dims are dotted paths into it
      space: [{name, kind, lo, hi | values}, ...]
      budget: 500
      seed: 7                 # optional, defaults to the step's derived seed
      ...                     # method specific keys, see _KEYS

The returned trace is complete, or the OracleError raised carries the partial
trace flagged incomplete."""

import logging
import math

import numpy as np

from ..exceptions import ConfigError, OracleError
from ..sut.demod import CONSTELLATIONS
from .adversarial import adversarial_perturb
from .fuzz import FitnessSpec, GaParams, fuzz_genetic
from .impairment import Impairment
from .oracle import ScoreSpec, Transport, request_oracle, table_oracle
from .rl import EpsilonSchedule, QParams, SchedulerEnv, rl_explore, two_state_chain
from .sensitivity import query_count, sensitivity_analysis
from .space import ParameterSpace
from .trace import ExplorationTrace, Method, TraceRecorder, close_trace, open_trace

logger = logging.getLogger(__name__)

_COMMON = {"method", "seed", "budget"}
_KEYS = {
    Method.SENSITIVITY: {"op", "request", "space", "baseline", "levels", "score"},
    Method.FUZZ: {"op", "request", "space", "fitness", "ga"},
    Method.ADVERSARIAL: {"constellation", "symbol_index", "symbol", "norm_bound", "impairments", "shrink_steps", "patience"},
    Method.RL: {
        "env", "ues", "demand_range", "capacity", "tti_count", "priorities", "episodes", "episode_len",
        "alpha", "gamma", "epsilon", "epsilon_start", "epsilon_end", "decay_fraction",
    },
}
DEFAULT_ADVERSARIAL_BUDGET = 100


def _get(ai, key, kind=None, default=None):
    if key not in ai:
        if default is None:
            raise ConfigError(f"ai session needs '{key}'")
        return default
    value = ai[key]
    if kind is not None and (not isinstance(value, kind) or isinstance(value, bool)):
        raise ConfigError(f"ai '{key}' has the wrong type: {value!r}")
    return value


def _budget(ai, default=None) -> int:
    budget = _get(ai, "budget", int, default)
    if budget < 0:
        raise ConfigError("budget must be >= 0")
    return budget


def _run_sensitivity(ai, transport, seed, rng):
    space = ParameterSpace.from_list(_get(ai, "space", list))
    baseline = _get(ai, "baseline", dict)
    levels = _get(ai, "levels", dict, {})
    needed = query_count(space, baseline, levels) if set(space.names) <= set(baseline) else 0
    budget = _budget(ai, needed)
    if budget < needed:
        raise ConfigError(f"sensitivity sweep needs {needed} queries, budget is {budget}")
    trace = open_trace(Method.SENSITIVITY, seed, space, budget, ai)
    oracle = request_oracle(transport, _get(ai, "op", str), _get(ai, "request", dict))
    recorder = TraceRecorder(trace, oracle, ScoreSpec(score=_get(ai, "score", str)))
    return trace, lambda: sensitivity_analysis(space, baseline, levels, recorder).to_dict()


def _run_fuzz(ai, transport, seed, rng):
    space = ParameterSpace.from_list(_get(ai, "space", list))
    fitness = _get(ai, "fitness", dict)
    spec = FitnessSpec(target=fitness.get("target"), maximize=fitness.get("maximize", True))
    ga = GaParams.from_dict(ai.get("ga"))
    budget = _budget(ai)
    trace = open_trace(Method.FUZZ, seed, space, budget, ai)
    oracle = request_oracle(transport, _get(ai, "op", str), _get(ai, "request", dict))
    recorder = TraceRecorder(trace, oracle, ScoreSpec(score=_get(fitness, "score", str)))
    return trace, lambda: fuzz_genetic(space, spec, budget, ga, recorder, rng).to_dict()


def _run_adversarial(ai, transport, seed, rng):
    constellation = _get(ai, "constellation", str, "QPSK")
    if constellation not in CONSTELLATIONS:
        raise ConfigError(f"unknown constellation '{constellation}'")
    points = CONSTELLATIONS[constellation]
    index = _get(ai, "symbol_index", int, 0)
    if not 0 <= index < len(points):
        raise ConfigError(f"symbol_index must be within [0, {len(points)})")
    if "symbol" in ai:
        re, im = ai["symbol"]
        base = complex(re, im)
    else:
        base = complex(points[index])
    norm_bound = _get(ai, "norm_bound", (int, float))
    if not (norm_bound > 0 and math.isfinite(norm_bound)):
        raise ConfigError("norm_bound must be positive")
    menu = [Impairment.from_dict(i) for i in _get(ai, "impairments", list, [])]
    budget = _budget(ai, DEFAULT_ADVERSARIAL_BUDGET)

    trace = open_trace(Method.ADVERSARIAL, seed, [], budget, ai)
    request = {
        "constellation": constellation,
        "symbols": [[base.real, base.imag]],
        "true_indices": [index],
    }
    oracle = request_oracle(transport, "demodulate", request)
    recorder = TraceRecorder(
        trace, oracle, ScoreSpec(decision="decided_indices.0", confidence="mean_confidence")
    )
    kwargs = {k: ai[k] for k in ("shrink_steps", "patience") if k in ai}
    return trace, lambda: adversarial_perturb(base, norm_bound, menu, recorder, rng, **kwargs).to_dict()


def _run_rl(ai, transport, seed, rng):
    kind = _get(ai, "env", str, "scheduler")
    episode_len = _get(ai, "episode_len", int, 6)
    if kind == "scheduler":
        env = SchedulerEnv(
            ues=_get(ai, "ues", int, 2),
            demand_range=tuple(_get(ai, "demand_range", list, [1, 4])),
            capacity=_get(ai, "capacity", int),
            tti_count=_get(ai, "tti_count", int, 1),
            priorities=ai.get("priorities"),
            episode_len=episode_len,
        )
        oracle = request_oracle(transport, "schedule", env.request)
        score = ScoreSpec(score="qos_score")
    elif kind == "chain":
        env = two_state_chain(episode_len=episode_len)
        oracle = table_oracle(env.reward_table(), lambda p: (p["state"], p["action"]))
        score = ScoreSpec(score="reward")
    else:
        raise ConfigError(f"unknown rl env '{kind}'")

    if "epsilon" in ai:
        schedule = EpsilonSchedule.constant(ai["epsilon"])
    else:
        schedule = EpsilonSchedule(
            start=ai.get("epsilon_start", 1.0),
            end=ai.get("epsilon_end", 0.05),
            decay_fraction=ai.get("decay_fraction", 0.8),
        )
    params = QParams(
        alpha=ai.get("alpha", 0.5),
        gamma=ai.get("gamma", 0.9),
        episodes=_get(ai, "episodes", int, 300),
        epsilon=schedule,
    )
    budget = _budget(ai, params.episodes * env.episode_len)
    space = [{"name": "state", "kind": "categorical", "values": [list(s) if isinstance(s, tuple) else s for s in env.states]}]
    trace = open_trace(Method.RL, seed, space, budget, ai)
    recorder = TraceRecorder(trace, oracle, score)
    return trace, lambda: rl_explore(env, params, recorder, rng).to_dict()


_RUNNERS = {
    Method.SENSITIVITY: _run_sensitivity,
    Method.FUZZ: _run_fuzz,
    Method.ADVERSARIAL: _run_adversarial,
    Method.RL: _run_rl,
}


def run_session(ai: dict, transport: Transport, seed: int) -> ExplorationTrace:
    if not isinstance(ai, dict):
        raise ConfigError("ai session parameters must be a map")
    try:
        method = Method(ai.get("method"))
    except ValueError:
        raise ConfigError(f"unknown ai method {ai.get('method')!r}")
    unknown = set(ai) - _COMMON - _KEYS[method]
    if unknown:
        raise ConfigError(f"{method.value} session has no parameter(s) {', '.join(sorted(unknown))}")

    seed = _get(ai, "seed", int, seed)
    rng = np.random.default_rng(seed)
    trace, execute = _RUNNERS[method](ai, transport, seed, rng)
    logger.info(f"Starting {method.value} session (seed {seed}, budget {trace.budget})")
    try:
        summary = execute()
    except OracleError as e:
        close_trace(trace, error=e)
        e.trace = trace
        raise
    return close_trace(trace, summary)


_HEADLINE_KEYS = {
    Method.SENSITIVITY: ("indices", "ranking"),
    Method.FUZZ: ("best", "best_fitness", "generations"),
    Method.ADVERSARIAL: ("status", "perturbation", "magnitude", "decision_before", "decision_after", "source"),
    Method.RL: ("worst_state", "worst_score", "greedy_policy"),
}


def headline(trace: ExplorationTrace) -> dict:
    """Compact view of a trace for step outcomes and reports"""
    summary = {k: trace.summary[k] for k in _HEADLINE_KEYS[trace.method] if k in trace.summary}
    return {
        "method": trace.method.value,
        "trace_digest": trace.digest(),
        "queries": len(trace.iterations),
        "budget": trace.budget,
        "complete": trace.complete,
        "result": summary,
    }
