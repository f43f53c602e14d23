import itertools
import math

import numpy as np
import pytest

from ranprobe.aicore import (
    EpsilonSchedule,
    FitnessSpec,
    GaParams,
    Impairment,
    ParameterSpace,
    QParams,
    ScoreSpec,
    TabularMdp,
    TraceRecorder,
    apply_impairment,
    fuzz_genetic,
    local_transport,
    open_trace,
    request_oracle,
    rl_explore,
    table_oracle,
    two_state_chain,
    value_iteration,
)
from ranprobe.aicore.session import run_session
from ranprobe.exceptions import ConfigError, OracleError, SchemaError
from ranprobe.script import parse_script
from ranprobe.sut import CONSTELLATIONS, DemodRequest, SchedulerRequest, SutService, demodulate, schedule

QPSK = CONSTELLATIONS["QPSK"]


def ai_sessions(example_dir, name):
    script = parse_script((example_dir / name).read_text())
    return [a.params["ai"] for a in script.actions if a.name == "run_ai_session"]


def score_transport(fn):
    """Transport whose response is {"score": fn(request)}"""
    return lambda op, request: {"score": fn(request)}


def sut_transport():
    return local_transport(SutService())


# ----------------------------------------------------------------- impairments
def test_zero_cfo_is_identity():
    out = apply_impairment(QPSK, Impairment.from_dict({"kind": "cfo", "cfo": 0.0}))
    assert np.array_equal(out, QPSK)


def test_quarter_turn_block_lands_on_next_point():
    imp = Impairment.from_dict({"kind": "cfo", "mode": "block", "cfo": math.pi / 2})
    out = apply_impairment(QPSK, imp)
    assert np.allclose(out, QPSK * 1j)
    assert np.allclose(out, np.roll(QPSK, -1))


def test_per_symbol_cfo_accumulates():
    x = np.ones(5, dtype=complex)
    out = apply_impairment(x, Impairment.from_dict({"kind": "cfo", "cfo": 0.3}))
    assert np.allclose(out, np.exp(1j * 0.3 * np.arange(5)))


def test_interference_power_zero_is_identity(rng):
    for tail in ("gaussian", "heavy_tail"):
        imp = Impairment.from_dict({"kind": "interference", "power": 0.0, "tail": tail})
        assert np.array_equal(apply_impairment(QPSK, imp, rng), QPSK)


def test_interference_power_and_length(rng):
    x = np.zeros(20000, dtype=complex)
    imp = Impairment.from_dict({"kind": "interference", "power": 0.5})
    out = apply_impairment(x, imp, rng)
    assert len(out) == len(x)
    assert np.mean(np.abs(out) ** 2) == pytest.approx(0.5, rel=0.05)


def test_flat_iq_imbalance_is_identity():
    imp = Impairment.from_dict({"kind": "iq_imbalance", "gain_db": 0, "phase_deg": 0})
    assert np.allclose(apply_impairment(QPSK, imp), QPSK)


def test_impairment_bounds():
    with pytest.raises(ConfigError):
        Impairment.from_dict({"kind": "cfo", "cfo": 4.0})
    with pytest.raises(ConfigError):
        Impairment.from_dict({"kind": "iq_imbalance", "gain_db": 7})
    with pytest.raises(ConfigError):
        Impairment.from_dict({"kind": "interference", "power": -1})
    with pytest.raises(ConfigError):
        Impairment.from_dict({"kind": "cfo", "power": 1})


# ----------------------------------------------------------------------- space
def test_space_validation():
    with pytest.raises(ConfigError):
        ParameterSpace.from_list([{"name": "x", "kind": "continuous", "lo": 1, "hi": 1}])
    with pytest.raises(ConfigError):
        ParameterSpace.from_list([{"name": "c", "kind": "categorical", "values": []}])
    with pytest.raises(ConfigError):
        ParameterSpace.from_list([{"name": "x", "lo": 0, "hi": 1}, {"name": "x", "lo": 0, "hi": 1}])


def test_space_decoding():
    space = ParameterSpace.from_list(
        [
            {"name": "x", "kind": "continuous", "lo": 0, "hi": 1},
            {"name": "n", "kind": "integer", "lo": 1, "hi": 4},
            {"name": "c", "kind": "categorical", "values": ["QPSK", "16QAM"]},
        ]
    )
    assert space.decode([0.25, 2.6, 0.9]) == {"x": 0.25, "n": 3, "c": "16QAM"}
    assert space.decode([5.0, -3.0, -1.0]) == {"x": 1.0, "n": 1, "c": "QPSK"}
    assert list(space.encode({"x": 0.5, "n": 2, "c": "16QAM"})) == [0.5, 2.0, 1.0]


# ----------------------------------------------------------------- sensitivity
def linear_session(**extra):
    ai = {
        "method": "sensitivity",
        "op": "eval",
        "request": {"x1": 0.0, "x2": 0.5},
        "space": [
            {"name": "x1", "kind": "continuous", "lo": 0.0, "hi": 1.0},
            {"name": "x2", "kind": "continuous", "lo": 0.0, "hi": 1.0},
        ],
        "baseline": {"x1": 0.0, "x2": 0.5},
        "levels": {"x1": [0.0, 0.25, 0.5, 0.75, 1.0], "x2": [0.0, 0.5, 1.0]},
        "score": "score",
    }
    ai.update(extra)
    return ai


def test_sensitivity_linear_and_inert():
    transport = score_transport(lambda r: 2 * r["x1"] + 0 * r["x2"])
    trace = run_session(linear_session(), transport, seed=1)
    indices = trace.summary["indices"]
    assert abs(indices["x1"] - 2.0) < 1e-9
    assert indices["x2"] == 0.0
    # baseline taken from the sweep
    assert len(trace.iterations) == 8 == trace.budget
    assert trace.summary["curves"]["x1"][-1] == [1.0, 2.0]


def test_sensitivity_extra_baseline_query():
    transport = score_transport(lambda r: 2 * r["x1"])
    trace = run_session(linear_session(levels={"x1": [1.0], "x2": [1.0]}), transport, seed=1)
    assert len(trace.iterations) == 3
    assert trace.budget == 3
    assert trace.iterations[-1]["dimension"] is None
    assert trace.summary["indices"] == {"x1": 2.0, "x2": 0.0}


def test_sensitivity_empty_levels():
    transport = score_transport(lambda r: r["x1"])
    trace = run_session(linear_session(levels={"x1": [0.0, 1.0]}), transport, seed=1)
    assert trace.summary["indices"]["x2"] == 0.0
    assert trace.summary["curves"]["x2"] == []


def test_sensitivity_on_scheduler_matches_direct_evaluation(example_dir):
    ai = ai_sessions(example_dir, "ai_methods.test.yaml")[0]
    trace = run_session(ai, sut_transport(), seed=3)

    def qos(demands):
        request = SchedulerRequest(ue_demands=demands, priorities=[1.0, 1.0], capacity=4, tti_count=1)
        return schedule(request).qos_score

    base = qos([2, 2])
    assert trace.summary["indices"]["ue_demands.0"] == max(abs(qos([d, 2]) - base) for d in range(1, 5))
    assert trace.summary["indices"]["ue_demands.1"] == max(abs(qos([2, d]) - base) for d in range(1, 5))
    assert len(trace.iterations) == 8


def test_sensitivity_level_out_of_bounds():
    with pytest.raises(ConfigError):
        run_session(linear_session(levels={"x1": [2.0]}), score_transport(lambda r: 0.0), seed=1)


def test_oracle_failure_keeps_partial_trace():
    calls = []

    def flaky(op, request):
        calls.append(request)
        if len(calls) == 3:
            raise SchemaError("SUT went away")
        return {"score": request["x1"]}

    with pytest.raises(OracleError) as info:
        run_session(linear_session(), flaky, seed=1)
    trace = info.value.trace
    assert not trace.complete
    assert len(trace.iterations) == 2
    assert "SUT went away" in trace.error


# ---------------------------------------------------------------------- fuzz
def x_session(**extra):
    ai = {
        "method": "fuzz",
        "op": "eval",
        "request": {"x": 0.0},
        "space": [{"name": "x", "kind": "continuous", "lo": 0.0, "hi": 1.0}],
        "fitness": {"score": "score", "target": 0.5},
        "budget": 500,
    }
    ai.update(extra)
    return ai


def test_fuzz_finds_target():
    trace = run_session(x_session(), score_transport(lambda r: r["x"]), seed=11)
    grid = np.linspace(0, 1, 10_000)
    grid_best = grid[np.argmin(np.abs(grid - 0.5))]
    assert abs(trace.summary["best"]["x"] - grid_best) < 0.02
    assert len(trace.iterations) <= 500


def test_fuzz_elitism_is_monotone_and_budget_honest():
    for seed in range(5):
        trace = run_session(
            x_session(budget=137, ga={"pop_size": 10, "elitism": 2}),
            score_transport(lambda r: math.sin(7 * r["x"])),
            seed=seed,
        )
        history = trace.summary["history"]
        assert all(a <= b for a, b in zip(history, history[1:]))
        assert len(trace.iterations) <= 137
        # 10 + 8 per later generation
        assert len(trace.iterations) == 10 + 8 * (trace.summary["generations"] - 1)
        assert len(trace.summary["populations"]) == trace.summary["generations"]


def test_degenerate_ga_never_changes():
    ai = x_session(budget=100, ga={"mutation_rate": 0.0, "initial": [{"x": 0.3}]})
    trace = run_session(ai, score_transport(lambda r: r["x"]), seed=2)
    history = trace.summary["history"]
    assert history == [pytest.approx(-0.2)] * len(history)
    for population in trace.summary["populations"]:
        assert all(p == {"x": 0.3} for p in population)


def test_infeasible_ga_params():
    space = ParameterSpace.from_list([{"name": "x", "lo": 0, "hi": 1}])
    with pytest.raises(ConfigError):
        GaParams(pop_size=1)
    with pytest.raises(ConfigError):
        GaParams(mutation_rate=1.5)
    trace = open_trace("fuzz", 0, space, 10)
    recorder = TraceRecorder(trace, lambda p: {"score": 0.0}, ScoreSpec("score"))
    with pytest.raises(ConfigError):
        fuzz_genetic(space, FitnessSpec(), 10, GaParams(pop_size=20), recorder, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        run_session(x_session(ga={"crossover": 0.5}), score_transport(lambda r: 0.0), seed=0)


def test_fuzz_is_seed_deterministic():
    transport = score_transport(lambda r: r["x"] ** 2)
    a = run_session(x_session(budget=120), transport, seed=5)
    b = run_session(x_session(budget=120), transport, seed=5)
    c = run_session(x_session(budget=120), transport, seed=6)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_ga_locates_cfo_error_onset(example_dir):
    ai = ai_sessions(example_dir, "cfo_fuzz.test.yaml")[0]
    request = ai["request"]

    def ser(theta):
        impairment = dict(request["impairment"], cfo=float(theta))
        return demodulate(DemodRequest(**dict(request, impairment=impairment))).symbol_error_rate

    sweep = np.linspace(0, math.pi / 2, 1000)
    sweep_best = sweep[int(np.argmin([abs(ser(t) - 0.5) for t in sweep]))]
    assert abs(sweep_best - math.pi / 4) < 0.05

    transport = sut_transport()
    hits = 0
    for seed in range(20):
        trace = run_session(ai, transport, seed=seed)
        assert len(trace.iterations) <= 500
        if abs(trace.summary["best"]["impairment.cfo"] - sweep_best) < 0.05:
            hits += 1
    assert hits >= 19


# --------------------------------------------------------------- adversarial
def adversarial_session(constellation, index, bound, **extra):
    ai = {
        "method": "adversarial",
        "constellation": constellation,
        "symbol_index": index,
        "norm_bound": bound,
        "budget": 200,
    }
    ai.update(extra)
    return ai


def half_min_distance(points):
    return min(abs(a - b) for a, b in itertools.combinations(points, 2)) / 2


def decide(constellation, symbol):
    request = DemodRequest(
        constellation=constellation, symbols=[[symbol.real, symbol.imag]], true_indices=[0]
    )
    return demodulate(request).decided_indices[0]


def test_adversarial_soundness(rng):
    transport = sut_transport()
    found = 0
    for case in range(100):
        constellation = str(rng.choice(["QPSK", "16QAM"]))
        points = CONSTELLATIONS[constellation]
        index = int(rng.integers(len(points)))
        bound = float(rng.uniform(0.05, 1.5))
        trace = run_session(adversarial_session(constellation, index, bound), transport, seed=case)
        assert len(trace.iterations) <= 200
        summary = trace.summary
        if summary["status"] != "FOUND":
            continue
        found += 1
        delta = complex(*summary["perturbation"])
        assert abs(delta) <= bound
        assert abs(delta) >= half_min_distance(points) - 1e-9
        assert decide(constellation, points[index] + delta) != decide(constellation, points[index])
        assert trace.iterations[-1]["phase"] == "verify"
    assert found > 0


def test_adversarial_below_threshold_never_found(rng):
    transport = sut_transport()
    for case in range(100):
        constellation = str(rng.choice(["QPSK", "16QAM"]))
        points = CONSTELLATIONS[constellation]
        bound = float(rng.uniform(0.01, 0.99)) * half_min_distance(points)
        ai = adversarial_session(
            constellation,
            int(rng.integers(len(points))),
            bound,
            budget=60,
            impairments=[{"kind": "cfo", "mode": "block", "cfo": 0.9}],
        )
        assert run_session(ai, transport, seed=case).summary["status"] == "NOT_FOUND"


def test_adversarial_qpsk_geometric_minimum(example_dir):
    ai = ai_sessions(example_dir, "ai_methods.test.yaml")[1]
    trace = run_session(ai, sut_transport(), seed=4)
    assert trace.summary["status"] == "FOUND"
    assert trace.summary["magnitude"] >= 1 / math.sqrt(2) - 1e-9
    assert trace.summary["magnitude"] <= 1.0


def test_adversarial_zero_budget():
    trace = run_session(adversarial_session("QPSK", 0, 1.0, budget=0), sut_transport(), seed=0)
    assert trace.summary["status"] == "NOT_FOUND"
    assert trace.iterations == []


# ------------------------------------------------------------------------ rl
def chain_recorder(mdp, budget):
    trace = open_trace("rl", 0, [], budget)
    oracle = table_oracle(mdp.reward_table(), lambda p: (p["state"], p["action"]))
    return TraceRecorder(trace, oracle, ScoreSpec("reward"))


def test_value_iteration_on_chain():
    values, policy = value_iteration(two_state_chain(), gamma=0.9)
    assert policy == [1, 0]
    assert values[1] == pytest.approx(10.0)
    assert values[0] == pytest.approx(9.0)


def test_q_learning_matches_value_iteration_on_chain():
    mdp = two_state_chain()
    params = QParams(alpha=0.5, gamma=0.9, episodes=300)
    recorder = chain_recorder(mdp, 3000)
    result = rl_explore(mdp, params, recorder, np.random.default_rng(9))
    _, policy = value_iteration(mdp, gamma=0.9)
    assert result.greedy_policy() == policy
    assert len(recorder.trace.iterations) == 3000


def test_no_exploration_follows_tie_break():
    mdp = two_state_chain()
    params = QParams(episodes=1, epsilon=EpsilonSchedule.constant(0.0))
    recorder = chain_recorder(mdp, 10)
    rl_explore(mdp, params, recorder, np.random.default_rng(0))
    first = recorder.trace.iterations
    assert [it["action"] for it in first] == [0] * 10
    assert [it["state"] for it in first] == [0] * 10


def test_rl_finds_scheduler_worst_case(example_dir):
    ai = ai_sessions(example_dir, "ai_methods.test.yaml")[2]
    trace = run_session(ai, sut_transport(), seed=21)

    exhaustive = min(
        schedule(SchedulerRequest(ue_demands=list(d), priorities=[1.0, 1.0], capacity=4, tti_count=1)).qos_score
        for d in itertools.product(range(1, 5), repeat=2)
    )
    assert exhaustive == 0.5
    assert trace.summary["worst_score"] <= exhaustive * 1.05
    assert len(trace.iterations) == 300 * 6 == trace.budget
    assert all(it["reward"] == -it["score"] for it in trace.iterations)


def test_rl_session_is_reproducible(example_dir):
    ai = dict(ai_sessions(example_dir, "ai_methods.test.yaml")[2], episodes=20)
    transport = sut_transport()
    assert run_session(ai, transport, seed=1).digest() == run_session(ai, transport, seed=1).digest()


def test_rl_rejects_empty_spaces():
    with pytest.raises(ConfigError):
        TabularMdp(next_state=[], rewards=[])
    with pytest.raises(ConfigError):
        run_session({"method": "rl", "env": "maze"}, sut_transport(), seed=0)


def test_request_oracle_rejects_bad_path():
    oracle = request_oracle(score_transport(lambda r: 0.0), "eval", {"xs": [1]})
    with pytest.raises(OracleError):
        oracle({"xs.4": 2})


def test_unknown_method_and_parameter():
    with pytest.raises(ConfigError):
        run_session({"method": "annealing"}, sut_transport(), seed=0)
    with pytest.raises(ConfigError):
        run_session(dict(linear_session(), colour="red"), sut_transport(), seed=0)
