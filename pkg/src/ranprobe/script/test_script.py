import pytest

from ranprobe.exceptions import ExpansionError, SchemaError, ScriptSyntaxError
from ranprobe.script import (
    ActionKind,
    CompositeDef,
    Mode,
    TestAction,
    TestScript,
    expand,
    parse_config,
    parse_script,
    plan_digest,
    serialize_config,
    serialize_script,
    validate_document,
    validate_integrity,
)

ATTACH_ONLY = """
schema: 1
mode: SIM
actions:
  - name: attach_request
    kind: running
    params:
      ue: ue1
"""

CONFIG = """
schema: 1
actors:
  - id: a1
    address: 127.0.0.1:7101
  - id: a2
    address: 127.0.0.1:7102
sut_endpoint: 127.0.0.1:7300
run_seed: 42
action_timeout: 5
"""


def running(name, **params):
    return TestAction(name=name, kind=ActionKind.RUNNING, params=params)


def atomic(name, **params):
    return TestAction(name=name, kind=ActionKind.ATOMIC, params=params)


def test_parse_single_running_action():
    script = parse_script(ATTACH_ONLY)
    assert script.mode == Mode.SIM
    assert len(script.actions) == 1
    assert script.actions[0].name == "attach_request"
    assert script.actions[0].kind == ActionKind.RUNNING
    assert script.actions[0].params == {"ue": "ue1"}


def test_parse_empty_document():
    with pytest.raises(SchemaError):
        parse_script("")


def test_parse_sdr_mode_succeeds():
    script = parse_script(ATTACH_ONLY.replace("mode: SIM", "mode: SDR"))
    assert script.mode == Mode.SDR
    report = validate_integrity(script)
    assert report.ok
    assert "SDR_MODE" in report.codes()


def test_parse_rejects_unknown_field():
    with pytest.raises(SchemaError) as e:
        parse_script(ATTACH_ONLY + "extra: 1\n")
    assert any("extra" in line for line in e.value.errors)


def test_parse_rejects_bad_enum():
    with pytest.raises(SchemaError):
        parse_script(ATTACH_ONLY.replace("kind: running", "kind: sometimes"))


def test_parse_rejects_structured_params_outside_ai():
    text = ATTACH_ONLY.replace("ue: ue1", "ue:\n        nested: 1")
    with pytest.raises(SchemaError):
        parse_script(text)


def test_malformed_yaml_reports_position():
    with pytest.raises(ScriptSyntaxError) as e:
        parse_script("schema: 1\nmode: [SIM\n")
    assert e.value.lnum is not None


def test_duplicate_keys_rejected():
    with pytest.raises(ScriptSyntaxError):
        parse_script("schema: 1\nschema: 1\nmode: SIM\nactions: []\n")


def test_script_round_trip(scheduler_script_text, example_dir):
    for path in sorted(example_dir.glob("*.test.yaml")):
        first = parse_script(path.read_text(), source=str(path))
        assert parse_script(serialize_script(first)) == first


def test_config_round_trip():
    config = parse_config(CONFIG)
    assert parse_config(serialize_config(config)) == config


def test_parse_config_two_actors():
    config = parse_config(CONFIG)
    assert config.actor_ids == ["a1", "a2"]
    assert config.run_seed == 42
    assert config.max_parallel_runs == 1


def test_config_duplicate_actor_id():
    with pytest.raises(SchemaError):
        parse_config(CONFIG.replace("id: a2", "id: a1"))


def test_config_zero_timeout():
    with pytest.raises(SchemaError):
        parse_config(CONFIG.replace("action_timeout: 5", "action_timeout: 0"))


def test_config_requires_seed():
    with pytest.raises(SchemaError):
        parse_config(CONFIG.replace("run_seed: 42\n", ""))


def test_undefined_composite_is_one_error():
    script = TestScript(mode=Mode.SIM, actions=(running("setup_ran"),))
    report = validate_integrity(script)
    assert len(report.errors) == 1
    assert report.errors[0].code == "UNKNOWN_KEYWORD"
    assert report.errors[0].action_index == 0


def test_self_referencing_composite_is_one_error():
    script = TestScript(
        mode=Mode.SIM,
        definitions=(CompositeDef("a", (atomic("a"),)),),
        actions=(running("a"),),
    )
    report = validate_integrity(script)
    assert [f.code for f in report.errors] == ["COMPOSITE_CYCLE"]


def test_atomic_at_top_level_rejected():
    script = TestScript(mode=Mode.SIM, actions=(atomic("detach"),))
    assert validate_integrity(script).codes() == ["ATOMIC_AT_TOP_LEVEL"]


def test_composite_reference_takes_no_params():
    script = TestScript(
        mode=Mode.SIM,
        definitions=(CompositeDef("bye", (atomic("detach"),)),),
        actions=(running("bye", force=True),),
    )
    assert "BAD_PARAM" in validate_integrity(script).codes()


def test_unknown_param_and_missing_param():
    script = TestScript(
        mode=Mode.SIM,
        actions=(running("await_response", capacity=4, colour="red"),),
    )
    codes = validate_integrity(script).codes()
    assert "MISSING_PARAM" in codes
    assert "UNKNOWN_PARAM" in codes


def test_bad_ai_method():
    script = TestScript(
        mode=Mode.SIM,
        actions=(running("run_ai_session", ai={"method": "telepathy"}),),
    )
    assert validate_integrity(script).codes() == ["BAD_AI_METHOD"]


def test_shipped_scripts_validate(example_dir):
    for path in sorted(example_dir.glob("*.test.yaml")):
        report = validate_document(path.read_text(), source=str(path))
        assert report.errors == [], f"{path.name}: {[str(f) for f in report.errors]}"


EXPECTED_INVALID = {
    "anchors.test.yaml": "SYNTAX_ERROR",
    "atomic_top_level.test.yaml": "ATOMIC_AT_TOP_LEVEL",
    "bad_mode.test.yaml": "SCHEMA_ERROR",
    "composite_cycle.test.yaml": "COMPOSITE_CYCLE",
    "missing_actions.test.yaml": "SCHEMA_ERROR",
    "missing_param.test.yaml": "MISSING_PARAM",
    "unknown_keyword.test.yaml": "UNKNOWN_KEYWORD",
}


def test_invalid_corpus(example_dir):
    paths = sorted((example_dir / "invalid").glob("*.test.yaml"))
    assert {p.name for p in paths} == set(EXPECTED_INVALID)
    for path in paths:
        report = validate_document(path.read_text(), source=str(path))
        assert len(report.errors) >= 1, path.name
        assert EXPECTED_INVALID[path.name] in report.codes(), path.name


def test_expand_identity():
    script = TestScript(
        mode=Mode.SIM,
        actions=(running("attach_request", ue="u"), running("detach")),
    )
    plan = expand(script)
    assert [s.keyword for s in plan] == ["attach_request", "detach"]
    assert [s.action_index for s in plan] == [0, 1]
    assert [s.index for s in plan] == [0, 1]


def test_expand_composite_tags_action_index():
    script = TestScript(
        mode=Mode.SIM,
        definitions=(
            CompositeDef(
                "setup_ran",
                (atomic("attach_request", ue="u"), atomic("send_traffic", demand=2), atomic("sleep", ms=1)),
            ),
        ),
        actions=(running("setup_ran"),),
    )
    plan = expand(script)
    assert len(plan) == 3
    assert {s.action_index for s in plan} == {0}
    assert plan[1].path == "setup_ran/send_traffic"


def test_expand_binding_inheritance():
    script = TestScript(
        mode=Mode.SIM,
        definitions=(
            CompositeDef(
                "pair",
                (
                    atomic("detach"),
                    TestAction("detach", ActionKind.ATOMIC, {}, actor_binding="a2"),
                ),
            ),
        ),
        actions=(TestAction("pair", ActionKind.RUNNING, {}, actor_binding="a1"),),
    )
    assert [s.actor_binding for s in expand(script)] == ["a1", "a2"]


def test_expand_invalid_script_raises():
    script = TestScript(mode=Mode.SIM, actions=(running("setup_ran"),))
    with pytest.raises(ExpansionError):
        expand(script)


def test_scheduler_example_plan(scheduler_script_text):
    plan = expand(parse_script(scheduler_script_text))
    assert len(plan) == 9
    assert [s.actor_binding for s in plan] == ["a1", "a2", "a1", "a2", "a1", "a1", "a2", "a1", "a2"]


def _reference_count(definitions, name):
    if name not in definitions:
        return 1
    return sum(_reference_count(definitions, child) for child in definitions[name])


def _reference_order(definitions, name):
    if name not in definitions:
        return [name]
    out = []
    for child in definitions[name]:
        out.extend(_reference_order(definitions, child))
    return out


def test_expand_random_acyclic_graphs(rng):
    """Nested composites flatten depth first, with the same length and order a
    straightforward recursive expander gives"""
    for _ in range(200):
        n = int(rng.integers(1, 6))
        names = [f"c{i}" for i in range(n)]
        definitions = {}
        for i, name in enumerate(names):
            # only reference later definitions, so the graph stays acyclic
            children = []
            for _ in range(int(rng.integers(1, 4))):
                if i + 1 < n and rng.random() < 0.5:
                    children.append(names[int(rng.integers(i + 1, n))])
                else:
                    children.append("detach")
            definitions[name] = children
        top = [names[int(rng.integers(0, n))] for _ in range(int(rng.integers(1, 4)))]
        script = TestScript(
            mode=Mode.SIM,
            definitions=tuple(
                CompositeDef(name, tuple(atomic(c) for c in children))
                for name, children in definitions.items()
            ),
            actions=tuple(running(t) for t in top),
        )
        plan = expand(script)
        assert len(plan) == sum(_reference_count(definitions, t) for t in top)
        expected = [k for t in top for k in _reference_order(definitions, t)]
        assert [s.keyword for s in plan] == expected
        assert plan_digest(plan) == plan_digest(expand(script))
