"""The fixed registry of builtin keywords a test script may use.

Anything else a script names must be a composite from its `definitions`."""

from dataclasses import dataclass, field
from typing import Callable, Dict, List

AI_METHODS = ("sensitivity", "fuzz", "adversarial", "rl")
IMPAIRMENT_KINDS = ("none", "cfo", "iq_imbalance", "interference")
TRAFFIC_KINDS = ("prb", "symbols")
CONSTELLATIONS = ("QPSK", "16QAM")


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


TYPE_CHECKS = {
    "int": _is_int,
    "number": _is_number,
    "str": lambda v: isinstance(v, str),
    "bool": lambda v: isinstance(v, bool),
    "map": lambda v: isinstance(v, dict),
}


@dataclass(frozen=True)
class KeywordSpec:
    name: str
    required: Dict[str, str] = field(default_factory=dict)
    optional: Dict[str, str] = field(default_factory=dict)
    touches_sut: bool = True
    # Extra semantic checks; returns a list of problems
    check: Callable[[Dict], List[str]] = lambda params: []

    def problems(self, params) -> List[tuple]:
        """(code, reason) pairs for params that do not fit this keyword"""
        found = []
        for name, kind in self.required.items():
            if name not in params:
                found.append(("MISSING_PARAM", f"'{self.name}' requires param '{name}'"))
            elif not TYPE_CHECKS[kind](params[name]):
                found.append(("BAD_PARAM", f"'{self.name}' param '{name}' must be {kind}"))
        for name, value in params.items():
            if name in self.required:
                continue
            if name not in self.optional:
                found.append(("UNKNOWN_PARAM", f"'{self.name}' has no param '{name}'"))
            elif not TYPE_CHECKS[self.optional[name]](value):
                found.append(
                    ("BAD_PARAM", f"'{self.name}' param '{name}' must be {self.optional[name]}")
                )
        if not found:
            found.extend(("BAD_PARAM", reason) for reason in self.check(params))
        return found


def _check_sleep(params):
    return ["'sleep' needs ms >= 0"] if params["ms"] < 0 else []


def _check_traffic(params):
    kind = params.get("kind", "prb")
    if kind not in TRAFFIC_KINDS:
        return [f"send_traffic kind must be one of {', '.join(TRAFFIC_KINDS)}"]
    if kind == "prb":
        if "demand" not in params:
            return ["send_traffic of kind 'prb' needs 'demand'"]
        if params["demand"] < 1:
            return ["send_traffic demand must be a positive PRB count"]
    else:
        if params.get("count", 0) < 1:
            return ["send_traffic of kind 'symbols' needs count >= 1"]
        if params.get("constellation", "QPSK") not in CONSTELLATIONS:
            return [f"constellation must be one of {', '.join(CONSTELLATIONS)}"]
    return []


def _check_await(params):
    problems = []
    if params["capacity"] < 1:
        problems.append("await_response capacity must be >= 1")
    if params["tti_count"] < 1:
        problems.append("await_response tti_count must be >= 1")
    return problems


def _check_impairment(params):
    if params["kind"] not in IMPAIRMENT_KINDS:
        return [f"set_impairment kind must be one of {', '.join(IMPAIRMENT_KINDS)}"]
    return []


BUILTINS: Dict[str, KeywordSpec] = {
    spec.name: spec
    for spec in [
        KeywordSpec(
            "attach_request",
            required={"ue": "str"},
            optional={"cell": "str", "priority": "number"},
        ),
        KeywordSpec("detach"),
        KeywordSpec(
            "send_traffic",
            optional={
                "kind": "str",
                "demand": "int",
                "constellation": "str",
                "count": "int",
                "noise_std": "number",
                "seed": "int",
                "max_ser": "number",
            },
            check=_check_traffic,
        ),
        KeywordSpec(
            "await_response",
            required={"capacity": "int", "tti_count": "int"},
            optional={"min_qos": "number"},
            check=_check_await,
        ),
        KeywordSpec(
            "set_impairment",
            required={"kind": "str"},
            optional={
                "cfo": "number",
                "mode": "str",
                "gain_db": "number",
                "phase_deg": "number",
                "power": "number",
                "tail": "str",
            },
            check=_check_impairment,
        ),
        KeywordSpec(
            "query_kpi",
            optional={"max_loss": "number", "min_throughput": "number", "max_latency": "number"},
        ),
        KeywordSpec("run_ai_session", required={"ai": "map"}),
        KeywordSpec("sleep", required={"ms": "int"}, touches_sut=False, check=_check_sleep),
    ]
}


def is_builtin(name) -> bool:
    return name in BUILTINS
