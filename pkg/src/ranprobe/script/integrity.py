"""Integrity check of a parsed test script: are all the elements a run needs
present, and does every keyword resolve?"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

from ..exceptions import SchemaError, ScriptSyntaxError
from .keywords import AI_METHODS, BUILTINS, is_builtin
from .model import AI_PARAM_KEY, ActionKind, Mode, OnError, TestConfig, TestScript
from .parser import parse_script


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    code: str
    severity: Severity
    reason: str
    action_index: Optional[int] = None
    path: str = ""

    def __str__(self):
        where = f"actions[{self.action_index}]" if self.action_index is not None else self.path
        return f"{self.severity.value.upper()} {self.code} {where}: {self.reason}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple

    @property
    def errors(self) -> List[Finding]:
        return [f for f in self.findings if f.severity == Severity.ERROR]

    @property
    def warnings(self) -> List[Finding]:
        return [f for f in self.findings if f.severity == Severity.WARNING]

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self):
        return [f.code for f in self.findings]


def _find_cycles(script: TestScript):
    """Each distinct cycle in the composite reference graph, as the ordered list
    of definition names starting from its lexically smallest member"""
    graph = {}
    for d in script.definitions:
        graph.setdefault(d.name, [])
        for step in d.steps:
            if script.definition(step.name) is not None:
                graph[d.name].append(step.name)

    cycles = {}
    WHITE, GREY, BLACK = 0, 1, 2
    color = {name: WHITE for name in graph}

    def visit(node, stack):
        color[node] = GREY
        stack.append(node)
        for nxt in graph[node]:
            if color[nxt] == GREY:
                cycle = stack[stack.index(nxt):]
                start = cycle.index(min(cycle))
                canonical = tuple(cycle[start:] + cycle[:start])
                cycles.setdefault(canonical, None)
            elif color[nxt] == WHITE:
                visit(nxt, stack)
        stack.pop()
        color[node] = BLACK

    for name in graph:
        if color[name] == WHITE:
            visit(name, [])
    return list(cycles)


def _check_action(script, action, where, findings, action_index=None, top_level=False):
    def add(code, reason):
        findings.append(
            Finding(code, Severity.ERROR, reason, action_index=action_index, path=where)
        )

    if top_level and action.kind == ActionKind.ATOMIC:
        add(
            "ATOMIC_AT_TOP_LEVEL",
            f"'{action.name}' is atomic; top level actions must be running "
            "(atomic actions belong inside definitions)",
        )
    if not top_level and action.kind == ActionKind.RUNNING:
        add("RUNNING_IN_COMPOSITE", f"'{action.name}' inside a composite must be atomic")

    if is_builtin(action.name):
        for code, reason in BUILTINS[action.name].problems(action.params):
            add(code, reason)
        if AI_PARAM_KEY in action.params and action.name != "run_ai_session":
            add("AI_PARAMS_MISPLACED", f"'{AI_PARAM_KEY}' is only valid for run_ai_session")
        if action.name == "run_ai_session" and isinstance(action.params.get("ai"), dict):
            method = action.params["ai"].get("method")
            if method not in AI_METHODS:
                add(
                    "BAD_AI_METHOD",
                    f"run_ai_session ai.method must be one of {', '.join(AI_METHODS)}, "
                    f"not {method!r}",
                )
    elif script.definition(action.name) is not None:
        if action.params:
            add("BAD_PARAM", f"composite reference '{action.name}' takes no params")
    else:
        add("UNKNOWN_KEYWORD", f"'{action.name}' is neither a builtin keyword nor a definition")


def validate_integrity(script: TestScript) -> ValidationReport:
    findings = []

    if script.mode == Mode.SDR:
        findings.append(
            Finding(
                "SDR_MODE",
                Severity.WARNING,
                "SDR mode parses but no SDR adapter is available to run it",
                path="mode",
            )
        )
    on_error = script.metadata.get("on_error", OnError.HALT.value)
    if on_error not in {o.value for o in OnError}:
        findings.append(
            Finding(
                "BAD_ON_ERROR",
                Severity.ERROR,
                f"metadata.on_error must be 'halt' or 'continue', not '{on_error}'",
                path="metadata.on_error",
            )
        )

    seen = set()
    for d_index, definition in enumerate(script.definitions):
        where = f"definitions[{d_index}]"
        if definition.name in seen:
            findings.append(
                Finding(
                    "DUPLICATE_DEFINITION",
                    Severity.ERROR,
                    f"'{definition.name}' is defined more than once",
                    path=where,
                )
            )
        seen.add(definition.name)
        if is_builtin(definition.name):
            findings.append(
                Finding(
                    "SHADOWS_BUILTIN",
                    Severity.ERROR,
                    f"definition '{definition.name}' reuses a builtin keyword name",
                    path=where,
                )
            )
        if not definition.steps:
            findings.append(
                Finding(
                    "EMPTY_COMPOSITE",
                    Severity.ERROR,
                    f"definition '{definition.name}' has no steps",
                    path=where,
                )
            )
        for s_index, step in enumerate(definition.steps):
            _check_action(script, step, f"{where}.steps[{s_index}]", findings)

    for cycle in _find_cycles(script):
        findings.append(
            Finding(
                "COMPOSITE_CYCLE",
                Severity.ERROR,
                "composite definitions reference each other in a cycle: "
                + " -> ".join(cycle + (cycle[0],)),
                path="definitions",
            )
        )

    if not script.actions:
        findings.append(
            Finding("EMPTY_SCRIPT", Severity.ERROR, "script has no actions", path="actions")
        )

    referenced = set()
    for index, action in enumerate(script.actions):
        _check_action(
            script, action, f"actions[{index}]", findings, action_index=index, top_level=True
        )
        referenced.add(action.name)
    for definition in script.definitions:
        referenced.update(step.name for step in definition.steps)
    for d_index, definition in enumerate(script.definitions):
        if definition.name not in referenced:
            findings.append(
                Finding(
                    "UNUSED_DEFINITION",
                    Severity.WARNING,
                    f"definition '{definition.name}' is never used",
                    path=f"definitions[{d_index}]",
                )
            )

    return ValidationReport(tuple(findings))


def validate_document(text, source="<script>") -> ValidationReport:
    """Parse and check a script in one go, reporting parse failures as findings
    instead of raising. This is what offline validation runs."""
    try:
        script = parse_script(text, source=source)
    except ScriptSyntaxError as e:
        return ValidationReport(
            (Finding("SYNTAX_ERROR", Severity.ERROR, str(e), path=source),)
        )
    except SchemaError as e:
        reasons = e.errors or [str(e)]
        return ValidationReport(
            tuple(Finding("SCHEMA_ERROR", Severity.ERROR, r, path=source) for r in reasons)
        )
    return validate_integrity(script)


def validate_bindings(script: TestScript, config: TestConfig) -> List[str]:
    """Reasons a script's actor bindings do not fit a configuration"""
    known = set(config.actor_ids)
    reasons = []
    actions = list(script.actions) + [s for d in script.definitions for s in d.steps]
    for action in actions:
        if action.actor_binding is not None and action.actor_binding not in known:
            reasons.append(
                f"action '{action.name}' is bound to actor '{action.actor_binding}' "
                "which the configuration does not list"
            )
    if not known:
        reasons.append("configuration lists no actors")
    return reasons
