from .expand import expand, plan_digest
from .integrity import (
    Finding,
    Severity,
    ValidationReport,
    validate_bindings,
    validate_document,
    validate_integrity,
)
from .keywords import BUILTINS, is_builtin
from .model import (
    ActionKind,
    ActorEntry,
    CompositeDef,
    ExecutionPlan,
    Mode,
    OnError,
    PlanStep,
    TestAction,
    TestConfig,
    TestScript,
)
from .parser import parse_config, parse_script, serialize_config, serialize_script

__all__ = [
    "ActionKind",
    "ActorEntry",
    "BUILTINS",
    "CompositeDef",
    "ExecutionPlan",
    "Finding",
    "Mode",
    "OnError",
    "PlanStep",
    "Severity",
    "TestAction",
    "TestConfig",
    "TestScript",
    "ValidationReport",
    "expand",
    "is_builtin",
    "parse_config",
    "parse_script",
    "plan_digest",
    "serialize_config",
    "serialize_script",
    "validate_bindings",
    "validate_document",
    "validate_integrity",
]
