import logging

from pydantic import ValidationError

from ..config import dump_document, load_document
from ..exceptions import SchemaError
from .model import (
    ActorEntry,
    CompositeDef,
    ConfigDoc,
    ScriptDoc,
    TestAction,
    TestConfig,
    TestScript,
)

logger = logging.getLogger(__name__)


def format_validation_errors(err: ValidationError):
    """One line per pydantic error, naming the field path and offending input"""
    lines = []
    for error in err.errors():
        loc = ".".join(str(part) for part in error["loc"]) or "<document>"
        message = error["msg"].replace("\n", " ")
        if error["type"] == "missing":
            lines.append(f"field '{loc}' is required")
        elif error["type"] == "extra_forbidden":
            lines.append(f"field '{loc}' is not allowed")
        else:
            lines.append(f"field '{loc}' had value '{error.get('input')}' Message: '{message}'")
    return lines


def _load_mapping(text, source, what):
    data = load_document(text, source=source)
    if data is None:
        raise SchemaError(f"{what} '{source}' is empty", ["field 'schema' is required"])
    if not isinstance(data, dict):
        raise SchemaError(f"{what} '{source}' must be a mapping at the top level")
    return data


def _action(doc) -> TestAction:
    return TestAction(
        name=doc.name, kind=doc.kind, params=dict(doc.params), actor_binding=doc.actor
    )


def parse_script(text, source="<script>") -> TestScript:
    """Parse a .test.yaml document into a TestScript.

    Only the document's shape is checked here; whether keywords resolve and
    composites are acyclic is validate_integrity's job."""
    data = _load_mapping(text, source, "Test script")
    try:
        doc = ScriptDoc.model_validate(data)
    except ValidationError as e:
        raise SchemaError(
            f"Test script '{source}' does not match the schema", format_validation_errors(e)
        )

    return TestScript(
        mode=doc.mode,
        metadata=dict(doc.metadata),
        definitions=tuple(
            CompositeDef(name=d.name, steps=tuple(_action(s) for s in d.steps))
            for d in doc.definitions
        ),
        actions=tuple(_action(a) for a in doc.actions),
    )


def parse_config(text, source="<config>") -> TestConfig:
    data = _load_mapping(text, source, "Test configuration")
    try:
        doc = ConfigDoc.model_validate(data)
    except ValidationError as e:
        raise SchemaError(
            f"Test configuration '{source}' does not match the schema",
            format_validation_errors(e),
        )

    return TestConfig(
        actors=tuple(ActorEntry(id=a.id, address=a.address) for a in doc.actors),
        sut_endpoint=doc.sut_endpoint,
        run_seed=doc.run_seed,
        action_timeout=doc.action_timeout,
        max_parallel_runs=doc.max_parallel_runs,
        setup_timeout=doc.setup_timeout,
    )


def serialize_script(script: TestScript) -> str:
    return dump_document(script.to_document())


def serialize_config(config: TestConfig) -> str:
    return dump_document(config.to_document())
