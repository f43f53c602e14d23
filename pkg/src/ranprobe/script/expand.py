import logging

from ..exceptions import ExpansionError
from ..utils import digest
from .integrity import validate_integrity
from .model import ExecutionPlan, PlanStep, TestScript

logger = logging.getLogger(__name__)


def _flatten(script, action, inherited_actor, prefix, out, action_index):
    """Depth first walk of one action, appending atomic steps to out"""
    binding = action.actor_binding if action.actor_binding is not None else inherited_actor
    path = f"{prefix}/{action.name}" if prefix else action.name
    definition = script.definition(action.name)
    if definition is None:
        out.append(
            PlanStep(
                index=len(out),
                action_index=action_index,
                keyword=action.name,
                params=dict(action.params),
                actor_binding=binding,
                path=path,
            )
        )
        return
    for step in definition.steps:
        _flatten(script, step, binding, path, out, action_index)


def expand(script: TestScript) -> ExecutionPlan:
    """Flatten the running actions of a script into the ordered list of atomic
    steps the server dispatches.

    Composites are expanded in place, depth first. A binding on a composite
    reference is inherited by every step below it that has no binding of its
    own."""
    report = validate_integrity(script)
    if not report.ok:
        raise ExpansionError(report.errors)

    steps = []
    for action_index, action in enumerate(script.actions):
        _flatten(script, action, None, "", steps, action_index)
    logger.debug(f"Expanded {len(script.actions)} actions into {len(steps)} steps")
    return ExecutionPlan(tuple(steps))


def plan_digest(plan: ExecutionPlan) -> str:
    return digest(plan.to_list())
