from .control import Server, control_call, serve
from .orchestrator import JournalEvent, Orchestrator
from .registry import LIVENESS_PERIODS, ActorDescriptor, ActorState, Registry
from .runs import Phase, PendingStep, RunIdFactory, RunState, new_run_id

__all__ = [
    "LIVENESS_PERIODS",
    "ActorDescriptor",
    "ActorState",
    "JournalEvent",
    "Orchestrator",
    "PendingStep",
    "Phase",
    "Registry",
    "RunIdFactory",
    "RunState",
    "Server",
    "control_call",
    "new_run_id",
    "serve",
]
