from .adapters import Adapter, SdrAdapter, SimAdapter
from .executor import KEYWORDS, RunScratch, StepContext, StepExecutor
from .health import HealthProbe, ProbeMode
from .rng import session_id, step_key, step_rng, step_seed
from .runtime import ActorRuntime, ActorRuntimeConfig, backoff_delays

__all__ = [
    "KEYWORDS",
    "ActorRuntime",
    "ActorRuntimeConfig",
    "Adapter",
    "HealthProbe",
    "ProbeMode",
    "RunScratch",
    "SdrAdapter",
    "SimAdapter",
    "StepContext",
    "StepExecutor",
    "backoff_delays",
    "session_id",
    "step_key",
    "step_rng",
    "step_seed",
]
