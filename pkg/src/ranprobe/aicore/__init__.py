"""AI test-generation methods. Sessions are started through
`ranprobe.aicore.session.run_session`."""

from .adversarial import NOT_FOUND, AdvResult, adversarial_perturb
from .fuzz import FitnessSpec, FuzzResult, GaParams, fuzz_genetic
from .impairment import Impairment, ImpairmentKind, apply_impairment
from .oracle import ScoreSpec, local_transport, request_oracle, table_oracle
from .rl import (
    EpsilonSchedule,
    QParams,
    RlResult,
    SchedulerEnv,
    TabularMdp,
    rl_explore,
    two_state_chain,
    value_iteration,
)
from .sensitivity import SensitivityResult, sensitivity_analysis
from .space import DimKind, Dimension, ParameterSpace
from .trace import ExplorationTrace, Method, TraceRecorder, close_trace, open_trace

__all__ = [
    "AdvResult",
    "DimKind",
    "Dimension",
    "EpsilonSchedule",
    "ExplorationTrace",
    "FitnessSpec",
    "FuzzResult",
    "GaParams",
    "Impairment",
    "ImpairmentKind",
    "Method",
    "NOT_FOUND",
    "ParameterSpace",
    "QParams",
    "RlResult",
    "SchedulerEnv",
    "ScoreSpec",
    "SensitivityResult",
    "TabularMdp",
    "TraceRecorder",
    "adversarial_perturb",
    "apply_impairment",
    "close_trace",
    "fuzz_genetic",
    "local_transport",
    "open_trace",
    "request_oracle",
    "rl_explore",
    "sensitivity_analysis",
    "table_oracle",
    "two_state_chain",
    "value_iteration",
]
