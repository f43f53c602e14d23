"""Domain types for test scripts, configurations and execution plans.

The document schema (what a YAML file may contain) is expressed with pydantic
models; the objects the rest of the framework passes around are frozen
dataclasses built from them."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StrictBool,
    StrictFloat,
    StrictInt,
    StrictStr,
    field_validator,
    model_validator,
)

from ..config import DEFAULT_SETUP_TIMEOUT, parse_endpoint

SCHEMA_VERSION = 1
MAX_SEED = 2**64 - 1

# Only key under which a structured (non scalar) parameter is allowed
AI_PARAM_KEY = "ai"

Scalar = Union[StrictBool, StrictInt, StrictFloat, StrictStr]


class Mode(str, Enum):
    SIM = "SIM"
    SDR = "SDR"


class ActionKind(str, Enum):
    ATOMIC = "atomic"
    RUNNING = "running"


class OnError(str, Enum):
    HALT = "halt"
    CONTINUE = "continue"


# ------------------------------------------------------------------ runtime
@dataclass(frozen=True)
class TestAction:
    name: str
    kind: ActionKind
    params: Dict = field(default_factory=dict)
    actor_binding: Optional[str] = None

    __test__ = False  # not a pytest class

    def to_document(self):
        doc = {"name": self.name, "kind": self.kind.value}
        if self.params:
            doc["params"] = dict(self.params)
        if self.actor_binding is not None:
            doc["actor"] = self.actor_binding
        return doc


@dataclass(frozen=True)
class CompositeDef:
    name: str
    steps: Tuple[TestAction, ...]

    def to_document(self):
        return {"name": self.name, "steps": [s.to_document() for s in self.steps]}


@dataclass(frozen=True)
class TestScript:
    mode: Mode
    actions: Tuple[TestAction, ...]
    definitions: Tuple[CompositeDef, ...] = ()
    metadata: Dict[str, str] = field(default_factory=dict)

    __test__ = False

    def definition(self, name) -> Optional[CompositeDef]:
        for d in self.definitions:
            if d.name == name:
                return d
        return None

    @property
    def on_error(self) -> OnError:
        return OnError(self.metadata.get("on_error", OnError.HALT.value))

    def to_document(self):
        doc = {"schema": SCHEMA_VERSION, "mode": self.mode.value}
        if self.metadata:
            doc["metadata"] = dict(self.metadata)
        if self.definitions:
            doc["definitions"] = [d.to_document() for d in self.definitions]
        doc["actions"] = [a.to_document() for a in self.actions]
        return doc


@dataclass(frozen=True)
class ActorEntry:
    id: str
    address: str


@dataclass(frozen=True)
class TestConfig:
    actors: Tuple[ActorEntry, ...]
    sut_endpoint: str
    run_seed: int
    action_timeout: float
    max_parallel_runs: int = 1
    setup_timeout: float = DEFAULT_SETUP_TIMEOUT

    __test__ = False

    @property
    def actor_ids(self) -> List[str]:
        return [a.id for a in self.actors]

    def with_seed(self, run_seed: int) -> "TestConfig":
        return TestConfig(
            actors=self.actors,
            sut_endpoint=self.sut_endpoint,
            run_seed=run_seed,
            action_timeout=self.action_timeout,
            max_parallel_runs=self.max_parallel_runs,
            setup_timeout=self.setup_timeout,
        )

    def to_document(self):
        doc = {
            "schema": SCHEMA_VERSION,
            "actors": [{"id": a.id, "address": a.address} for a in self.actors],
            "sut_endpoint": self.sut_endpoint,
            "run_seed": self.run_seed,
            "action_timeout": self.action_timeout,
            "max_parallel_runs": self.max_parallel_runs,
        }
        if self.setup_timeout != DEFAULT_SETUP_TIMEOUT:
            doc["setup_timeout"] = self.setup_timeout
        return doc


@dataclass(frozen=True)
class PlanStep:
    index: int
    action_index: int
    keyword: str
    params: Dict
    actor_binding: Optional[str]
    path: str

    def to_dict(self):
        return {
            "index": self.index,
            "action_index": self.action_index,
            "keyword": self.keyword,
            "params": dict(self.params),
            "actor": self.actor_binding,
            "path": self.path,
        }


@dataclass(frozen=True)
class ExecutionPlan:
    steps: Tuple[PlanStep, ...]

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def to_list(self):
        return [s.to_dict() for s in self.steps]


# ---------------------------------------------------------------- documents
def _check_params(params):
    for key, value in params.items():
        if isinstance(value, dict):
            if key != AI_PARAM_KEY:
                raise ValueError(
                    f"param '{key}' must be a scalar; only '{AI_PARAM_KEY}' may hold a map"
                )
        elif isinstance(value, list):
            raise ValueError(f"param '{key}' must be a scalar, not a list")
    return params


class ActionDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: StrictStr = Field(min_length=1)
    kind: ActionKind
    params: Dict[StrictStr, Union[Scalar, Dict[StrictStr, Any]]] = Field(
        default_factory=dict
    )
    actor: Optional[StrictStr] = Field(default=None, min_length=1)

    @field_validator("params")
    @classmethod
    def _scalars(cls, v):
        return _check_params(v)


class CompositeDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: StrictStr = Field(min_length=1)
    steps: List[ActionDoc]


class ScriptDoc(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: Literal[1] = Field(alias="schema")
    mode: Mode
    metadata: Dict[StrictStr, StrictStr] = Field(default_factory=dict)
    definitions: List[CompositeDoc] = Field(default_factory=list)
    actions: List[ActionDoc]


class ActorDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: StrictStr = Field(min_length=1)
    address: StrictStr

    @field_validator("address")
    @classmethod
    def _endpoint(cls, v):
        parse_endpoint(v)
        return v


class ConfigDoc(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: Literal[1] = Field(alias="schema")
    actors: List[ActorDoc]
    sut_endpoint: StrictStr
    run_seed: StrictInt = Field(ge=0, le=MAX_SEED)
    action_timeout: float = Field(gt=0)
    max_parallel_runs: StrictInt = Field(default=1, gt=0)
    setup_timeout: float = Field(default=DEFAULT_SETUP_TIMEOUT, gt=0)

    @field_validator("action_timeout", "setup_timeout", mode="before")
    @classmethod
    def _number(cls, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError("must be a number of seconds")
        return v

    @field_validator("sut_endpoint")
    @classmethod
    def _endpoint(cls, v):
        parse_endpoint(v)
        return v

    @model_validator(mode="after")
    def _unique_ids(self):
        seen = set()
        for actor in self.actors:
            if actor.id in seen:
                raise ValueError(f"duplicate actor id '{actor.id}'")
            seen.add(actor.id)
        return self
