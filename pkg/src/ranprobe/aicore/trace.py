"""Exploration traces and the budgeted query recorder every method goes
through.

Each oracle query becomes exactly one iteration, stamped with a logical tick.
Wall-clock times live next to the content, never inside it, so two identical
sessions produce the same digest."""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from ..exceptions import BudgetExhausted, OracleError, RanProbeError
from ..utils import digest
from .oracle import Oracle, ScoreSpec

logger = logging.getLogger(__name__)


class Method(str, Enum):
    SENSITIVITY = "sensitivity"
    FUZZ = "fuzz"
    ADVERSARIAL = "adversarial"
    RL = "rl"


@dataclass
class ExplorationTrace:
    method: Method
    seed: int
    space: List[dict]
    budget: int
    params: Dict[str, Any] = field(default_factory=dict)
    iterations: List[dict] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    complete: bool = True
    error: Optional[str] = None
    started_at: Optional[float] = None
    finished_at: Optional[float] = None

    def content(self) -> dict:
        """Everything that must replay identically"""
        return {
            "method": Method(self.method).value,
            "seed": self.seed,
            "space": self.space,
            "budget": self.budget,
            "params": self.params,
            "iterations": self.iterations,
            "summary": self.summary,
            "complete": self.complete,
            "error": self.error,
        }

    def digest(self) -> str:
        return digest(self.content())

    def to_dict(self) -> dict:
        doc = self.content()
        doc["digest"] = self.digest()
        doc["started_at"] = self.started_at
        doc["finished_at"] = self.finished_at
        return doc

    @classmethod
    def from_dict(cls, doc) -> "ExplorationTrace":
        return cls(
            method=Method(doc["method"]),
            seed=doc["seed"],
            space=doc["space"],
            budget=doc["budget"],
            params=doc.get("params", {}),
            iterations=doc.get("iterations", []),
            summary=doc.get("summary", {}),
            complete=doc.get("complete", True),
            error=doc.get("error"),
            started_at=doc.get("started_at"),
            finished_at=doc.get("finished_at"),
        )


@dataclass(frozen=True)
class Observation:
    response: dict
    score: Optional[float]
    decision: Any = None
    confidence: Optional[float] = None


class TraceRecorder:
    """Wraps an oracle with budget accounting and iteration recording"""

    def __init__(self, trace: ExplorationTrace, oracle: Oracle, score: ScoreSpec):
        self.trace = trace
        self.oracle = oracle
        self.score = score

    @property
    def used(self) -> int:
        return len(self.trace.iterations)

    @property
    def remaining(self) -> int:
        return self.trace.budget - self.used

    def query(self, params: Dict[str, Any], **extra) -> Observation:
        if self.used >= self.trace.budget:
            raise BudgetExhausted(self.trace.budget)
        try:
            response = self.oracle(params)
            score, decision, confidence = self.score.extract(response)
        except OracleError as e:
            e.trace = self.trace
            raise
        except RanProbeError as e:
            raise OracleError(f"Oracle query {self.used} failed: {e}", self.trace) from e

        iteration = {
            "tick": self.used,
            "params": params,
            "response_digest": digest(response),
            "score": score,
        }
        if decision is not None:
            iteration["decision"] = decision
        if confidence is not None:
            iteration["confidence"] = confidence
        iteration.update(extra)
        self.trace.iterations.append(iteration)
        return Observation(response, score, decision, confidence)


def open_trace(method, seed, space, budget, params=None) -> ExplorationTrace:
    return ExplorationTrace(
        method=Method(method),
        seed=int(seed),
        space=space.to_list() if hasattr(space, "to_list") else list(space or []),
        budget=int(budget),
        params=dict(params or {}),
        started_at=time.time(),
    )


def close_trace(trace: ExplorationTrace, summary=None, error=None) -> ExplorationTrace:
    if summary is not None:
        trace.summary = summary
    if error is not None:
        trace.complete = False
        trace.error = str(error)
    trace.finished_at = time.time()
    logger.info(
        f"{trace.method.value} session finished after {len(trace.iterations)}/{trace.budget}"
        f" queries{' (incomplete)' if not trace.complete else ''}"
    )
    return trace
