"""Run identifiers and the per-run state the orchestrator keeps."""

import asyncio
import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Dict, List, Optional, Tuple

from ..aicore.trace import ExplorationTrace
from ..exceptions import SchemaError
from ..outcome import StepOutcome, Verdict
from ..report.record import RunRecord
from ..script import ExecutionPlan, TestConfig, TestScript

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def _base32(value: int, length: int) -> str:
    chars = []
    for _ in range(length):
        value, rem = divmod(value, 32)
        chars.append(_CROCKFORD[rem])
    return "".join(reversed(chars))


class RunIdFactory:
    """26 character ULID-style ids: 48 bits of milliseconds then 80 random
    bits. Ids minted within one millisecond increment the random part so they
    still sort in creation order."""

    def __init__(self, clock=time.time, entropy=os.urandom):
        self._clock = clock
        self._entropy = entropy
        self._last = (-1, 0)

    def __call__(self) -> str:
        ms = int(self._clock() * 1000)
        last_ms, last_rand = self._last
        if ms <= last_ms:
            ms, rand = last_ms, last_rand + 1
        else:
            rand = int.from_bytes(self._entropy(10), "big")
        self._last = (ms, rand)
        return _base32(ms, 10) + _base32(rand % (1 << 80), 16)


new_run_id = RunIdFactory()


class Phase(str, Enum):
    QUEUED = "QUEUED"
    RUNNING = "RUNNING"
    COMPLETE = "COMPLETE"
    ABORTED = "ABORTED"
    FAILED_SETUP = "FAILED_SETUP"

    @property
    def terminal(self) -> bool:
        return self in (Phase.COMPLETE, Phase.ABORTED, Phase.FAILED_SETUP)


@dataclass
class PendingStep:
    index: int
    actor_id: str
    result: asyncio.Future
    last_activity: float


@dataclass
class RunState:
    run_id: str
    script_text: str
    config_text: str
    script_hash: str
    config_hash: str
    submitted_at: str
    submitted_mono: float
    script: Optional[TestScript] = None
    config: Optional[TestConfig] = None
    plan: ExecutionPlan = field(default_factory=lambda: ExecutionPlan(()))
    cursor: int = 0
    per_step: List[Optional[StepOutcome]] = field(default_factory=list)
    step_actors: List[Optional[str]] = field(default_factory=list)
    phase: Phase = Phase.QUEUED
    reasons: List[str] = field(default_factory=list)
    abort_requested: bool = False
    pending: Optional[PendingStep] = None
    # digest -> trace document, assembled from TRACE_CHUNK messages
    traces: Dict[str, dict] = field(default_factory=dict)
    chunks: Dict[Tuple[str, str], Dict[int, str]] = field(default_factory=dict)
    record: Optional[RunRecord] = None
    finished_at: Optional[str] = None

    @property
    def run_seed(self) -> Optional[int]:
        return self.config.run_seed if self.config is not None else None

    @property
    def actor_ids(self) -> List[str]:
        return self.config.actor_ids if self.config is not None else []

    def start_plan(self, plan: ExecutionPlan):
        self.plan = plan
        self.per_step = [None] * len(plan)
        self.step_actors = [None] * len(plan)

    def record_outcome(self, index: int, outcome: StepOutcome, actor_id: Optional[str] = None) -> bool:
        """Record a step verdict once; later attempts are refused"""
        if self.per_step[index] is not None:
            return False
        self.per_step[index] = outcome
        if actor_id is not None:
            self.step_actors[index] = actor_id
        return True

    def skip_remaining(self, reason: str):
        for i, outcome in enumerate(self.per_step):
            if outcome is None:
                self.per_step[i] = StepOutcome.skipped(reason)

    @property
    def verdicts(self) -> List[Optional[str]]:
        return [o.verdict.value if o is not None else None for o in self.per_step]

    def counts(self) -> Dict[str, int]:
        out = {v.value: 0 for v in Verdict}
        for o in self.per_step:
            if o is not None:
                out[o.verdict.value] += 1
        return out

    def add_chunk(self, actor_id: str, payload: dict) -> Optional[str]:
        """Keep one TRACE_CHUNK; returns the digest once the trace is whole
        and verified"""
        digest, index, total = payload["digest"], payload["index"], payload["total"]
        if not 0 <= index < total:
            raise SchemaError(f"trace chunk {index} of {total}")
        parts = self.chunks.setdefault((actor_id, digest), {})
        parts[index] = payload["data"]
        if len(parts) < total:
            return None
        del self.chunks[(actor_id, digest)]
        try:
            doc = json.loads("".join(parts[i] for i in range(total)))
            actual = ExplorationTrace.from_dict(doc).digest()
        except (ValueError, KeyError, TypeError) as e:
            raise SchemaError(f"trace {digest[:12]} does not decode: {e}")
        if actual != digest:
            raise SchemaError(f"trace {digest[:12]} arrived with digest {actual[:12]}")
        self.traces[digest] = doc
        return digest

    def expected_traces(self, actor_id: str) -> List[str]:
        return sorted(
            {
                d
                for o, a in zip(self.per_step, self.step_actors)
                if o is not None and a == actor_id
                for d in o.trace_digests
            }
        )

    @property
    def involved_actors(self) -> List[str]:
        return sorted({a for a in self.step_actors if a is not None})

    def snapshot(self) -> dict:
        return {
            "run_id": self.run_id,
            "phase": self.phase.value,
            "cursor": self.cursor,
            "steps": len(self.plan),
            "verdicts": self.verdicts,
            "submitted_at": self.submitted_at,
            "finished_at": self.finished_at,
            "actors": list(self.actor_ids),
            "reasons": list(self.reasons),
        }


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")
