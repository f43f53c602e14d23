"""Run records: what the server persists for every finished run.

A record has two halves. `content` is everything that must come out identical
when the same (script, config, seed) runs again against the same SUT version:
documents, verdicts, KPI samples, trace digests. `provenance` holds what
naturally differs between executions (run id, clock times, step durations,
adapter latencies)."""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

from .. import FRAMEWORK_VERSION
from ..exceptions import SchemaError
from ..outcome import StepOutcome, Verdict
from ..utils import digest, sha256_hex

RECORD_FORMAT = 1

# KPI sample name -> summary field
KPI_FIELDS = {
    "throughput_frac": "data_rate",
    "mean_latency_ttis": "latency",
    "loss_frac": "packet_loss",
}


@dataclass(frozen=True)
class KpiStat:
    min: float
    max: float
    mean: float

    @classmethod
    def of(cls, values: List[float]) -> Optional["KpiStat"]:
        if not values:
            return None
        return cls(min(values), max(values), math.fsum(values) / len(values))

    def to_dict(self):
        return {"min": self.min, "max": self.max, "mean": self.mean}


@dataclass(frozen=True)
class KpiSummary:
    action_success_rate: float
    data_rate: Optional[KpiStat] = None
    latency: Optional[KpiStat] = None
    packet_loss: Optional[KpiStat] = None
    sample_count: int = 0

    @classmethod
    def compute(cls, outcomes: Iterable[Optional[StepOutcome]]) -> "KpiSummary":
        outcomes = [o for o in outcomes if o is not None]
        judged = [o for o in outcomes if o.verdict != Verdict.SKIPPED]
        passed = sum(1 for o in judged if o.verdict == Verdict.PASS)
        values: Dict[str, List[float]] = {name: [] for name in KPI_FIELDS.values()}
        for o in outcomes:
            for sample in o.kpi_samples:
                if sample["name"] in KPI_FIELDS:
                    values[KPI_FIELDS[sample["name"]]].append(float(sample["value"]))
        return cls(
            action_success_rate=passed / len(judged) if judged else 0.0,
            data_rate=KpiStat.of(values["data_rate"]),
            latency=KpiStat.of(values["latency"]),
            packet_loss=KpiStat.of(values["packet_loss"]),
            sample_count=sum(len(v) for v in values.values()),
        )

    def to_dict(self):
        doc = {"action_success_rate": self.action_success_rate, "sample_count": self.sample_count}
        for name in KPI_FIELDS.values():
            stat = getattr(self, name)
            doc[name] = stat.to_dict() if stat is not None else None
        return doc

    @classmethod
    def from_dict(cls, doc) -> "KpiSummary":
        stats = {
            name: KpiStat(**doc[name]) if doc.get(name) is not None else None for name in KPI_FIELDS.values()
        }
        return cls(action_success_rate=doc["action_success_rate"], sample_count=doc["sample_count"], **stats)


@dataclass(frozen=True)
class TraceRef:
    digest: str
    step: int
    actor: Optional[str]
    method: Optional[str]

    def to_dict(self):
        return {"digest": self.digest, "step": self.step, "actor": self.actor, "method": self.method}


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    submitted_at: str
    script: str
    script_hash: str
    config: str
    config_hash: str
    run_seed: int
    mode: str
    phase: str
    plan: List[dict]
    per_step: List[StepOutcome]
    step_actors: List[Optional[str]]
    kpi: KpiSummary
    complete: bool = True
    missing_actors: List[str] = field(default_factory=list)
    framework_version: str = FRAMEWORK_VERSION
    finished_at: Optional[str] = None
    # actor -> [{"step", "op", "ms"}]
    latencies: Dict[str, List[dict]] = field(default_factory=dict)

    @classmethod
    def assemble(
        cls,
        run_id,
        submitted_at,
        script,
        config,
        run_seed,
        mode,
        phase,
        plan,
        per_step,
        step_actors,
        missing_actors=(),
        finished_at=None,
        latencies=None,
    ) -> "RunRecord":
        return cls(
            run_id=run_id,
            submitted_at=submitted_at,
            script=script,
            script_hash=sha256_hex(script),
            config=config,
            config_hash=sha256_hex(config),
            run_seed=run_seed,
            mode=mode,
            phase=phase,
            plan=list(plan),
            per_step=list(per_step),
            step_actors=list(step_actors),
            kpi=KpiSummary.compute(per_step),
            complete=not missing_actors,
            missing_actors=sorted(missing_actors),
            finished_at=finished_at,
            latencies=dict(latencies or {}),
        )

    @property
    def traces(self) -> List[TraceRef]:
        refs = []
        for i, outcome in enumerate(self.per_step):
            for d in outcome.trace_digests:
                refs.append(TraceRef(d, i, self.step_actors[i], outcome.detail.get("method")))
        return refs

    @property
    def sut_versions(self) -> List[str]:
        return sorted({o.sut_version for o in self.per_step if o.sut_version is not None})

    @property
    def verdicts(self) -> List[str]:
        return [o.verdict.value for o in self.per_step]

    def check(self):
        """Hashes match the embedded documents and every step has a verdict"""
        problems = []
        if sha256_hex(self.script) != self.script_hash:
            problems.append("script_hash does not match the script")
        if sha256_hex(self.config) != self.config_hash:
            problems.append("config_hash does not match the config")
        if len(self.per_step) != len(self.plan):
            problems.append(f"{len(self.per_step)} outcomes for {len(self.plan)} plan steps")
        if problems:
            raise SchemaError(f"Inconsistent record for run {self.run_id}", problems)
        return self

    def content(self) -> dict:
        steps = []
        for i, outcome in enumerate(self.per_step):
            entry = outcome.reproducible()
            entry["index"] = i
            entry["actor"] = self.step_actors[i]
            steps.append(entry)
        return {
            "format": RECORD_FORMAT,
            "framework_version": self.framework_version,
            "script": self.script,
            "script_hash": self.script_hash,
            "config": self.config,
            "config_hash": self.config_hash,
            "run_seed": self.run_seed,
            "mode": self.mode,
            "phase": self.phase,
            "plan": self.plan,
            "steps": steps,
            "traces": [t.to_dict() for t in self.traces],
            "kpi": self.kpi.to_dict(),
            "sut_versions": self.sut_versions,
            "complete": self.complete,
            "missing_actors": self.missing_actors,
        }

    def provenance(self) -> dict:
        return {
            "run_id": self.run_id,
            "submitted_at": self.submitted_at,
            "finished_at": self.finished_at,
            "step_durations_ms": [o.duration_ms for o in self.per_step],
            "latencies": self.latencies,
        }

    def digest(self) -> str:
        return digest(self.content())

    def to_dict(self) -> dict:
        return {"content": self.content(), "provenance": self.provenance(), "digest": self.digest()}

    @classmethod
    def from_dict(cls, doc) -> "RunRecord":
        try:
            content, prov = doc["content"], doc["provenance"]
            per_step = []
            for entry, duration in zip(content["steps"], prov["step_durations_ms"]):
                outcome = StepOutcome.from_dict(dict(entry, duration_ms=duration))
                per_step.append(outcome)
            record = cls(
                run_id=prov["run_id"],
                submitted_at=prov["submitted_at"],
                script=content["script"],
                script_hash=content["script_hash"],
                config=content["config"],
                config_hash=content["config_hash"],
                run_seed=content["run_seed"],
                mode=content["mode"],
                phase=content["phase"],
                plan=content["plan"],
                per_step=per_step,
                step_actors=[s["actor"] for s in content["steps"]],
                kpi=KpiSummary.from_dict(content["kpi"]),
                complete=content["complete"],
                missing_actors=content["missing_actors"],
                framework_version=content["framework_version"],
                finished_at=prov.get("finished_at"),
                latencies=prov.get("latencies", {}),
            )
        except (KeyError, TypeError) as e:
            raise SchemaError(f"Malformed run record: missing {e}")
        if "digest" in doc and doc["digest"] != record.digest():
            raise SchemaError(f"Run record {record.run_id} does not match its digest")
        return record.check()
