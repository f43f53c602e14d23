"""Step verdicts and outcomes, shared by the actor that produces them and the
server that records them."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from .exceptions import SchemaError


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    ERROR = "ERROR"
    SKIPPED = "SKIPPED"


@dataclass(frozen=True)
class StepOutcome:
    verdict: Verdict
    duration_ms: float = 0.0
    detail: Dict[str, Any] = field(default_factory=dict)
    # [{"name", "value", "unit"}] measured by the step
    kpi_samples: List[dict] = field(default_factory=list)
    trace_digests: List[str] = field(default_factory=list)
    sut_version: Optional[str] = None

    @classmethod
    def skipped(cls, reason) -> "StepOutcome":
        return cls(Verdict.SKIPPED, detail={"reason": reason})

    @classmethod
    def error(cls, reason, duration_ms=0.0, **detail) -> "StepOutcome":
        return cls(Verdict.ERROR, duration_ms, detail=dict(detail, reason=reason))

    def to_dict(self):
        doc = {
            "verdict": self.verdict.value,
            "duration_ms": self.duration_ms,
            "detail": self.detail,
            "kpi_samples": self.kpi_samples,
            "trace_digests": self.trace_digests,
        }
        if self.sut_version is not None:
            doc["sut_version"] = self.sut_version
        return doc

    @classmethod
    def from_dict(cls, doc) -> "StepOutcome":
        try:
            return cls(
                verdict=Verdict(doc["verdict"]),
                duration_ms=float(doc.get("duration_ms", 0.0)),
                detail=dict(doc.get("detail", {})),
                kpi_samples=list(doc.get("kpi_samples", [])),
                trace_digests=list(doc.get("trace_digests", [])),
                sut_version=doc.get("sut_version"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"Malformed step outcome: {e}")

    def reproducible(self) -> dict:
        """Outcome without wall-clock measurements"""
        doc = self.to_dict()
        del doc["duration_ms"]
        return doc
