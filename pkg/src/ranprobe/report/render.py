"""Text and structured renderings of a run record.

The text layout is versioned (REPORT_LAYOUT) so golden files stay stable;
any change to templates/report.txt.j2 bumps it."""

import logging
from pathlib import Path

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from ..utils import canonical_json
from .record import KPI_FIELDS, RunRecord

logger = logging.getLogger(__name__)

REPORT_LAYOUT = 1
FORMATS = ("text", "structured")

_env = Environment(
    loader=FileSystemLoader(Path(__file__).parent / "templates"),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)


def _num(value, digits=4):
    """Number formatting that is identical on every host"""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = f"{value:.{digits}f}".rstrip("0").rstrip(".")
        return "0" if text in ("-0", "") else text
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_num(v, digits) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {_num(v, digits)}" for k, v in sorted(value.items())) + "}"
    return str(value)


_env.filters["num"] = _num


def _ai_summary(outcome) -> list:
    """(label, value) lines for the result of one AI session step"""
    result = outcome.detail.get("result", {})
    method = outcome.detail.get("method")
    lines = [("queries", f"{outcome.detail.get('queries')}/{outcome.detail.get('budget')}")]
    if not outcome.detail.get("complete", True):
        lines.append(("incomplete", outcome.detail.get("reason", "")))
    if method == "sensitivity":
        lines.append(("ranking", ", ".join(result.get("ranking", []))))
        for name, value in sorted(result.get("indices", {}).items()):
            lines.append((f"index {name}", _num(value, 6)))
    elif method == "fuzz":
        lines.append(("best fitness", _num(result.get("best_fitness"), 6)))
        lines.append(("boundary estimate", _num(result.get("best"), 6)))
        lines.append(("generations", _num(result.get("generations"))))
    elif method == "adversarial":
        lines.append(("status", result.get("status")))
        if result.get("status") == "FOUND":
            lines.append(("perturbation", _num(result.get("perturbation"), 6)))
            lines.append(("magnitude", _num(result.get("magnitude"), 6)))
            lines.append(("decision", f"{result.get('decision_before')} -> {result.get('decision_after')}"))
            lines.append(("source", result.get("source")))
    elif method == "rl":
        lines.append(("worst state", _num(result.get("worst_state"))))
        lines.append(("worst score", _num(result.get("worst_score"), 6)))
        lines.append(("greedy policy", _num(result.get("greedy_policy"))))
    return lines


def _context(record: RunRecord) -> dict:
    steps = []
    ai = []
    for i, (step, outcome) in enumerate(zip(record.plan, record.per_step)):
        steps.append(
            {
                "index": i,
                "path": step.get("path", step["keyword"]),
                "actor": record.step_actors[i] or "-",
                "verdict": outcome.verdict.value,
                "note": outcome.detail.get("reason", ""),
            }
        )
        if step["keyword"] == "run_ai_session" and "method" in outcome.detail:
            ai.append(
                {
                    "index": i,
                    "method": outcome.detail["method"],
                    "digest": outcome.detail.get("trace_digest", ""),
                    "lines": _ai_summary(outcome),
                }
            )
    kpi = record.kpi
    kpi_rows = [(name, getattr(kpi, name)) for name in KPI_FIELDS.values()]
    return {
        "layout": REPORT_LAYOUT,
        "record": record,
        "steps": steps,
        "ai": ai,
        "kpi": kpi,
        "kpi_rows": kpi_rows,
        "success_rate": f"{kpi.action_success_rate:.2f}",
        "verdict_counts": {v: record.verdicts.count(v) for v in ("PASS", "FAIL", "ERROR", "SKIPPED")},
    }


def render(record: RunRecord, fmt: str = "text") -> str:
    if fmt == "structured":
        return canonical_json(record.content()) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format '{fmt}', expected one of {', '.join(FORMATS)}")
    return _env.get_template("report.txt.j2").render(**_context(record))
