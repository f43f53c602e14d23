from .record import KpiStat, KpiSummary, RunRecord, TraceRef
from .render import FORMATS, render
from .replay import compare_records, replay
from .store import RunStore

__all__ = [
    "FORMATS",
    "KpiStat",
    "KpiSummary",
    "RunRecord",
    "RunStore",
    "TraceRef",
    "compare_records",
    "render",
    "replay",
]
