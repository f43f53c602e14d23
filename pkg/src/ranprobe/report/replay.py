import logging
from typing import List, Tuple

from ..exceptions import IncompleteRecord
from ..script import parse_config, serialize_config
from .record import RunRecord

logger = logging.getLogger(__name__)


def replay(record: RunRecord) -> Tuple[str, str]:
    """(script, config) that resubmit the recorded run with its original seed"""
    if not record.complete:
        raise IncompleteRecord(record.run_id)
    config = record.config
    parsed = parse_config(config, source=f"record {record.run_id}")
    if parsed.run_seed != record.run_seed:
        # the original submission overrode the seed
        config = serialize_config(parsed.with_seed(record.run_seed))
    return record.script, config


def compare_records(original: RunRecord, rerun: RunRecord) -> List[str]:
    """Regression differences between two executions of the same run"""
    differences = []
    if original.script_hash != rerun.script_hash:
        differences.append("script differs")
    if original.run_seed != rerun.run_seed:
        differences.append(f"run seed {original.run_seed} != {rerun.run_seed}")
    if original.sut_versions != rerun.sut_versions:
        differences.append(
            f"SUT version mismatch: {', '.join(original.sut_versions) or '-'}"
            f" != {', '.join(rerun.sut_versions) or '-'}"
        )
    if len(original.per_step) != len(rerun.per_step):
        differences.append(f"{len(original.per_step)} steps != {len(rerun.per_step)} steps")
    for i, (a, b) in enumerate(zip(original.per_step, rerun.per_step)):
        if a.verdict != b.verdict:
            differences.append(f"step {i}: {a.verdict.value} != {b.verdict.value}")
        if a.trace_digests != b.trace_digests:
            differences.append(f"step {i}: trace digests differ")
    if original.kpi != rerun.kpi:
        differences.append("KPI summary differs")
    return differences
