import logging
from enum import Enum

import psutil

from ..wire import HealthSnapshot

logger = logging.getLogger(__name__)


class ProbeMode(str, Enum):
    REAL = "real"
    SIMULATED = "simulated"


class HealthProbe:
    """Resource snapshot source. SIMULATED echoes the configured snapshot
    exactly; REAL asks psutil and is only as good as the platform allows."""

    def __init__(self, mode=ProbeMode.SIMULATED, snapshot: HealthSnapshot = None, disk_path="/"):
        self.mode = ProbeMode(mode)
        self.snapshot = snapshot or HealthSnapshot()
        self.disk_path = disk_path
        if self.mode == ProbeMode.REAL:
            # first cpu_percent call only primes the counters
            psutil.cpu_percent(interval=None)

    def probe(self, active_steps=0) -> HealthSnapshot:
        if self.mode == ProbeMode.SIMULATED:
            return self.snapshot.with_active_steps(active_steps).stamped()
        try:
            disk = psutil.disk_usage(self.disk_path).percent
        except OSError:
            logger.warning(f"No disk usage for {self.disk_path}")
            disk = 0.0
        return HealthSnapshot(
            cpu_pct=_clamp(psutil.cpu_percent(interval=None)),
            mem_pct=_clamp(psutil.virtual_memory().percent),
            disk_pct=_clamp(disk),
            # no SDR front end is driven in SIM mode
            hardware_ok=True,
            active_steps=active_steps,
        ).stamped()


def _clamp(pct) -> float:
    return min(100.0, max(0.0, float(pct)))
