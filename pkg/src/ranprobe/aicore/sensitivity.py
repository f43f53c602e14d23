"""One-at-a-time sensitivity analysis.

Every dimension is swept over its levels while the others stay at the
baseline; the index of a dimension is the largest absolute score deviation
from the baseline score seen along its sweep.

The baseline score is taken from the first sweep point equal to the baseline.
When no sweep point equals it, one extra query at the baseline is made, so a
session costs the total number of levels plus one."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

from ..exceptions import ConfigError
from .space import ParameterSpace
from .trace import TraceRecorder

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensitivityResult:
    indices: Dict[str, float]
    curves: Dict[str, List[List[Any]]]
    baseline_score: float

    def to_dict(self):
        return {
            "indices": dict(self.indices),
            "curves": {name: [list(p) for p in curve] for name, curve in self.curves.items()},
            "baseline_score": self.baseline_score,
            "ranking": self.ranking(),
        }

    def ranking(self) -> List[str]:
        """Dimensions from most to least influential, ties in space order"""
        names = list(self.indices)
        return sorted(names, key=lambda n: (-self.indices[n], names.index(n)))


def check_levels(space: ParameterSpace, baseline: dict, levels: Dict[str, Sequence]):
    space.check_point(baseline)
    unknown = set(levels) - set(space.names)
    if unknown:
        raise ConfigError(f"levels given for unknown dimension(s) {', '.join(sorted(unknown))}")
    for name, values in levels.items():
        dim = space[name]
        for v in values:
            if not dim.contains(v):
                raise ConfigError(f"level {v!r} is outside dimension '{name}'")


def query_count(space: ParameterSpace, baseline: dict, levels: Dict[str, Sequence]) -> int:
    """Queries sensitivity_analysis will make for these inputs"""
    sweep = sum(len(levels.get(n, ())) for n in space.names)
    hits_baseline = any(v == baseline[n] for n in space.names for v in levels.get(n, ()))
    return sweep if hits_baseline else sweep + 1


def sensitivity_analysis(
    space: ParameterSpace, baseline: dict, levels: Dict[str, Sequence], recorder: TraceRecorder
) -> SensitivityResult:
    check_levels(space, baseline, levels)
    baseline = {n: baseline[n] for n in space.names}

    curves = {}
    baseline_score = None
    for name in space.names:
        curve = []
        for value in levels.get(name, ()):
            point = dict(baseline, **{name: value})
            obs = recorder.query(point, dimension=name)
            curve.append([value, obs.score])
            if baseline_score is None and value == baseline[name]:
                baseline_score = obs.score
        curves[name] = curve

    if baseline_score is None:
        baseline_score = recorder.query(baseline, dimension=None).score

    indices = {
        name: max((abs(score - baseline_score) for _, score in curves[name]), default=0.0)
        for name in space.names
    }
    logger.debug(f"Sensitivity indices: {indices}")
    return SensitivityResult(indices, curves, baseline_score)
