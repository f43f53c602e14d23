"""Gradient-free search for the smallest perturbation of a received symbol
that changes the demodulator's decision.

Candidate directions come first from the impairment menu (the offset each
impairment would add to the symbol), then from uniformly random directions at
the norm bound. A flipping direction is shrunk by bisection on its magnitude;
further random directions are tried at the best magnitude so far until
`patience` of them fail in a row or the budget runs low. The result is
verified by one last query."""

import cmath
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..exceptions import ConfigError
from .impairment import Impairment, apply_impairment
from .trace import TraceRecorder

logger = logging.getLogger(__name__)

# keeps scaled perturbations inside the bound after rounding
_INSIDE = 1 - 1e-12


@dataclass(frozen=True)
class AdvResult:
    found: bool
    perturbation: Optional[complex] = None
    decision_before: Optional[int] = None
    decision_after: Optional[int] = None
    source: Optional[str] = None

    @property
    def magnitude(self) -> Optional[float]:
        return None if self.perturbation is None else abs(self.perturbation)

    def to_dict(self):
        return {
            "status": "FOUND" if self.found else "NOT_FOUND",
            "perturbation": None
            if self.perturbation is None
            else [self.perturbation.real, self.perturbation.imag],
            "magnitude": self.magnitude,
            "decision_before": self.decision_before,
            "decision_after": self.decision_after,
            "source": self.source,
        }


NOT_FOUND = AdvResult(found=False)


def symbol_params(symbol: complex):
    return {"symbols.0": [float(symbol.real), float(symbol.imag)]}


class _Search:
    def __init__(self, base, norm_bound, recorder: TraceRecorder, rng, shrink_steps, patience):
        self.base = complex(base)
        self.norm_bound = norm_bound
        self.recorder = recorder
        self.rng = rng
        self.shrink_steps = shrink_steps
        self.patience = patience
        self.before = None

    @property
    def can_search(self):
        # one query is always held back for verification
        return self.recorder.remaining > 1

    def decision(self, delta, phase):
        obs = self.recorder.query(symbol_params(self.base + delta), phase=phase)
        return obs.decision

    def flips(self, delta, phase) -> bool:
        return self.decision(delta, phase) != self.before

    def shrink(self, delta) -> complex:
        """Bisect the magnitude along delta's direction; delta is known to flip"""
        direction = delta / abs(delta)
        lo, hi = 0.0, abs(delta)
        for _ in range(self.shrink_steps):
            if not self.can_search:
                break
            mid = (lo + hi) / 2
            if self.flips(direction * mid, "shrink"):
                hi = mid
            else:
                lo = mid
        return direction * hi

    def random_direction(self) -> complex:
        return cmath.exp(1j * self.rng.uniform(-math.pi, math.pi))

    def run(self, impairment_menu: List[Impairment]) -> AdvResult:
        if self.recorder.remaining <= 0:
            return NOT_FOUND
        self.before = self.decision(0j, "probe")

        best, source = None, None
        for imp in impairment_menu:
            if not self.can_search:
                break
            delta = complex(apply_impairment([self.base], imp, self.rng)[0]) - self.base
            if abs(delta) == 0:
                continue
            if abs(delta) > self.norm_bound:
                delta *= self.norm_bound * _INSIDE / abs(delta)
            if self.flips(delta, f"impairment:{imp.kind.value}"):
                shrunk = self.shrink(delta)
                if best is None or abs(shrunk) < abs(best):
                    best, source = shrunk, f"impairment:{imp.kind.value}"

        misses = 0
        while self.can_search and misses < self.patience:
            magnitude = self.norm_bound * _INSIDE if best is None else abs(best) * _INSIDE
            delta = self.random_direction() * magnitude
            if self.flips(delta, "random"):
                shrunk = self.shrink(delta)
                if best is None or abs(shrunk) < abs(best):
                    best, source = shrunk, "random"
                misses = 0
            else:
                misses += 1

        if best is None or self.recorder.remaining < 1:
            return AdvResult(found=False, decision_before=self.before)
        after = self.decision(best, "verify")
        if after == self.before or abs(best) > self.norm_bound:
            logger.warning("Adversarial candidate failed verification")
            return AdvResult(found=False, decision_before=self.before)
        return AdvResult(True, best, self.before, after, source)


def adversarial_perturb(
    base_symbol: complex,
    norm_bound: float,
    impairment_menu: List[Impairment],
    recorder: TraceRecorder,
    rng: np.random.Generator,
    shrink_steps: int = 16,
    patience: int = 40,
) -> AdvResult:
    """Smallest decision-flipping perturbation found within the recorder's
    budget, or NOT_FOUND"""
    if not norm_bound > 0:
        raise ConfigError("norm_bound must be positive")
    search = _Search(base_symbol, norm_bound, recorder, rng, shrink_steps, patience)
    result = search.run(list(impairment_menu))
    logger.debug(f"Adversarial search: {result.to_dict()} after {recorder.used} queries")
    return result
