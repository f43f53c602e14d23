"""Demodulating classifier under test.

The default classifier decides each received symbol by minimum Euclidean
distance to the constellation, lowest index on ties. The perceptron mode is a
linear multi-class model trained at startup from seeded noisy samples, so a
genuinely learned decision boundary can be probed as well."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, StrictInt, model_validator

from ..aicore.impairment import Impairment, apply_impairment

logger = logging.getLogger(__name__)

_QAM16_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0]) / math.sqrt(10)

CONSTELLATIONS = {
    "QPSK": np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2),
    # row-major: index = 4 * row + col, I from the column, Q from the row
    "16QAM": np.array([i + 1j * q for q in _QAM16_LEVELS for i in _QAM16_LEVELS]),
}


class Classifier(str, Enum):
    MIN_DISTANCE = "min_distance"
    PERCEPTRON = "perceptron"


class DemodRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    constellation: str = "QPSK"
    count: Optional[StrictInt] = Field(default=None, ge=1)
    # explicit received symbols as [re, im] pairs
    symbols: Optional[List[Tuple[float, float]]] = None
    true_indices: Optional[List[StrictInt]] = None
    impairment: Optional[dict] = None
    noise_std: float = Field(default=0.0, ge=0)
    seed: StrictInt = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _shape(self):
        if self.constellation not in CONSTELLATIONS:
            raise ValueError(f"constellation must be one of {', '.join(CONSTELLATIONS)}")
        size = len(CONSTELLATIONS[self.constellation])
        if self.symbols is not None:
            if not self.symbols:
                raise ValueError("symbols must not be empty")
            if self.true_indices is None or len(self.true_indices) != len(self.symbols):
                raise ValueError("explicit symbols need one true index each")
            if self.count is not None and self.count != len(self.symbols):
                raise ValueError("count disagrees with the number of symbols")
        elif self.count is None and self.true_indices is None:
            raise ValueError("either count, true_indices or symbols is required")
        if self.true_indices is not None:
            if self.symbols is None and self.count is not None and self.count != len(self.true_indices):
                raise ValueError("count disagrees with true_indices")
            if any(not 0 <= i < size for i in self.true_indices):
                raise ValueError(f"true_indices must be within [0, {size})")
        return self


@dataclass(frozen=True)
class DemodResponse:
    decided_indices: List[int]
    symbol_error_rate: float
    mean_confidence: float

    def to_dict(self):
        return {
            "decided_indices": self.decided_indices,
            "symbol_error_rate": self.symbol_error_rate,
            "mean_confidence": self.mean_confidence,
        }


def nearest_point(received, points) -> Tuple[np.ndarray, np.ndarray]:
    """(decided index, confidence) per symbol. np.argmin keeps the first, i.e.
    lowest, index on ties."""
    received = np.asarray(received, dtype=np.complex128)
    d = np.abs(received[:, None] - points[None, :])
    decided = np.argmin(d, axis=1)
    ordered = np.sort(d, axis=1)
    d1, d2 = ordered[:, 0], ordered[:, 1]
    confidence = (d2 - d1) / (d2 + d1)
    return decided, confidence


class PerceptronClassifier:
    """Multi-class perceptron over (I, Q, 1) features"""

    def __init__(self, points, seed=0, samples_per_point=200, noise_std=0.2, epochs=20):
        rng = np.random.default_rng(seed)
        m = len(points)
        labels = np.repeat(np.arange(m), samples_per_point)
        noise = noise_std * (
            rng.standard_normal(len(labels)) + 1j * rng.standard_normal(len(labels))
        ) / math.sqrt(2)
        samples = points[labels] + noise
        features = self._features(samples)
        self.weights = np.zeros((m, 3))
        for _ in range(epochs):
            order = rng.permutation(len(labels))
            mistakes = 0
            for idx in order:
                x, y = features[idx], labels[idx]
                guess = int(np.argmax(self.weights @ x))
                if guess != y:
                    self.weights[y] += x
                    self.weights[guess] -= x
                    mistakes += 1
            if mistakes == 0:
                break
        logger.info(f"Perceptron trained on {len(labels)} samples of {m} points")

    @staticmethod
    def _features(samples):
        samples = np.asarray(samples, dtype=np.complex128)
        return np.stack([samples.real, samples.imag, np.ones(len(samples))], axis=1)

    def classify(self, received) -> Tuple[np.ndarray, np.ndarray]:
        scores = self._features(received) @ self.weights.T
        decided = np.argmax(scores, axis=1)
        ordered = np.sort(scores, axis=1)
        s1, s2 = ordered[:, -1], ordered[:, -2]
        spread = np.abs(s1) + np.abs(s2)
        confidence = np.where(spread > 0, (s1 - s2) / np.where(spread > 0, spread, 1), 0.0)
        return decided, confidence


def received_symbols(request: DemodRequest, session_impairment=None):
    """(true indices, received symbols) for a request. Generated symbols are
    drawn, impaired and then noised from one generator seeded by the request"""
    points = CONSTELLATIONS[request.constellation]
    rng = np.random.default_rng(request.seed)
    if request.symbols is not None:
        truth = np.asarray(request.true_indices)
        received = np.array([complex(re, im) for re, im in request.symbols])
    else:
        if request.true_indices is not None:
            truth = np.asarray(request.true_indices)
        else:
            truth = rng.integers(0, len(points), size=request.count)
        received = points[truth]

    spec = request.impairment if request.impairment is not None else session_impairment
    received = apply_impairment(received, Impairment.from_dict(spec), rng)
    if request.noise_std > 0:
        noise = rng.standard_normal(len(received)) + 1j * rng.standard_normal(len(received))
        received = received + request.noise_std * noise / math.sqrt(2)
    return truth, received


def demodulate(request: DemodRequest, classifier=None, session_impairment=None) -> DemodResponse:
    truth, received = received_symbols(request, session_impairment)
    if classifier is None:
        decided, confidence = nearest_point(received, CONSTELLATIONS[request.constellation])
    else:
        decided, confidence = classifier.classify(received)
    return DemodResponse(
        decided_indices=[int(i) for i in decided],
        symbol_error_rate=float(np.mean(decided != truth)),
        mean_confidence=float(np.mean(confidence)),
    )
