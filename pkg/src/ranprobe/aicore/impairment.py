"""Channel impairments applied to complex baseband symbols."""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..exceptions import ConfigError


class ImpairmentKind(str, Enum):
    NONE = "none"
    CFO = "cfo"
    IQ_IMBALANCE = "iq_imbalance"
    INTERFERENCE = "interference"


class CfoMode(str, Enum):
    PER_SYMBOL = "per_symbol"
    BLOCK = "block"


class Tail(str, Enum):
    GAUSSIAN = "gaussian"
    HEAVY_TAIL = "heavy_tail"


# Student-t degrees of freedom for heavy tailed interference
HEAVY_TAIL_DF = 3

_FIELDS = {
    ImpairmentKind.NONE: set(),
    ImpairmentKind.CFO: {"cfo", "mode"},
    ImpairmentKind.IQ_IMBALANCE: {"gain_db", "phase_deg"},
    ImpairmentKind.INTERFERENCE: {"power", "tail"},
}


@dataclass(frozen=True)
class Impairment:
    kind: ImpairmentKind = ImpairmentKind.NONE
    cfo: float = 0.0
    mode: CfoMode = CfoMode.PER_SYMBOL
    gain_db: float = 0.0
    phase_deg: float = 0.0
    power: float = 0.0
    tail: Tail = Tail.GAUSSIAN

    def __post_init__(self):
        if not -math.pi <= self.cfo <= math.pi:
            raise ConfigError(f"cfo must be within [-pi, pi] rad/symbol, not {self.cfo}")
        if not -6 <= self.gain_db <= 6:
            raise ConfigError(f"gain_db must be within [-6, 6], not {self.gain_db}")
        if self.power < 0:
            raise ConfigError(f"interference power must be >= 0, not {self.power}")

    @classmethod
    def from_dict(cls, data) -> "Impairment":
        if data is None:
            return cls()
        if not isinstance(data, dict):
            raise ConfigError(f"impairment must be a map, not {data!r}")
        try:
            kind = ImpairmentKind(data.get("kind", "none"))
        except ValueError:
            raise ConfigError(f"unknown impairment kind {data.get('kind')!r}")
        unknown = set(data) - {"kind"} - _FIELDS[kind]
        if unknown:
            raise ConfigError(f"{kind.value} impairment has no field(s) {', '.join(sorted(unknown))}")
        try:
            return cls(
                kind=kind,
                cfo=float(data.get("cfo", 0.0)),
                mode=CfoMode(data.get("mode", CfoMode.PER_SYMBOL.value)),
                gain_db=float(data.get("gain_db", 0.0)),
                phase_deg=float(data.get("phase_deg", 0.0)),
                power=float(data.get("power", 0.0)),
                tail=Tail(data.get("tail", Tail.GAUSSIAN.value)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad {kind.value} impairment: {e}")

    def to_dict(self):
        doc = {"kind": self.kind.value}
        if self.kind == ImpairmentKind.CFO:
            doc.update(cfo=self.cfo, mode=self.mode.value)
        elif self.kind == ImpairmentKind.IQ_IMBALANCE:
            doc.update(gain_db=self.gain_db, phase_deg=self.phase_deg)
        elif self.kind == ImpairmentKind.INTERFERENCE:
            doc.update(power=self.power, tail=self.tail.value)
        return doc


def apply_impairment(symbols, imp: Impairment, rng: np.random.Generator = None) -> np.ndarray:
    """Impaired copy of a complex symbol sequence; output length equals input
    length. Only interference draws from rng."""
    x = np.asarray(symbols, dtype=np.complex128).copy()

    if imp.kind == ImpairmentKind.CFO:
        if imp.cfo == 0:
            return x
        if imp.mode == CfoMode.BLOCK:
            return x * np.exp(1j * imp.cfo)
        k = np.arange(len(x))
        return x * np.exp(1j * imp.cfo * k)

    if imp.kind == ImpairmentKind.IQ_IMBALANCE:
        g = 10 ** (imp.gain_db / 20)
        phi = math.radians(imp.phase_deg)
        i, q = x.real, x.imag
        return i + 1j * (g * (q * math.cos(phi) - i * math.sin(phi)))

    if imp.kind == ImpairmentKind.INTERFERENCE:
        if imp.power == 0 or len(x) == 0:
            return x
        if rng is None:
            raise ConfigError("interference needs a random generator")
        scale = math.sqrt(imp.power / 2)
        if imp.tail == Tail.GAUSSIAN:
            noise = rng.standard_normal(len(x)) + 1j * rng.standard_normal(len(x))
        else:
            # unit variance per component
            norm = math.sqrt(HEAVY_TAIL_DF / (HEAVY_TAIL_DF - 2))
            noise = (
                rng.standard_t(HEAVY_TAIL_DF, len(x)) + 1j * rng.standard_t(HEAVY_TAIL_DF, len(x))
            ) / norm
        return x + scale * noise

    return x
