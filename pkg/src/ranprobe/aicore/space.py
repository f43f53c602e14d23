"""Parameter spaces explored by the AI methods.

A dimension's name is a dotted path into the SUT request the oracle builds,
e.g. `impairment.cfo` or `ue_demands.0`."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Tuple

import numpy as np

from ..exceptions import ConfigError


class DimKind(str, Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    CATEGORICAL = "categorical"


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: DimKind
    lo: float = 0.0
    hi: float = 0.0
    values: Tuple[Any, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ConfigError("dimension name must not be empty")
        if self.kind == DimKind.CATEGORICAL:
            if not self.values:
                raise ConfigError(f"categorical dimension '{self.name}' has no values")
        elif not self.lo < self.hi:
            raise ConfigError(f"dimension '{self.name}' needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def from_dict(cls, data) -> "Dimension":
        if not isinstance(data, dict) or "name" not in data:
            raise ConfigError(f"space dimension must be a map with a name, not {data!r}")
        try:
            kind = DimKind(data.get("kind", "continuous"))
        except ValueError:
            raise ConfigError(f"unknown dimension kind {data.get('kind')!r}")
        allowed = {"name", "kind"} | ({"values"} if kind == DimKind.CATEGORICAL else {"lo", "hi"})
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"dimension '{data['name']}' has no field(s) {', '.join(sorted(unknown))}")
        if kind == DimKind.CATEGORICAL:
            values = data.get("values")
            if not isinstance(values, list):
                raise ConfigError(f"categorical dimension '{data['name']}' needs a values list")
            return cls(str(data["name"]), kind, values=tuple(values))
        lo, hi = data.get("lo"), data.get("hi")
        if not (_is_number(lo) and _is_number(hi)):
            raise ConfigError(f"dimension '{data['name']}' needs numeric lo and hi")
        if kind == DimKind.INTEGER and not (float(lo).is_integer() and float(hi).is_integer()):
            raise ConfigError(f"integer dimension '{data['name']}' needs integral bounds")
        return cls(str(data["name"]), kind, lo=lo, hi=hi)

    def to_dict(self):
        if self.kind == DimKind.CATEGORICAL:
            return {"name": self.name, "kind": self.kind.value, "values": list(self.values)}
        return {"name": self.name, "kind": self.kind.value, "lo": self.lo, "hi": self.hi}

    # Genes are floats: the value itself for numeric dims, the value index
    # for categorical ones.
    @property
    def gene_bounds(self) -> Tuple[float, float]:
        if self.kind == DimKind.CATEGORICAL:
            return 0.0, float(len(self.values) - 1)
        return float(self.lo), float(self.hi)

    @property
    def span(self) -> float:
        lo, hi = self.gene_bounds
        return hi - lo

    def contains(self, value) -> bool:
        if self.kind == DimKind.CATEGORICAL:
            return value in self.values
        if not _is_number(value):
            return False
        if self.kind == DimKind.INTEGER and not float(value).is_integer():
            return False
        return self.lo <= value <= self.hi

    def decode(self, gene: float):
        lo, hi = self.gene_bounds
        gene = min(max(float(gene), lo), hi)
        if self.kind == DimKind.CONTINUOUS:
            return gene
        index = int(math.floor(gene + 0.5))
        if self.kind == DimKind.INTEGER:
            return index
        return self.values[index]

    def encode(self, value) -> float:
        if not self.contains(value):
            raise ConfigError(f"{value!r} is outside dimension '{self.name}'")
        if self.kind == DimKind.CATEGORICAL:
            return float(self.values.index(value))
        return float(value)


@dataclass(frozen=True)
class ParameterSpace:
    dims: Tuple[Dimension, ...] = field(default_factory=tuple)

    def __post_init__(self):
        names = [d.name for d in self.dims]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"duplicate dimension name(s): {', '.join(dupes)}")

    @classmethod
    def from_list(cls, data) -> "ParameterSpace":
        if not isinstance(data, list):
            raise ConfigError("space must be a list of dimensions")
        return cls(tuple(Dimension.from_dict(d) for d in data))

    def to_list(self) -> List[dict]:
        return [d.to_dict() for d in self.dims]

    @property
    def names(self) -> List[str]:
        return [d.name for d in self.dims]

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, name) -> Dimension:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    def check_point(self, params: Dict[str, Any]):
        missing = [n for n in self.names if n not in params]
        if missing:
            raise ConfigError(f"point is missing dimension(s) {', '.join(missing)}")
        for d in self.dims:
            if not d.contains(params[d.name]):
                raise ConfigError(f"{params[d.name]!r} is outside dimension '{d.name}'")

    def decode(self, genome) -> Dict[str, Any]:
        return {d.name: d.decode(g) for d, g in zip(self.dims, genome)}

    def encode(self, params) -> np.ndarray:
        self.check_point(params)
        return np.array([d.encode(params[d.name]) for d in self.dims], dtype=float)

    def lower(self) -> np.ndarray:
        return np.array([d.gene_bounds[0] for d in self.dims])

    def upper(self) -> np.ndarray:
        return np.array([d.gene_bounds[1] for d in self.dims])

    def sample_genomes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower(), self.upper(), size=(n, len(self.dims)))
