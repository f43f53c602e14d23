"""Black-box oracles over the SUT.

An oracle maps a point of a parameter space to a SUT response. The methods
never see the SUT itself: a transport `(op, args) -> result` delivers the
request, either in process or through an actor's adapter."""

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

from ..exceptions import OracleError
from ..utils import lookup_path, set_path

Transport = Callable[[str, dict], dict]
Oracle = Callable[[Dict[str, Any]], dict]


@dataclass(frozen=True)
class ScoreSpec:
    """Dotted field paths naming the scalars a method reads from a response"""

    score: Optional[str] = None
    decision: Optional[str] = None
    confidence: Optional[str] = None

    def _read(self, response, path, numeric=True):
        if path is None:
            return None
        try:
            value = lookup_path(response, path)
        except (KeyError, IndexError, ValueError):
            raise OracleError(f"response has no field '{path}'")
        if numeric:
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise OracleError(f"field '{path}' is not a finite number: {value!r}")
            return float(value)
        return value

    def extract(self, response) -> Tuple[Optional[float], Any, Optional[float]]:
        return (
            self._read(response, self.score),
            self._read(response, self.decision, numeric=False),
            self._read(response, self.confidence),
        )


def request_oracle(transport: Transport, op: str, base_request: dict) -> Oracle:
    """Each query substitutes its point into a copy of base_request"""

    def oracle(params):
        request = base_request
        for path, value in params.items():
            try:
                request = set_path(request, path, value)
            except (KeyError, ValueError):
                raise OracleError(f"'{path}' does not address a field of the '{op}' request")
        return transport(op, request)

    return oracle


def table_oracle(table: Dict[Any, float], key: Callable[[dict], Any], field: str = "reward") -> Oracle:
    """Oracle answering from a fixed table, for environments with known rewards"""

    def oracle(params):
        return {field: table[key(params)]}

    return oracle


def local_transport(service) -> Transport:
    """In-process transport straight into a SutService"""
    return service.handle
