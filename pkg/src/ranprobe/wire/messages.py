"""Message envelope shared by every connection in the framework: server <->
actor, CLI <-> server control port and SIM adapter <-> SUT."""

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

from ..exceptions import SchemaError, UnsupportedVersion

PROTOCOL_VERSION = 1
MAX_FRAME = 16 * 1024 * 1024
HEADER_SIZE = 4


class MsgType(str, Enum):
    REGISTER = "REGISTER"
    REGISTER_ACK = "REGISTER_ACK"
    HEALTH_REPORT = "HEALTH_REPORT"
    DISPATCH_STEP = "DISPATCH_STEP"
    STEP_STATUS = "STEP_STATUS"
    STEP_RESULT = "STEP_RESULT"
    RUN_COMPLETE = "RUN_COMPLETE"
    ABORT = "ABORT"
    SUT_REQUEST = "SUT_REQUEST"
    SUT_RESPONSE = "SUT_RESPONSE"
    ERROR = "ERROR"
    TRACE_CHUNK = "TRACE_CHUNK"
    COLLECT = "COLLECT"
    COLLECT_DONE = "COLLECT_DONE"
    # control port
    SUBMIT = "SUBMIT"
    STATUS = "STATUS"
    LIST = "LIST"
    REPLY = "REPLY"


class ErrorCode:
    UNSUPPORTED_VERSION = "UNSUPPORTED_VERSION"
    DUPLICATE_ID = "DUPLICATE_ID"
    BAD_REQUEST = "BAD_REQUEST"
    BAD_FRAME = "BAD_FRAME"
    NOT_REGISTERED = "NOT_REGISTERED"
    UNKNOWN_RUN = "UNKNOWN_RUN"
    REJECTED = "REJECTED"
    INTERNAL = "INTERNAL"


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


_CHECKS = {
    "str": lambda v: isinstance(v, str),
    "int": _is_int,
    "number": _is_number,
    "map": lambda v: isinstance(v, dict),
    "list": lambda v: isinstance(v, list),
}

# Required payload fields per message type. Additional fields are allowed.
PAYLOAD_FIELDS: Dict[MsgType, Dict[str, str]] = {
    MsgType.REGISTER: {"actor_id": "str", "address": "str", "health": "map"},
    MsgType.REGISTER_ACK: {"token": "str", "health_period": "number"},
    MsgType.HEALTH_REPORT: {"health": "map"},
    MsgType.DISPATCH_STEP: {"step": "map"},
    MsgType.STEP_STATUS: {"index": "int"},
    MsgType.STEP_RESULT: {"index": "int", "outcome": "map"},
    MsgType.RUN_COMPLETE: {"phase": "str"},
    MsgType.ABORT: {},
    MsgType.SUT_REQUEST: {"op": "str", "args": "map"},
    MsgType.SUT_RESPONSE: {"op": "str", "result": "map"},
    MsgType.ERROR: {"code": "str"},
    MsgType.TRACE_CHUNK: {"digest": "str", "index": "int", "total": "int", "data": "str"},
    MsgType.COLLECT: {},
    MsgType.COLLECT_DONE: {"kpi_samples": "list", "traces": "list"},
    MsgType.SUBMIT: {"script": "str", "config": "str"},
    MsgType.STATUS: {},
    MsgType.LIST: {},
    MsgType.REPLY: {},
}

_BODY_KEYS = {"version", "msg_type", "seq", "payload"}
_OPTIONAL_KEYS = {"run_id", "token"}


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    seq: int
    payload: Dict = field(default_factory=dict)
    run_id: Optional[str] = None
    token: Optional[str] = None
    version: int = PROTOCOL_VERSION

    def to_body(self):
        body = {
            "version": self.version,
            "msg_type": self.msg_type.value,
            "seq": self.seq,
            "payload": self.payload,
        }
        if self.run_id is not None:
            body["run_id"] = self.run_id
        if self.token is not None:
            body["token"] = self.token
        return body

    @classmethod
    def from_body(cls, body) -> "WireMessage":
        if not isinstance(body, dict):
            raise SchemaError("Message body must be an object")
        seq = body.get("seq")
        # Version is checked first so that a peer speaking a newer protocol
        # gets UNSUPPORTED_VERSION rather than a schema complaint
        version = body.get("version", PROTOCOL_VERSION)
        if not _is_int(version) or version != PROTOCOL_VERSION:
            raise UnsupportedVersion(version, seq if _is_int(seq) else None)

        missing = _BODY_KEYS - set(body)
        unknown = set(body) - _BODY_KEYS - _OPTIONAL_KEYS
        errors = [f"field '{k}' is required" for k in sorted(missing)]
        errors += [f"field '{k}' is not allowed" for k in sorted(unknown)]
        if errors:
            raise SchemaError("Malformed message body", errors)

        try:
            msg_type = MsgType(body["msg_type"])
        except ValueError:
            raise SchemaError(f"Unknown msg_type {body['msg_type']!r}")
        if not _is_int(seq) or seq < 0:
            raise SchemaError(f"seq must be a non-negative integer, not {seq!r}")
        for key in _OPTIONAL_KEYS:
            if key in body and not isinstance(body[key], str):
                raise SchemaError(f"{key} must be a string")

        payload = body["payload"]
        if not isinstance(payload, dict):
            raise SchemaError(f"{msg_type.value} payload must be an object")
        problems = []
        for name, kind in PAYLOAD_FIELDS[msg_type].items():
            if name not in payload:
                problems.append(f"payload field '{name}' is required")
            elif not _CHECKS[kind](payload[name]):
                problems.append(f"payload field '{name}' must be {kind}")
        if problems:
            raise SchemaError(f"Bad {msg_type.value} payload", problems)

        return cls(
            msg_type=msg_type,
            seq=seq,
            payload=payload,
            run_id=body.get("run_id"),
            token=body.get("token"),
        )


@dataclass(frozen=True)
class HealthSnapshot:
    cpu_pct: float = 0.0
    mem_pct: float = 0.0
    disk_pct: float = 0.0
    hardware_ok: bool = True
    active_steps: int = 0
    timestamp: int = 0

    def __post_init__(self):
        for name in ("cpu_pct", "mem_pct", "disk_pct"):
            value = getattr(self, name)
            if not _is_number(value) or not 0 <= value <= 100:
                raise SchemaError(f"health {name} must be within [0, 100], not {value!r}")
        if not _is_int(self.active_steps) or self.active_steps < 0:
            raise SchemaError("health active_steps must be a non-negative integer")
        if not isinstance(self.hardware_ok, bool):
            raise SchemaError("health hardware_ok must be a boolean")

    def stamped(self, timestamp=None) -> "HealthSnapshot":
        return HealthSnapshot(
            cpu_pct=self.cpu_pct,
            mem_pct=self.mem_pct,
            disk_pct=self.disk_pct,
            hardware_ok=self.hardware_ok,
            active_steps=self.active_steps,
            timestamp=int(time.time() * 1000) if timestamp is None else timestamp,
        )

    def with_active_steps(self, active_steps) -> "HealthSnapshot":
        return HealthSnapshot(
            cpu_pct=self.cpu_pct,
            mem_pct=self.mem_pct,
            disk_pct=self.disk_pct,
            hardware_ok=self.hardware_ok,
            active_steps=active_steps,
            timestamp=self.timestamp,
        )

    def to_dict(self):
        return {
            "cpu_pct": float(self.cpu_pct),
            "mem_pct": float(self.mem_pct),
            "disk_pct": float(self.disk_pct),
            "hardware_ok": self.hardware_ok,
            "active_steps": self.active_steps,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data) -> "HealthSnapshot":
        known = {"cpu_pct", "mem_pct", "disk_pct", "hardware_ok", "active_steps", "timestamp"}
        if not isinstance(data, dict) or not known.issuperset(data):
            raise SchemaError(f"Malformed health snapshot: {data!r}")
        return cls(**data)
