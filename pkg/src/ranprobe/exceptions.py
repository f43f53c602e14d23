"""Every error the framework raises derives from RanProbeError so callers (the
CLI in particular) can map failures onto exit codes without catching
unrelated exceptions."""


class RanProbeError(Exception):
    """Base class for all framework errors"""


# ---------------------------------------------------------------- documents
class ScriptSyntaxError(RanProbeError):
    """Malformed YAML document (scripts and configs)"""

    def __init__(self, message, body="", source="<document>", lnum=None, colno=None):
        self.source = source
        self.lnum = lnum
        self.colno = colno
        lines = body.splitlines()
        self.errline = (
            lines[lnum - 1] if lnum is not None and 0 < lnum <= len(lines) else ""
        )
        location = f"\nLine #: {lnum}\nCol Num #: {colno}" if lnum is not None else ""
        detail = f"\n----------\n\n{self.errline}" if self.errline else ""
        super().__init__(f"Unable to parse '{source}': {message}{location}{detail}")


class SchemaError(RanProbeError):
    """Document or message is well formed but does not match its schema"""

    def __init__(self, message, errors=None):
        self.errors = list(errors or [])
        if self.errors:
            message = message + "\n\t" + "\n\t".join(self.errors)
        super().__init__(message)


class ExpansionError(RanProbeError):
    """expand() was handed a script with integrity errors"""

    def __init__(self, findings):
        self.findings = list(findings)
        reasons = "; ".join(f.reason for f in self.findings)
        super().__init__(f"Script failed its integrity check: {reasons}")


class ConfigError(RanProbeError):
    """Invalid runtime or method configuration"""


# --------------------------------------------------------------------- wire
class EncodeError(RanProbeError):
    """Message cannot be serialized or exceeds the frame limit"""


class FrameError(RanProbeError):
    """Truncated or oversized frame"""


class UnsupportedVersion(SchemaError):
    def __init__(self, version, seq=None):
        self.version = version
        self.seq = seq
        super().__init__(f"Unsupported protocol version: {version!r}")


class ProtocolError(RanProbeError):
    """Peer broke the session contract (sequence order, unexpected message)"""


class HandshakeError(RanProbeError):
    def __init__(self, code, detail=""):
        self.code = code
        self.detail = detail
        super().__init__(f"Registration refused ({code}): {detail}")


class HandshakeTimeout(HandshakeError):
    def __init__(self, timeout):
        self.timeout = timeout
        super().__init__("TIMEOUT", f"no REGISTER_ACK within {timeout}s")


# ------------------------------------------------------------------- server
class RejectedError(RanProbeError):
    def __init__(self, run_id, reasons):
        self.run_id = run_id
        self.reasons = list(reasons)
        super().__init__(f"Run {run_id} rejected: " + "; ".join(self.reasons))


class UnknownRun(RanProbeError):
    def __init__(self, run_id):
        self.run_id = run_id
        super().__init__(f"Unknown run: '{run_id}'")


class PartialCollection(RanProbeError):
    """Some actors could not hand over their results. The record has still
    been persisted, flagged incomplete."""

    def __init__(self, missing_actor_ids, record=None):
        self.missing_actor_ids = sorted(missing_actor_ids)
        self.record = record
        super().__init__(
            "Results missing from actor(s): " + ", ".join(self.missing_actor_ids)
        )


# -------------------------------------------------------------------- actor
class AdapterError(RanProbeError):
    KINDS = ("timeout", "refused", "malformed", "remote", "unsupported")

    def __init__(self, kind, detail=""):
        assert kind in AdapterError.KINDS, kind
        self.kind = kind
        self.detail = detail
        super().__init__(f"Adapter {kind}: {detail}" if detail else f"Adapter {kind}")


# ------------------------------------------------------------------- aicore
class OracleError(RanProbeError):
    """The oracle failed mid-session; the partial trace is kept"""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class BudgetExhausted(RanProbeError):
    def __init__(self, budget):
        self.budget = budget
        super().__init__(f"Query budget of {budget} exhausted")


# ------------------------------------------------------------------- report
class StoreError(RanProbeError):
    """Run store I/O failure"""


class ConflictError(StoreError):
    def __init__(self, run_id):
        self.run_id = run_id
        super().__init__(f"Run '{run_id}' is already stored with different content")


class IncompleteRecord(RanProbeError):
    def __init__(self, run_id):
        self.run_id = run_id
        super().__init__(f"Run '{run_id}' is incomplete and cannot be replayed")


# ---------------------------------------------------------------------- sut
class BindError(RanProbeError):
    def __init__(self, endpoint, reason):
        self.endpoint = endpoint
        super().__init__(f"Unable to listen on {endpoint}: {reason}")
