"""Actor runtime: dial the server, register, report health and execute the
steps the server dispatches, one at a time per run.

Traces produced by a step are streamed as TRACE_CHUNK messages before its
STEP_RESULT. What a run left behind (KPI samples, trace digests, adapter
latencies) is handed over on COLLECT and dropped on RUN_COMPLETE, when the
UE sessions the run opened on each SUT are released as well."""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional

from ..config import (
    DEFAULT_HEALTH_PERIOD,
    DEFAULT_STATUS_INTERVAL,
    DEFAULT_SUT_ADDR,
    parse_endpoint,
)
from ..exceptions import (
    AdapterError,
    ConfigError,
    FrameError,
    HandshakeError,
    HandshakeTimeout,
    ProtocolError,
    SchemaError,
)
from ..outcome import StepOutcome
from ..utils import canonical_json
from ..wire import HealthSnapshot, MsgType, Session, WireMessage, handshake, open_session
from .adapters import Adapter, SdrAdapter, SimAdapter
from .executor import RunScratch, StepContext, StepExecutor
from .health import HealthProbe, ProbeMode

logger = logging.getLogger(__name__)

# characters of canonical JSON per TRACE_CHUNK; stays far below the frame
# limit even when every character needs 4 bytes of UTF-8
TRACE_CHUNK_CHARS = 1024 * 1024

# failures of a dial or registration that end in another attempt
RETRYABLE = (OSError, asyncio.TimeoutError, asyncio.IncompleteReadError, FrameError, ProtocolError)


@dataclass(frozen=True)
class ActorRuntimeConfig:
    id: str
    server_address: str
    sut_endpoint: str = DEFAULT_SUT_ADDR
    health_period: float = DEFAULT_HEALTH_PERIOD
    probe_mode: ProbeMode = ProbeMode.SIMULATED
    snapshot: HealthSnapshot = field(default_factory=HealthSnapshot)
    # address advertised in REGISTER
    address: str = "127.0.0.1:0"
    status_interval: float = DEFAULT_STATUS_INTERVAL
    handshake_timeout: float = 10.0
    adapter_timeout: float = 10.0
    backoff_base: float = 1.0
    backoff_cap: float = 30.0

    def __post_init__(self):
        if not self.id:
            raise ConfigError("actor id must not be empty")
        if not self.health_period > 0:
            raise ConfigError("health_period must be > 0")
        for name in ("server_address", "sut_endpoint", "address"):
            try:
                parse_endpoint(getattr(self, name))
            except ValueError as e:
                raise ConfigError(f"{name}: {e}")


def backoff_delays(base: float, cap: float) -> Iterator[float]:
    """base, 2*base, 4*base, ... capped at cap"""
    delay = base
    while True:
        yield min(delay, cap)
        delay = min(delay * 2, cap)


class ActorRuntime:
    def __init__(self, config: ActorRuntimeConfig, sleep=asyncio.sleep):
        self.config = config
        self.probe = HealthProbe(config.probe_mode, config.snapshot)
        self.executor = StepExecutor(config.status_interval)
        self.runs: Dict[str, RunScratch] = {}
        self.active: Dict[str, asyncio.Task] = {}
        self.adapters: Dict[str, Adapter] = {}
        self.session: Optional[Session] = None
        self.registered = asyncio.Event()
        self._sleep = sleep

    # ------------------------------------------------------------ lifecycle
    async def run(self, max_attempts: Optional[int] = None):
        """Stay registered until cancelled, reconnecting with exponential
        backoff. The backoff starts over once a REGISTER_ACK arrives, and every
        lost session is followed by a delay before the next dial. A refused
        registration (e.g. DUPLICATE_ID) is fatal."""
        delays = backoff_delays(self.config.backoff_base, self.config.backoff_cap)
        attempts = 0
        try:
            while max_attempts is None or attempts < max_attempts:
                attempts += 1
                try:
                    session = await self.connect()
                except HandshakeError as e:
                    if e.code not in ("TIMEOUT", "CLOSED"):
                        raise
                    await self._back_off(next(delays), e)
                    continue
                except RETRYABLE as e:
                    await self._back_off(next(delays), e)
                    continue
                delays = backoff_delays(self.config.backoff_base, self.config.backoff_cap)
                await self.serve(session)
                await self._back_off(next(delays), "session ended")
        finally:
            await self.shutdown()

    async def _back_off(self, delay: float, reason):
        logger.warning(f"Server {self.config.server_address} unavailable ({reason}); retrying in {delay:.0f}s")
        await self._sleep(delay)

    async def connect(self) -> Session:
        session = await open_session(
            self.config.server_address, timeout=self.config.handshake_timeout, name="server"
        )
        try:
            await handshake(
                session,
                self.config.id,
                self.config.address,
                self.probe.probe(len(self.active)),
                self.config.handshake_timeout,
            )
        except (HandshakeError,) + RETRYABLE:
            await session.close()
            raise
        return session

    async def serve(self, session: Session):
        self.session = session
        self.registered.set()
        health = asyncio.create_task(self.health_loop(session))
        try:
            while True:
                msg = await session.recv()
                if msg is None:
                    logger.warning("Server closed the connection")
                    break
                await self.handle(msg)
        except (FrameError, ProtocolError, SchemaError) as e:
            logger.warning(f"Dropping server connection: {e}")
        except (ConnectionError, asyncio.IncompleteReadError):
            logger.warning("Lost the server connection")
        finally:
            self.registered.clear()
            health.cancel()
            for task in list(self.active.values()):
                task.cancel()
            await session.close()
            self.session = None

    async def shutdown(self):
        for adapter in self.adapters.values():
            await adapter.close()
        self.adapters.clear()

    async def health_loop(self, session: Session):
        period = session.health_period or self.config.health_period
        while True:
            await self._sleep(period)
            try:
                await session.send(MsgType.HEALTH_REPORT, {"health": self.probe.probe(len(self.active)).to_dict()})
            except (ConnectionError, RuntimeError) as e:
                logger.warning(f"Health report not sent: {e}")
                return

    # ------------------------------------------------------------- messages
    async def handle(self, msg: WireMessage):
        if msg.msg_type == MsgType.DISPATCH_STEP:
            await self._dispatch(msg)
        elif msg.msg_type == MsgType.ABORT:
            task = self.active.get(msg.run_id)
            if task is not None:
                logger.info(f"Aborting the step in flight for run {msg.run_id}")
                task.cancel()
                # the next DISPATCH_STEP for this run must find it idle
                await asyncio.wait({task})
                self.active.pop(msg.run_id, None)
        elif msg.msg_type == MsgType.COLLECT:
            await self._collect(msg)
        elif msg.msg_type == MsgType.RUN_COMPLETE:
            await self.release_run(msg.run_id)
        elif msg.msg_type == MsgType.ERROR:
            logger.warning(f"Server error {msg.payload['code']}: {msg.payload.get('detail', '')}")
        else:
            logger.warning(f"Ignoring unexpected {msg.msg_type.value} from the server")

    async def _dispatch(self, msg: WireMessage):
        step = msg.payload["step"]
        run_id = msg.run_id
        if run_id is None or run_id in self.active:
            detail = "no run id" if run_id is None else "a step of this run is already executing"
            outcome = StepOutcome.error(detail)
            await self.session.send(
                MsgType.STEP_RESULT, {"index": step.get("index", -1), "outcome": outcome.to_dict()}, run_id=run_id
            )
            return
        self.active[run_id] = asyncio.create_task(self._execute(msg))

    def adapter_for(self, mode: str, endpoint: str) -> Adapter:
        if mode == "SDR":
            return SdrAdapter()
        if endpoint not in self.adapters:
            self.adapters[endpoint] = SimAdapter(endpoint, timeout=self.config.adapter_timeout)
        return self.adapters[endpoint]

    async def _execute(self, msg: WireMessage):
        session = self.session
        run_id = msg.run_id
        step = msg.payload["step"]
        ctx = StepContext(
            run_id=run_id,
            index=step["index"],
            keyword=step["keyword"],
            params=step.get("params", {}),
            actor_id=self.config.id,
            run_seed=msg.payload.get("run_seed", 0),
        )
        scratch = self.runs.setdefault(run_id, RunScratch())
        adapter = self.adapter_for(
            msg.payload.get("mode", "SIM"), msg.payload.get("sut_endpoint") or self.config.sut_endpoint
        )
        if isinstance(adapter, SimAdapter):
            scratch.sut_endpoints.add(adapter.endpoint)

        async def on_status(ctx, elapsed_ms):
            await session.send(
                MsgType.STEP_STATUS, {"index": ctx.index, "elapsed_ms": elapsed_ms}, run_id=run_id
            )

        try:
            try:
                outcome = await self.executor.execute(ctx, scratch, adapter, on_status)
            except asyncio.CancelledError:
                outcome = StepOutcome.skipped("aborted")
                await asyncio.shield(self._report(session, run_id, ctx.index, outcome))
                raise
            await self._report(session, run_id, ctx.index, outcome)
        except (ConnectionError, RuntimeError) as e:
            logger.warning(f"Result of run {run_id} step {ctx.index} not delivered: {e}")
        finally:
            self.active.pop(run_id, None)

    async def _report(self, session, run_id, index, outcome: StepOutcome):
        scratch = self.runs.get(run_id)
        for digest in outcome.trace_digests:
            if scratch is not None and digest in scratch.traces:
                await self.stream_trace(session, run_id, scratch.traces[digest])
        await session.send(MsgType.STEP_RESULT, {"index": index, "outcome": outcome.to_dict()}, run_id=run_id)

    async def stream_trace(self, session: Session, run_id, doc: dict):
        data = canonical_json(doc)
        total = max(1, math.ceil(len(data) / TRACE_CHUNK_CHARS))
        for i in range(total):
            chunk = data[i * TRACE_CHUNK_CHARS : (i + 1) * TRACE_CHUNK_CHARS]
            await session.send(
                MsgType.TRACE_CHUNK,
                {"digest": doc["digest"], "index": i, "total": total, "data": chunk},
                run_id=run_id,
            )

    async def _collect(self, msg: WireMessage):
        scratch = self.runs.get(msg.run_id, RunScratch())
        for digest in msg.payload.get("resend", []):
            if digest in scratch.traces:
                await self.stream_trace(self.session, msg.run_id, scratch.traces[digest])
        await self.session.send(
            MsgType.COLLECT_DONE,
            {
                "kpi_samples": scratch.kpi_samples,
                "traces": sorted(scratch.traces),
                "latencies": scratch.latencies,
            },
            run_id=msg.run_id,
        )

    async def release_run(self, run_id):
        """Forget a finished run and drop its sessions on every SUT it used"""
        scratch = self.runs.pop(run_id, None)
        if scratch is None:
            return
        for endpoint in sorted(scratch.sut_endpoints):
            adapter = self.adapters.get(endpoint)
            if adapter is None:
                continue
            try:
                result, _ = await adapter.call("release", {"scope": run_id}, run_id=run_id)
            except AdapterError as e:
                logger.warning(f"SUT sessions of run {run_id} at {endpoint} not released: {e}")
                continue
            logger.debug(f"Released {result.get('released', 0)} SUT session(s) of run {run_id} at {endpoint}")
