"""The server process: the actor listener, the local control listener and the
liveness sweeper, all on one event loop around an Orchestrator.

A protocol fault (bad frame, unknown message type, out of order sequence,
wrong token) ends the offending connection only. The actor behind it goes
OFFLINE and whatever was waiting on it becomes an ERROR verdict; other runs
and other connections are untouched."""

import asyncio
import logging
import time
from typing import List, Optional, Tuple

from ..config import DEFAULT_HEALTH_PERIOD, DEFAULT_SETUP_TIMEOUT, parse_endpoint
from ..exceptions import (
    BindError,
    FrameError,
    HandshakeError,
    ProtocolError,
    RanProbeError,
    RejectedError,
    SchemaError,
    UnknownRun,
    UnsupportedVersion,
)
from ..report import RunStore
from ..wire import ErrorCode, HealthSnapshot, MsgType, Session, WireMessage, open_session
from .orchestrator import DEFAULT_COLLECT_TIMEOUT, Orchestrator
from .registry import Registry

logger = logging.getLogger(__name__)

RUN_MESSAGES = (MsgType.STEP_STATUS, MsgType.STEP_RESULT, MsgType.TRACE_CHUNK, MsgType.COLLECT_DONE)


class Server:
    def __init__(
        self,
        store_root,
        health_period: float = DEFAULT_HEALTH_PERIOD,
        setup_timeout: float = DEFAULT_SETUP_TIMEOUT,
        collect_timeout: float = DEFAULT_COLLECT_TIMEOUT,
        clock=time.monotonic,
    ):
        self.registry = Registry(health_period, clock)
        self.store = RunStore(store_root)
        self.orchestrator = Orchestrator(
            self.registry, self.store, setup_timeout=setup_timeout, collect_timeout=collect_timeout, clock=clock
        )
        self.health_period = health_period
        self._listeners: List[asyncio.AbstractServer] = []
        self._tasks: List[asyncio.Task] = []

    async def _listen(self, handler, endpoint) -> str:
        host, port = parse_endpoint(endpoint)
        try:
            listener = await asyncio.start_server(handler, host, port)
        except OSError as e:
            raise BindError(endpoint, e.strerror or str(e))
        self._listeners.append(listener)
        bound = listener.sockets[0].getsockname()
        return f"{bound[0]}:{bound[1]}"

    async def start(self, actor_endpoint, control_endpoint) -> Tuple[str, str]:
        """Bind both listeners and start the background loops; returns the
        bound (actor, control) addresses"""
        actor_addr = await self._listen(self.handle_actor, actor_endpoint)
        control_addr = await self._listen(self.handle_control, control_endpoint)
        self._tasks.append(asyncio.create_task(self.orchestrator.scheduler_loop()))
        self._tasks.append(asyncio.create_task(self.sweeper()))
        logger.info(f"Server listening for actors on {actor_addr}, control on {control_addr}")
        return actor_addr, control_addr

    async def stop(self):
        for listener in self._listeners:
            listener.close()
        for task in self._tasks:
            task.cancel()
        await asyncio.gather(*self._tasks, return_exceptions=True)
        await self.orchestrator.shutdown()
        for desc in self.registry.actors.values():
            if desc.session is not None:
                await desc.session.close()
        for listener in self._listeners:
            await listener.wait_closed()
        self._listeners.clear()
        self._tasks.clear()

    async def sweeper(self):
        while True:
            await asyncio.sleep(self.health_period)
            sessions = {a: d.session for a, d in self.registry.actors.items()}
            for actor_id in self.registry.sweep():
                if sessions.get(actor_id) is not None:
                    await sessions[actor_id].close()
                self.orchestrator.on_actor_lost(actor_id)

    # --------------------------------------------------------------- actors
    async def _register(self, session: Session) -> Optional[str]:
        msg = await session.recv()
        if msg is None:
            return None
        if msg.msg_type != MsgType.REGISTER:
            await session.send_error(ErrorCode.NOT_REGISTERED, f"expected REGISTER, got {msg.msg_type.value}")
            return None
        actor_id = msg.payload["actor_id"]
        health = HealthSnapshot.from_dict(msg.payload["health"])
        try:
            desc = self.registry.register(actor_id, msg.payload["address"], health, session)
        except HandshakeError as e:
            logger.warning(f"Refusing registration from {session.name}: {e.detail}")
            await session.send_error(e.code, e.detail)
            return None
        await session.send(MsgType.REGISTER_ACK, {"token": desc.token, "health_period": self.health_period})
        self.orchestrator.wake()
        return actor_id

    async def handle_actor(self, reader, writer):
        session = Session(reader, writer)
        actor_id = None
        try:
            actor_id = await self._register(session)
            if actor_id is None:
                return
            desc = self.registry.get(actor_id)
            while True:
                msg = await session.recv()
                if msg is None:
                    break
                if msg.token != desc.token:
                    await session.send_error(ErrorCode.NOT_REGISTERED, "missing or stale token")
                    break
                self.registry.touch(actor_id)
                if msg.msg_type == MsgType.HEALTH_REPORT:
                    self.registry.heartbeat(actor_id, HealthSnapshot.from_dict(msg.payload["health"]))
                elif msg.msg_type in RUN_MESSAGES:
                    try:
                        self.orchestrator.on_actor_message(actor_id, msg)
                    except UnknownRun as e:
                        await session.send_error(ErrorCode.UNKNOWN_RUN, str(e), run_id=msg.run_id)
                elif msg.msg_type == MsgType.ERROR:
                    logger.warning(f"Actor '{actor_id}' reported {msg.payload['code']}: {msg.payload.get('detail', '')}")
                else:
                    await session.send_error(ErrorCode.BAD_REQUEST, f"unexpected {msg.msg_type.value}")
        except UnsupportedVersion as e:
            logger.warning(f"Dropping {actor_id or session.name}: {e}")
            await self._try_error(session, ErrorCode.UNSUPPORTED_VERSION, str(e))
        except SchemaError as e:
            logger.warning(f"Dropping {actor_id or session.name}: {e}")
            await self._try_error(session, ErrorCode.BAD_REQUEST, str(e))
        except (FrameError, ProtocolError) as e:
            logger.warning(f"Dropping {actor_id or session.name}: {e}")
            await self._try_error(session, ErrorCode.BAD_FRAME, str(e))
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            await session.close()
            if actor_id is not None:
                desc = self.registry.get(actor_id)
                if desc is not None and desc.session is session:
                    self.registry.mark_offline(actor_id, "connection closed")
                    self.orchestrator.on_actor_lost(actor_id)

    @staticmethod
    async def _try_error(session: Session, code, detail):
        try:
            await session.send_error(code, detail)
        except (ConnectionError, RuntimeError, OSError):
            pass

    # -------------------------------------------------------------- control
    def _status(self, run_id) -> dict:
        status = self._run_status(run_id)
        # where this server persists records, for clients on the same host
        status["store"] = str(self.store.root.resolve())
        return status

    def _run_status(self, run_id) -> dict:
        try:
            return self.orchestrator.run_status(run_id)
        except UnknownRun:
            # runs from an earlier server process only exist in the store
            record = self.store.load(run_id)
            return {
                "run_id": record.run_id,
                "phase": record.phase,
                "cursor": len(record.per_step),
                "steps": len(record.per_step),
                "verdicts": record.verdicts,
                "submitted_at": record.submitted_at,
                "finished_at": record.finished_at,
                "actors": sorted({a for a in record.step_actors if a}),
                "reasons": [],
                "actor_health": {},
            }

    def _list(self) -> List[dict]:
        runs = {r["run_id"]: r for r in self.orchestrator.list_runs()}
        for row in self.store.list_runs():
            if row["run_id"] not in runs:
                runs[row["run_id"]] = {
                    "run_id": row["run_id"],
                    "phase": row["phase"],
                    "cursor": row["steps"],
                    "steps": row["steps"],
                    "submitted_at": row["submitted_at"],
                }
        return [runs[r] for r in sorted(runs, reverse=True)]

    async def control_request(self, msg: WireMessage) -> dict:
        """REPLY payload for one control message"""
        payload = msg.payload
        run_id = payload.get("run_id", msg.run_id)
        if msg.msg_type == MsgType.SUBMIT:
            seed = payload.get("seed_override")
            return {"run_id": self.orchestrator.submit(payload["script"], payload["config"], seed)}
        if msg.msg_type == MsgType.STATUS:
            if run_id is None:
                return {"runs": self._list(), "actors": self.registry.snapshot()}
            return {"run": self._status(run_id)}
        if msg.msg_type == MsgType.LIST:
            return {"runs": self._list()}
        if msg.msg_type == MsgType.ABORT:
            if run_id is None:
                raise SchemaError("ABORT needs a run_id")
            phase = await self.orchestrator.abort(run_id)
            return {"run_id": run_id, "phase": phase.value}
        raise SchemaError(f"{msg.msg_type.value} is not a control message")

    async def handle_control(self, reader, writer):
        session = Session(reader, writer)
        try:
            while True:
                try:
                    msg = await session.recv()
                except UnsupportedVersion as e:
                    await session.send_error(ErrorCode.UNSUPPORTED_VERSION, str(e))
                    break
                except SchemaError as e:
                    await session.send_error(ErrorCode.BAD_REQUEST, str(e))
                    break
                if msg is None:
                    break
                try:
                    reply = await self.control_request(msg)
                except RejectedError as e:
                    await session.send_error(ErrorCode.REJECTED, str(e), run_id=e.run_id, reasons=e.reasons)
                except UnknownRun as e:
                    await session.send_error(ErrorCode.UNKNOWN_RUN, str(e), run_id=e.run_id)
                except SchemaError as e:
                    await session.send_error(ErrorCode.BAD_REQUEST, str(e))
                except Exception as e:
                    logger.exception(f"Control request {msg.msg_type.value} failed")
                    await session.send_error(ErrorCode.INTERNAL, str(e))
                else:
                    await session.send(MsgType.REPLY, reply, run_id=msg.run_id)
        except (FrameError, ProtocolError) as e:
            logger.warning(f"Dropping control connection {session.name}: {e}")
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            await session.close()


async def serve(
    actor_endpoint,
    control_endpoint,
    store_root,
    health_period=DEFAULT_HEALTH_PERIOD,
    setup_timeout=DEFAULT_SETUP_TIMEOUT,
):
    """Run the server until cancelled"""
    server = Server(store_root, health_period=health_period, setup_timeout=setup_timeout)
    await server.start(actor_endpoint, control_endpoint)
    try:
        await asyncio.Event().wait()
    finally:
        await server.stop()


async def control_call(endpoint, msg_type: MsgType, payload=None, timeout=10.0) -> dict:
    """One request on the control port. ERROR replies become the matching
    exception; connection failures propagate as OSError."""
    session = await open_session(endpoint, timeout=timeout, name="control")
    try:
        reply = await session.request(msg_type, payload or {}, timeout=timeout)
    finally:
        await session.close()
    if reply.msg_type == MsgType.ERROR:
        code = reply.payload["code"]
        detail = reply.payload.get("detail", "")
        if code == ErrorCode.REJECTED:
            raise RejectedError(reply.run_id, reply.payload.get("reasons", [detail]))
        if code == ErrorCode.UNKNOWN_RUN:
            raise UnknownRun(reply.run_id or (payload or {}).get("run_id"))
        raise RanProbeError(f"{code}: {detail}")
    return reply.payload
