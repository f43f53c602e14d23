"""The SUT endpoint: answers SUT_REQUEST frames with SUT_RESPONSE frames.

Besides the stateless `schedule` and `demodulate` operations it keeps UE
sessions for the scheduler workflow (attach, traffic, cell_schedule, kpi,
impair, detach, release). Sessions are namespaced by a caller supplied scope
so that concurrent runs against one SUT never see each other's cells."""

import asyncio
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

from ..aicore.impairment import Impairment
from ..config import parse_endpoint
from ..exceptions import (
    BindError,
    ConfigError,
    FrameError,
    ProtocolError,
    SchemaError,
    UnsupportedVersion,
)
from ..script.parser import format_validation_errors
from ..wire import ErrorCode, MsgType, Session
from .demod import CONSTELLATIONS, Classifier, DemodRequest, PerceptronClassifier, demodulate
from .scheduler import SchedulerRequest, schedule

logger = logging.getLogger(__name__)

SUT_VERSION = "ranprobe-sut/1"
DEFAULT_CELL = "cell-0"

Observer = Callable[[str, dict, dict], None]


@dataclass
class UeSession:
    session: str
    ue: str
    cell: str
    priority: float
    demand: int = 0
    impairment: Optional[dict] = None
    last_kpi: Optional[dict] = None


@dataclass
class SutState:
    sessions: Dict[tuple, UeSession] = field(default_factory=dict)
    # (scope, cell) -> session ids in attach order
    cells: Dict[tuple, List[str]] = field(default_factory=dict)


def _require(args, name, kind, default=None):
    if name not in args:
        if default is not None:
            return default
        raise SchemaError(f"argument '{name}' is required")
    value = args[name]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaError(f"argument '{name}' must be {kind.__name__}")
    return value


class SutService:
    def __init__(self, classifier=Classifier.MIN_DISTANCE, classifier_seed=0):
        self.state = SutState()
        self.observers: List[Observer] = []
        self.classifier = Classifier(classifier)
        self._classifiers = {}
        if self.classifier == Classifier.PERCEPTRON:
            for name, points in CONSTELLATIONS.items():
                self._classifiers[name] = PerceptronClassifier(points, seed=classifier_seed)
        self._ops = {
            "schedule": self._schedule,
            "demodulate": self._demodulate,
            "attach": self._attach,
            "detach": self._detach,
            "traffic": self._traffic,
            "cell_schedule": self._cell_schedule,
            "kpi": self._kpi,
            "impair": self._impair,
            "release": self._release,
        }

    def add_observer(self, observer: Observer):
        """White-box hook: observer(op, args, result) after every answered request"""
        self.observers.append(observer)

    # ------------------------------------------------------------ dispatch
    def handle(self, op, args) -> dict:
        if op not in self._ops:
            raise SchemaError(f"unknown op '{op}'")
        try:
            result = self._ops[op](args)
        except ValidationError as e:
            raise SchemaError(f"bad '{op}' request", format_validation_errors(e))
        except ConfigError as e:
            raise SchemaError(f"bad '{op}' request: {e}")
        result["sut_version"] = SUT_VERSION
        for observer in self.observers:
            try:
                observer(op, args, result)
            except Exception:
                logger.exception(f"Observer failed on '{op}'")
        return result

    def _session(self, args) -> UeSession:
        scope = _require(args, "scope", str, "")
        session_id = _require(args, "session", str)
        try:
            return self.state.sessions[(scope, session_id)]
        except KeyError:
            raise SchemaError(f"no attached session '{session_id}'")

    # ----------------------------------------------------------- stateless
    def _schedule(self, args):
        return schedule(SchedulerRequest.model_validate(args)).to_dict()

    def _demodulate(self, args):
        args = dict(args)
        session_impairment = None
        if "session" in args:
            session_impairment = self._session(args).impairment
        args.pop("session", None)
        args.pop("scope", None)
        request = DemodRequest.model_validate(args)
        classifier = self._classifiers.get(request.constellation)
        return demodulate(request, classifier, session_impairment).to_dict()

    # ------------------------------------------------------------ sessions
    def _attach(self, args):
        scope = _require(args, "scope", str, "")
        session_id = _require(args, "session", str)
        ue = _require(args, "ue", str)
        cell = _require(args, "cell", str, DEFAULT_CELL)
        priority = _require(args, "priority", float, 1.0)
        if not priority > 0:
            raise SchemaError("priority must be positive")
        if (scope, session_id) in self.state.sessions:
            raise SchemaError(f"session '{session_id}' is already attached")
        members = self.state.cells.setdefault((scope, cell), [])
        for other in members:
            if self.state.sessions[(scope, other)].ue == ue:
                raise SchemaError(f"UE '{ue}' is already attached to {cell}")
        self.state.sessions[(scope, session_id)] = UeSession(session_id, ue, cell, float(priority))
        members.append(session_id)
        logger.debug(f"attach {ue} -> {cell} ({session_id})")
        return {"session": session_id, "ue": ue, "cell": cell, "attached_ues": len(members)}

    def _detach(self, args):
        ue = self._session(args)
        scope = args.get("scope", "")
        del self.state.sessions[(scope, ue.session)]
        members = self.state.cells[(scope, ue.cell)]
        members.remove(ue.session)
        if not members:
            del self.state.cells[(scope, ue.cell)]
        return {"session": ue.session, "ue": ue.ue, "detached": True}

    def _release(self, args):
        """Drops every session and cell of a scope; the actor sends this when a run ends"""
        scope = _require(args, "scope", str)
        stale = [key for key in self.state.sessions if key[0] == scope]
        for key in stale:
            del self.state.sessions[key]
        for key in [key for key in self.state.cells if key[0] == scope]:
            del self.state.cells[key]
        if stale:
            logger.debug(f"released {len(stale)} session(s) of scope {scope}")
        return {"scope": scope, "released": len(stale)}

    def _traffic(self, args):
        ue = self._session(args)
        demand = _require(args, "demand", int)
        if demand < 1:
            raise SchemaError("demand must be a positive PRB count")
        ue.demand = demand
        return {"session": ue.session, "ue": ue.ue, "demand": demand}

    def _impair(self, args):
        ue = self._session(args)
        spec = _require(args, "impairment", dict)
        ue.impairment = Impairment.from_dict(spec).to_dict()
        return {"session": ue.session, "impairment": ue.impairment}

    def _cell_schedule(self, args):
        """One scheduler episode over every loaded UE of the caller's cell"""
        ue = self._session(args)
        scope = args.get("scope", "")
        members = [self.state.sessions[(scope, s)] for s in self.state.cells[(scope, ue.cell)]]
        loaded = [m for m in members if m.demand > 0]
        if not loaded:
            raise SchemaError(f"no UE in {ue.cell} has traffic")
        request = SchedulerRequest(
            ue_demands=[m.demand for m in loaded],
            priorities=[m.priority for m in loaded],
            capacity=_require(args, "capacity", int),
            tti_count=_require(args, "tti_count", int),
        )
        result = schedule(request)
        for m, kpi in zip(loaded, result.kpi):
            m.last_kpi = kpi.to_dict()
        out = result.to_dict()
        out["cell"] = ue.cell
        out["ues"] = [m.ue for m in loaded]
        return out

    def _kpi(self, args):
        ue = self._session(args)
        if ue.last_kpi is None:
            raise SchemaError(f"UE '{ue.ue}' has not been scheduled yet")
        return {"ue": ue.ue, "cell": ue.cell, "kpi": dict(ue.last_kpi)}

    # --------------------------------------------------------------- serve
    async def handle_connection(self, reader, writer):
        session = Session(reader, writer)
        logger.debug(f"SUT connection from {session.name}")
        try:
            while True:
                try:
                    msg = await session.recv()
                except UnsupportedVersion as e:
                    await session.send_error(ErrorCode.UNSUPPORTED_VERSION, str(e))
                    continue
                except SchemaError as e:
                    await session.send_error(ErrorCode.BAD_REQUEST, str(e))
                    continue
                if msg is None:
                    break
                if msg.msg_type != MsgType.SUT_REQUEST:
                    await session.send_error(
                        ErrorCode.BAD_REQUEST, f"expected SUT_REQUEST, got {msg.msg_type.value}"
                    )
                    continue
                op = msg.payload["op"]
                try:
                    result = self.handle(op, msg.payload["args"])
                except SchemaError as e:
                    await session.send_error(ErrorCode.BAD_REQUEST, str(e), op=op)
                    continue
                except Exception as e:
                    logger.exception(f"SUT op '{op}' failed")
                    await session.send_error(ErrorCode.INTERNAL, str(e), op=op)
                    continue
                await session.send(MsgType.SUT_RESPONSE, {"op": op, "result": result}, run_id=msg.run_id)
        except (FrameError, ProtocolError) as e:
            logger.warning(f"Dropping SUT connection {session.name}: {e}")
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            await session.close()

    async def start(self, endpoint) -> asyncio.AbstractServer:
        host, port = parse_endpoint(endpoint)
        try:
            server = await asyncio.start_server(self.handle_connection, host, port)
        except OSError as e:
            raise BindError(endpoint, e.strerror or str(e))
        bound = server.sockets[0].getsockname()
        logger.info(f"SUT {SUT_VERSION} listening on {bound[0]}:{bound[1]}")
        return server


async def serve(endpoint, classifier=Classifier.MIN_DISTANCE):
    """Run the SUT until cancelled"""
    service = SutService(classifier=classifier)
    server = await service.start(endpoint)
    async with server:
        await server.serve_forever()
