"""Adapters through which an actor reaches the system under test.

The SIM adapter speaks SUT_REQUEST / SUT_RESPONSE to the SUT endpoint over
one lazily opened connection, one exchange at a time. The SDR adapter is the
extension point for radio hardware and refuses every call."""

import asyncio
import logging
import time
from typing import List, Optional, Tuple

from ..exceptions import AdapterError, FrameError, ProtocolError, SchemaError
from ..wire import MsgType, Session, open_session

logger = logging.getLogger(__name__)

DEFAULT_ADAPTER_TIMEOUT = 10.0


class Adapter:
    name = "adapter"

    async def call(self, op: str, args: dict, run_id: Optional[str] = None) -> Tuple[dict, float]:
        """(result, latency in ms) of one SUT operation"""
        raise NotImplementedError

    async def close(self):
        pass


class SimAdapter(Adapter):
    name = "sim"

    def __init__(self, endpoint: str, timeout: float = DEFAULT_ADAPTER_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout
        self.session: Optional[Session] = None
        # (op, latency_ms) of every completed exchange
        self.latencies: List[Tuple[str, float]] = []
        self._lock = asyncio.Lock()

    async def _connect(self) -> Session:
        if self.session is None or self.session.closed:
            try:
                self.session = await open_session(self.endpoint, timeout=self.timeout, name=f"sut@{self.endpoint}")
            except asyncio.TimeoutError:
                raise AdapterError("timeout", f"connecting to {self.endpoint}")
            except (ConnectionRefusedError, OSError) as e:
                raise AdapterError("refused", f"{self.endpoint}: {e.strerror or e}")
        return self.session

    async def _drop(self):
        if self.session is not None:
            await self.session.close()
            self.session = None

    async def call(self, op, args, run_id=None):
        async with self._lock:
            session = await self._connect()
            started = time.perf_counter()
            try:
                reply = await session.request(
                    MsgType.SUT_REQUEST, {"op": op, "args": args}, run_id=run_id, timeout=self.timeout
                )
            except asyncio.TimeoutError:
                await self._drop()
                raise AdapterError("timeout", f"no answer to '{op}' within {self.timeout}s")
            except (FrameError, SchemaError, ProtocolError) as e:
                await self._drop()
                raise AdapterError("malformed", str(e))
            except (ConnectionError, asyncio.IncompleteReadError, OSError) as e:
                await self._drop()
                raise AdapterError("refused", f"connection to {self.endpoint} lost: {e}")
            latency_ms = (time.perf_counter() - started) * 1000

        if reply.msg_type == MsgType.ERROR:
            raise AdapterError("remote", f"{reply.payload['code']}: {reply.payload.get('detail', '')}")
        if reply.msg_type != MsgType.SUT_RESPONSE or reply.payload["op"] != op:
            raise AdapterError("malformed", f"expected SUT_RESPONSE to '{op}', got {reply.msg_type.value}")
        self.latencies.append((op, latency_ms))
        return reply.payload["result"], latency_ms

    async def close(self):
        async with self._lock:
            await self._drop()


class SdrAdapter(Adapter):
    name = "sdr"

    async def call(self, op, args, run_id=None):
        raise AdapterError("unsupported", "SDR adapter not available")
