import asyncio
import logging
from typing import Optional

from ..config import parse_endpoint
from ..exceptions import HandshakeError, HandshakeTimeout, ProtocolError
from .codec import read_message, write_message
from .messages import HealthSnapshot, MsgType, WireMessage

logger = logging.getLogger(__name__)


class Session:
    """One framed connection. Writes are serialized behind a lock and numbered
    with a per-connection counter; reads come from a single reader and must
    carry strictly increasing sequence numbers."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter, name=None):
        self.reader = reader
        self.writer = writer
        self.token: Optional[str] = None
        self.health_period: Optional[float] = None
        self._send_seq = 0
        self._recv_seq = -1
        self._lock = asyncio.Lock()
        if name is None:
            peer = writer.get_extra_info("peername")
            name = f"{peer[0]}:{peer[1]}" if peer else "<peer>"
        self.name = name

    async def send(self, msg_type: MsgType, payload=None, run_id=None) -> WireMessage:
        async with self._lock:
            self._send_seq += 1
            msg = WireMessage(
                msg_type=msg_type,
                seq=self._send_seq,
                payload=payload or {},
                run_id=run_id,
                token=self.token,
            )
            await write_message(self.writer, msg)
        return msg

    async def send_error(self, code, detail="", run_id=None, **extra):
        payload = {"code": code, "detail": detail}
        payload.update(extra)
        return await self.send(MsgType.ERROR, payload, run_id=run_id)

    async def recv(self) -> Optional[WireMessage]:
        msg = await read_message(self.reader)
        if msg is None:
            return None
        if msg.seq <= self._recv_seq:
            raise ProtocolError(
                f"{self.name} sent seq {msg.seq} after {self._recv_seq}; sequence must increase"
            )
        self._recv_seq = msg.seq
        return msg

    async def request(self, msg_type: MsgType, payload=None, run_id=None, timeout=None):
        """Send one message and wait for the next message from the peer"""
        await self.send(msg_type, payload, run_id=run_id)
        reply = await asyncio.wait_for(self.recv(), timeout)
        if reply is None:
            raise ConnectionResetError(f"{self.name} closed the connection")
        return reply

    @property
    def closed(self) -> bool:
        return self.writer.is_closing()

    async def close(self):
        if not self.writer.is_closing():
            self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


async def open_session(endpoint, timeout=None, name=None) -> Session:
    host, port = parse_endpoint(endpoint)
    reader, writer = await asyncio.wait_for(asyncio.open_connection(host, port), timeout)
    return Session(reader, writer, name=name or endpoint)


async def handshake(
    session: Session, actor_id: str, address: str, health: HealthSnapshot, timeout: float
) -> Session:
    """Register an actor over a fresh connection.

    On success the assigned token is kept on the session and carried by every
    later message. The server answers a duplicate id with DUPLICATE_ID and
    closes the connection."""
    await session.send(
        MsgType.REGISTER,
        {"actor_id": actor_id, "address": address, "health": health.to_dict()},
    )
    try:
        reply = await asyncio.wait_for(session.recv(), timeout)
    except asyncio.TimeoutError:
        raise HandshakeTimeout(timeout)
    if reply is None:
        raise HandshakeError("CLOSED", "server closed the connection during registration")
    if reply.msg_type == MsgType.ERROR:
        raise HandshakeError(reply.payload["code"], reply.payload.get("detail", ""))
    if reply.msg_type != MsgType.REGISTER_ACK:
        raise ProtocolError(f"expected REGISTER_ACK, got {reply.msg_type.value}")
    session.token = reply.payload["token"]
    session.health_period = reply.payload["health_period"]
    logger.info(f"Registered as '{actor_id}' with {session.name}")
    return session
