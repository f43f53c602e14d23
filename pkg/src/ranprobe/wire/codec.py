"""Framing: 4 byte big-endian body length followed by the canonical JSON body."""

import asyncio
import json
import logging
import struct
from typing import List, Optional

from ..exceptions import EncodeError, FrameError, SchemaError
from ..utils import canonical_bytes
from .messages import HEADER_SIZE, MAX_FRAME, WireMessage

logger = logging.getLogger(__name__)

_HEADER = struct.Struct(">I")


def encode(msg: WireMessage) -> bytes:
    try:
        body = canonical_bytes(msg.to_body())
    except (TypeError, ValueError) as e:
        raise EncodeError(f"{msg.msg_type.value} payload is not serializable: {e}")
    if len(body) > MAX_FRAME:
        raise EncodeError(f"{msg.msg_type.value} body of {len(body)} bytes exceeds {MAX_FRAME}")
    return _HEADER.pack(len(body)) + body


def decode_body(body: bytes) -> WireMessage:
    try:
        data = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise SchemaError(f"Message body is not valid JSON: {e}")
    return WireMessage.from_body(data)


def decode(data: bytes) -> WireMessage:
    """Decode exactly one complete frame"""
    if len(data) < HEADER_SIZE:
        raise FrameError(f"truncated header ({len(data)} bytes)")
    (length,) = _HEADER.unpack_from(data)
    if length > MAX_FRAME:
        raise FrameError(f"frame of {length} bytes exceeds {MAX_FRAME}")
    body = data[HEADER_SIZE:]
    if len(body) < length:
        raise FrameError(f"truncated frame: header says {length}, {len(body)} bytes follow")
    if len(body) > length:
        raise FrameError(f"{len(body) - length} trailing bytes after frame")
    return decode_body(body)


class FrameDecoder:
    """Incremental decoder for a byte stream split at arbitrary boundaries"""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, chunk: bytes) -> List[WireMessage]:
        self._buffer.extend(chunk)
        messages = []
        while len(self._buffer) >= HEADER_SIZE:
            (length,) = _HEADER.unpack_from(self._buffer)
            if length > MAX_FRAME:
                raise FrameError(f"frame of {length} bytes exceeds {MAX_FRAME}")
            end = HEADER_SIZE + length
            if len(self._buffer) < end:
                break
            body = bytes(self._buffer[HEADER_SIZE:end])
            del self._buffer[:end]
            messages.append(decode_body(body))
        return messages

    @property
    def pending(self) -> int:
        return len(self._buffer)

    def close(self):
        """Signal end of stream; leftover bytes mean the peer hung up mid frame"""
        if self._buffer:
            raise FrameError(f"connection closed with {len(self._buffer)} bytes of a partial frame")


async def read_message(reader: asyncio.StreamReader) -> Optional[WireMessage]:
    """Next message from the stream, or None on a clean end of stream"""
    try:
        header = await reader.readexactly(HEADER_SIZE)
    except asyncio.IncompleteReadError as e:
        if not e.partial:
            return None
        raise FrameError(f"truncated header ({len(e.partial)} bytes)")
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise FrameError(f"frame of {length} bytes exceeds {MAX_FRAME}")
    try:
        body = await reader.readexactly(length)
    except asyncio.IncompleteReadError as e:
        raise FrameError(f"truncated frame: header says {length}, {len(e.partial)} bytes follow")
    return decode_body(body)


async def write_message(writer: asyncio.StreamWriter, msg: WireMessage):
    writer.write(encode(msg))
    await writer.drain()
