from .codec import FrameDecoder, decode, decode_body, encode, read_message, write_message
from .messages import (
    MAX_FRAME,
    PROTOCOL_VERSION,
    ErrorCode,
    HealthSnapshot,
    MsgType,
    WireMessage,
)
from .session import Session, handshake, open_session

__all__ = [
    "MAX_FRAME",
    "PROTOCOL_VERSION",
    "ErrorCode",
    "FrameDecoder",
    "HealthSnapshot",
    "MsgType",
    "Session",
    "WireMessage",
    "decode",
    "decode_body",
    "encode",
    "handshake",
    "open_session",
    "read_message",
    "write_message",
]
