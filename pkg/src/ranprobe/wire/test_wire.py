import asyncio
import struct

import pytest

from ranprobe.exceptions import (
    EncodeError,
    FrameError,
    HandshakeError,
    HandshakeTimeout,
    ProtocolError,
    SchemaError,
    UnsupportedVersion,
)
from ranprobe.utils import canonical_bytes
from ranprobe.wire import (
    MAX_FRAME,
    FrameDecoder,
    HealthSnapshot,
    MsgType,
    Session,
    WireMessage,
    decode,
    encode,
    handshake,
    open_session,
    read_message,
)
from ranprobe.wire.messages import PAYLOAD_FIELDS

GOLDEN_REGISTER = WireMessage(
    msg_type=MsgType.REGISTER,
    seq=1,
    payload={
        "actor_id": "a1",
        "address": "127.0.0.1:7101",
        "health": HealthSnapshot(
            cpu_pct=50.0, mem_pct=40.0, disk_pct=30.0, timestamp=1700000000000
        ).to_dict(),
    },
)


def frame_of(body: dict) -> bytes:
    raw = canonical_bytes(body)
    return struct.pack(">I", len(raw)) + raw


def random_value(rng, depth=0):
    kind = int(rng.integers(0, 6 if depth < 2 else 4))
    if kind == 0:
        return int(rng.integers(-(2**40), 2**40))
    if kind == 1:
        return float(rng.normal())
    if kind == 2:
        return "".join(chr(int(c)) for c in rng.integers(32, 0x3000, size=int(rng.integers(0, 12))))
    if kind == 3:
        return bool(rng.integers(0, 2))
    if kind == 4:
        return [random_value(rng, depth + 1) for _ in range(int(rng.integers(0, 4)))]
    return {f"k{i}": random_value(rng, depth + 1) for i in range(int(rng.integers(0, 4)))}


FIELD_VALUES = {
    "str": lambda rng: f"s{int(rng.integers(0, 1000))}",
    "int": lambda rng: int(rng.integers(0, 10**6)),
    "number": lambda rng: float(rng.uniform(0, 10)),
    "map": lambda rng: {"x": random_value(rng, 1)},
    "list": lambda rng: [random_value(rng, 1)],
}


def random_message(rng, seq):
    msg_type = list(MsgType)[int(rng.integers(0, len(MsgType)))]
    payload = {name: FIELD_VALUES[kind](rng) for name, kind in PAYLOAD_FIELDS[msg_type].items()}
    payload["extra"] = random_value(rng)
    run_id = f"run-{int(rng.integers(0, 99))}" if rng.random() < 0.5 else None
    token = "tok" if rng.random() < 0.3 else None
    return WireMessage(msg_type=msg_type, seq=seq, payload=payload, run_id=run_id, token=token)


def test_length_prefix_is_body_length():
    data = encode(GOLDEN_REGISTER)
    assert data[:4] == bytes([0x00, 0x00, 0x00, 0xD9])
    assert len(data) == 4 + 0xD9


def test_golden_register_frame(example_dir):
    golden = (example_dir / "golden" / "register.frame").read_bytes()
    assert encode(GOLDEN_REGISTER) == golden
    assert decode(golden) == GOLDEN_REGISTER


def test_encode_is_deterministic():
    a = WireMessage(MsgType.REPLY, 3, {"b": 1, "a": [1, 2], "c": {"z": 0, "y": 1}})
    b = WireMessage(MsgType.REPLY, 3, {"c": {"y": 1, "z": 0}, "a": [1, 2], "b": 1})
    assert encode(a) == encode(b)


def test_round_trip_random_messages(rng):
    for seq in range(1, 501):
        msg = random_message(rng, seq)
        assert decode(encode(msg)) == msg


def test_chunked_streams_decode_in_order(rng):
    """10^4 messages, split into streams that are cut at random places"""
    total = 0
    for _ in range(200):
        messages = [random_message(rng, seq) for seq in range(1, 51)]
        stream = b"".join(encode(m) for m in messages)
        cuts = sorted(set(int(c) for c in rng.integers(0, len(stream), size=int(rng.integers(0, 40)))))
        decoder = FrameDecoder()
        received = []
        start = 0
        for cut in cuts + [len(stream)]:
            received.extend(decoder.feed(stream[start:cut]))
            start = cut
        decoder.close()
        assert received == messages
        total += len(received)
    assert total == 10_000


def test_unknown_msg_type():
    body = GOLDEN_REGISTER.to_body()
    body["msg_type"] = "PING"
    with pytest.raises(SchemaError):
        decode(frame_of(body))


def test_bad_payload_for_type():
    body = GOLDEN_REGISTER.to_body()
    del body["payload"]["actor_id"]
    with pytest.raises(SchemaError):
        decode(frame_of(body))


def test_version_two_is_unsupported():
    body = GOLDEN_REGISTER.to_body()
    body["version"] = 2
    with pytest.raises(UnsupportedVersion) as e:
        decode(frame_of(body))
    assert e.value.version == 2


@pytest.mark.parametrize("version", [True, 1.0, "1"])
def test_version_must_be_the_integer_one(version):
    body = GOLDEN_REGISTER.to_body()
    body["version"] = version
    with pytest.raises(UnsupportedVersion) as e:
        decode(frame_of(body))
    assert e.value.version == version


def test_truncated_frame():
    data = struct.pack(">I", 100) + b"x" * 10
    with pytest.raises(FrameError):
        decode(data)

    decoder = FrameDecoder()
    assert decoder.feed(data) == []
    with pytest.raises(FrameError):
        decoder.close()


def test_oversized_frame():
    with pytest.raises(FrameError):
        decode(struct.pack(">I", MAX_FRAME + 1))
    with pytest.raises(FrameError):
        FrameDecoder().feed(struct.pack(">I", MAX_FRAME + 1))


def test_encode_errors():
    with pytest.raises(EncodeError):
        encode(WireMessage(MsgType.REPLY, 1, {"value": object()}))
    with pytest.raises(EncodeError):
        encode(WireMessage(MsgType.REPLY, 1, {"value": float("nan")}))
    with pytest.raises(EncodeError):
        encode(WireMessage(MsgType.REPLY, 1, {"blob": "x" * MAX_FRAME}))


def test_health_snapshot_bounds():
    with pytest.raises(SchemaError):
        HealthSnapshot(cpu_pct=101)
    with pytest.raises(SchemaError):
        HealthSnapshot(active_steps=-1)
    snap = HealthSnapshot(cpu_pct=12.5, active_steps=1, timestamp=5)
    assert HealthSnapshot.from_dict(snap.to_dict()) == snap


def test_read_message_from_stream():
    async def run():
        reader = asyncio.StreamReader()
        reader.feed_data(encode(GOLDEN_REGISTER))
        reader.feed_data(struct.pack(">I", 100) + b"x" * 10)
        reader.feed_eof()
        assert await read_message(reader) == GOLDEN_REGISTER
        with pytest.raises(FrameError):
            await read_message(reader)

        empty = asyncio.StreamReader()
        empty.feed_eof()
        assert await read_message(empty) is None

    asyncio.run(run())


class _NullWriter:
    def get_extra_info(self, name):
        return None


def test_session_rejects_repeated_seq():
    async def run():
        reader = asyncio.StreamReader()
        reader.feed_data(encode(WireMessage(MsgType.STATUS, 4)))
        reader.feed_data(encode(WireMessage(MsgType.STATUS, 4)))
        reader.feed_eof()
        session = Session(reader, _NullWriter(), name="test")
        assert (await session.recv()).seq == 4
        with pytest.raises(ProtocolError):
            await session.recv()

    asyncio.run(run())


async def _fake_server(reply):
    """Server answering the first message with reply(msg, session) (or nothing)"""

    async def handle(reader, writer):
        session = Session(reader, writer)
        msg = await session.recv()
        if reply is not None:
            await reply(msg, session)
        await asyncio.sleep(0.5)
        await session.close()

    server = await asyncio.start_server(handle, "127.0.0.1", 0)
    port = server.sockets[0].getsockname()[1]
    return server, f"127.0.0.1:{port}"


def test_handshake_ack():
    async def ack(msg, session):
        assert msg.msg_type == MsgType.REGISTER
        assert msg.payload["actor_id"] == "a1"
        await session.send(MsgType.REGISTER_ACK, {"token": "t-1", "health_period": 2.0})

    async def run():
        server, endpoint = await _fake_server(ack)
        async with server:
            session = await open_session(endpoint)
            await handshake(session, "a1", "127.0.0.1:7101", HealthSnapshot(), timeout=2)
            assert session.token == "t-1"
            sent = await session.send(MsgType.HEALTH_REPORT, {"health": HealthSnapshot().to_dict()})
            assert sent.token == "t-1"
            await session.close()

    asyncio.run(run())


def test_handshake_duplicate():
    async def refuse(msg, session):
        await session.send_error("DUPLICATE_ID", "actor 'a1' is already online")

    async def run():
        server, endpoint = await _fake_server(refuse)
        async with server:
            session = await open_session(endpoint)
            with pytest.raises(HandshakeError) as e:
                await handshake(session, "a1", "x:1", HealthSnapshot(), timeout=2)
            assert e.value.code == "DUPLICATE_ID"
            await session.close()

    asyncio.run(run())


def test_handshake_timeout():
    async def run():
        server, endpoint = await _fake_server(None)
        async with server:
            session = await open_session(endpoint)
            with pytest.raises(HandshakeTimeout):
                await handshake(session, "a1", "x:1", HealthSnapshot(), timeout=0.1)
            await session.close()

    asyncio.run(run())
