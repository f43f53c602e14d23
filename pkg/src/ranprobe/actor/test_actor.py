import asyncio
import json

import pytest

from ranprobe.actor import (
    ActorRuntime,
    ActorRuntimeConfig,
    HealthProbe,
    ProbeMode,
    RunScratch,
    SdrAdapter,
    SimAdapter,
    StepContext,
    StepExecutor,
    backoff_delays,
    session_id,
    step_key,
    step_rng,
    step_seed,
)
from ranprobe.exceptions import AdapterError, ConfigError
from ranprobe.outcome import Verdict
from ranprobe.sut import SUT_VERSION, SutService
from ranprobe.wire import HealthSnapshot, MsgType, Session

SENSITIVITY = {
    "method": "sensitivity",
    "op": "schedule",
    "request": {"ue_demands": [2, 2], "priorities": [1.0, 1.0], "capacity": 4, "tti_count": 1},
    "space": [{"name": "ue_demands.0", "kind": "integer", "lo": 1, "hi": 6}],
    "baseline": {"ue_demands.0": 2},
    "levels": {"ue_demands.0": [1, 2, 3, 4, 5]},
    "score": "qos_score",
}


def ctx(keyword, index=0, run_id="r1", run_seed=42, **params):
    return StepContext(
        run_id=run_id, index=index, keyword=keyword, params=params, actor_id="a1", run_seed=run_seed
    )


async def start_sut():
    server = await SutService().start("127.0.0.1:0")
    port = server.sockets[0].getsockname()[1]
    return server, f"127.0.0.1:{port}"


async def closed_endpoint():
    server = await asyncio.start_server(lambda r, w: None, "127.0.0.1", 0)
    port = server.sockets[0].getsockname()[1]
    server.close()
    await server.wait_closed()
    return f"127.0.0.1:{port}"


# ------------------------------------------------------------------- rng
def test_step_key_is_deterministic_and_distinct():
    assert step_key(42, "a1", 3) == step_key(42, "a1", 3)
    keys = {step_key(42, "a1", 3), step_key(42, "a2", 3), step_key(42, "a1", 4), step_key(43, "a1", 3)}
    assert len(keys) == 4

    key = step_key(42, "a1", 3)
    assert step_rng(key).random(5).tolist() == step_rng(key).random(5).tolist()
    assert 0 <= step_seed(key) < 2**64
    sid = session_id(key)
    assert sid.startswith("s-") and len(sid) == 18


# ---------------------------------------------------------------- health
def test_simulated_health_echoes_snapshot():
    probe = HealthProbe(ProbeMode.SIMULATED, HealthSnapshot(cpu_pct=50, mem_pct=25, disk_pct=10))
    for active in (0, 1):
        snapshot = probe.probe(active)
        assert snapshot.cpu_pct == 50
        assert snapshot.mem_pct == 25
        assert snapshot.disk_pct == 10
        assert snapshot.active_steps == active
        assert snapshot.timestamp > 0


def test_real_health_within_bounds():
    snapshot = HealthProbe(ProbeMode.REAL).probe()
    for value in (snapshot.cpu_pct, snapshot.mem_pct, snapshot.disk_pct):
        assert 0 <= value <= 100


def test_runtime_config_validation():
    with pytest.raises(ConfigError):
        ActorRuntimeConfig(id="", server_address="127.0.0.1:7100")
    with pytest.raises(ConfigError):
        ActorRuntimeConfig(id="a1", server_address="127.0.0.1:7100", health_period=0)
    with pytest.raises(ConfigError):
        ActorRuntimeConfig(id="a1", server_address="nowhere")


# -------------------------------------------------------------- adapters
def test_sim_adapter_schedule_and_refused():
    async def run():
        server, endpoint = await start_sut()
        async with server:
            adapter = SimAdapter(endpoint)
            result, latency_ms = await adapter.call(
                "schedule", {"ue_demands": [2, 2], "priorities": [1, 1], "capacity": 4, "tti_count": 1}
            )
            assert result["allocations"] == [[2, 2]]
            assert latency_ms >= 0
            assert adapter.latencies[0][0] == "schedule"

            result, _ = await adapter.call("demodulate", {"count": 16, "impairment": {"kind": "cfo", "cfo": 0.0}})
            assert result["symbol_error_rate"] == 0.0

            with pytest.raises(AdapterError) as e:
                await adapter.call("teleport", {})
            assert e.value.kind == "remote"
            await adapter.close()

        adapter = SimAdapter(await closed_endpoint())
        with pytest.raises(AdapterError) as e:
            await adapter.call("schedule", {})
        assert e.value.kind == "refused"

    asyncio.run(run())


def test_sdr_adapter_is_unsupported():
    async def run():
        outcome = await StepExecutor().execute(ctx("attach_request", ue="ue1"), RunScratch(), SdrAdapter())
        assert outcome.verdict == Verdict.ERROR
        assert outcome.detail["kind"] == "unsupported"
        assert "SDR adapter not available" in outcome.detail["reason"]

    asyncio.run(run())


# -------------------------------------------------------------- executor
def test_sleep_step():
    async def run():
        outcome = await StepExecutor().execute(ctx("sleep", ms=10), RunScratch(), SdrAdapter())
        assert outcome.verdict == Verdict.PASS
        assert outcome.duration_ms >= 10

    asyncio.run(run())


def test_long_step_reports_status():
    async def run():
        seen = []

        async def on_status(c, elapsed_ms):
            seen.append(elapsed_ms)

        executor = StepExecutor(status_interval=0.01)
        outcome = await executor.execute(ctx("sleep", ms=80), RunScratch(), SdrAdapter(), on_status)
        assert outcome.verdict == Verdict.PASS
        assert len(seen) >= 3
        assert seen == sorted(seen)

    asyncio.run(run())


def test_unknown_keyword_and_missing_session():
    async def run():
        executor = StepExecutor()
        outcome = await executor.execute(ctx("teleport"), RunScratch(), SdrAdapter())
        assert outcome.verdict == Verdict.ERROR

        outcome = await executor.execute(ctx("query_kpi"), RunScratch(), SdrAdapter())
        assert outcome.verdict == Verdict.ERROR
        assert "attach_request" in outcome.detail["reason"]

    asyncio.run(run())


def test_scheduler_workflow_against_running_sut():
    async def run():
        server, endpoint = await start_sut()
        async with server:
            adapter = SimAdapter(endpoint)
            executor = StepExecutor()
            scratch = RunScratch()

            attach = ctx("attach_request", index=0, ue="ue1", priority=2.0)
            outcome = await executor.execute(attach, scratch, adapter)
            assert outcome.verdict == Verdict.PASS
            assert outcome.detail["session"] == session_id(attach.key)
            assert outcome.sut_version == SUT_VERSION
            assert scratch.session == outcome.detail["session"]

            steps = [
                ctx("send_traffic", index=1, demand=6),
                ctx("await_response", index=2, capacity=4, tti_count=2, min_qos=0.9),
                ctx("query_kpi", index=3, max_loss=0.5),
            ]
            verdicts = [(await executor.execute(s, scratch, adapter)).verdict for s in steps]
            # 8 PRBs served out of 12 demanded
            assert verdicts == [Verdict.PASS, Verdict.FAIL, Verdict.PASS]
            names = {s["name"] for s in scratch.kpi_samples}
            assert names == {"qos_score", "loss_frac", "throughput_frac", "mean_latency_ttis"}
            assert [lat["step"] for lat in scratch.latencies] == [0, 1, 2, 3]

            outcome = await executor.execute(ctx("detach", index=4), scratch, adapter)
            assert outcome.verdict == Verdict.PASS
            assert scratch.session is None
            await adapter.close()

    asyncio.run(run())


def test_query_kpi_with_sut_down():
    async def run():
        scratch = RunScratch(session="s-0000000000000000")
        adapter = SimAdapter(await closed_endpoint())
        outcome = await StepExecutor().execute(ctx("query_kpi"), scratch, adapter)
        assert outcome.verdict == Verdict.ERROR
        assert outcome.detail["kind"] == "refused"

    asyncio.run(run())


def test_ai_session_trace_replays_to_the_same_digest():
    async def run():
        server, endpoint = await start_sut()
        digests = []
        async with server:
            for _ in range(2):
                adapter = SimAdapter(endpoint)
                scratch = RunScratch()
                outcome = await StepExecutor().execute(ctx("run_ai_session", ai=SENSITIVITY), scratch, adapter)
                await adapter.close()
                assert outcome.verdict == Verdict.PASS
                (digest,) = outcome.trace_digests
                trace = scratch.traces[digest]
                assert len(trace["iterations"]) == 5
                assert outcome.detail["queries"] == 5
                assert len(scratch.latencies) == 5
                digests.append(digest)
        assert digests[0] == digests[1]

    asyncio.run(run())


def test_ai_session_with_sut_down_keeps_partial_trace():
    async def run():
        scratch = RunScratch()
        adapter = SimAdapter(await closed_endpoint())
        outcome = await StepExecutor().execute(ctx("run_ai_session", ai=SENSITIVITY), scratch, adapter)
        assert outcome.verdict == Verdict.ERROR
        (digest,) = outcome.trace_digests
        assert scratch.traces[digest]["complete"] is False
        assert scratch.traces[digest]["iterations"] == []

    asyncio.run(run())


# --------------------------------------------------------------- runtime
def test_backoff_doubles_up_to_cap():
    delays = backoff_delays(1.0, 30.0)
    assert [next(delays) for _ in range(8)] == [1, 2, 4, 8, 16, 30, 30, 30]


def test_unreachable_server_retries_with_backoff():
    async def run():
        slept = []

        async def fake_sleep(delay):
            slept.append(delay)

        config = ActorRuntimeConfig(id="a1", server_address=await closed_endpoint(), handshake_timeout=1.0)
        await ActorRuntime(config, sleep=fake_sleep).run(max_attempts=7)
        assert slept == [1, 2, 4, 8, 16, 30, 30]

    asyncio.run(run())


async def with_fake_server(conversation, **config):
    """Serve one actor connection with conversation(session, register) and
    return what it returns"""
    result = asyncio.get_running_loop().create_future()

    async def handler(reader, writer):
        session = Session(reader, writer)
        try:
            register = await session.recv()
            await session.send(MsgType.REGISTER_ACK, {"token": "tok", "health_period": 0.02})
            result.set_result(await conversation(session, register))
        except Exception as e:
            result.set_exception(e)
        finally:
            await session.close()

    server = await asyncio.start_server(handler, "127.0.0.1", 0)
    port = server.sockets[0].getsockname()[1]
    runtime = ActorRuntime(ActorRuntimeConfig(id="a1", server_address=f"127.0.0.1:{port}", **config))
    async with server:
        session = await runtime.connect()
        await asyncio.wait_for(runtime.serve(session), 20)
        await runtime.shutdown()
    return result.result()


async def next_message(session, health=None):
    """Next message that is not a HEALTH_REPORT"""
    while True:
        msg = await asyncio.wait_for(session.recv(), 10)
        if msg.msg_type != MsgType.HEALTH_REPORT:
            return msg
        if health is not None:
            health.append(msg)


def test_runtime_registers_and_serves_one_step_at_a_time():
    async def conversation(session, register):
        health = []
        step = {"index": 0, "keyword": "sleep", "params": {"ms": 200}}
        await session.send(MsgType.DISPATCH_STEP, {"step": step, "run_seed": 1}, run_id="r1")
        await session.send(MsgType.DISPATCH_STEP, {"step": dict(step, index=1), "run_seed": 1}, run_id="r1")
        results = {}
        while len(results) < 2:
            msg = await next_message(session, health)
            if msg.msg_type == MsgType.STEP_RESULT:
                results[msg.payload["index"]] = msg.payload["outcome"]["verdict"]

        await session.send(MsgType.COLLECT, {}, run_id="r1")
        done = await next_message(session, health)
        return register, health, results, done

    snapshot = HealthSnapshot(cpu_pct=50.0)
    register, health, results, done = asyncio.run(with_fake_server(conversation, snapshot=snapshot))

    assert register.msg_type == MsgType.REGISTER
    assert register.payload["actor_id"] == "a1"
    assert health
    assert all(h.payload["health"]["cpu_pct"] == 50.0 for h in health)
    assert all(h.token == "tok" for h in health)
    # the second dispatch arrives while the first step is still running
    assert results == {0: "PASS", 1: "ERROR"}
    assert done.msg_type == MsgType.COLLECT_DONE
    assert done.payload["traces"] == []


def test_runtime_streams_trace_before_result():
    async def run():
        sut, endpoint = await start_sut()

        async def conversation(session, register):
            step = {"index": 0, "keyword": "run_ai_session", "params": {"ai": SENSITIVITY}}
            await session.send(
                MsgType.DISPATCH_STEP, {"step": step, "run_seed": 9, "sut_endpoint": endpoint}, run_id="r2"
            )
            chunks = []
            while True:
                msg = await next_message(session)
                if msg.msg_type == MsgType.STEP_RESULT:
                    return chunks, msg.payload["outcome"]
                if msg.msg_type == MsgType.TRACE_CHUNK:
                    chunks.append(msg.payload)

        async with sut:
            return await with_fake_server(conversation)

    chunks, outcome = asyncio.run(run())
    assert outcome["verdict"] == "PASS"
    assert chunks and chunks[-1]["index"] == chunks[-1]["total"] - 1
    trace = json.loads("".join(c["data"] for c in chunks))
    assert [trace["digest"]] == outcome["trace_digests"]
    assert {c["digest"] for c in chunks} == {trace["digest"]}


def test_completed_run_releases_its_sut_sessions():
    async def run():
        service = SutService()
        ops = []
        service.add_observer(lambda op, args, result: ops.append(op))
        sut = await service.start("127.0.0.1:0")
        endpoint = f"127.0.0.1:{sut.sockets[0].getsockname()[1]}"

        async def dispatch(session, step):
            await session.send(
                MsgType.DISPATCH_STEP, {"step": step, "run_seed": 3, "sut_endpoint": endpoint}, run_id="r3"
            )

        async def step_result(session):
            while True:
                msg = await next_message(session)
                if msg.msg_type == MsgType.STEP_RESULT:
                    return msg

        async def conversation(session, register):
            await dispatch(session, {"index": 0, "keyword": "attach_request", "params": {"ue": "ue1"}})
            attached = await step_result(session)
            attached_scopes = {scope for scope, _ in service.state.sessions}
            # the run is aborted mid-step, so detach never runs
            await dispatch(session, {"index": 1, "keyword": "sleep", "params": {"ms": 5000}})
            assert (await next_message(session)).msg_type == MsgType.STEP_STATUS
            await session.send(MsgType.ABORT, {}, run_id="r3")
            aborted = await step_result(session)
            await session.send(MsgType.RUN_COMPLETE, {"phase": "ABORTED"}, run_id="r3")
            await session.send(MsgType.COLLECT, {}, run_id="r3")
            await next_message(session)
            return attached, attached_scopes, aborted

        async with sut:
            return (*await with_fake_server(conversation, status_interval=0.05), service, ops)

    attached, attached_scopes, aborted, service, ops = asyncio.run(run())
    assert attached.payload["outcome"]["verdict"] == "PASS"
    assert attached_scopes == {"r3"}
    assert aborted.payload["outcome"]["verdict"] == "SKIPPED"
    assert service.state.sessions == {}
    assert service.state.cells == {}
    assert ops[-1] == "release"


def test_lost_session_backs_off_before_redialing():
    async def run():
        slept = []

        async def fake_sleep(delay):
            if delay == 10.0:
                # health period; cancelled when the session ends
                await asyncio.sleep(delay)
            else:
                slept.append(delay)

        async def ack_then_close(reader, writer):
            session = Session(reader, writer)
            await session.recv()
            await session.send(MsgType.REGISTER_ACK, {"token": "tok", "health_period": 10.0})
            await session.close()

        async def close_at_once(reader, writer):
            writer.close()

        result = []
        for handler in (ack_then_close, close_at_once):
            slept.clear()
            server = await asyncio.start_server(handler, "127.0.0.1", 0)
            port = server.sockets[0].getsockname()[1]
            config = ActorRuntimeConfig(id="a1", server_address=f"127.0.0.1:{port}", handshake_timeout=2.0)
            async with server:
                await asyncio.wait_for(ActorRuntime(config, sleep=fake_sleep).run(max_attempts=4), 20)
            result.append(list(slept))
        return result

    registered, refused = asyncio.run(run())
    # every registration starts the backoff over, yet each lost session still waits
    assert registered == [1, 1, 1, 1]
    assert refused == [1, 2, 4, 8]
