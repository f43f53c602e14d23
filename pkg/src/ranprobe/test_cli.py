import asyncio
import threading

import pytest

from ranprobe.actor import ActorRuntime, ActorRuntimeConfig
from ranprobe.cli import (
    EXIT_INVALID,
    EXIT_OK,
    EXIT_UNKNOWN_RUN,
    EXIT_UNREACHABLE,
    EXIT_UNREADABLE,
    build_parser,
    main,
)
from ranprobe.server import Server
from ranprobe.sut import SutService


def closed_port():
    async def pick():
        server = await asyncio.start_server(lambda r, w: None, "127.0.0.1", 0)
        port = server.sockets[0].getsockname()[1]
        server.close()
        await server.wait_closed()
        return port

    return asyncio.run(pick())


class BackgroundCluster:
    """Server, SUT and actors on an event loop in a worker thread, so the
    synchronous CLI can talk to them"""

    def __init__(self, store_root, actor_ids):
        self.store_root = store_root
        self.actor_ids = actor_ids
        self.loop = asyncio.new_event_loop()
        self.thread = threading.Thread(target=self.loop.run_forever, daemon=True)

    def call(self, coro):
        return asyncio.run_coroutine_threadsafe(coro, self.loop).result(30)

    async def _start(self):
        self.sut = await SutService().start("127.0.0.1:0")
        self.sut_addr = "127.0.0.1:%d" % self.sut.sockets[0].getsockname()[1]
        self.server = Server(self.store_root, health_period=0.2)
        actor_addr, control_addr = await self.server.start("127.0.0.1:0", "127.0.0.1:0")
        self.control_port = int(control_addr.rsplit(":", 1)[1])
        self.actors = []
        for actor_id in self.actor_ids:
            runtime = ActorRuntime(
                ActorRuntimeConfig(id=actor_id, server_address=actor_addr, sut_endpoint=self.sut_addr)
            )
            self.actors.append(asyncio.create_task(runtime.run()))
            await asyncio.wait_for(runtime.registered.wait(), 10)

    async def _stop(self):
        for task in self.actors:
            task.cancel()
        await asyncio.gather(*self.actors, return_exceptions=True)
        await self.server.stop()
        self.sut.close()
        await self.sut.wait_closed()

    def __enter__(self):
        self.thread.start()
        self.call(self._start())
        return self

    def __exit__(self, *exc):
        self.call(self._stop())
        self.loop.call_soon_threadsafe(self.loop.stop)
        self.thread.join(10)
        self.loop.close()


# ---------------------------------------------------------------- offline
def test_validate_shipped_script(example_dir, capsys):
    script, config = example_dir / "scheduler.test.yaml", example_dir / "two_actors.config.yaml"
    code = main(["validate", str(script), str(config)])
    assert code == EXIT_OK
    assert "ERROR" not in capsys.readouterr().out


def test_validate_invalid_script(example_dir, capsys):
    code = main(["validate", str(example_dir / "invalid" / "unknown_keyword.test.yaml")])
    assert code == EXIT_INVALID
    assert "UNKNOWN_KEYWORD" in capsys.readouterr().out


def test_validate_unreadable_path(tmp_path):
    assert main(["validate", str(tmp_path / "missing.test.yaml")]) == EXIT_UNREADABLE


def test_run_rejects_invalid_script_before_submitting(example_dir, capsys):
    code = main(
        [
            "run",
            str(example_dir / "invalid" / "composite_cycle.test.yaml"),
            str(example_dir / "two_actors.config.yaml"),
            "--control-port",
            str(closed_port()),
        ]
    )
    assert code == EXIT_INVALID
    assert "COMPOSITE_CYCLE" in capsys.readouterr().out


def test_server_down(example_dir):
    port = str(closed_port())
    args = [str(example_dir / "scheduler.test.yaml"), str(example_dir / "two_actors.config.yaml")]
    assert main(["run", *args, "--control-port", port]) == EXIT_UNREACHABLE
    assert main(["status", "--control-port", port]) == EXIT_UNREACHABLE


def test_report_of_missing_run(tmp_path):
    assert main(["report", "01J0000000000000000000000A", "--store", str(tmp_path)]) == EXIT_UNKNOWN_RUN


def test_flags_fall_back_to_environment(monkeypatch):
    monkeypatch.setenv("AIT_STORE", "/data/runs")
    monkeypatch.setenv("AIT_CONTROL_PORT", "7999")
    args = build_parser().parse_args(["replay", "01J0000000000000000000000A"])
    assert args.store == "/data/runs"
    assert args.control_port == 7999

    args = build_parser().parse_args(["replay", "01J0000000000000000000000A", "--store", "elsewhere"])
    assert args.store == "elsewhere"


def test_unknown_flags_are_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["status", "--no-such-flag"])


# ------------------------------------------------------------- end to end
def test_run_follow_status_report_and_replay(tmp_path, example_dir, scheduler_script_text, capsys):
    store = tmp_path / "store"
    with BackgroundCluster(store, ["a1", "a2"]) as cluster:
        config = tmp_path / "two.config.yaml"
        shipped = (example_dir / "two_actors.config.yaml").read_text()
        config.write_text(shipped.replace("127.0.0.1:7300", cluster.sut_addr))
        script = tmp_path / "scheduler.test.yaml"
        script.write_text(scheduler_script_text)
        remote = ["--control-port", str(cluster.control_port), "--status-interval", "0.1", "--store", str(store)]

        assert main(["run", str(script), str(config), "--follow", *remote]) == EXIT_OK
        out = capsys.readouterr().out
        run_id = next(line for line in out.splitlines() if len(line) == 26)
        assert "pass 9  fail 0  error 0  skipped 0" in out
        assert "success_rate    1.00" in out

        assert main(["status", run_id, "--control-port", str(cluster.control_port)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "phase      COMPLETE" in out
        assert "step       9/9" in out

        assert main(["status", "--control-port", str(cluster.control_port)]) == EXIT_OK
        assert run_id in capsys.readouterr().out

        assert main(["replay", run_id, "--follow", *remote]) == EXIT_OK
        out = capsys.readouterr().out
        assert "REGRESSION" not in out

        assert main(["abort", "nope", "--control-port", str(cluster.control_port)]) == EXIT_UNKNOWN_RUN

    assert main(["report", run_id, "--store", str(store), "--format", "structured"]) == EXIT_OK
    structured = capsys.readouterr().out
    assert '"phase":"COMPLETE"' in structured
    assert run_id not in structured


def test_follow_reads_the_server_store_from_another_directory(
    tmp_path, example_dir, scheduler_script_text, capsys
):
    store = tmp_path / "server-store"
    with BackgroundCluster(store, ["a1", "a2"]) as cluster:
        config = tmp_path / "two.config.yaml"
        shipped = (example_dir / "two_actors.config.yaml").read_text()
        config.write_text(shipped.replace("127.0.0.1:7300", cluster.sut_addr))
        script = tmp_path / "scheduler.test.yaml"
        script.write_text(scheduler_script_text)
        # the CLI's own store is empty; the record only exists where the server wrote it
        remote = [
            "--control-port", str(cluster.control_port), "--status-interval", "0.1",
            "--store", str(tmp_path / "cli-store"),
        ]
        code = main(["run", str(script), str(config), "--follow", *remote])

    assert code == EXIT_OK
    assert "pass 9  fail 0  error 0  skipped 0" in capsys.readouterr().out
    assert not (tmp_path / "cli-store").exists()
