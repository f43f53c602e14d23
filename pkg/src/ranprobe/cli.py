"""The `ranprobe` command: server, actor and SUT processes plus the commands
that submit, watch and report runs.

Exit codes
    0   success (for run/replay: phase COMPLETE without FAIL or ERROR)
    1   the run failed, or a process could not start
    2   invalid script or configuration
    3   server unreachable
    4   unknown run
    5   unreadable input file or run store

Every flag falls back to an AIT_* environment variable. Command output goes
to stdout, log records to stderr."""

import asyncio
import logging
import sys
import time
from argparse import ArgumentParser
from pathlib import Path

from . import FRAMEWORK_VERSION, server, setup_logging, sut
from .config import (
    DEFAULT_CONTROL_PORT,
    DEFAULT_HEALTH_PERIOD,
    DEFAULT_SERVER_ADDR,
    DEFAULT_SERVER_PORT,
    DEFAULT_SETUP_TIMEOUT,
    DEFAULT_STATUS_INTERVAL,
    DEFAULT_STORE,
    DEFAULT_SUT_ADDR,
    env_default,
)
from .exceptions import (
    BindError,
    ConfigError,
    HandshakeError,
    IncompleteRecord,
    RanProbeError,
    RejectedError,
    SchemaError,
    ScriptSyntaxError,
    StoreError,
    UnknownRun,
)
from .actor import ActorRuntime, ActorRuntimeConfig, ProbeMode
from .report import FORMATS, RunStore, compare_records, render, replay
from .script import parse_config, validate_document
from .server import control_call
from .sut import Classifier
from .utils import Table, print_table
from .wire import MsgType

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_UNREACHABLE = 3
EXIT_UNKNOWN_RUN = 4
EXIT_UNREADABLE = 5

TERMINAL_PHASES = ("COMPLETE", "ABORTED", "FAILED_SETUP")

logger = logging.getLogger(__name__)


class Unreadable(Exception):
    pass


def read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise Unreadable(f"Unable to read '{path}': {e}")


def control_addr(args) -> str:
    return f"127.0.0.1:{args.control_port}"


def call(args, msg_type, payload=None):
    return asyncio.run(control_call(control_addr(args), msg_type, payload))


# ---------------------------------------------------------------- processes
def cmd_server_start(args) -> int:
    actor_endpoint = f"{args.server_host}:{args.server_port}"
    try:
        asyncio.run(
            server.serve(
                actor_endpoint,
                control_addr(args),
                args.store,
                health_period=args.health_period,
                setup_timeout=args.setup_timeout,
            )
        )
    except BindError as e:
        logger.error(str(e))
        return EXIT_FAILED
    except KeyboardInterrupt:
        logger.info("Server stopped")
    return EXIT_OK


def cmd_actor_start(args) -> int:
    if not args.id:
        logger.error("An actor id is required (--id or AIT_ID)")
        return EXIT_INVALID
    try:
        config = ActorRuntimeConfig(
            id=args.id,
            server_address=args.server_addr,
            sut_endpoint=args.sut_addr,
            health_period=args.health_period,
            probe_mode=ProbeMode(args.probe_mode),
            address=args.address,
        )
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_INVALID
    try:
        asyncio.run(ActorRuntime(config).run())
    except HandshakeError as e:
        logger.error(str(e))
        return EXIT_FAILED
    except KeyboardInterrupt:
        logger.info(f"Actor '{args.id}' stopped")
    return EXIT_OK


def cmd_sut_start(args) -> int:
    try:
        asyncio.run(sut.serve(args.sut_addr, Classifier(args.classifier)))
    except BindError as e:
        logger.error(str(e))
        return EXIT_FAILED
    except KeyboardInterrupt:
        logger.info("SUT stopped")
    return EXIT_OK


# ------------------------------------------------------------------- runs
def check_documents(script_text, config_text, source) -> bool:
    """Offline checks before anything goes to the server; findings are printed"""
    report = validate_document(script_text, source=source)
    for finding in report.findings:
        print(finding)
    ok = report.ok
    if config_text is not None:
        try:
            parse_config(config_text, source="config")
        except (ScriptSyntaxError, SchemaError) as e:
            print(f"ERROR CONFIG config: {e}")
            for reason in getattr(e, "errors", None) or []:
                print(f"  {reason}")
            ok = False
    return ok


def submit(args, script_text, config_text, seed=None) -> str:
    payload = {"script": script_text, "config": config_text}
    if seed is not None:
        payload["seed_override"] = seed
    reply = call(args, MsgType.SUBMIT, payload)
    print(reply["run_id"])
    return reply["run_id"]


def follow(args, run_id) -> dict:
    """Poll the run until it reaches a terminal phase"""
    last = None
    while True:
        status = call(args, MsgType.STATUS, {"run_id": run_id})["run"]
        progress = (status["phase"], status["cursor"])
        if progress != last:
            logger.info(f"Run {run_id} {status['phase']} step {status['cursor']}/{status['steps']}")
            last = progress
        if status["phase"] in TERMINAL_PHASES:
            return status
        time.sleep(args.status_interval)


def load_when_stored(store: RunStore, run_id, timeout=30.0):
    """Records are persisted right after the terminal phase; wait for it"""
    deadline = time.monotonic() + timeout
    while True:
        try:
            return store.load(run_id)
        except UnknownRun:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.2)


def run_store_for(args, status) -> RunStore:
    """The server's own store when this host can see it, else --store"""
    served = status.get("store")
    if served and Path(served).is_dir():
        return RunStore(served)
    return RunStore(args.store)


def finish(args, run_id):
    """Follow a submitted run, print its report and return (exit code, record)"""
    status = follow(args, run_id)
    if status["phase"] == "FAILED_SETUP":
        for reason in status["reasons"]:
            print(f"FAILED_SETUP: {reason}")
        return EXIT_FAILED, None
    store = run_store_for(args, status)
    try:
        record = load_when_stored(store, run_id)
    except UnknownRun:
        logger.error(
            f"Run {run_id} finished but {store.root} has no record of it; "
            "point --store (AIT_STORE) at the server's run store"
        )
        return EXIT_UNKNOWN_RUN, None
    print(render(record, args.format), end="")
    failed = status["phase"] != "COMPLETE" or any(v in ("FAIL", "ERROR") for v in record.verdicts)
    return (EXIT_FAILED if failed else EXIT_OK), record


def cmd_run(args) -> int:
    script_text = read_text(args.script)
    config_text = read_text(args.config)
    if not check_documents(script_text, config_text, source=args.script):
        return EXIT_INVALID
    try:
        run_id = submit(args, script_text, config_text, args.seed_override)
    except RejectedError as e:
        for reason in e.reasons:
            print(f"REJECTED: {reason}")
        return EXIT_INVALID
    if not args.follow:
        return EXIT_OK
    code, _ = finish(args, run_id)
    return code


def cmd_replay(args) -> int:
    store = RunStore(args.store)
    original = store.load(args.run_id)
    try:
        script_text, config_text = replay(original)
    except IncompleteRecord as e:
        logger.error(str(e))
        return EXIT_FAILED
    try:
        run_id = submit(args, script_text, config_text)
    except RejectedError as e:
        for reason in e.reasons:
            print(f"REJECTED: {reason}")
        return EXIT_INVALID
    if not args.follow:
        return EXIT_OK
    code, record = finish(args, run_id)
    if record is None:
        return code
    differences = compare_records(original, record)
    for difference in differences:
        print(f"REGRESSION: {difference}")
    return EXIT_FAILED if differences else code


def runs_table(runs) -> Table:
    table = Table(title="Runs")
    for header in ("run_id", "phase", "step", "submitted"):
        table.add_column(header)
    for run in runs:
        table.add_row(run["run_id"], run["phase"], f"{run['cursor']}/{run['steps']}", run["submitted_at"])
    return table


def actors_table(actors) -> Table:
    table = Table(title="Actors")
    for header in ("actor", "state", "run", "cpu", "mem", "disk", "hw"):
        table.add_column(header)
    for actor in actors:
        health = actor["health"]
        table.add_row(
            actor["id"],
            actor["state"],
            actor["current_run"] or "-",
            f"{health['cpu_pct']:.1f}",
            f"{health['mem_pct']:.1f}",
            f"{health['disk_pct']:.1f}",
            "ok" if health["hardware_ok"] else "FAULT",
        )
    return table


def format_run(run) -> str:
    lines = [
        f"run_id     {run['run_id']}",
        f"phase      {run['phase']}",
        f"step       {run['cursor']}/{run['steps']}",
        f"submitted  {run['submitted_at']}",
        f"finished   {run['finished_at'] or '-'}",
        f"verdicts   {' '.join(v or '-' for v in run['verdicts'])}",
    ]
    for reason in run.get("reasons", []):
        lines.append(f"reason     {reason}")
    for actor_id, actor in sorted(run.get("actor_health", {}).items()):
        if actor is None:
            lines.append(f"actor      {actor_id:<10} UNKNOWN")
            continue
        health = actor["health"]
        lines.append(
            f"actor      {actor_id:<10} {actor['state']:<8} cpu {health['cpu_pct']:5.1f}"
            f"  mem {health['mem_pct']:5.1f}  disk {health['disk_pct']:5.1f}"
            f"  hw {'ok' if health['hardware_ok'] else 'FAULT'}"
        )
    return "\n".join(lines)


def cmd_status(args) -> int:
    if args.run_id:
        print(format_run(call(args, MsgType.STATUS, {"run_id": args.run_id})["run"]))
    else:
        reply = call(args, MsgType.STATUS)
        print_table(runs_table(reply["runs"]))
        print_table(actors_table(reply["actors"]))
    return EXIT_OK


def cmd_abort(args) -> int:
    reply = call(args, MsgType.ABORT, {"run_id": args.run_id})
    print(reply["phase"])
    return EXIT_OK


def cmd_report(args) -> int:
    record = RunStore(args.store).load(args.run_id)
    print(render(record, args.format), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    script_text = read_text(args.script)
    config_text = read_text(args.config) if args.config else None
    return EXIT_OK if check_documents(script_text, config_text, source=args.script) else EXIT_INVALID


# ----------------------------------------------------------------- parser
def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument(
        "-l",
        "--log-level",
        default=env_default("LOG_LEVEL", "INFO"),
        choices=["NOTSET", "DEBUG", "INFO", "WARN", "WARNING", "ERROR", "CRITICAL"],
        help="Log level",
    )
    common.add_argument(
        "--log-file",
        default=env_default("LOG_FILE"),
        help="Also write log records to this file",
    )

    control = ArgumentParser(add_help=False)
    control.add_argument(
        "--control-port",
        type=int,
        default=env_default("CONTROL_PORT", DEFAULT_CONTROL_PORT, int),
        help="Local port of the server's control listener",
    )
    control.add_argument(
        "--status-interval",
        type=float,
        default=env_default("STATUS_INTERVAL", DEFAULT_STATUS_INTERVAL, float),
        help="Seconds between status polls with --follow",
    )

    store = ArgumentParser(add_help=False)
    store.add_argument(
        "--store",
        default=env_default("STORE", DEFAULT_STORE),
        help="Run store directory; give the server's store when reading records it wrote",
    )

    fmt = ArgumentParser(add_help=False)
    fmt.add_argument(
        "--format",
        choices=FORMATS,
        default=env_default("FORMAT", "text"),
        help="Report format",
    )

    health = ArgumentParser(add_help=False)
    health.add_argument(
        "--health-period",
        type=float,
        default=env_default("HEALTH_PERIOD", DEFAULT_HEALTH_PERIOD, float),
        help="Seconds between actor health reports",
    )

    parser = ArgumentParser(prog="ranprobe", description="Distributed AI-enabled RAN test framework")
    parser.add_argument("--version", action="version", version=f"%(prog)s {FRAMEWORK_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    server_cmds = commands.add_parser("server", help="Test server").add_subparsers(dest="action", required=True)
    server_start = server_cmds.add_parser("start", parents=[common, control, store, health], help="Run the test server")
    server_start.add_argument(
        "--server-host",
        default=env_default("SERVER_HOST", "0.0.0.0"),
        help="Interface the actor listener binds to",
    )
    server_start.add_argument(
        "--server-port",
        type=int,
        default=env_default("SERVER_PORT", DEFAULT_SERVER_PORT, int),
        help="Port actors connect to",
    )
    server_start.add_argument(
        "--setup-timeout",
        type=float,
        default=env_default("SETUP_TIMEOUT", DEFAULT_SETUP_TIMEOUT, float),
        help="Seconds a queued run waits for its actors",
    )
    server_start.set_defaults(handler=cmd_server_start)

    actor_cmds = commands.add_parser("actor", help="Test actor").add_subparsers(dest="action", required=True)
    actor_start = actor_cmds.add_parser("start", parents=[common, health], help="Run a test actor")
    actor_start.add_argument("--id", default=env_default("ID"), help="Actor id, unique per server")
    actor_start.add_argument(
        "--server-addr",
        default=env_default("SERVER_ADDR", DEFAULT_SERVER_ADDR),
        help="host:port of the server's actor listener",
    )
    actor_start.add_argument(
        "--sut-addr",
        default=env_default("SUT_ADDR", DEFAULT_SUT_ADDR),
        help="Default SUT endpoint when a run's configuration names none",
    )
    actor_start.add_argument(
        "--address",
        default=env_default("ADDRESS", "127.0.0.1:0"),
        help="Address advertised at registration",
    )
    actor_start.add_argument(
        "--probe-mode",
        choices=["simulated", "real"],
        default=env_default("PROBE_MODE", "simulated"),
        help="Report measured host health or a fixed snapshot",
    )
    actor_start.set_defaults(handler=cmd_actor_start)

    sut_cmds = commands.add_parser("sut", help="Bundled system under test").add_subparsers(dest="action", required=True)
    sut_start = sut_cmds.add_parser("start", parents=[common], help="Run the bundled SUT")
    sut_start.add_argument(
        "--sut-addr",
        default=env_default("SUT_ADDR", DEFAULT_SUT_ADDR),
        help="host:port to listen on",
    )
    sut_start.add_argument(
        "--classifier",
        choices=["min_distance", "perceptron"],
        default=env_default("CLASSIFIER", "min_distance"),
        help="Demodulation decision model",
    )
    sut_start.set_defaults(handler=cmd_sut_start)

    submit_cmd = commands.add_parser("run", parents=[common, control, store, fmt], help="Submit a test run")
    submit_cmd.add_argument("script", help="Test script (.test.yaml)")
    submit_cmd.add_argument("config", help="Test configuration (.config.yaml)")
    submit_cmd.add_argument(
        "--seed-override",
        type=int,
        default=env_default("SEED_OVERRIDE", None, int),
        help="Run with this seed instead of the configuration's run_seed",
    )
    submit_cmd.add_argument("--follow", action="store_true", help="Wait for the run and print its report")
    submit_cmd.set_defaults(handler=cmd_run)

    status = commands.add_parser("status", parents=[common, control], help="Show one run or list all runs")
    status.add_argument("run_id", nargs="?", help="Run to show; all runs when omitted")
    status.set_defaults(handler=cmd_status)

    abort = commands.add_parser("abort", parents=[common, control], help="Abort a run")
    abort.add_argument("run_id")
    abort.set_defaults(handler=cmd_abort)

    report = commands.add_parser("report", parents=[common, store, fmt], help="Print the report of a stored run")
    report.add_argument("run_id")
    report.set_defaults(handler=cmd_report)

    rerun = commands.add_parser(
        "replay", parents=[common, control, store, fmt], help="Submit a stored run again with its seed"
    )
    rerun.add_argument("run_id")
    rerun.add_argument("--follow", action="store_true", help="Wait and compare with the stored run")
    rerun.set_defaults(handler=cmd_replay)

    validate = commands.add_parser("validate", parents=[common], help="Check a test script offline")
    validate.add_argument("script", help="Test script (.test.yaml)")
    validate.add_argument("config", nargs="?", help="Optional test configuration to check as well")
    validate.set_defaults(handler=cmd_validate)

    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INVALID
    args = parser.parse_args(argv)
    setup_logging(args.log_level, args.log_file)

    try:
        return args.handler(args)
    except Unreadable as e:
        logger.error(str(e))
        return EXIT_UNREADABLE
    except UnknownRun as e:
        logger.error(str(e))
        return EXIT_UNKNOWN_RUN
    except (ConnectionError, OSError, asyncio.TimeoutError) as e:
        logger.error(f"Server unreachable: {e}")
        return EXIT_UNREACHABLE
    except StoreError as e:
        logger.error(str(e))
        return EXIT_UNREADABLE
    except SchemaError as e:
        logger.error(str(e))
        return EXIT_INVALID
    except RanProbeError as e:
        logger.error(str(e))
        return EXIT_FAILED


def run():
    sys.exit(main())
