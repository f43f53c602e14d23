"""Run orchestration: admission, sequential dispatch, failure policy, abort
and result collection.

Everything here runs on the server's event loop. Runs only interfere through
actor exclusivity: an actor belongs to at most one run at a time, and a run
is admitted only once every actor it names is online and free.

A step's timeout counts inactivity: each STEP_STATUS for the step in flight
restarts it. When a step ends in ERROR the run halts (remaining steps are
SKIPPED) unless the script's metadata sets on_error: continue; FAIL verdicts
never halt a run."""

import asyncio
import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from ..config import DEFAULT_SETUP_TIMEOUT
from ..exceptions import (
    PartialCollection,
    RanProbeError,
    RejectedError,
    SchemaError,
    ScriptSyntaxError,
    UnknownRun,
)
from ..outcome import StepOutcome, Verdict
from ..report import RunRecord, RunStore
from ..script import (
    Mode,
    OnError,
    PlanStep,
    expand,
    parse_config,
    parse_script,
    validate_bindings,
    validate_integrity,
)
from ..script.model import MAX_SEED
from ..utils import sha256_hex
from ..wire import MsgType, WireMessage
from .registry import ActorState, Registry
from .runs import PendingStep, Phase, RunState, new_run_id, utc_now

logger = logging.getLogger(__name__)

DEFAULT_COLLECT_TIMEOUT = 5.0


@dataclass(frozen=True)
class JournalEvent:
    kind: str  # ADMIT | DISPATCH_STEP | STEP_RESULT | RELEASE
    run_id: str
    actor_id: Optional[str] = None
    index: Optional[int] = None


class Orchestrator:
    def __init__(
        self,
        registry: Registry,
        store: RunStore,
        setup_timeout: float = DEFAULT_SETUP_TIMEOUT,
        collect_timeout: float = DEFAULT_COLLECT_TIMEOUT,
        clock=time.monotonic,
    ):
        self.registry = registry
        self.store = store
        self.setup_timeout = setup_timeout
        self.collect_timeout = collect_timeout
        self.runs: Dict[str, RunState] = {}
        self.journal: List[JournalEvent] = []
        self._clock = clock
        self._wake = asyncio.Event()
        self._tasks: Dict[str, asyncio.Task] = {}
        self._collections: Dict[Tuple[str, str], asyncio.Future] = {}

    def _log(self, kind, run_id, actor_id=None, index=None):
        self.journal.append(JournalEvent(kind, run_id, actor_id, index))

    def _get(self, run_id) -> RunState:
        try:
            return self.runs[run_id]
        except KeyError:
            raise UnknownRun(run_id)

    def wake(self):
        self._wake.set()

    # --------------------------------------------------------------- submit
    def submit(self, script_text: str, config_text: str, seed_override: Optional[int] = None) -> str:
        run_id = new_run_id()
        run = RunState(
            run_id=run_id,
            script_text=script_text,
            config_text=config_text,
            script_hash=sha256_hex(script_text),
            config_hash=sha256_hex(config_text),
            submitted_at=utc_now(),
            submitted_mono=self._clock(),
        )
        self.runs[run_id] = run
        reasons = self._prepare(run, seed_override)
        if reasons:
            self._fail_setup(run, reasons)
            raise RejectedError(run_id, reasons)
        logger.info(f"Run {run_id} queued: {len(run.plan)} steps on {', '.join(run.actor_ids)}")
        self.wake()
        return run_id

    def _prepare(self, run: RunState, seed_override) -> List[str]:
        try:
            script = parse_script(run.script_text, source="script")
            config = parse_config(run.config_text, source="config")
        except (ScriptSyntaxError, SchemaError) as e:
            return [str(e)]
        reasons = [str(f) for f in validate_integrity(script).errors]
        if script.mode == Mode.SDR:
            reasons.append("SDR adapter not available")
        reasons += validate_bindings(script, config)
        if seed_override is not None:
            if isinstance(seed_override, bool) or not isinstance(seed_override, int) or not 0 <= seed_override <= MAX_SEED:
                reasons.append(f"seed override {seed_override!r} is not a 64-bit unsigned integer")
            else:
                config = config.with_seed(seed_override)
        if reasons:
            return reasons
        run.script = script
        run.config = config
        run.start_plan(expand(script))
        return []

    def _fail_setup(self, run: RunState, reasons: List[str]):
        run.phase = Phase.FAILED_SETUP
        run.reasons = list(reasons)
        run.finished_at = utc_now()
        logger.warning(f"Run {run.run_id} FAILED_SETUP: " + "; ".join(reasons))

    # ------------------------------------------------------------ admission
    def schedule(self):
        """Admit queued runs in submission order while their actors are free
        and the run's own parallelism limit allows"""
        now = self._clock()
        running = sum(1 for r in self.runs.values() if r.phase == Phase.RUNNING)
        for run in list(self.runs.values()):
            if run.phase != Phase.QUEUED:
                continue
            missing = [a for a in run.actor_ids if not self.registry.online(a)]
            if missing:
                timeout = min(run.config.setup_timeout, self.setup_timeout)
                if now - run.submitted_mono >= timeout:
                    self._fail_setup(run, [f"actor(s) {', '.join(missing)} not registered within {timeout:g}s"])
                continue
            if running >= run.config.max_parallel_runs or not self.registry.free(run.actor_ids):
                continue
            self.registry.claim(run.actor_ids, run.run_id)
            for actor_id in run.actor_ids:
                self._log("ADMIT", run.run_id, actor_id)
            run.phase = Phase.RUNNING
            running += 1
            logger.info(f"Run {run.run_id} admitted")
            self._tasks[run.run_id] = asyncio.create_task(self._execute(run))

    async def scheduler_loop(self, tick: float = 0.1):
        while True:
            self._wake.clear()
            self.schedule()
            try:
                await asyncio.wait_for(self._wake.wait(), tick)
            except asyncio.TimeoutError:
                pass

    async def shutdown(self):
        for task in self._tasks.values():
            task.cancel()
        await asyncio.gather(*self._tasks.values(), return_exceptions=True)

    # ------------------------------------------------------------- dispatch
    async def _execute(self, run: RunState):
        try:
            await self.dispatch_loop(run)
            try:
                await self.collect_results(run)
            except PartialCollection as e:
                logger.warning(f"Run {run.run_id}: {e}")
            except RanProbeError as e:
                logger.error(f"Run {run.run_id} could not be stored: {e}")
        finally:
            for actor_id in run.actor_ids:
                desc = self.registry.get(actor_id)
                if desc is not None and desc.session is not None:
                    try:
                        await desc.session.send(MsgType.RUN_COMPLETE, {"phase": run.phase.value}, run_id=run.run_id)
                    except (ConnectionError, RuntimeError, OSError):
                        pass
            self.registry.release(run.actor_ids, run.run_id)
            for actor_id in run.actor_ids:
                self._log("RELEASE", run.run_id, actor_id)
            self.wake()

    def _place(self, run: RunState, step: PlanStep) -> Optional[str]:
        if step.actor_binding is not None:
            return step.actor_binding
        return next((a for a in run.actor_ids if self.registry.online(a)), None)

    async def dispatch_loop(self, run: RunState):
        """Send the plan one step at a time; a step is dispatched only after
        the previous one has a verdict"""
        halted = None
        for step in run.plan:
            if run.abort_requested or halted:
                break
            run.cursor = step.index
            outcome, actor_id = await self._dispatch_step(run, step)
            if run.record_outcome(step.index, outcome, actor_id):
                self._log("STEP_RESULT", run.run_id, actor_id, step.index)
            run.cursor = step.index + 1
            if (
                run.per_step[step.index].verdict == Verdict.ERROR
                and run.script.on_error == OnError.HALT
                and not run.abort_requested
            ):
                halted = f"run halted after step {step.index} ended in ERROR"

        if run.abort_requested:
            run.skip_remaining("run aborted")
            run.phase = Phase.ABORTED
        else:
            run.skip_remaining(halted or "not reached")
            run.cursor = len(run.plan)
            run.phase = Phase.COMPLETE
        run.finished_at = utc_now()
        counts = run.counts()
        logger.info(f"Run {run.run_id} {run.phase.value}: " + ", ".join(f"{k} {v}" for k, v in counts.items()))

    async def _dispatch_step(self, run: RunState, step: PlanStep) -> Tuple[StepOutcome, Optional[str]]:
        actor_id = self._place(run, step)
        if actor_id is None:
            return StepOutcome.error("no actor online for an unbound step"), None
        desc = self.registry.get(actor_id)
        if desc is None or desc.state == ActorState.OFFLINE or desc.session is None:
            return StepOutcome.error(f"actor '{actor_id}' is offline"), actor_id

        pending = PendingStep(step.index, actor_id, asyncio.get_running_loop().create_future(), self._clock())
        run.pending = pending
        payload = {
            "step": step.to_dict(),
            "run_seed": run.run_seed,
            "sut_endpoint": run.config.sut_endpoint,
            "mode": run.script.mode.value,
        }
        try:
            try:
                await desc.session.send(MsgType.DISPATCH_STEP, payload, run_id=run.run_id)
            except (ConnectionError, RuntimeError, OSError) as e:
                return StepOutcome.error(f"dispatch to '{actor_id}' failed: {e}"), actor_id
            self._log("DISPATCH_STEP", run.run_id, actor_id, step.index)

            timeout = run.config.action_timeout
            while True:
                remaining = pending.last_activity + timeout - self._clock()
                if remaining <= 0:
                    logger.warning(f"Run {run.run_id} step {step.index} timed out on '{actor_id}'")
                    await self._send_abort(actor_id, run.run_id)
                    return StepOutcome.error(f"step timed out after {timeout:g}s without progress"), actor_id
                try:
                    return await asyncio.wait_for(asyncio.shield(pending.result), remaining), actor_id
                except asyncio.TimeoutError:
                    continue
        finally:
            run.pending = None

    async def _send_abort(self, actor_id, run_id):
        desc = self.registry.get(actor_id)
        if desc is None or desc.session is None:
            return
        try:
            await desc.session.send(MsgType.ABORT, {}, run_id=run_id)
        except (ConnectionError, RuntimeError, OSError):
            pass

    # ------------------------------------------------------ actor messages
    def on_actor_message(self, actor_id: str, msg: WireMessage):
        """Route a run scoped message from a registered actor"""
        run = self._get(msg.run_id) if msg.run_id is not None else None
        if run is None:
            raise UnknownRun(str(msg.run_id))
        pending = run.pending
        if msg.msg_type == MsgType.STEP_STATUS:
            if pending is not None and pending.actor_id == actor_id and pending.index == msg.payload["index"]:
                pending.last_activity = self._clock()
        elif msg.msg_type == MsgType.STEP_RESULT:
            outcome = StepOutcome.from_dict(msg.payload["outcome"])
            index = msg.payload["index"]
            if pending is not None and pending.actor_id == actor_id and pending.index == index:
                if not pending.result.done():
                    pending.result.set_result(outcome)
            else:
                logger.debug(f"Ignoring late result for run {run.run_id} step {index} from '{actor_id}'")
        elif msg.msg_type == MsgType.TRACE_CHUNK:
            try:
                digest = run.add_chunk(actor_id, msg.payload)
            except SchemaError as e:
                logger.warning(f"Dropping trace from '{actor_id}' for run {run.run_id}: {e}")
                return
            if digest is not None:
                logger.debug(f"Run {run.run_id}: trace {digest[:12]} received from '{actor_id}'")
        elif msg.msg_type == MsgType.COLLECT_DONE:
            future = self._collections.get((run.run_id, actor_id))
            if future is not None and not future.done():
                future.set_result(msg.payload)

    def on_actor_lost(self, actor_id: str):
        """Fail whatever was waiting on an actor that went OFFLINE"""
        for run in self.runs.values():
            pending = run.pending
            if pending is not None and pending.actor_id == actor_id and not pending.result.done():
                pending.result.set_result(StepOutcome.error(f"actor '{actor_id}' went offline"))
        for (run_id, a), future in self._collections.items():
            if a == actor_id and not future.done():
                future.set_result(None)
        self.wake()

    # -------------------------------------------------------------- collect
    async def _collect_from(self, run: RunState, actor_id: str) -> Optional[dict]:
        desc = self.registry.get(actor_id)
        if desc is None or desc.session is None or desc.state == ActorState.OFFLINE:
            return None
        key = (run.run_id, actor_id)
        self._collections[key] = asyncio.get_running_loop().create_future()
        try:
            resend = [d for d in run.expected_traces(actor_id) if d not in run.traces]
            await desc.session.send(MsgType.COLLECT, {"resend": resend}, run_id=run.run_id)
            return await asyncio.wait_for(self._collections[key], self.collect_timeout)
        except (asyncio.TimeoutError, ConnectionError, RuntimeError, OSError) as e:
            logger.warning(f"No results from '{actor_id}' for run {run.run_id}: {e!r}")
            return None
        finally:
            self._collections.pop(key, None)

    async def collect_results(self, run: RunState) -> RunRecord:
        """Pull traces and provenance from every actor that ran a step, then
        persist the record. Collecting again returns the same record."""
        if run.record is None:
            if run.phase not in (Phase.COMPLETE, Phase.ABORTED):
                raise RanProbeError(f"Run {run.run_id} is {run.phase.value}; only finished runs are collected")
            actors = run.involved_actors
            payloads = await asyncio.gather(*(self._collect_from(run, a) for a in actors))
            missing, latencies = [], {}
            for actor_id, payload in zip(actors, payloads):
                absent = [d for d in run.expected_traces(actor_id) if d not in run.traces]
                if payload is None or absent:
                    missing.append(actor_id)
                if payload is not None:
                    latencies[actor_id] = payload.get("latencies", [])
            run.record = RunRecord.assemble(
                run_id=run.run_id,
                submitted_at=run.submitted_at,
                script=run.script_text,
                config=run.config_text,
                run_seed=run.run_seed,
                mode=run.script.mode.value,
                phase=run.phase.value,
                plan=run.plan.to_list(),
                per_step=run.per_step,
                step_actors=run.step_actors,
                missing_actors=missing,
                finished_at=run.finished_at,
                latencies=latencies,
            )
        self.store.store(run.record, run.traces)
        if not run.record.complete:
            raise PartialCollection(run.record.missing_actors, run.record)
        return run.record

    # ------------------------------------------------------- control side
    async def abort(self, run_id: str, wait: float = 10.0) -> Phase:
        run = self._get(run_id)
        if run.phase.terminal:
            return run.phase
        run.abort_requested = True
        logger.info(f"Aborting run {run_id}")
        if run.phase == Phase.QUEUED:
            run.skip_remaining("run aborted")
            run.phase = Phase.ABORTED
            run.finished_at = utc_now()
            try:
                await self.collect_results(run)
            except RanProbeError as e:
                logger.error(f"Run {run_id} could not be stored: {e}")
            return run.phase

        pending = run.pending
        if pending is not None and not pending.result.done():
            await self._send_abort(pending.actor_id, run_id)
            pending.result.set_result(StepOutcome.skipped("aborted"))
        task = self._tasks.get(run_id)
        if task is not None:
            await asyncio.wait({task}, timeout=wait)
        return run.phase

    async def wait(self, run_id: str, timeout: Optional[float] = None) -> Phase:
        """Wait until a run has been admitted, executed, collected and released
        (or failed setup)"""

        async def settled():
            run = self._get(run_id)
            while run.phase == Phase.QUEUED:
                await asyncio.sleep(0.02)
            task = self._tasks.get(run_id)
            if task is not None:
                await asyncio.wait({task})
            return run.phase

        return await asyncio.wait_for(settled(), timeout)

    def run_status(self, run_id: str) -> dict:
        run = self._get(run_id)
        snapshot = run.snapshot()
        snapshot["actor_health"] = {}
        for actor_id in run.actor_ids:
            desc = self.registry.get(actor_id)
            snapshot["actor_health"][actor_id] = desc.to_dict() if desc is not None else None
        return snapshot

    def list_runs(self) -> List[dict]:
        """Every run the server knows, newest first"""
        return [self.runs[r].snapshot() for r in sorted(self.runs, reverse=True)]
