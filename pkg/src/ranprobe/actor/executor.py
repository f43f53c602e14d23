"""Execution of single plan steps on an actor.

Every step ends in exactly one StepOutcome: keyword handlers return PASS or
FAIL, and any fault on the way (adapter, SUT refusal, bad parameters, a bug)
becomes an ERROR outcome carrying the reason. Long steps report progress
through the on_status callback every status_interval seconds."""

import asyncio
import logging
import threading
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Awaitable, Callable, Dict, List, Optional, Set

from ..aicore.session import headline, run_session
from ..exceptions import AdapterError, ConfigError, OracleError, RanProbeError
from ..outcome import StepOutcome, Verdict
from .adapters import Adapter
from .rng import session_id, step_key, step_rng, step_seed

logger = logging.getLogger(__name__)

DEFAULT_STATUS_INTERVAL = 1.0


@dataclass(frozen=True)
class StepContext:
    run_id: str
    index: int
    keyword: str
    params: dict
    actor_id: str
    run_seed: int

    @cached_property
    def key(self) -> bytes:
        return step_key(self.run_seed, self.actor_id, self.index)

    @property
    def rng(self):
        return step_rng(self.key)

    @property
    def seed(self) -> int:
        return step_seed(self.key)


@dataclass
class RunScratch:
    """What an actor keeps for one run until the server collects it"""

    session: Optional[str] = None
    traces: Dict[str, dict] = field(default_factory=dict)
    kpi_samples: List[dict] = field(default_factory=list)
    # provenance only: [{"step", "op", "ms"}]
    latencies: List[dict] = field(default_factory=list)
    # SIM endpoints this run talked to; released when the run completes
    sut_endpoints: Set[str] = field(default_factory=set)


class _Step:
    """Handler state for one step"""

    def __init__(self, ctx: StepContext, scratch: RunScratch, adapter: Adapter):
        self.ctx = ctx
        self.scratch = scratch
        self.adapter = adapter
        self.sut_version = None
        self.samples = []

    async def sut(self, op, args) -> dict:
        result, latency_ms = await self.adapter.call(op, args, run_id=self.ctx.run_id)
        self.note(op, result, latency_ms)
        return result

    def note(self, op, result, latency_ms):
        self.scratch.latencies.append({"step": self.ctx.index, "op": op, "ms": latency_ms})
        if self.sut_version is None:
            self.sut_version = result.get("sut_version")

    def sample(self, name, value, unit=""):
        self.samples.append(
            {"step": self.ctx.index, "actor": self.ctx.actor_id, "name": name, "value": value, "unit": unit}
        )

    def session_args(self, **args):
        if self.scratch.session is None:
            raise ConfigError(f"'{self.ctx.keyword}' needs an attached UE; run attach_request first")
        return dict(args, scope=self.ctx.run_id, session=self.scratch.session)

    def outcome(self, verdict=Verdict.PASS, traces=(), **detail) -> StepOutcome:
        return StepOutcome(
            verdict,
            detail=detail,
            kpi_samples=self.samples,
            trace_digests=list(traces),
            sut_version=self.sut_version,
        )


# ------------------------------------------------------------------ keywords
async def _sleep(step: _Step, params):
    await asyncio.sleep(params["ms"] / 1000)
    return step.outcome(slept_ms=params["ms"])


async def _attach_request(step: _Step, params):
    session = session_id(step.ctx.key)
    args = {"scope": step.ctx.run_id, "session": session, "ue": params["ue"]}
    for name in ("cell", "priority"):
        if name in params:
            args[name] = params[name]
    result = await step.sut("attach", args)
    step.scratch.session = session
    return step.outcome(session=session, cell=result["cell"], ue=result["ue"])


async def _detach(step: _Step, params):
    await step.sut("detach", step.session_args())
    step.scratch.session = None
    return step.outcome()


async def _send_traffic(step: _Step, params):
    if params.get("kind", "prb") == "prb":
        result = await step.sut("traffic", step.session_args(demand=params["demand"]))
        return step.outcome(demand=result["demand"])

    args = step.session_args(
        constellation=params.get("constellation", "QPSK"),
        count=params["count"],
        noise_std=params.get("noise_std", 0.0),
        seed=params.get("seed", step.ctx.seed),
    )
    result = await step.sut("demodulate", args)
    ser = result["symbol_error_rate"]
    step.sample("symbol_error_rate", ser)
    if "max_ser" in params and ser > params["max_ser"]:
        return step.outcome(Verdict.FAIL, symbol_error_rate=ser, expected=f"<= {params['max_ser']}")
    return step.outcome(symbol_error_rate=ser)


async def _await_response(step: _Step, params):
    result = await step.sut(
        "cell_schedule", step.session_args(capacity=params["capacity"], tti_count=params["tti_count"])
    )
    qos = result["qos_score"]
    step.sample("qos_score", qos)
    detail = {"qos_score": qos, "ues": result["ues"], "allocations": result["allocations"]}
    if "min_qos" in params and qos < params["min_qos"]:
        return step.outcome(Verdict.FAIL, expected=f">= {params['min_qos']}", **detail)
    return step.outcome(**detail)


_KPI_LIMITS = [
    # (param, kpi field, unit, violated)
    ("max_loss", "loss_frac", "", lambda value, limit: value > limit),
    ("min_throughput", "throughput_frac", "", lambda value, limit: value < limit),
    ("max_latency", "mean_latency_ttis", "tti", lambda value, limit: value > limit),
]


async def _query_kpi(step: _Step, params):
    result = await step.sut("kpi", step.session_args())
    kpi = result["kpi"]
    violations = []
    for param, name, unit, violated in _KPI_LIMITS:
        step.sample(name, kpi[name], unit)
        if param in params and violated(kpi[name], params[param]):
            violations.append(f"{name}={kpi[name]} breaks {param}={params[param]}")
    verdict = Verdict.FAIL if violations else Verdict.PASS
    return step.outcome(verdict, ue=result["ue"], kpi=kpi, violations=violations)


async def _set_impairment(step: _Step, params):
    result = await step.sut("impair", step.session_args(impairment=dict(params)))
    return step.outcome(impairment=result["impairment"])


async def _run_ai_session(step: _Step, params):
    loop = asyncio.get_running_loop()
    stop = threading.Event()

    def transport(op, args):
        if stop.is_set():
            raise OracleError("session aborted")
        future = asyncio.run_coroutine_threadsafe(step.adapter.call(op, args, run_id=step.ctx.run_id), loop)
        result, latency_ms = future.result()
        step.note(op, result, latency_ms)
        return result

    try:
        trace = await asyncio.to_thread(run_session, params["ai"], transport, step.ctx.seed)
    except OracleError as e:
        if e.trace is None:
            raise
        doc = e.trace.to_dict()
        step.scratch.traces[doc["digest"]] = doc
        return step.outcome(Verdict.ERROR, traces=[doc["digest"]], reason=str(e), **headline(e.trace))
    except asyncio.CancelledError:
        stop.set()
        raise

    doc = trace.to_dict()
    step.scratch.traces[doc["digest"]] = doc
    return step.outcome(traces=[doc["digest"]], **headline(trace))


KEYWORDS: Dict[str, Callable[[_Step, dict], Awaitable[StepOutcome]]] = {
    "sleep": _sleep,
    "attach_request": _attach_request,
    "detach": _detach,
    "send_traffic": _send_traffic,
    "await_response": _await_response,
    "query_kpi": _query_kpi,
    "set_impairment": _set_impairment,
    "run_ai_session": _run_ai_session,
}


class StepExecutor:
    def __init__(self, status_interval: float = DEFAULT_STATUS_INTERVAL):
        self.status_interval = status_interval

    async def execute(
        self,
        ctx: StepContext,
        scratch: RunScratch,
        adapter: Adapter,
        on_status: Optional[Callable[[StepContext, float], Awaitable[None]]] = None,
    ) -> StepOutcome:
        started = time.perf_counter()
        handler = KEYWORDS.get(ctx.keyword)
        if handler is None:
            return StepOutcome.error(f"unknown keyword '{ctx.keyword}'")

        step = _Step(ctx, scratch, adapter)
        task = asyncio.ensure_future(handler(step, ctx.params))
        try:
            while True:
                done, _ = await asyncio.wait({task}, timeout=self.status_interval)
                if done:
                    break
                if on_status is not None:
                    await on_status(ctx, (time.perf_counter() - started) * 1000)
            outcome = task.result()
        except asyncio.CancelledError:
            task.cancel()
            raise
        except AdapterError as e:
            outcome = StepOutcome.error(str(e), kind=e.kind)
        except (ConfigError, KeyError) as e:
            outcome = StepOutcome.error(f"bad parameters for '{ctx.keyword}': {e}")
        except RanProbeError as e:
            outcome = StepOutcome.error(str(e))
        except Exception as e:
            logger.exception(f"Step {ctx.index} ({ctx.keyword}) of run {ctx.run_id} crashed")
            outcome = StepOutcome.error(f"internal error: {e!r}")

        duration_ms = (time.perf_counter() - started) * 1000
        scratch.kpi_samples.extend(outcome.kpi_samples)
        logger.info(f"Run {ctx.run_id} step {ctx.index} {ctx.keyword}: {outcome.verdict.value}")
        return StepOutcome(
            outcome.verdict,
            duration_ms,
            outcome.detail,
            outcome.kpi_samples,
            outcome.trace_digests,
            outcome.sut_version,
        )
