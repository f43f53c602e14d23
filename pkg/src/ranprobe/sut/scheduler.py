"""Near-RT scheduler xApp stand-in.

Each TTI every UE's per-TTI demand joins its queue. When the cell can serve
all queued PRBs it does; otherwise capacity is shared in proportion to
demand * priority (water filled so no UE gets more than it has queued) and the
shares are rounded to whole PRBs by largest remainder, lowest UE index first
on ties. Arithmetic is exact so responses are identical on every host."""

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import List

from pydantic import BaseModel, ConfigDict, Field, StrictInt, model_validator


class SchedulerRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    ue_demands: List[StrictInt] = Field(min_length=1)
    priorities: List[float] = Field(min_length=1)
    capacity: StrictInt = Field(ge=1)
    tti_count: StrictInt = Field(ge=1)

    @model_validator(mode="after")
    def _shape(self):
        if len(self.ue_demands) != len(self.priorities):
            raise ValueError("ue_demands and priorities must have the same length")
        if any(d < 1 for d in self.ue_demands):
            raise ValueError("ue_demands must be positive PRB counts")
        if any(not p > 0 or not math.isfinite(p) for p in self.priorities):
            raise ValueError("priorities must be positive")
        return self


@dataclass(frozen=True)
class UeKpi:
    throughput_frac: float
    mean_latency_ttis: float
    loss_frac: float

    def to_dict(self):
        return {
            "throughput_frac": self.throughput_frac,
            "mean_latency_ttis": self.mean_latency_ttis,
            "loss_frac": self.loss_frac,
        }


@dataclass(frozen=True)
class SchedulerResponse:
    allocations: List[List[int]]
    kpi: List[UeKpi]
    aggregate: UeKpi
    qos_score: float

    def to_dict(self):
        return {
            "allocations": [list(a) for a in self.allocations],
            "kpi": {
                "throughput_frac": [k.throughput_frac for k in self.kpi],
                "mean_latency_ttis": [k.mean_latency_ttis for k in self.kpi],
                "loss_frac": [k.loss_frac for k in self.kpi],
            },
            "aggregate": self.aggregate.to_dict(),
            "qos_score": self.qos_score,
        }


def water_fill(queues, weights, capacity) -> List[Fraction]:
    """Split capacity proportionally to weights, never past a UE's queue"""
    shares = [Fraction(0)] * len(queues)
    active = [i for i, q in enumerate(queues) if q > 0]
    remaining = Fraction(capacity)
    while active and remaining > 0:
        total = sum(weights[i] for i in active)
        capped = [i for i in active if remaining * weights[i] / total >= queues[i]]
        if not capped:
            for i in active:
                shares[i] = remaining * weights[i] / total
            break
        for i in capped:
            shares[i] = Fraction(queues[i])
            remaining -= queues[i]
        active = [i for i in active if i not in capped]
    return shares


def largest_remainder(shares: List[Fraction], capacity: int) -> List[int]:
    floors = [math.floor(s) for s in shares]
    left = capacity - sum(floors)
    order = sorted(range(len(shares)), key=lambda i: (-(shares[i] - floors[i]), i))
    for i in order[:left]:
        floors[i] += 1
    return floors


def allocate_tti(queues, demands, priorities, capacity) -> List[int]:
    """Grants for one TTI; weights are per-TTI demand times priority, the
    backlog only caps a share"""
    if sum(queues) <= capacity:
        return list(queues)
    weights = [d * Fraction(p) for d, p in zip(demands, priorities)]
    return largest_remainder(water_fill(queues, weights, capacity), capacity)


def qos_score(priorities, served, demanded) -> Fraction:
    """Priority weighted mean of min(1, served/demanded)"""
    total = sum(Fraction(p) for p in priorities)
    score = sum(
        Fraction(p) * min(Fraction(1), Fraction(s, d))
        for p, s, d in zip(priorities, served, demanded)
    )
    return score / total


def schedule(request: SchedulerRequest) -> SchedulerResponse:
    n = len(request.ue_demands)
    # FIFO of [arrival_tti, prbs] per UE
    queues = [deque() for _ in range(n)]
    served = [0] * n
    waited = [0] * n
    allocations = []

    for tti in range(request.tti_count):
        for i, demand in enumerate(request.ue_demands):
            queues[i].append([tti, demand])
        backlog = [sum(c for _, c in q) for q in queues]
        alloc = allocate_tti(backlog, request.ue_demands, request.priorities, request.capacity)
        allocations.append(alloc)
        for i, grant in enumerate(alloc):
            served[i] += grant
            while grant:
                head = queues[i][0]
                take = min(grant, head[1])
                waited[i] += take * (tti - head[0])
                head[1] -= take
                grant -= take
                if head[1] == 0:
                    queues[i].popleft()

    demanded = [d * request.tti_count for d in request.ue_demands]
    kpi = []
    for i in range(n):
        latency = Fraction(waited[i], served[i]) if served[i] else Fraction(0)
        kpi.append(
            UeKpi(
                throughput_frac=float(Fraction(served[i], demanded[i])),
                mean_latency_ttis=float(latency),
                loss_frac=float(Fraction(demanded[i] - served[i], demanded[i])),
            )
        )
    total_served, total_demanded = sum(served), sum(demanded)
    aggregate = UeKpi(
        throughput_frac=float(Fraction(total_served, total_demanded)),
        mean_latency_ttis=float(Fraction(sum(waited), total_served)) if total_served else 0.0,
        loss_frac=float(Fraction(total_demanded - total_served, total_demanded)),
    )
    return SchedulerResponse(
        allocations=allocations,
        kpi=kpi,
        aggregate=aggregate,
        qos_score=float(qos_score(request.priorities, served, demanded)),
    )
