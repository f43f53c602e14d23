"""Actor registry: who is connected, how healthy they are and which run
holds them.

An actor that stays silent for LIVENESS_PERIODS health periods, or whose
connection drops, goes OFFLINE. Registering again under the same id reclaims
the entry; registering while the old entry is still live is refused."""

import logging
import secrets
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional

from ..exceptions import HandshakeError
from ..wire import ErrorCode, HealthSnapshot, Session

logger = logging.getLogger(__name__)

LIVENESS_PERIODS = 3


class ActorState(str, Enum):
    IDLE = "IDLE"
    BUSY = "BUSY"
    OFFLINE = "OFFLINE"


@dataclass
class ActorDescriptor:
    id: str
    address: str
    state: ActorState
    last_health: HealthSnapshot
    token: str
    session: Optional[Session] = None
    current_run: Optional[str] = None
    last_seen: float = 0.0

    def to_dict(self):
        return {
            "id": self.id,
            "address": self.address,
            "state": self.state.value,
            "current_run": self.current_run,
            "health": self.last_health.to_dict(),
        }


class Registry:
    def __init__(self, health_period: float, clock: Callable[[], float] = time.monotonic):
        self.health_period = health_period
        self.actors: Dict[str, ActorDescriptor] = {}
        self._clock = clock

    def get(self, actor_id) -> Optional[ActorDescriptor]:
        return self.actors.get(actor_id)

    def online(self, actor_id) -> bool:
        desc = self.actors.get(actor_id)
        return desc is not None and desc.state != ActorState.OFFLINE

    def register(self, actor_id, address, health: HealthSnapshot, session: Session) -> ActorDescriptor:
        desc = self.actors.get(actor_id)
        if desc is not None and desc.state != ActorState.OFFLINE:
            raise HandshakeError(ErrorCode.DUPLICATE_ID, f"actor '{actor_id}' is already registered")
        token = secrets.token_hex(16)
        if desc is None:
            desc = ActorDescriptor(actor_id, address, ActorState.IDLE, health, token)
            self.actors[actor_id] = desc
            logger.info(f"Actor '{actor_id}' registered from {address}")
        else:
            desc.address = address
            desc.last_health = health
            desc.token = token
            logger.info(f"Actor '{actor_id}' reclaimed its registration")
        desc.session = session
        desc.state = ActorState.BUSY if desc.current_run else ActorState.IDLE
        desc.last_seen = self._clock()
        return desc

    def heartbeat(self, actor_id, health: HealthSnapshot):
        desc = self.actors[actor_id]
        desc.last_health = health
        desc.last_seen = self._clock()

    def touch(self, actor_id):
        desc = self.actors.get(actor_id)
        if desc is not None:
            desc.last_seen = self._clock()

    def mark_offline(self, actor_id, reason="") -> bool:
        desc = self.actors.get(actor_id)
        if desc is None or desc.state == ActorState.OFFLINE:
            return False
        desc.state = ActorState.OFFLINE
        desc.session = None
        logger.info(f"Actor '{actor_id}' is OFFLINE{': ' + reason if reason else ''}")
        return True

    def sweep(self) -> List[str]:
        """Mark actors OFFLINE that missed their health reports"""
        limit = LIVENESS_PERIODS * self.health_period
        now = self._clock()
        stale = [
            a.id for a in self.actors.values() if a.state != ActorState.OFFLINE and now - a.last_seen > limit
        ]
        for actor_id in stale:
            self.mark_offline(actor_id, f"no health report for {limit:.1f}s")
        return stale

    # --------------------------------------------------------- exclusivity
    def free(self, actor_ids: Iterable[str]) -> bool:
        return all(
            self.online(a) and self.actors[a].current_run is None for a in actor_ids
        )

    def claim(self, actor_ids: Iterable[str], run_id: str):
        actor_ids = list(actor_ids)
        assert self.free(actor_ids), f"claiming busy actors for {run_id}"
        for a in actor_ids:
            self.actors[a].current_run = run_id
            self.actors[a].state = ActorState.BUSY

    def release(self, actor_ids: Iterable[str], run_id: str):
        for a in actor_ids:
            desc = self.actors.get(a)
            if desc is not None and desc.current_run == run_id:
                desc.current_run = None
                if desc.state == ActorState.BUSY:
                    desc.state = ActorState.IDLE

    def snapshot(self) -> List[dict]:
        return [self.actors[a].to_dict() for a in sorted(self.actors)]
