# app/connectors/netsim.py
"""
Simulated range-limited message passing. Robots exchange data only with
neighbors inside the communication range; delivery is instantaneous within a
simulation step and reliable in range.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_components
from scipy.spatial.distance import cdist

from ..errors import UnknownRobotError

logger = logging.getLogger(__name__)

BROADCAST = "broadcast"
Positions = Mapping[int, Sequence[float]]


class MessageKind(Enum):
    REQUEST_ASSIGNMENT = "RequestAssignment"
    SEND_ASSIGNMENT = "SendAssignment"
    SEND_STATE_AND_CELLS = "SendStateAndCells"
    SWAPPED_ASSIGNMENT = "SwappedAssignment"
    REPARTITION_REQUEST = "RepartitionRequest"
    OBSERVATION_SHARE = "ObservationShare"


PAYLOAD_FIELDS = {
    MessageKind.REQUEST_ASSIGNMENT: set(),
    MessageKind.SEND_ASSIGNMENT: {"cells"},
    MessageKind.SEND_STATE_AND_CELLS: {"cells", "position", "weight"},
    MessageKind.SWAPPED_ASSIGNMENT: {"cells"},
    MessageKind.REPARTITION_REQUEST: {"sim_time"},
    MessageKind.OBSERVATION_SHARE: {"observations"},
}


@dataclass(frozen=True)
class Message:
    sender: int
    recipient: Union[int, str]
    kind: MessageKind
    payload: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        missing = PAYLOAD_FIELDS[self.kind] - set(self.payload)
        if missing:
            raise ValueError(f"{self.kind.value} message is missing payload field(s): {', '.join(sorted(missing))}")


@dataclass(frozen=True)
class NetworkConfig:
    """comm_range in meters; None means unlimited."""
    comm_range: Optional[float] = None

    def __post_init__(self):
        if self.comm_range is not None and self.comm_range <= 0:
            raise ValueError(f"comm_range must be positive or unlimited, got {self.comm_range}.")

    @property
    def unlimited(self) -> bool:
        return self.comm_range is None

    @classmethod
    def from_value(cls, value) -> "NetworkConfig":
        if value is None or (isinstance(value, str) and value.strip().lower() == "unlimited"):
            return cls(None)
        return cls(float(value))


def neighbors(robot_id: int, positions: Positions, cfg: NetworkConfig) -> Set[int]:
    if robot_id not in positions:
        raise UnknownRobotError(robot_id)
    others = [r for r in positions if r != robot_id]
    if cfg.unlimited:
        return set(others)
    q = np.asarray(positions[robot_id], dtype=float)
    return {r for r in others if float(np.linalg.norm(np.asarray(positions[r], dtype=float) - q)) <= cfg.comm_range}


def connected_components(positions: Positions, cfg: NetworkConfig) -> List[List[int]]:
    """Components of the range graph, each sorted, ordered by smallest member id."""
    ids = sorted(positions)
    if not ids:
        return []
    if cfg.unlimited:
        return [ids]
    pts = np.array([positions[r] for r in ids], dtype=float).reshape(-1, 2)
    adjacency = csr_matrix(cdist(pts, pts) <= cfg.comm_range)
    _, labels = _csgraph_components(adjacency, directed=False)
    groups: Dict[int, List[int]] = {}
    for rid, label in zip(ids, labels):
        groups.setdefault(int(label), []).append(rid)
    return sorted(groups.values(), key=lambda g: g[0])


class NetworkSimulator:
    """Step-scoped mailbox with range checks and traffic counters."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.inboxes: Dict[int, List[Message]] = {}
        self.messages_sent = 0
        self.messages_dropped = 0

    def neighbors(self, robot_id: int, positions: Positions) -> Set[int]:
        return neighbors(robot_id, positions, self.config)

    def connected_components(self, positions: Positions) -> List[List[int]]:
        return connected_components(positions, self.config)

    def send(self, msg: Message, positions: Positions) -> int:
        """Delivers to the recipient (or every neighbor on broadcast). Returns the number of deliveries."""
        in_range = self.neighbors(msg.sender, positions)
        if msg.recipient == BROADCAST:
            for rid in sorted(in_range):
                self.inboxes.setdefault(rid, []).append(msg)
            self.messages_sent += len(in_range)
            return len(in_range)

        if msg.recipient not in positions:
            raise UnknownRobotError(msg.recipient)
        self.messages_sent += 1
        if msg.recipient in in_range:
            self.inboxes.setdefault(msg.recipient, []).append(msg)
            return 1
        self.messages_dropped += 1
        logger.debug("Dropped %s from %s to %s (out of range).", msg.kind.value, msg.sender, msg.recipient)
        return 0

    def receive(self, robot_id: int, kind: Optional[MessageKind] = None) -> List[Message]:
        """Drains robot_id's inbox (only messages of `kind` when given)."""
        inbox = self.inboxes.get(robot_id, [])
        if kind is None:
            self.inboxes[robot_id] = []
            return inbox
        taken = [m for m in inbox if m.kind == kind]
        self.inboxes[robot_id] = [m for m in inbox if m.kind != kind]
        return taken

    def clear(self):
        self.inboxes.clear()

    def traffic(self) -> Dict[str, int]:
        return {"messages_sent": self.messages_sent, "messages_dropped": self.messages_dropped}
