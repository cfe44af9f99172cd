"""In-process message passing between the coordinator and node roles.

The coordinator broadcasts the current global state to node inboxes; each node
replies into the coordinator inbox. Replies are returned in node-id order so
aggregation does not depend on which node finished first.
"""
from __future__ import annotations

import logging
import queue
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import ContractError

logger = logging.getLogger(__name__)

COORDINATOR = -1

LocalUpdate = Tuple[Any, int, Optional[float]]


@dataclass(frozen=True)
class Envelope:
    sender: int
    round_index: int
    payload: Any


class InProcessTransport:
    def __init__(self, node_ids: Iterable[int]) -> None:
        self._inboxes: Dict[int, "queue.Queue[Envelope]"] = {int(node_id): queue.Queue() for node_id in node_ids}
        self._coordinator: "queue.Queue[Envelope]" = queue.Queue()

    @property
    def node_ids(self) -> List[int]:
        return sorted(self._inboxes)

    def broadcast(self, round_index: int, payload: Any, node_ids: Optional[Sequence[int]] = None) -> None:
        for node_id in node_ids if node_ids is not None else self.node_ids:
            self._inbox(node_id).put(Envelope(COORDINATOR, round_index, payload))

    def receive(self, node_id: int) -> Envelope:
        try:
            return self._inbox(node_id).get_nowait()
        except queue.Empty as exc:
            raise ContractError(f"node {node_id} has no pending message") from exc

    def reply(self, node_id: int, round_index: int, payload: Any) -> None:
        self._coordinator.put(Envelope(int(node_id), round_index, payload))

    def collect(self, round_index: int, expected: Sequence[int]) -> List[Envelope]:
        replies: Dict[int, Envelope] = {}
        while len(replies) < len(expected):
            try:
                envelope = self._coordinator.get_nowait()
            except queue.Empty as exc:
                missing = sorted(set(expected) - set(replies))
                raise ContractError(f"round {round_index}: no reply from nodes {missing}") from exc
            if envelope.round_index != round_index:
                raise ContractError(f"stale reply from node {envelope.sender} for round {envelope.round_index}")
            replies[envelope.sender] = envelope
        return [replies[node_id] for node_id in sorted(replies)]

    def _inbox(self, node_id: int) -> "queue.Queue[Envelope]":
        try:
            return self._inboxes[int(node_id)]
        except KeyError as exc:
            raise ContractError(f"unknown node {node_id}") from exc


def run_round(
    transport: InProcessTransport,
    round_index: int,
    payload: Any,
    members: Sequence[int],
    local_update: Callable[[int, Any], LocalUpdate],
    max_workers: int = 1,
) -> List[Envelope]:
    """Broadcast, let every member train, and gather replies (a full barrier)."""
    transport.broadcast(round_index, payload, members)

    def work(node_id: int) -> None:
        envelope = transport.receive(node_id)
        transport.reply(node_id, round_index, local_update(node_id, envelope.payload))

    if max_workers > 1 and len(members) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            list(pool.map(work, members))
    else:
        for node_id in members:
            work(node_id)
    return transport.collect(round_index, members)


__all__ = ["COORDINATOR", "Envelope", "InProcessTransport", "LocalUpdate", "run_round"]
