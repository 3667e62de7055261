"""Event-queue acoustic channel: propagation + serialization delay, range
gating, and Bernoulli loss.

    delay = distance / sound_speed + size_bits / bitrate

Deliveries come back from `poll` ordered by delivery time, ties broken by send
order. Every accepted send is eventually delivered exactly once or counted
dropped (out of range / lossy), never both.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .beacons import Beacon, encode_beacon
from .config import ChannelParams
from .errors import ContractViolation


def transmission_delay(distance: float, size_bits: int, params: ChannelParams) -> float:
    if distance < 0 or size_bits < 0:
        raise ContractViolation("distance and size must be nonnegative")
    return distance / params.sound_speed + size_bits / params.bitrate


@dataclass(order=True)
class _Flight:
    deliver_time: float
    seq: int
    beacon: Beacon = field(compare=False)


class AcousticChannel:
    """One shared medium per episode. Not thread-safe; one poller."""

    def __init__(self, params: ChannelParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self._queue: list[_Flight] = []
        self._seq = 0
        self._last_poll = -np.inf
        self.sent = 0
        self.dropped = 0
        self.delivered = 0

    @property
    def in_flight(self) -> int:
        return len(self._queue)

    def send(self, beacon: Beacon, src_pos: np.ndarray, dst_pos: np.ndarray,
             t_now: float) -> bool:
        """Queue a beacon for delivery; False when it was dropped instead.

        Out-of-range sends drop without consuming randomness; in-range sends
        draw once for the loss gate regardless of p_loss.
        """
        self.sent += 1
        distance = float(np.linalg.norm(np.asarray(src_pos) - np.asarray(dst_pos)))
        if distance > self.params.comm_range:
            self.dropped += 1
            return False
        if self.rng.random() < self.params.p_loss:
            self.dropped += 1
            return False
        size_bits = 8 * len(encode_beacon(beacon))
        deliver_time = t_now + transmission_delay(distance, size_bits, self.params)
        heapq.heappush(self._queue, _Flight(deliver_time, self._seq, beacon))
        self._seq += 1
        return True

    def poll(self, t_now: float) -> list[Beacon]:
        """All beacons with deliver_time <= t_now, in (time, send order)."""
        if t_now < self._last_poll:
            raise ContractViolation(
                f"poll time went backwards: {t_now} < {self._last_poll}")
        self._last_poll = t_now
        out: list[Beacon] = []
        while self._queue and self._queue[0].deliver_time <= t_now:
            out.append(heapq.heappop(self._queue).beacon)
        self.delivered += len(out)
        return out

    def drain(self) -> list[Beacon]:
        """Deliver everything still in flight (episode-end flush)."""
        return self.poll(np.inf)


def compute_topology(positions: list[np.ndarray], comm_range: float) -> np.ndarray:
    """Symmetric boolean adjacency: nodes i, j connected iff within comm_range."""
    n = len(positions)
    topo = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            link = float(np.linalg.norm(positions[i] - positions[j])) <= comm_range
            topo[i, j] = topo[j, i] = link
    return topo


def topology_bits(topo: np.ndarray) -> tuple[bool, ...]:
    """Upper triangle in pair order (0,1),(0,2),...,(1,2),... as bitmap bits."""
    n = topo.shape[0]
    return tuple(bool(topo[i, j]) for i in range(n) for j in range(i + 1, n))


def topology_from_bits(bits: tuple[bool, ...], n_nodes: int) -> np.ndarray:
    topo = np.zeros((n_nodes, n_nodes), dtype=bool)
    k = 0
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            topo[i, j] = topo[j, i] = bits[k]
            k += 1
    if k != len(bits):
        raise ContractViolation("bitmap length does not match node count")
    return topo
