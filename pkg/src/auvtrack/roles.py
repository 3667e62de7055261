"""Cluster control overlay: LC-AUV and USV-GC beacon duty cycles.

Node ids: AUVs are 0..n-1 with AUV 0 acting as the local controller (LC); the
surface gateway (USV-GC) is node n, parked at the surface above the box center.

Every `control_cycle` ticks the LC recomputes the balanced assignment and
broadcasts a LocRequest; followers apply the assignment when their copy arrives
and answer with a LocReply carrying state and reward telemetry. Every
`global_cycle` ticks the USV polls the LC with a GloRequest and the LC answers
with topology, progress, and the running reward estimate.

The same overlay runs whether or not training data is comms-gated. With
`comms_gated=true`, the harness parks each tick's transition here and the LC
releases all ticks below a request tick once that request's reply set is fully
delivered, so the replay stream inherits the channel's latency and losses. An
episode-end flush (one final collection round plus a channel drain) delivers
whatever the medium still holds; transitions whose cycle never completed are
dropped.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .beacons import (Beacon, GloReply, GloRequest, LocReply, LocRequest)
from .channel import AcousticChannel, compute_topology, topology_bits
from .config import RunConfig
from .env import WorldState
from .errors import ContractViolation
from .marl import ReplayBuffer, Transition
from .rewards import assign_targets

LC_ID = 0
MISSION_TRACK = 0


@dataclass
class RoleState:
    cfg: RunConfig
    channel: AcousticChannel
    usv_position: np.ndarray
    canonical: np.ndarray          # LC's latest assignment
    views: np.ndarray              # (n, n) assignment as known by each AUV
    latest_rewards: np.ndarray     # per-AUV r_total from the previous tick
    staleness: np.ndarray          # cycles since each follower was last heard
    open_request: int = -1         # tick of the newest LocRequest
    reply_seen: dict[int, set[int]] = field(default_factory=dict)
    est_sum: float = 0.0
    est_count: int = 0
    pending: deque = field(default_factory=deque)   # (tick, Transition), tick order
    released_through: int = 0
    dropped_transitions: int = 0
    usv_inbox: list[Beacon] = field(default_factory=list)
    usv_last_reply: GloReply | None = None
    loc_requests_broadcast: int = 0
    loc_replies_sent: int = 0
    glo_requests_sent: int = 0
    glo_replies_sent: int = 0

    @property
    def n_auvs(self) -> int:
        return self.cfg.scenario.n_auvs

    @property
    def usv_id(self) -> int:
        return self.n_auvs

    def est_reward(self) -> float:
        return self.est_sum / self.est_count if self.est_count else 0.0


def init_roles(world: WorldState, cfg: RunConfig, channel: AcousticChannel) -> RoleState:
    """Mission briefing: the initial assignment is synchronized out-of-band
    before the dive, so every AUV starts with the same view."""
    n = cfg.scenario.n_auvs
    canonical = assign_targets(world, cfg.scenario.n_targets)
    usv_position = np.array([0.0, 0.0, cfg.scenario.bounds_z])
    return RoleState(cfg=cfg, channel=channel, usv_position=usv_position,
                     canonical=canonical.copy(),
                     views=np.tile(canonical, (n, 1)),
                     latest_rewards=np.zeros(n),
                     staleness=np.zeros(n, dtype=np.int64))


def _node_position(role: RoleState, world: WorldState, node_id: int) -> np.ndarray:
    if node_id == role.usv_id:
        return role.usv_position
    return world.auvs[node_id].position


def _release_pending(role: RoleState, buffer: ReplayBuffer | None,
                     before_tick: int) -> None:
    if before_tick <= role.released_through:
        return
    role.released_through = before_tick
    while role.pending and role.pending[0][0] < before_tick:
        _, transition = role.pending.popleft()
        if buffer is not None:
            buffer.add(transition)


def add_pending(role: RoleState, tick: int, transition: Transition) -> None:
    """Park a transition until its covering beacon cycle completes (gated mode)."""
    if role.pending and role.pending[-1][0] >= tick:
        raise ContractViolation("pending transitions must arrive in tick order")
    role.pending.append((tick, transition))


def _broadcast_loc_request(role: RoleState, world: WorldState, tick: int,
                           t_now: float) -> None:
    role.canonical = assign_targets(world, role.cfg.scenario.n_targets)
    role.views[LC_ID] = role.canonical
    request = LocRequest(src=LC_ID, dst=0, tick=tick,
                         assignment=tuple(int(t) for t in role.canonical),
                         control_cycle=role.cfg.control_cycle)
    role.loc_requests_broadcast += 1
    role.reply_seen.setdefault(tick, set())
    lc_pos = _node_position(role, world, LC_ID)
    for follower in range(1, role.n_auvs):
        beacon = LocRequest(src=LC_ID, dst=follower, tick=tick,
                            assignment=request.assignment,
                            control_cycle=request.control_cycle)
        role.channel.send(beacon, lc_pos, _node_position(role, world, follower), t_now)
    role.open_request = tick


def _close_previous_request(role: RoleState) -> None:
    if role.open_request < 0:
        return
    heard = role.reply_seen.get(role.open_request, set())
    for follower in range(1, role.n_auvs):
        if follower not in heard:
            role.staleness[follower] += 1


def _dispatch(role: RoleState, world: WorldState, buffer: ReplayBuffer | None,
              beacon: Beacon, t_now: float) -> None:
    if isinstance(beacon, LocRequest):
        follower = beacon.dst
        role.views[follower] = np.array(beacon.assignment, dtype=np.int64)
        state = world.auvs[follower]
        reply = LocReply(src=follower, dst=LC_ID, tick=beacon.tick,
                         auv_state=tuple(state.position) + tuple(state.velocity),
                         instant_reward=float(role.latest_rewards[follower]),
                         error_flag=0)
        role.loc_replies_sent += 1
        role.channel.send(reply, _node_position(role, world, follower),
                          _node_position(role, world, LC_ID), t_now)
    elif isinstance(beacon, LocReply):
        seen = role.reply_seen.setdefault(beacon.tick, set())
        seen.add(beacon.src)
        role.staleness[beacon.src] = 0
        role.est_sum += beacon.instant_reward
        role.est_count += 1
        if len(seen) == role.n_auvs - 1:
            _release_pending(role, buffer, beacon.tick)
    elif isinstance(beacon, GloRequest):
        positions = [world.auvs[i].position for i in range(role.n_auvs)]
        positions.append(role.usv_position)
        topo = compute_topology(positions, role.cfg.channel.comm_range)
        reply = GloReply(src=LC_ID, dst=role.usv_id, tick=world.tick,
                         cluster_topo=topology_bits(topo),
                         exe_progress=world.tick / role.cfg.scenario.episode_len,
                         est_reward=role.est_reward())
        role.glo_replies_sent += 1
        role.channel.send(reply, _node_position(role, world, LC_ID),
                          role.usv_position, t_now)
    elif isinstance(beacon, GloReply):
        role.usv_inbox.append(beacon)
    else:
        raise ContractViolation(f"unroutable beacon {beacon!r}")


def lc_auv_cycle(role: RoleState, world: WorldState, buffer: ReplayBuffer | None,
                 t_now: float) -> None:
    """Per-tick pump: deliver due beacons, then act on a cycle boundary."""
    for beacon in role.channel.poll(t_now):
        _dispatch(role, world, buffer, beacon, t_now)
    if world.tick % role.cfg.control_cycle == 0:
        _close_previous_request(role)
        _broadcast_loc_request(role, world, world.tick, t_now)
        if role.n_auvs == 1:
            # no followers to wait for; the cycle completes immediately
            _release_pending(role, buffer, world.tick)


def usv_gc_cycle(role: RoleState, world: WorldState, t_now: float) -> None:
    """Surface gateway: request a status report once per global cycle and
    absorb any replies routed up by the pump."""
    if world.tick % role.cfg.global_cycle == 0:
        request = GloRequest(src=role.usv_id, dst=LC_ID, tick=world.tick,
                             mission_type=MISSION_TRACK,
                             task_number=role.cfg.scenario.n_targets,
                             d_target=role.cfg.scenario.d_target,
                             d_auv=role.cfg.scenario.d_auv,
                             episode_len=role.cfg.scenario.episode_len)
        role.glo_requests_sent += 1
        role.channel.send(request, role.usv_position,
                          _node_position(role, world, LC_ID), t_now)
    for beacon in role.usv_inbox:
        role.usv_last_reply = beacon
    role.usv_inbox.clear()


def flush_episode(role: RoleState, world: WorldState,
                  buffer: ReplayBuffer | None) -> None:
    """Episode-end sync: one final collection round, then drain the medium.

    Completes the delay alignment between gated and direct data paths: with a
    lossless channel every parked transition is released; lossy cycles that
    never completed are dropped and counted.
    """
    t_end = world.tick * role.cfg.scenario.dt
    _close_previous_request(role)
    _broadcast_loc_request(role, world, world.tick, t_end)
    if role.n_auvs == 1:
        _release_pending(role, buffer, world.tick)
    for _ in range(16):
        delivered = role.channel.drain()
        if not delivered:
            break
        for beacon in delivered:
            _dispatch(role, world, buffer, beacon, t_end)
    role.dropped_transitions += len(role.pending)
    role.pending.clear()
