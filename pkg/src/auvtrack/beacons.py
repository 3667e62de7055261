"""Acoustic beacon wire format.

Little-endian layout. Every beacon starts with the 9-byte header

    kind u8 | src u16 | dst u16 | tick u32

followed by a kind-specific payload. Integers use the stated widths, reals are
32-bit floats, and the topology bitmap packs the upper-triangle pair order
(0,1),(0,2),...,(1,2),... LSB-first, padded to whole bytes. Real-valued fields
are coerced through float32 at construction so decode(encode(b)) == b holds
field-for-field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, MalformedBeacon

KIND_GLO_REQUEST = 0
KIND_GLO_REPLY = 1
KIND_LOC_REQUEST = 2
KIND_LOC_REPLY = 3

_HEADER = struct.Struct("<BHHI")


def _f32(value: float) -> float:
    return float(np.float32(value))


def _check_range(name: str, value: int, bits: int) -> int:
    value = int(value)
    if not (0 <= value < (1 << bits)):
        raise ContractViolation(f"{name}={value} does not fit in u{bits}")
    return value


@dataclass
class Beacon:
    src: int
    dst: int
    tick: int

    def _check_header(self) -> None:
        _check_range("src", self.src, 16)
        _check_range("dst", self.dst, 16)
        _check_range("tick", self.tick, 32)


@dataclass
class GloRequest(Beacon):
    """USV-GC -> LC-AUV: mission briefing / keep-alive."""
    mission_type: int = 0
    task_number: int = 0
    d_target: float = 0.0
    d_auv: float = 0.0
    episode_len: int = 0

    def __post_init__(self):
        self.d_target = _f32(self.d_target)
        self.d_auv = _f32(self.d_auv)


@dataclass
class GloReply(Beacon):
    """LC-AUV -> USV-GC: cluster status summary."""
    cluster_topo: tuple[bool, ...] = ()
    exe_progress: float = 0.0
    est_reward: float = 0.0

    def __post_init__(self):
        self.cluster_topo = tuple(bool(b) for b in self.cluster_topo)
        self.exe_progress = _f32(self.exe_progress)
        self.est_reward = _f32(self.est_reward)


@dataclass
class LocRequest(Beacon):
    """LC-AUV -> followers: fresh task assignment plus the beacon period."""
    assignment: tuple[int, ...] = ()
    control_cycle: int = 0

    def __post_init__(self):
        self.assignment = tuple(int(t) for t in self.assignment)


@dataclass
class LocReply(Beacon):
    """Follower -> LC-AUV: own kinematic state, instantaneous reward, health."""
    auv_state: tuple[float, ...] = (0.0,) * 6
    instant_reward: float = 0.0
    error_flag: int = 0

    def __post_init__(self):
        if len(self.auv_state) != 6:
            raise ContractViolation("auv_state must hold 6 reals (pos + vel)")
        self.auv_state = tuple(_f32(v) for v in self.auv_state)
        self.instant_reward = _f32(self.instant_reward)


_KIND_BY_CLASS = {GloRequest: KIND_GLO_REQUEST, GloReply: KIND_GLO_REPLY,
                  LocRequest: KIND_LOC_REQUEST, LocReply: KIND_LOC_REPLY}


def _pack_bits(bits: tuple[bool, ...]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for k, bit in enumerate(bits):
        if bit:
            out[k // 8] |= 1 << (k % 8)
    return bytes(out)


def _unpack_bits(data: bytes, count: int) -> tuple[bool, ...]:
    return tuple(bool(data[k // 8] >> (k % 8) & 1) for k in range(count))


def pair_count(n_nodes: int) -> int:
    return n_nodes * (n_nodes - 1) // 2


def encode_beacon(beacon: Beacon) -> bytes:
    kind = _KIND_BY_CLASS.get(type(beacon))
    if kind is None:
        raise ContractViolation(f"not a beacon: {type(beacon).__name__}")
    beacon._check_header()
    head = _HEADER.pack(kind, beacon.src, beacon.dst, beacon.tick)

    if isinstance(beacon, GloRequest):
        payload = struct.pack(
            "<BHffI",
            _check_range("mission_type", beacon.mission_type, 8),
            _check_range("task_number", beacon.task_number, 16),
            beacon.d_target, beacon.d_auv,
            _check_range("episode_len", beacon.episode_len, 32))
    elif isinstance(beacon, GloReply):
        n_nodes = _n_nodes_for_pairs(len(beacon.cluster_topo))
        payload = (struct.pack("<B", _check_range("n_nodes", n_nodes, 8))
                   + _pack_bits(beacon.cluster_topo)
                   + struct.pack("<ff", beacon.exe_progress, beacon.est_reward))
    elif isinstance(beacon, LocRequest):
        n = len(beacon.assignment)
        _check_range("assignment length", n, 8)
        for t in beacon.assignment:
            _check_range("assignment entry", t, 8)
        payload = (struct.pack("<B", n) + bytes(beacon.assignment)
                   + struct.pack("<H", _check_range("control_cycle",
                                                    beacon.control_cycle, 16)))
    else:  # LocReply
        payload = struct.pack(
            "<6ffB", *beacon.auv_state, beacon.instant_reward,
            _check_range("error_flag", beacon.error_flag, 8))
    return head + payload


def _n_nodes_for_pairs(pairs: int) -> int:
    """Invert pairs = n*(n-1)/2; rejects lengths that are not triangular."""
    n = int((1 + np.sqrt(1 + 8 * pairs)) // 2)
    if pair_count(n) != pairs:
        raise ContractViolation(f"bitmap length {pairs} is not n*(n-1)/2 for any n")
    return n


def decode_beacon(data: bytes) -> Beacon:
    """Parse one beacon; any length or kind mismatch raises MalformedBeacon."""
    if len(data) < _HEADER.size:
        raise MalformedBeacon(f"truncated header: {len(data)} bytes")
    kind, src, dst, tick = _HEADER.unpack_from(data, 0)
    body = data[_HEADER.size:]
    try:
        if kind == KIND_GLO_REQUEST:
            mission_type, task_number, d_target, d_auv, episode_len = \
                _exact_unpack("<BHffI", body)
            return GloRequest(src, dst, tick, mission_type, task_number,
                              d_target, d_auv, episode_len)
        if kind == KIND_GLO_REPLY:
            if len(body) < 1:
                raise MalformedBeacon("missing node count")
            n_nodes = body[0]
            n_bits = pair_count(n_nodes)
            n_bytes = (n_bits + 7) // 8
            if len(body) != 1 + n_bytes + 8:
                raise MalformedBeacon(
                    f"GloReply length {len(body)} != expected {1 + n_bytes + 8}")
            bits = _unpack_bits(body[1:1 + n_bytes], n_bits)
            exe_progress, est_reward = struct.unpack_from("<ff", body, 1 + n_bytes)
            return GloReply(src, dst, tick, bits, exe_progress, est_reward)
        if kind == KIND_LOC_REQUEST:
            if len(body) < 1:
                raise MalformedBeacon("missing assignment length")
            n = body[0]
            if len(body) != 1 + n + 2:
                raise MalformedBeacon(
                    f"LocRequest length {len(body)} != expected {1 + n + 2}")
            assignment = tuple(body[1:1 + n])
            (control_cycle,) = struct.unpack_from("<H", body, 1 + n)
            return LocRequest(src, dst, tick, assignment, control_cycle)
        if kind == KIND_LOC_REPLY:
            fields = _exact_unpack("<6ffB", body)
            return LocReply(src, dst, tick, tuple(fields[:6]), fields[6], fields[7])
    except struct.error as exc:
        raise MalformedBeacon(str(exc)) from exc
    raise MalformedBeacon(f"unknown beacon kind {kind}")


def _exact_unpack(fmt: str, body: bytes):
    if len(body) != struct.calcsize(fmt):
        raise MalformedBeacon(
            f"payload length {len(body)} != expected {struct.calcsize(fmt)}")
    return struct.unpack(fmt, body)


def encoded_size(kind: int, n_auvs: int) -> int:
    """Wire size in bytes as a pure function of kind and fleet size.

    The GloReply topology covers n_auvs + 1 nodes (the surface gateway counts).
    """
    if kind == KIND_GLO_REQUEST:
        return _HEADER.size + struct.calcsize("<BHffI")
    if kind == KIND_GLO_REPLY:
        n_nodes = n_auvs + 1
        return _HEADER.size + 1 + (pair_count(n_nodes) + 7) // 8 + 8
    if kind == KIND_LOC_REQUEST:
        return _HEADER.size + 1 + n_auvs + 2
    if kind == KIND_LOC_REPLY:
        return _HEADER.size + struct.calcsize("<6ffB")
    raise ContractViolation(f"unknown beacon kind {kind}")
