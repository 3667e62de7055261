"""Reward shaping and target assignment for the tracking task.

Four per-AUV components:

    track  :  k_track / (1 + d / d_target)          toward the assigned target
    form   : -k_form * sum_j max(0, d_auv - d_ij)   spacing penalty vs peers
    smooth : -k_smooth * ||v - v_prev||^2           discourages thrashing
    vel    : -k_vel * ||v - v_target||              match the target's motion

The learner consumes two streams: scene = track + vel, general = form + smooth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RewardCoefficients, ScenarioConfig
from .env import WorldState
from .errors import ContractViolation


def assign_targets(world: WorldState, n_targets: int) -> np.ndarray:
    """Balanced greedy assignment: repeatedly bind the globally nearest
    (AUV, target) pair, subject to per-target capacity ceil(n/m) and to
    feasibility of giving every target its floor(n/m) share. Ties break by
    lowest AUV id, then target id. Returns an int array of length n_auvs.
    """
    n = world.n_auvs
    m = n_targets
    if m < 1 or m > world.n_targets:
        raise ContractViolation(f"n_targets {m} out of range")
    if n < m:
        raise ContractViolation("cannot cover every target: n_auvs < n_targets")
    ceil_share = -(-n // m)
    floor_share = n // m

    dist = np.empty((n, m), dtype=np.float64)
    for i, auv in enumerate(world.auvs):
        for j in range(m):
            dist[i, j] = np.linalg.norm(auv.position - world.targets[j].position)

    assignment = np.full(n, -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    for picks_left in range(n, 0, -1):
        best: tuple[float, int, int] | None = None
        for i in range(n):
            if assignment[i] >= 0:
                continue
            for j in range(m):
                if counts[j] >= ceil_share:
                    continue
                # after this pick the remaining AUVs must still cover every
                # target's floor share, else the assignment cannot balance
                deficit = int(np.maximum(floor_share - counts, 0).sum())
                deficit -= 1 if counts[j] < floor_share else 0
                if picks_left - 1 < deficit:
                    continue
                cand = (dist[i, j], i, j)
                if best is None or cand < best:
                    best = cand
        if best is None:
            raise ContractViolation("assignment search stalled")  # unreachable
        _, i, j = best
        assignment[i] = j
        counts[j] += 1
    return assignment


def tracking_reward(distance: float, coeffs: RewardCoefficients,
                    config: ScenarioConfig) -> float:
    """Hyperbolic in distance, normalized by d_target; positive everywhere."""
    if distance < 0:
        raise ContractViolation("distance must be nonnegative")
    return coeffs.k_track / (1.0 + distance / config.d_target)


def formation_reward(positions: list[np.ndarray], i: int,
                     coeffs: RewardCoefficients, config: ScenarioConfig) -> float:
    """Zero while every peer keeps distance >= d_auv; linear penalty inside."""
    penalty = 0.0
    for j, pos in enumerate(positions):
        if j == i:
            continue
        gap = float(np.linalg.norm(positions[i] - pos))
        penalty += max(0.0, config.d_auv - gap)
    return -coeffs.k_form * penalty


def smoothness_reward(velocity: np.ndarray, prev_velocity: np.ndarray,
                      coeffs: RewardCoefficients) -> float:
    delta = velocity - prev_velocity
    return -coeffs.k_smooth * float(delta @ delta)


def velocity_consistency_reward(v_auv: np.ndarray, v_target: np.ndarray,
                                coeffs: RewardCoefficients) -> float:
    return -coeffs.k_vel * float(np.linalg.norm(v_auv - v_target))


@dataclass
class RewardBreakdown:
    r_track: float
    r_form: float
    r_smooth: float
    r_vel: float

    @property
    def r_scene(self) -> float:
        return self.r_track + self.r_vel

    @property
    def r_general(self) -> float:
        return self.r_form + self.r_smooth

    @property
    def r_total(self) -> float:
        return self.r_scene + self.r_general


def compose_reward(world: WorldState, auv_id: int, assignment: np.ndarray,
                   coeffs: RewardCoefficients, config: ScenarioConfig) -> RewardBreakdown:
    """Evaluate all four components for one AUV on the current world state."""
    auv = world.auvs[auv_id]
    target_idx = int(assignment[auv_id])
    if target_idx < 0 or target_idx >= world.n_targets:
        raise ContractViolation(f"AUV {auv_id} is unassigned")
    target = world.targets[target_idx]

    distance = float(np.linalg.norm(auv.position - target.position))
    positions = [a.position for a in world.auvs]
    return RewardBreakdown(
        r_track=tracking_reward(distance, coeffs, config),
        r_form=formation_reward(positions, auv_id, coeffs, config),
        r_smooth=smoothness_reward(auv.velocity, auv.prev_velocity, coeffs),
        r_vel=velocity_consistency_reward(auv.velocity, target.velocity, coeffs),
    )
