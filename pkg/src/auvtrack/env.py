"""3-D particle ocean world: double-integrator AUVs with drag, wandering targets,
and an optional stochastic current disturbance.

All vectors are float64 numpy arrays of shape (3,). One `step_world` call advances
the world by `dt`:

    accel <- accel + (cmd * a_max - accel) * dt / actuator_tau   (first-order lag)
    v     <- clamp_norm(v + (accel + current - c_drag * v) * dt, v_max)
    p     <- p + v * dt, reflected at the box walls

Targets wander under an Ornstein-Uhlenbeck velocity process; the current force
is a second OU process that is only active when interference is enabled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import ScenarioConfig
from .errors import ConfigError, ContractViolation

_PLACEMENT_TRIES = 10_000


def clamp_norm(vec: np.ndarray, limit: float) -> np.ndarray:
    """Scale vec down so its Euclidean norm never exceeds limit."""
    norm = float(np.linalg.norm(vec))
    if norm <= limit:
        return vec
    vec = vec * (limit / norm)
    # rescaling can land a couple of ulp above the limit; one more pass fixes it
    norm = float(np.linalg.norm(vec))
    if norm > limit:
        vec = vec * (limit / norm)
    return vec


def reflect(position: np.ndarray, velocity: np.ndarray,
            half_extents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fold a position back into the box, flipping the velocity component on each bounce."""
    position = position.copy()
    velocity = velocity.copy()
    for axis in range(3):
        h = half_extents[axis]
        for _ in range(16):
            if position[axis] > h:
                position[axis] = 2.0 * h - position[axis]
                velocity[axis] = -velocity[axis]
            elif position[axis] < -h:
                position[axis] = -2.0 * h - position[axis]
                velocity[axis] = -velocity[axis]
            else:
                break
        else:
            raise ContractViolation("position could not be folded into bounds")
    return position, velocity


@dataclass
class AuvState:
    auv_id: int
    position: np.ndarray
    velocity: np.ndarray
    actuator_accel: np.ndarray
    prev_velocity: np.ndarray


@dataclass
class TargetState:
    target_id: int
    position: np.ndarray
    velocity: np.ndarray
    ou_velocity: np.ndarray  # raw OU state driving the velocity


@dataclass
class DisturbanceState:
    enabled: bool
    current_force: np.ndarray
    obs_noise_sigma: float


@dataclass
class WorldState:
    tick: int
    auvs: list[AuvState]
    targets: list[TargetState]
    disturbance: DisturbanceState
    rng: np.random.Generator

    @property
    def n_auvs(self) -> int:
        return len(self.auvs)

    @property
    def n_targets(self) -> int:
        return len(self.targets)


def _zero3() -> np.ndarray:
    return np.zeros(3, dtype=np.float64)


def init_world(config: ScenarioConfig) -> WorldState:
    """Spawn AUVs uniformly in the box with pairwise spacing >= d_auv, targets uniform.

    Fully determined by config.seed. Raises ConfigError when the box cannot fit
    the requested fleet at the required spacing within a bounded retry budget.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    bounds = config.bounds

    positions: list[np.ndarray] = []
    tries = 0
    while len(positions) < config.n_auvs:
        if tries >= _PLACEMENT_TRIES:
            raise ConfigError(
                f"could not place {config.n_auvs} AUVs with spacing {config.d_auv} "
                f"in half-extents {bounds.tolist()} after {tries} draws")
        tries += 1
        candidate = rng.uniform(-bounds, bounds)
        if all(np.linalg.norm(candidate - p) >= config.d_auv for p in positions):
            positions.append(candidate)

    auvs = [AuvState(auv_id=i, position=p, velocity=_zero3(),
                     actuator_accel=_zero3(), prev_velocity=_zero3())
            for i, p in enumerate(positions)]
    targets = [TargetState(target_id=j, position=rng.uniform(-bounds, bounds),
                           velocity=_zero3(), ou_velocity=_zero3())
               for j in range(config.n_targets)]
    disturbance = DisturbanceState(
        enabled=config.interference,
        current_force=_zero3(),
        obs_noise_sigma=config.sigma_obs if config.interference else 0.0)
    return WorldState(tick=0, auvs=auvs, targets=targets, disturbance=disturbance, rng=rng)


def apply_actuation(cmd: np.ndarray, actuator_accel: np.ndarray,
                    config: ScenarioConfig) -> np.ndarray:
    """First-order actuator lag toward cmd * a_max; result norm-clamped to a_max."""
    cmd = np.clip(np.asarray(cmd, dtype=np.float64), -1.0, 1.0)
    desired = cmd * config.a_max
    accel = actuator_accel + (desired - actuator_accel) * (config.dt / config.actuator_tau)
    return clamp_norm(accel, config.a_max)


def sample_disturbance(state: DisturbanceState, rng: np.random.Generator,
                       config: ScenarioConfig) -> DisturbanceState:
    """Advance the OU current force one step; inert when the disturbance is disabled."""
    if not state.enabled:
        return state
    drift = -config.theta_current * state.current_force * config.dt
    diffusion = config.sigma_current * np.sqrt(config.dt) * rng.standard_normal(3)
    return replace(state, current_force=state.current_force + drift + diffusion)


def target_step(target: TargetState, rng: np.random.Generator,
                config: ScenarioConfig) -> TargetState:
    """OU-driven wander: velocity follows the OU state, clamped to v_target_max."""
    ou = target.ou_velocity
    ou = ou - config.theta_target * ou * config.dt
    ou = ou + config.sigma_target * np.sqrt(config.dt) * rng.standard_normal(3)
    velocity = clamp_norm(ou, config.v_target_max)
    position, reflected_v = reflect(target.position + velocity * config.dt,
                                    velocity, config.bounds)
    # on a wall bounce, flip the OU state with the velocity so the wander turns back in
    flipped = reflected_v != velocity
    ou = np.where(flipped, -ou, ou)
    return TargetState(target_id=target.target_id, position=position,
                       velocity=reflected_v, ou_velocity=ou)


def step_world(world: WorldState, joint_actions: list[np.ndarray],
               config: ScenarioConfig) -> WorldState:
    """Advance every entity by one tick. Returns a new WorldState; world.rng is shared."""
    if world.tick >= config.episode_len:
        raise ContractViolation("episode already complete")
    if len(joint_actions) != world.n_auvs:
        raise ContractViolation(
            f"expected {world.n_auvs} actions, got {len(joint_actions)}")

    disturbance = sample_disturbance(world.disturbance, world.rng, config)
    targets = [target_step(t, world.rng, config) for t in world.targets]

    auvs = []
    for auv, cmd in zip(world.auvs, joint_actions):
        accel = apply_actuation(cmd, auv.actuator_accel, config)
        force = accel + disturbance.current_force - config.c_drag * auv.velocity
        velocity = clamp_norm(auv.velocity + force * config.dt, config.v_max)
        position, velocity = reflect(auv.position + velocity * config.dt,
                                     velocity, config.bounds)
        auvs.append(AuvState(auv_id=auv.auv_id, position=position, velocity=velocity,
                             actuator_accel=accel, prev_velocity=auv.velocity.copy()))

    return WorldState(tick=world.tick + 1, auvs=auvs, targets=targets,
                      disturbance=disturbance, rng=world.rng)


@dataclass
class Observation:
    """Per-AUV local view; `vector` flattens to the fixed length-15 layout."""

    ego_velocity: np.ndarray
    rel_target_pos: np.ndarray
    rel_target_vel: np.ndarray
    rel_neighbor_pos: np.ndarray  # shape (2, 3), zero-padded

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.ego_velocity, self.rel_target_pos,
                               self.rel_target_vel, self.rel_neighbor_pos.ravel()])


OBS_DIM = 15


def observe(world: WorldState, auv_id: int, assignment: np.ndarray,
            rng: np.random.Generator) -> Observation:
    """Build AUV auv_id's observation of its assigned target and two nearest peers.

    Gaussian noise of scale disturbance.obs_noise_sigma corrupts the relative
    positions; velocities are exact. Ties in peer distance break by lower id.
    """
    if auv_id < 0 or auv_id >= world.n_auvs:
        raise ContractViolation(f"no such AUV: {auv_id}")
    target_idx = int(assignment[auv_id])
    if target_idx < 0 or target_idx >= world.n_targets:
        raise ContractViolation(f"AUV {auv_id} has no valid assigned target")

    auv = world.auvs[auv_id]
    target = world.targets[target_idx]
    sigma = world.disturbance.obs_noise_sigma

    rel_target_pos = target.position - auv.position
    rel_target_vel = target.velocity - auv.velocity

    peers = [(float(np.linalg.norm(other.position - auv.position)), other.auv_id, other)
             for other in world.auvs if other.auv_id != auv_id]
    peers.sort(key=lambda item: (item[0], item[1]))
    rel_neighbor_pos = np.zeros((2, 3), dtype=np.float64)
    for slot, (_, _, other) in enumerate(peers[:2]):
        rel_neighbor_pos[slot] = other.position - auv.position

    if sigma > 0.0:
        rel_target_pos = rel_target_pos + rng.normal(0.0, sigma, 3)
        noise = rng.normal(0.0, sigma, (2, 3))
        for slot in range(min(2, len(peers))):
            rel_neighbor_pos[slot] += noise[slot]

    return Observation(ego_velocity=auv.velocity.copy(),
                       rel_target_pos=rel_target_pos,
                       rel_target_vel=rel_target_vel,
                       rel_neighbor_pos=rel_neighbor_pos)
