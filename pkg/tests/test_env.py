import numpy as np
import pytest

from auvtrack.config import ScenarioConfig
from auvtrack.env import (AuvState, DisturbanceState, Observation, TargetState,
                          apply_actuation, clamp_norm, init_world, observe,
                          reflect, sample_disturbance, step_world, target_step)
from auvtrack.errors import ConfigError, ContractViolation


def small_config(**kw) -> ScenarioConfig:
    base = dict(n_auvs=2, n_targets=1, bounds_x=20.0, bounds_y=20.0,
                bounds_z=20.0, seed=42)
    base.update(kw)
    return ScenarioConfig(**base)


class _ZeroNoise:
    """rng stand-in that removes the diffusion term."""

    def standard_normal(self, size):
        return np.zeros(size)


# --- kinematic primitives ---------------------------------------------------

def test_clamp_norm_pythagorean():
    # (3,4,0) has norm 5; scaled to 2.5 it becomes (1.5, 2.0, 0)
    out = clamp_norm(np.array([3.0, 4.0, 0.0]), 2.5)
    assert out == pytest.approx([1.5, 2.0, 0.0])
    assert np.linalg.norm(out) <= 2.5


def test_clamp_norm_under_limit_unchanged():
    v = np.array([1.0, 0.0, 0.0])
    assert np.array_equal(clamp_norm(v, 5.0), v)


def test_clamp_norm_never_exceeds_limit():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        v = rng.normal(0, 100, 3)
        assert np.linalg.norm(clamp_norm(v, 2.0)) <= 2.0


def test_reflect_single_fold():
    h = np.array([5.0, 5.0, 5.0])
    p, v = reflect(np.array([7.0, 0.0, 0.0]), np.array([1.0, 1.0, 0.0]), h)
    assert p == pytest.approx([3.0, 0.0, 0.0])
    assert v == pytest.approx([-1.0, 1.0, 0.0])


def test_reflect_double_fold_restores_sign():
    # 23 folds to -13 and again to 3; two flips cancel
    h = np.array([5.0, 5.0, 5.0])
    p, v = reflect(np.array([23.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]), h)
    assert p == pytest.approx([3.0, 0.0, 0.0])
    assert v == pytest.approx([1.0, 0.0, 0.0])


def test_reflect_inside_is_identity():
    h = np.array([5.0, 5.0, 5.0])
    p, v = reflect(np.array([1.0, -4.9, 0.0]), np.array([0.5, 0.5, 0.5]), h)
    assert p == pytest.approx([1.0, -4.9, 0.0])
    assert v == pytest.approx([0.5, 0.5, 0.5])


def test_actuator_lag_closed_form():
    # a_k = a_max * (1 - (1 - dt/tau)^k) for a constant full command;
    # dt/tau = 0.2 so after 3 steps a = 1 - 0.8^3 = 0.488
    cfg = small_config()
    accel = np.zeros(3)
    for _ in range(3):
        accel = apply_actuation(np.array([1.0, 0.0, 0.0]), accel, cfg)
    assert accel[0] == pytest.approx(0.488, abs=1e-12)


def test_actuator_clips_command_and_norm():
    cfg = small_config()
    # commands beyond [-1, 1] behave like the saturated command
    a1 = apply_actuation(np.array([5.0, 0.0, 0.0]), np.zeros(3), cfg)
    a2 = apply_actuation(np.array([1.0, 0.0, 0.0]), np.zeros(3), cfg)
    assert np.array_equal(a1, a2)
    # a diagonal full command converges under the a_max norm cap
    accel = np.zeros(3)
    for _ in range(200):
        accel = apply_actuation(np.ones(3), accel, cfg)
        assert np.linalg.norm(accel) <= cfg.a_max + 1e-12


def test_target_ou_decay_factor():
    # theta*dt = 0.05: without diffusion the OU state shrinks by exactly 0.95
    cfg = small_config()
    target = TargetState(target_id=0, position=np.zeros(3),
                         velocity=np.zeros(3),
                         ou_velocity=np.array([1.0, -2.0, 0.5]))
    stepped = target_step(target, _ZeroNoise(), cfg)
    assert stepped.ou_velocity == pytest.approx([0.95, -1.9, 0.475])
    assert stepped.velocity == pytest.approx(
        clamp_norm(np.array([0.95, -1.9, 0.475]), cfg.v_target_max))


def test_target_bounce_flips_ou_state():
    cfg = small_config(bounds_x=1.0, bounds_y=1.0, bounds_z=1.0,
                       v_target_max=0.9)
    target = TargetState(target_id=0, position=np.array([0.98, 0.0, 0.0]),
                         velocity=np.zeros(3),
                         ou_velocity=np.array([0.8, 0.0, 0.0]))
    stepped = target_step(target, _ZeroNoise(), cfg)
    assert stepped.velocity[0] < 0  # bounced off the +x wall
    assert stepped.ou_velocity[0] < 0  # wander state turned back in too


def test_disturbance_decay_without_noise():
    cfg = small_config(interference=True)
    state = DisturbanceState(enabled=True, current_force=np.array([2.0, 0.0, 0.0]),
                             obs_noise_sigma=0.5)
    out = sample_disturbance(state, _ZeroNoise(), cfg)
    # drift is -theta * f * dt = -0.1 * f
    assert out.current_force == pytest.approx([1.9, 0.0, 0.0])


def test_disturbance_disabled_is_inert_and_draws_nothing():
    cfg = small_config()
    state = DisturbanceState(enabled=False, current_force=np.zeros(3),
                             obs_noise_sigma=0.0)
    # object() has no standard_normal: any draw would raise
    out = sample_disturbance(state, object(), cfg)
    assert out is state


def test_target_ou_stationary_moments():
    # AR(1) with phi = 1 - theta*dt = 0.95 and shock std sigma*sqrt(dt):
    # stationary std = sigma*sqrt(dt)/sqrt(1-phi^2) ~= 0.5064. Huge box so no
    # wall flips; 3-sigma bands widened for the autocorrelated sample.
    cfg = small_config(bounds_x=1e9, bounds_y=1e9, bounds_z=1e9)
    rng = np.random.default_rng(1234)
    target = TargetState(target_id=0, position=np.zeros(3),
                         velocity=np.zeros(3), ou_velocity=np.zeros(3))
    samples = np.empty((20_000, 3))
    for k in range(samples.shape[0]):
        target = target_step(target, rng, cfg)
        samples[k] = target.ou_velocity
    samples = samples[1000:]  # burn-in
    expected_std = cfg.sigma_target * np.sqrt(cfg.dt) / np.sqrt(1 - 0.95 ** 2)
    n_eff = samples.shape[0] * (1 - 0.95) / (1 + 0.95)
    assert abs(samples.mean()) < 3 * expected_std / np.sqrt(n_eff)
    assert abs(samples.std() - expected_std) < 3 * expected_std / np.sqrt(2 * n_eff)


# --- world stepping ----------------------------------------------------------

def test_equilibrium_world_stays_put():
    cfg = small_config(sigma_target=0.0)
    world = init_world(cfg)
    before = [a.position.copy() for a in world.auvs]
    for _ in range(10):
        world = step_world(world, [np.zeros(3)] * cfg.n_auvs, cfg)
    for auv, p0 in zip(world.auvs, before):
        assert np.array_equal(auv.position, p0)
        assert np.all(auv.velocity == 0.0)


def test_step_invariants_random_actions():
    cfg = small_config(n_auvs=4, n_targets=2, interference=True, seed=7)
    world = init_world(cfg)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        if world.tick >= cfg.episode_len:
            world = init_world(cfg)
        cmds = [rng.uniform(-1, 1, 3) for _ in range(cfg.n_auvs)]
        world = step_world(world, cmds, cfg)
        for auv in world.auvs:
            assert np.linalg.norm(auv.velocity) <= cfg.v_max + 1e-9
            assert np.all(np.abs(auv.position) <= cfg.bounds + 1e-9)
        for target in world.targets:
            assert np.linalg.norm(target.velocity) <= cfg.v_target_max + 1e-9
            assert np.all(np.abs(target.position) <= cfg.bounds + 1e-9)


def test_step_rejects_wrong_action_count():
    cfg = small_config()
    world = init_world(cfg)
    with pytest.raises(ContractViolation):
        step_world(world, [np.zeros(3)], cfg)


def test_step_rejects_finished_episode():
    cfg = small_config(episode_len=2)
    world = init_world(cfg)
    for _ in range(2):
        world = step_world(world, [np.zeros(3)] * 2, cfg)
    with pytest.raises(ContractViolation):
        step_world(world, [np.zeros(3)] * 2, cfg)


# --- spawn -------------------------------------------------------------------

def test_init_world_deterministic_per_seed():
    cfg = small_config(n_auvs=6, n_targets=3)
    w1, w2 = init_world(cfg), init_world(cfg)
    for a, b in zip(w1.auvs, w2.auvs):
        assert np.array_equal(a.position, b.position)
    w3 = init_world(small_config(n_auvs=6, n_targets=3, seed=43))
    assert not np.array_equal(w1.auvs[0].position, w3.auvs[0].position)


def test_init_world_respects_spacing():
    cfg = small_config(n_auvs=8, n_targets=2, seed=3)
    world = init_world(cfg)
    for i, a in enumerate(world.auvs):
        for b in world.auvs[i + 1:]:
            assert np.linalg.norm(a.position - b.position) >= cfg.d_auv


def test_init_world_infeasible_spacing_raises():
    cfg = small_config(n_auvs=12, n_targets=2,
                       bounds_x=0.1, bounds_y=0.1, bounds_z=0.1)
    with pytest.raises(ConfigError):
        init_world(cfg)


# --- observations ------------------------------------------------------------

def hand_world(positions, velocities, target_pos, target_vel, sigma=0.0):
    auvs = [AuvState(auv_id=i, position=np.array(p, dtype=float),
                     velocity=np.array(v, dtype=float),
                     actuator_accel=np.zeros(3), prev_velocity=np.zeros(3))
            for i, (p, v) in enumerate(zip(positions, velocities))]
    targets = [TargetState(target_id=0, position=np.array(target_pos, dtype=float),
                           velocity=np.array(target_vel, dtype=float),
                           ou_velocity=np.zeros(3))]
    disturbance = DisturbanceState(enabled=sigma > 0, current_force=np.zeros(3),
                                   obs_noise_sigma=sigma)
    from auvtrack.env import WorldState
    return WorldState(tick=0, auvs=auvs, targets=targets,
                      disturbance=disturbance, rng=np.random.default_rng(0))


def test_observation_layout_exact():
    world = hand_world(
        positions=[[0, 0, 0], [1, 0, 0], [0, 3, 0]],
        velocities=[[0.5, 0, 0], [0, 0, 0], [0, 0, 0]],
        target_pos=[10, 0, 0], target_vel=[0, 1, 0])
    assignment = np.zeros(3, dtype=int)
    obs = observe(world, 0, assignment, np.random.default_rng(0))
    assert obs.ego_velocity == pytest.approx([0.5, 0, 0])
    assert obs.rel_target_pos == pytest.approx([10, 0, 0])
    assert obs.rel_target_vel == pytest.approx([-0.5, 1, 0])
    # peers ordered by distance: AUV 1 at d=1, then AUV 2 at d=3
    assert obs.rel_neighbor_pos[0] == pytest.approx([1, 0, 0])
    assert obs.rel_neighbor_pos[1] == pytest.approx([0, 3, 0])
    assert obs.vector.shape == (15,)


def test_observation_pads_missing_peer():
    world = hand_world(positions=[[0, 0, 0], [2, 0, 0]],
                       velocities=[[0, 0, 0]] * 2,
                       target_pos=[5, 0, 0], target_vel=[0, 0, 0])
    obs = observe(world, 0, np.zeros(2, dtype=int), np.random.default_rng(0))
    assert obs.rel_neighbor_pos[0] == pytest.approx([2, 0, 0])
    assert np.all(obs.rel_neighbor_pos[1] == 0.0)


def test_observation_peer_tie_breaks_by_id():
    world = hand_world(positions=[[0, 0, 0], [0, 2, 0], [2, 0, 0], [0, 0, 2]],
                       velocities=[[0, 0, 0]] * 4,
                       target_pos=[5, 0, 0], target_vel=[0, 0, 0])
    obs = observe(world, 0, np.zeros(4, dtype=int), np.random.default_rng(0))
    # all peers at distance 2: ids 1 and 2 win the two slots
    assert obs.rel_neighbor_pos[0] == pytest.approx([0, 2, 0])
    assert obs.rel_neighbor_pos[1] == pytest.approx([2, 0, 0])


def test_observation_rejects_bad_assignment():
    world = hand_world(positions=[[0, 0, 0], [1, 0, 0]],
                       velocities=[[0, 0, 0]] * 2,
                       target_pos=[5, 0, 0], target_vel=[0, 0, 0])
    with pytest.raises(ContractViolation):
        observe(world, 0, np.array([-1, 0]), np.random.default_rng(0))


def test_observation_noise_statistics():
    # noise hits relative positions only; velocities stay exact and the
    # zero-pad slot stays zero
    sigma = 0.5
    world = hand_world(positions=[[0, 0, 0], [2, 0, 0]],
                       velocities=[[0.3, 0, 0], [0, 0, 0]],
                       target_pos=[5, 0, 0], target_vel=[0, 1, 0], sigma=sigma)
    rng = np.random.default_rng(99)
    n = 10_000
    errs = np.empty((n, 3))
    for k in range(n):
        obs = observe(world, 0, np.zeros(2, dtype=int), rng)
        errs[k] = obs.rel_target_pos - np.array([5.0, 0, 0])
        assert obs.rel_target_vel == pytest.approx([-0.3, 1, 0])
        assert np.all(obs.rel_neighbor_pos[1] == 0.0)
    assert abs(errs.mean()) < 3 * sigma / np.sqrt(3 * n)
    assert abs(errs.std() - sigma) < 3 * sigma / np.sqrt(2 * 3 * n)
