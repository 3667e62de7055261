import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auvtrack.config import Hyperparams, RunConfig, ScenarioConfig
from auvtrack.env import AuvState, DisturbanceState, TargetState, WorldState
from auvtrack.errors import ContractViolation
from auvtrack.marl import (ACT_DIM, N_SCENES, SCENE_APPROACH, SCENE_AVOID,
                           SCENE_ENCIRCLE, SCENE_TRACKING, ReplayBuffer,
                           Trainer, Transition, cluster_scene_label, fuse_q,
                           global_state, heuristic_scene_label, identify_scene,
                           q_scene, state_dim)
from auvtrack.neural import MlpParams, mlp_forward, softmax

# --- fusion -------------------------------------------------------------------

def test_fuse_endpoints_exact():
    assert fuse_q(1.234, -7.5, 0.0) == 1.234
    assert fuse_q(1.234, -7.5, 1.0) == -7.5


def test_fuse_midpoint():
    assert fuse_q(0.0, 10.0, 0.25) == pytest.approx(2.5)


def test_fuse_rejects_out_of_range_weight():
    with pytest.raises(ContractViolation):
        fuse_q(0.0, 1.0, -0.01)
    with pytest.raises(ContractViolation):
        fuse_q(0.0, 1.0, 1.01)


def test_fuse_batch_shapes():
    qg = np.array([0.0, 2.0])
    qs = np.array([4.0, -2.0])
    w = np.array([0.5, 0.25])
    assert fuse_q(qg, qs, w) == pytest.approx([2.0, 1.0])


@settings(max_examples=500, deadline=None)
@given(st.floats(-1e12, 1e12), st.floats(-1e12, 1e12), st.floats(0.0, 1.0))
def test_fuse_stays_in_convex_hull(qg, qs, w):
    fused = fuse_q(qg, qs, w)
    assert min(qg, qs) <= fused <= max(qg, qs)


def bias_only_net(biases: np.ndarray, in_dim: int) -> MlpParams:
    return MlpParams(weights=[np.zeros((len(biases), in_dim))],
                     biases=[np.asarray(biases, dtype=np.float64)],
                     activations=["identity"])


def test_q_scene_head_mixing():
    # heads fixed at (1, 3, 100, 100) via a bias-only critic
    critic = bias_only_net(np.array([1.0, 3.0, 100.0, 100.0]), in_dim=6)
    state, joint = np.zeros(3), np.zeros(3)
    assert q_scene(critic, state, joint, np.array([0.5, 0.5, 0.0, 0.0])) == pytest.approx(2.0)
    assert q_scene(critic, state, joint, np.array([0.0, 1.0, 0.0, 0.0])) == pytest.approx(3.0)
    assert q_scene(critic, state, joint, np.full(4, 0.25)) == pytest.approx(51.0)


# --- scene labels ---------------------------------------------------------------

def label_world(auv_positions, target_pos):
    auvs = [AuvState(auv_id=i, position=np.array(p, dtype=float),
                     velocity=np.zeros(3), actuator_accel=np.zeros(3),
                     prev_velocity=np.zeros(3))
            for i, p in enumerate(auv_positions)]
    targets = [TargetState(target_id=0, position=np.array(target_pos, dtype=float),
                           velocity=np.zeros(3), ou_velocity=np.zeros(3))]
    return WorldState(tick=0, auvs=auvs, targets=targets,
                      disturbance=DisturbanceState(False, np.zeros(3), 0.0),
                      rng=np.random.default_rng(0))


CFG = ScenarioConfig()  # d_target=5, d_auv=4


def test_scene_bands_single_auv():
    assignment = np.zeros(1, dtype=int)
    # d = 15 > 2*d_target: approach
    world = label_world([[15, 0, 0]], [0, 0, 0])
    assert heuristic_scene_label(world, 0, assignment, CFG) == SCENE_APPROACH
    # d = 7.5 in (d_target, 2*d_target]: tracking
    world = label_world([[7.5, 0, 0]], [0, 0, 0])
    assert heuristic_scene_label(world, 0, assignment, CFG) == SCENE_TRACKING
    # d = 2.5 <= d_target: encirclement
    world = label_world([[2.5, 0, 0]], [0, 0, 0])
    assert heuristic_scene_label(world, 0, assignment, CFG) == SCENE_ENCIRCLE


def test_scene_band_boundaries():
    assignment = np.zeros(1, dtype=int)
    # exactly 2*d_target is still tracking, exactly d_target still encirclement
    assert heuristic_scene_label(label_world([[10, 0, 0]], [0, 0, 0]),
                                 0, assignment, CFG) == SCENE_TRACKING
    assert heuristic_scene_label(label_world([[5, 0, 0]], [0, 0, 0]),
                                 0, assignment, CFG) == SCENE_ENCIRCLE


def test_avoidance_beats_distance_band():
    # peer 2 m away (< d_auv) while 15 m from the target
    world = label_world([[15, 0, 0], [15, 2, 0]], [0, 0, 0])
    assignment = np.zeros(2, dtype=int)
    assert heuristic_scene_label(world, 0, assignment, CFG) == SCENE_AVOID
    assert cluster_scene_label(world, assignment, CFG) == SCENE_AVOID


def test_cluster_label_majority_vote():
    # two approach, one encirclement, all spaced out: majority approach
    world = label_world([[20, 0, 0], [0, 20, 0], [2, 0, 0]], [0, 0, 0])
    assignment = np.zeros(3, dtype=int)
    labels = [heuristic_scene_label(world, i, assignment, CFG) for i in range(3)]
    assert labels.count(SCENE_APPROACH) == 2
    assert cluster_scene_label(world, assignment, CFG) == SCENE_APPROACH


def test_identify_scene_sharp_logits():
    gating = bias_only_net(np.array([10.0, 0.0, 0.0, 0.0]), in_dim=8)
    weights = identify_scene(gating, np.zeros((2, 4)))
    assert weights.dominant == 0
    assert weights.w > 0.999
    assert weights.a == pytest.approx(softmax(np.array([10.0, 0, 0, 0])))
    assert weights.w == weights.a.max()


# --- replay buffer ---------------------------------------------------------------

def make_transition(i: int, n: int = 2, sdim: int = 18) -> Transition:
    return Transition(state=np.full(sdim, float(i)),
                      obs=np.full((n, 15), float(i)),
                      actions=np.full((n, ACT_DIM), float(i)),
                      r_scene=np.full(n, float(i)),
                      r_general=np.full(n, float(i)),
                      next_state=np.full(sdim, float(i) + 0.5),
                      next_obs=np.full((n, 15), float(i) + 0.5),
                      done=0.0, scene_label=i % N_SCENES)


def test_buffer_fifo_ring():
    buf = ReplayBuffer(capacity=4, n_auvs=2, sdim=18)
    for i in range(6):
        buf.add(make_transition(i))
    assert buf.size == 4
    assert buf.total_added == 6
    marks = buf.contents()["state"][:, 0]
    assert marks.tolist() == [2.0, 3.0, 4.0, 5.0]


def test_buffer_sample_uniform():
    buf = ReplayBuffer(capacity=8, n_auvs=2, sdim=18)
    for i in range(8):
        buf.add(make_transition(i))
    rng = np.random.default_rng(0)
    counts = np.zeros(8)
    draws = 80_000
    for _ in range(draws // 50):
        batch = buf.sample(50, rng)
        idx = batch["state"][:, 0].astype(int)
        counts += np.bincount(idx, minlength=8)
    expected = draws / 8
    sigma = np.sqrt(draws * (1 / 8) * (7 / 8))
    assert np.all(np.abs(counts - expected) < 5 * sigma)


def test_buffer_sample_empty_raises():
    buf = ReplayBuffer(capacity=4, n_auvs=2, sdim=18)
    with pytest.raises(ContractViolation):
        buf.sample(2, np.random.default_rng(0))


# --- trainer updates --------------------------------------------------------------

def tiny_cfg(w_mode="max_a", lambda_scene=0.1, grad_clip=1e9,
             share_actor=True, share_critic=False) -> RunConfig:
    cfg = RunConfig(
        scenario=ScenarioConfig(n_auvs=2, n_targets=1, seed=5),
        hyper=Hyperparams(latent_dim=4, encoder_hidden=8, gating_hidden=8,
                          actor_hidden=8, critic_hidden=8,
                          lambda_scene=lambda_scene, grad_clip=grad_clip,
                          batch_size=4, warmup_steps=0, buffer_capacity=64,
                          share_actor=share_actor, share_critic=share_critic),
        w_mode=w_mode)
    cfg.validate()
    return cfg


def tiny_trainer(seed=0, **kw) -> Trainer:
    cfg = tiny_cfg(**kw)
    return Trainer(cfg, np.random.default_rng(seed), np.random.default_rng(seed + 1))


def random_batch(rng: np.random.Generator, B=4, n=2, sdim=18) -> dict:
    return {
        "state": rng.normal(0, 5, (B, sdim)),
        "obs": rng.normal(0, 5, (B, n, 15)),
        "actions": rng.uniform(-1, 1, (B, n, ACT_DIM)),
        "r_scene": rng.normal(0, 1, (B, n)),
        "r_general": rng.normal(0, 1, (B, n)),
        "next_state": rng.normal(0, 5, (B, sdim)),
        "next_obs": rng.normal(0, 5, (B, n, 15)),
        "done": np.zeros(B),
        "scene_label": rng.integers(0, N_SCENES, B),
    }


def zero_net(params: MlpParams) -> None:
    for W, b in zip(params.weights, params.biases):
        W[...] = 0.0
        b[...] = 0.0


def test_select_actions_zero_actor_is_still():
    trainer = tiny_trainer()
    zero_net(trainer.nets.actors[0])
    obs = np.random.default_rng(1).normal(0, 5, (2, 15))
    actions = trainer.select_actions(obs, 0.0, np.random.default_rng(0))
    assert np.all(actions == 0.0)


def test_select_actions_clipped():
    trainer = tiny_trainer()
    obs = np.random.default_rng(1).normal(0, 5, (2, 15))
    actions = trainer.select_actions(obs, 50.0, np.random.default_rng(0))
    assert np.all(actions >= -1.0) and np.all(actions <= 1.0)


def test_critic_update_gradient_oracle_on_zeroed_nets():
    # with all critic (and gating) parameters zero: q = 0 everywhere, so the
    # TD target is the team-mean reward and the only nonzero gradient is the
    # final bias. After one Adam step m = 0.1 * grad exactly.
    trainer = tiny_trainer(share_critic=True)
    for net in (trainer.nets.critics_g[0], trainer.nets.critic_g_targets[0],
                trainer.nets.critics_s[0], trainer.nets.critic_s_targets[0],
                trainer.nets.gating):
        zero_net(net)
    rng = np.random.default_rng(7)
    batch = random_batch(rng)
    trainer.critic_update(batch)

    mean_rg = batch["r_general"].mean()  # mean over batch of team means
    m_bias_g = trainer.opt_critics_g[0].m[-1][1]
    assert m_bias_g[0] == pytest.approx(0.1 * (-2.0 * mean_rg), rel=1e-12)
    # every weight gradient is zero: dead relu hidden layers
    assert all(np.all(mW == 0.0) for mW, _ in trainer.opt_critics_g[0].m)

    # scene critic: a is uniform (zero logits), so each head bias sees
    # 0.25 * (-2 * mean team scene reward)
    mean_rs = batch["r_scene"].mean()
    m_bias_s = trainer.opt_critics_s[0].m[-1][1]
    assert m_bias_s == pytest.approx(np.full(N_SCENES, 0.1 * 0.25 * (-2.0 * mean_rs)),
                                     rel=1e-12)


def test_critic_update_gradient_oracle_per_agent():
    # per-agent critics: critic j's zeroed-net bias gradient reads agent j's
    # own reward column, not the team mean
    trainer = tiny_trainer()
    assert len(trainer.nets.critics_g) == 2
    for j in range(2):
        zero_net(trainer.nets.critics_g[j])
        zero_net(trainer.nets.critic_g_targets[j])
    batch = random_batch(np.random.default_rng(7))
    trainer.critic_update(batch)
    for j in range(2):
        mean_rj = batch["r_general"][:, j].mean()
        m_bias = trainer.opt_critics_g[j].m[-1][1]
        assert m_bias[0] == pytest.approx(0.1 * (-2.0 * mean_rj), rel=1e-12)


def test_critic_update_uses_team_mean_rewards_when_shared():
    # two agents with rewards (0, 2) must train the same as both at 1
    t1 = tiny_trainer(seed=3, share_critic=True)
    t2 = copy.deepcopy(t1)
    rng = np.random.default_rng(11)
    batch = random_batch(rng)
    batch2 = {k: v.copy() for k, v in batch.items()}
    batch["r_general"] = np.tile(np.array([0.0, 2.0]), (4, 1))
    batch2["r_general"] = np.ones((4, 2))
    t1.critic_update(batch)
    t2.critic_update(batch2)
    for W1, W2 in zip(t1.nets.critics_g[0].weights, t2.nets.critics_g[0].weights):
        assert np.array_equal(W1, W2)


def test_per_agent_critic_ignores_teammate_reward():
    # changing only agent 1's reward column must leave critic 0 untouched
    t1 = tiny_trainer(seed=3)
    t2 = copy.deepcopy(t1)
    batch = random_batch(np.random.default_rng(11))
    batch2 = {k: v.copy() for k, v in batch.items()}
    batch2["r_general"][:, 1] += 3.0
    t1.critic_update(batch)
    t2.critic_update(batch2)
    for W1, W2 in zip(t1.nets.critics_g[0].weights, t2.nets.critics_g[0].weights):
        assert np.array_equal(W1, W2)
    changed = any(not np.array_equal(W1, W2) for W1, W2 in
                  zip(t1.nets.critics_g[1].weights, t2.nets.critics_g[1].weights))
    assert changed


def actor_loss_forward(trainer: Trainer, batch: dict) -> float:
    """Pure-forward replica of the actor objective for finite differencing."""
    hp = trainer.hyper
    B, n = batch["obs"].shape[0], trainer.n_auvs
    obs_scaled = trainer.scale_obs(batch["obs"])
    state = trainer.scale_state(batch["state"])
    flat = obs_scaled.reshape(B * n, 15)
    if trainer.nets.share_actor:
        acts, _ = mlp_forward(trainer.nets.actors[0], flat)
        actions = acts.reshape(B, n * ACT_DIM)
    else:
        per_agent = [mlp_forward(trainer.nets.actors[i], obs_scaled[:, i, :])[0]
                     for i in range(n)]
        actions = np.concatenate(per_agent, axis=1)
    latents, _ = mlp_forward(trainer.nets.encoder, flat)
    logits, _ = mlp_forward(trainer.nets.gating,
                            latents.reshape(B, n * latents.shape[-1]))
    a = softmax(logits)
    if trainer.fixed_w is None:
        w = a.max(axis=1)
    else:
        w = np.full(B, trainer.fixed_w)
    if trainer.nets.share_critic:
        inputs = [(0, np.concatenate([state, actions], axis=1))]
    else:
        batch_acts = batch["actions"].reshape(B, n * ACT_DIM)
        inputs = []
        for i in range(n):
            cols = slice(i * ACT_DIM, (i + 1) * ACT_DIM)
            mixed = batch_acts.copy()
            mixed[:, cols] = actions[:, cols]
            inputs.append((i, np.concatenate([state, mixed], axis=1)))
    fused_total = 0.0
    for j, cur_in in inputs:
        qg, _ = mlp_forward(trainer.nets.critics_g[j], cur_in)
        heads, _ = mlp_forward(trainer.nets.critics_s[j], cur_in)
        qs = (heads * a).sum(axis=1)
        fused_total += float(((1.0 - w) * qg[:, 0] + w * qs).mean())
    ce = -np.log(a[np.arange(B), batch["scene_label"]])
    return -fused_total / len(inputs) + hp.lambda_scene * float(ce.mean())


def fd_check_tensors(pristine: Trainer, updated: Trainer, batch,
                     tensor_pairs, rng, h=1e-6, spots=6):
    """Compare Adam first moments (0.1 * grad after one fresh update) against
    central finite differences of the forward loss."""
    worst = 0.0
    for tensor, moment in tensor_pairs:
        flat = tensor.reshape(-1)
        mflat = moment.reshape(-1)
        for idx in rng.choice(flat.size, size=min(spots, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            up = actor_loss_forward(pristine, batch)
            flat[idx] = orig - h
            down = actor_loss_forward(pristine, batch)
            flat[idx] = orig
            numeric = (up - down) / (2 * h)
            analytic = mflat[idx] / 0.1
            denom = max(abs(numeric), abs(analytic), 1e-10)
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst


def run_actor_fd_case(w_mode: str, lambda_scene: float, seed: int,
                      share_actor=True, share_critic=False) -> float:
    trainer = tiny_trainer(seed=seed, w_mode=w_mode, lambda_scene=lambda_scene,
                           share_actor=share_actor, share_critic=share_critic)
    pristine = copy.deepcopy(trainer)
    batch = random_batch(np.random.default_rng(seed + 100))
    trainer.actor_update(batch)
    rng = np.random.default_rng(seed + 200)
    pairs = []
    nets = [
        (pristine.nets.gating, trainer.opt_gating),
        (pristine.nets.encoder, trainer.opt_encoder),
    ]
    nets += [(pristine.nets.actors[i], trainer.opt_actors[i])
             for i in range(len(pristine.nets.actors))]
    for net, opt in nets:
        for k in range(net.n_layers):
            pairs.append((net.weights[k], opt.m[k][0]))
            pairs.append((net.biases[k], opt.m[k][1]))
    return fd_check_tensors(pristine, trainer, batch, pairs, rng)


def test_actor_gradient_matches_finite_difference_fixed_w():
    # fixed fusion weight, no auxiliary term: pure two-critic ascent
    assert run_actor_fd_case("fixed:0.7", 0.0, seed=1) < 1e-4


def test_actor_gradient_matches_finite_difference_gated():
    # full path: w = max(a) subgradient, scene mixture, and cross-entropy
    assert run_actor_fd_case("max_a", 0.1, seed=2) < 1e-4


def test_actor_gradient_matches_finite_difference_per_agent():
    # separate actor nets climbing their own critics: each agent's gradient
    # flows only through its own slice of the joint action
    assert run_actor_fd_case("max_a", 0.1, seed=3, share_actor=False) < 1e-4


def test_actor_gradient_matches_finite_difference_shared_critic():
    # legacy single critic pair scoring the joint fresh action
    assert run_actor_fd_case("max_a", 0.1, seed=4, share_critic=True) < 1e-4


def test_scene_critic_irrelevant_when_w_zero():
    # w == 0: the scene critics must not influence the actor update at all
    t1 = tiny_trainer(seed=9, w_mode="fixed:0.0")
    t2 = copy.deepcopy(t1)
    for critic in t2.nets.critics_s:
        for W in critic.weights:
            W += 123.0
    batch = random_batch(np.random.default_rng(4))
    t1.actor_update(batch)
    t2.actor_update({k: v.copy() for k, v in batch.items()})
    for W1, W2 in zip(t1.nets.actors[0].weights, t2.nets.actors[0].weights):
        assert np.array_equal(W1, W2)
    for W1, W2 in zip(t1.nets.gating.weights, t2.nets.gating.weights):
        assert np.array_equal(W1, W2)


def test_general_critic_irrelevant_when_w_one():
    t1 = tiny_trainer(seed=10, w_mode="fixed:1.0")
    t2 = copy.deepcopy(t1)
    for critic in t2.nets.critics_g:
        for W in critic.weights:
            W += 123.0
    batch = random_batch(np.random.default_rng(8))
    t1.actor_update(batch)
    t2.actor_update({k: v.copy() for k, v in batch.items()})
    for W1, W2 in zip(t1.nets.actors[0].weights, t2.nets.actors[0].weights):
        assert np.array_equal(W1, W2)


def test_train_step_gating_and_cadence():
    cfg = tiny_cfg()
    cfg.hyper.warmup_steps = 10
    cfg.hyper.batch_size = 4
    cfg.hyper.update_every = 2
    trainer = Trainer(cfg, np.random.default_rng(0), np.random.default_rng(1))
    for i in range(20):
        trainer.train_step(make_transition(i))
    # steps 10..20 pass warmup; every 2nd env step learns
    assert trainer.counters.env_steps == 20
    assert trainer.counters.learn_steps == 6  # steps 10,12,14,16,18,20
    assert trainer.buffer.size == 20


def test_global_state_layout():
    cfg = ScenarioConfig(n_auvs=2, n_targets=1, seed=0)
    from auvtrack.env import init_world
    world = init_world(cfg)
    state = global_state(world)
    assert state.shape == (state_dim(2, 1),)
    assert state[:3] == pytest.approx(world.auvs[0].position)
    assert state[3:6] == pytest.approx(world.auvs[0].velocity)
    assert state[12:15] == pytest.approx(world.targets[0].position)
