"""Scene-adaptive multi-agent actor-critic with centralized dual critics.

Each AUV runs a deterministic actor (per-AUV copies by default, optionally one
shared net) trained off-policy. Centralized dual critics score the joint
action: a general critic for the formation/smoothness stream and a scene
critic whose four heads correspond to the scene classes

    0 approach, 1 tracking, 2 encirclement, 3 avoidance.

A gating net reads the concatenated per-AUV latents and emits scene weights
`a`; the scene critic value is the a-weighted head mix, and the actor objective
blends the two critics with w = max(a):

    Q = (1 - w) * Q_general + w * Q_scene

so a confidently-identified scene leans on its specialist head while ambiguous
states fall back to the generalist. A small cross-entropy toward a geometric
scene heuristic keeps the gate grounded early in training.

Critic pairs are per-agent by default, each regressing its own agent's reward
components so one agent's learning signal is not buried under its teammates'
reward variance; share_critic collapses them to a single pair regressing the
team mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig, ScenarioConfig
from .env import OBS_DIM, WorldState
from .errors import ContractViolation
from .neural import (MlpParams, adam_step, clip_gradients, clone_params,
                     mlp_backward, mlp_forward, mlp_init, opt_init, softmax,
                     soft_update)

N_SCENES = 4
SCENE_APPROACH, SCENE_TRACKING, SCENE_ENCIRCLE, SCENE_AVOID = range(N_SCENES)
ACT_DIM = 3


# --- scene identification -------------------------------------------------

@dataclass
class SceneWeights:
    """Softmax scene weights for the whole cluster."""
    a: np.ndarray  # shape (4,), nonnegative, sums to 1

    @property
    def dominant(self) -> int:
        return int(np.argmax(self.a))

    @property
    def w(self) -> float:
        return float(self.a[self.dominant])


def heuristic_scene_label(world: WorldState, auv_id: int, assignment: np.ndarray,
                          config: ScenarioConfig) -> int:
    """Geometric scene label for one AUV. Avoidance wins over distance bands."""
    auv = world.auvs[auv_id]
    for other in world.auvs:
        if other.auv_id == auv_id:
            continue
        if np.linalg.norm(other.position - auv.position) < config.d_auv:
            return SCENE_AVOID
    target = world.targets[int(assignment[auv_id])]
    d = float(np.linalg.norm(auv.position - target.position))
    if d > 2.0 * config.d_target:
        return SCENE_APPROACH
    if d > config.d_target:
        return SCENE_TRACKING
    return SCENE_ENCIRCLE


def cluster_scene_label(world: WorldState, assignment: np.ndarray,
                        config: ScenarioConfig) -> int:
    """One label for the cluster: avoidance if anyone is avoiding, else the
    most common per-AUV band (ties break toward the lower index)."""
    labels = [heuristic_scene_label(world, i, assignment, config)
              for i in range(world.n_auvs)]
    if SCENE_AVOID in labels:
        return SCENE_AVOID
    counts = np.bincount(labels, minlength=N_SCENES)
    return int(np.argmax(counts))


def encode_observations(encoder: MlpParams, obs: np.ndarray) -> np.ndarray:
    """Encode scaled observations (..., OBS_DIM) into latents (..., latent_dim)."""
    flat = obs.reshape(-1, obs.shape[-1])
    latents, _ = mlp_forward(encoder, flat)
    return latents.reshape(*obs.shape[:-1], latents.shape[-1])


def identify_scene(gating: MlpParams, latents: np.ndarray) -> SceneWeights:
    """Scene weights from per-AUV latents (n, latent_dim) for one world snapshot."""
    logits, _ = mlp_forward(gating, latents.reshape(-1))
    return SceneWeights(a=softmax(logits))


def fuse_q(q_general, q_scene, w):
    """Confidence blend (1-w)*q_general + w*q_scene, clamped into the convex
    hull of its inputs so rounding can never push it outside [min, max]."""
    w_arr = np.asarray(w, dtype=np.float64)
    if np.any(w_arr < 0.0) or np.any(w_arr > 1.0):
        raise ContractViolation("fusion weight must lie in [0, 1]")
    qg = np.asarray(q_general, dtype=np.float64)
    qs = np.asarray(q_scene, dtype=np.float64)
    fused = (1.0 - w_arr) * qg + w_arr * qs
    fused = np.clip(fused, np.minimum(qg, qs), np.maximum(qg, qs))
    return float(fused) if fused.ndim == 0 else fused


def q_general(critic: MlpParams, state: np.ndarray, joint_actions: np.ndarray):
    """General critic value; accepts single vectors or batches."""
    x = np.concatenate([state, joint_actions], axis=-1)
    y, _ = mlp_forward(critic, x)
    return float(y[0]) if x.ndim == 1 else y[:, 0]


def q_scene(critic: MlpParams, state: np.ndarray, joint_actions: np.ndarray, a):
    """Scene critic value: a-weighted mix of the four head outputs."""
    x = np.concatenate([state, joint_actions], axis=-1)
    heads, _ = mlp_forward(critic, x)
    mixed = (heads * np.asarray(a, dtype=np.float64)).sum(axis=-1)
    return float(mixed) if x.ndim == 1 else mixed


def select_action(actor: MlpParams, obs_vec: np.ndarray, noise_sigma: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Deterministic tanh policy plus clipped Gaussian exploration noise."""
    action, _ = mlp_forward(actor, obs_vec)
    if noise_sigma > 0.0:
        action = action + rng.normal(0.0, noise_sigma, ACT_DIM)
    return np.clip(action, -1.0, 1.0)


# --- replay ----------------------------------------------------------------

def global_state(world: WorldState) -> np.ndarray:
    """Flat [auv pos+vel ..., target pos+vel ...] in id order."""
    parts = []
    for auv in world.auvs:
        parts.append(auv.position)
        parts.append(auv.velocity)
    for target in world.targets:
        parts.append(target.position)
        parts.append(target.velocity)
    return np.concatenate(parts)


def state_dim(n_auvs: int, n_targets: int) -> int:
    return 6 * (n_auvs + n_targets)


@dataclass
class Transition:
    state: np.ndarray          # (state_dim,)
    obs: np.ndarray            # (n, OBS_DIM)
    actions: np.ndarray        # (n, 3)
    r_scene: np.ndarray        # (n,)
    r_general: np.ndarray      # (n,)
    next_state: np.ndarray
    next_obs: np.ndarray
    done: float
    scene_label: int


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling."""

    def __init__(self, capacity: int, n_auvs: int, sdim: int):
        self.capacity = capacity
        self.idx = 0
        self.size = 0
        self.total_added = 0
        self.state = np.zeros((capacity, sdim))
        self.obs = np.zeros((capacity, n_auvs, OBS_DIM))
        self.actions = np.zeros((capacity, n_auvs, ACT_DIM))
        self.r_scene = np.zeros((capacity, n_auvs))
        self.r_general = np.zeros((capacity, n_auvs))
        self.next_state = np.zeros((capacity, sdim))
        self.next_obs = np.zeros((capacity, n_auvs, OBS_DIM))
        self.done = np.zeros(capacity)
        self.scene_label = np.zeros(capacity, dtype=np.int64)

    def add(self, t: Transition) -> None:
        i = self.idx
        self.state[i] = t.state
        self.obs[i] = t.obs
        self.actions[i] = t.actions
        self.r_scene[i] = t.r_scene
        self.r_general[i] = t.r_general
        self.next_state[i] = t.next_state
        self.next_obs[i] = t.next_obs
        self.done[i] = t.done
        self.scene_label[i] = t.scene_label
        self.idx = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total_added += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self.size < 1:
            raise ContractViolation("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "state": self.state[idx], "obs": self.obs[idx],
            "actions": self.actions[idx], "r_scene": self.r_scene[idx],
            "r_general": self.r_general[idx], "next_state": self.next_state[idx],
            "next_obs": self.next_obs[idx], "done": self.done[idx],
            "scene_label": self.scene_label[idx],
        }

    def contents(self) -> dict[str, np.ndarray]:
        """Stored records in insertion order (oldest first), for comparisons."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = np.concatenate([np.arange(self.idx, self.capacity),
                                    np.arange(self.idx)])
        return {name: getattr(self, name)[order]
                for name in ("state", "obs", "actions", "r_scene", "r_general",
                             "next_state", "next_obs", "done", "scene_label")}


# --- networks and updates ---------------------------------------------------

@dataclass
class AgentNets:
    actors: list[MlpParams]
    actor_targets: list[MlpParams]
    encoder: MlpParams
    gating: MlpParams
    critics_g: list[MlpParams]
    critic_g_targets: list[MlpParams]
    critics_s: list[MlpParams]
    critic_s_targets: list[MlpParams]
    obs_scale: np.ndarray
    state_scale: np.ndarray
    share_actor: bool
    share_critic: bool

    def actor_for(self, agent: int) -> MlpParams:
        return self.actors[0] if self.share_actor else self.actors[agent]

    def actor_target_for(self, agent: int) -> MlpParams:
        return self.actor_targets[0] if self.share_actor else self.actor_targets[agent]

    def critic_g_for(self, agent: int) -> MlpParams:
        return self.critics_g[0] if self.share_critic else self.critics_g[agent]

    def critic_s_for(self, agent: int) -> MlpParams:
        return self.critics_s[0] if self.share_critic else self.critics_s[agent]


def _observation_scale(cfg: RunConfig) -> np.ndarray:
    sc = cfg.scenario
    pos = max(sc.bounds_x, sc.bounds_y, sc.bounds_z)
    return np.concatenate([np.full(3, sc.v_max), np.full(3, pos),
                           np.full(3, sc.v_max), np.full(6, pos)])


def _state_scale(cfg: RunConfig) -> np.ndarray:
    sc = cfg.scenario
    pos = max(sc.bounds_x, sc.bounds_y, sc.bounds_z)
    per_entity = np.concatenate([np.full(3, pos), np.full(3, sc.v_max)])
    return np.tile(per_entity, sc.n_auvs + sc.n_targets)


def build_agent_nets(cfg: RunConfig, rng: np.random.Generator) -> AgentNets:
    sc, hp = cfg.scenario, cfg.hyper
    n = sc.n_auvs
    sdim = state_dim(n, sc.n_targets)
    critic_in = sdim + ACT_DIM * n

    n_actor_nets = 1 if hp.share_actor else n
    actors = [mlp_init([OBS_DIM, hp.actor_hidden, hp.actor_hidden, ACT_DIM],
                       ["relu", "relu", "tanh"], rng) for _ in range(n_actor_nets)]
    encoder = mlp_init([OBS_DIM, hp.encoder_hidden, hp.latent_dim],
                       ["relu", "identity"], rng)
    # gating emits raw logits; the softmax is applied at the call sites so the
    # cross-entropy gradient can be formed stably on the logits
    gating = mlp_init([hp.latent_dim * n, hp.gating_hidden, N_SCENES],
                      ["relu", "identity"], rng)
    n_critic_nets = 1 if hp.share_critic else n
    critics_g = [mlp_init([critic_in, hp.critic_hidden, hp.critic_hidden, 1],
                          ["relu", "relu", "identity"], rng)
                 for _ in range(n_critic_nets)]
    critics_s = [mlp_init([critic_in, hp.critic_hidden, hp.critic_hidden, N_SCENES],
                          ["relu", "relu", "identity"], rng)
                 for _ in range(n_critic_nets)]
    return AgentNets(
        actors=actors,
        actor_targets=[clone_params(a) for a in actors],
        encoder=encoder,
        gating=gating,
        critics_g=critics_g,
        critic_g_targets=[clone_params(c) for c in critics_g],
        critics_s=critics_s,
        critic_s_targets=[clone_params(c) for c in critics_s],
        obs_scale=_observation_scale(cfg),
        state_scale=_state_scale(cfg),
        share_actor=hp.share_actor,
        share_critic=hp.share_critic,
    )


@dataclass
class TrainCounters:
    env_steps: int = 0
    learn_steps: int = 0
    skipped_updates: int = 0


class Trainer:
    """Owns the nets, optimizers, and replay buffer; one instance per run."""

    def __init__(self, cfg: RunConfig, init_rng: np.random.Generator,
                 sample_rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.hyper = cfg.hyper
        self.fixed_w = cfg.fixed_w
        self.nets = build_agent_nets(cfg, init_rng)
        self.sample_rng = sample_rng
        n = cfg.scenario.n_auvs
        self.n_auvs = n
        self.buffer = ReplayBuffer(cfg.hyper.buffer_capacity, n,
                                   state_dim(n, cfg.scenario.n_targets))
        self.opt_actors = [opt_init(a) for a in self.nets.actors]
        self.opt_encoder = opt_init(self.nets.encoder)
        self.opt_gating = opt_init(self.nets.gating)
        self.opt_critics_g = [opt_init(c) for c in self.nets.critics_g]
        self.opt_critics_s = [opt_init(c) for c in self.nets.critics_s]
        self.counters = TrainCounters()
        self.last_losses: dict[str, float] = {}

    # -- inference helpers --

    def scale_obs(self, obs: np.ndarray) -> np.ndarray:
        return obs / self.nets.obs_scale

    def scale_state(self, state: np.ndarray) -> np.ndarray:
        return state / self.nets.state_scale

    def select_actions(self, obs: np.ndarray, sigma: float,
                       rng: np.random.Generator) -> np.ndarray:
        """Joint action matrix (n, 3) for one world snapshot."""
        scaled = self.scale_obs(obs)
        if self.nets.share_actor:
            out, _ = mlp_forward(self.nets.actors[0], scaled)
        else:
            out = np.stack([mlp_forward(self.nets.actors[i], scaled[i])[0]
                            for i in range(self.n_auvs)])
        if sigma > 0.0:
            out = out + rng.normal(0.0, sigma, out.shape)
        return np.clip(out, -1.0, 1.0)

    def scene_eval(self, obs: np.ndarray) -> SceneWeights:
        """Scene weights for one snapshot of all-AUV observations (n, OBS_DIM)."""
        latents = encode_observations(self.nets.encoder, self.scale_obs(obs))
        return identify_scene(self.nets.gating, latents)

    # -- learning --

    def train_step(self, transition: Transition | None) -> None:
        """Advance one env tick. Pass the transition for the direct data path;
        pass None when the comms layer owns insertion."""
        if transition is not None:
            self.buffer.add(transition)
        self.counters.env_steps += 1
        hp = self.hyper
        if (self.counters.env_steps < hp.warmup_steps
                or self.buffer.size < hp.batch_size
                or self.counters.env_steps % hp.update_every != 0):
            return
        batch = self.buffer.sample(hp.batch_size, self.sample_rng)
        self.critic_update(batch)
        self.actor_update(batch)
        for online, target in zip(self.nets.actors, self.nets.actor_targets):
            soft_update(target, online, hp.tau)
        for online, target in zip(self.nets.critics_g, self.nets.critic_g_targets):
            soft_update(target, online, hp.tau)
        for online, target in zip(self.nets.critics_s, self.nets.critic_s_targets):
            soft_update(target, online, hp.tau)
        self.counters.learn_steps += 1

    def _joint_target_actions(self, next_obs_scaled: np.ndarray) -> np.ndarray:
        B = next_obs_scaled.shape[0]
        if self.nets.share_actor:
            flat = next_obs_scaled.reshape(B * self.n_auvs, OBS_DIM)
            acts, _ = mlp_forward(self.nets.actor_targets[0], flat)
            return acts.reshape(B, self.n_auvs * ACT_DIM)
        cols = [mlp_forward(self.nets.actor_targets[i], next_obs_scaled[:, i, :])[0]
                for i in range(self.n_auvs)]
        return np.concatenate(cols, axis=1)

    def _scene_weights_batch(self, obs_scaled: np.ndarray) -> np.ndarray:
        """Forward-only scene weights for a batch: (B, n, OBS_DIM) -> (B, 4)."""
        B = obs_scaled.shape[0]
        flat = obs_scaled.reshape(B * self.n_auvs, OBS_DIM)
        latents, _ = mlp_forward(self.nets.encoder, flat)
        logits, _ = mlp_forward(self.nets.gating,
                                latents.reshape(B, self.n_auvs * latents.shape[-1]))
        return softmax(logits)

    def critic_update(self, batch: dict[str, np.ndarray]) -> tuple[float, float]:
        """One TD regression step per critic stream and instance.

        Per-agent critics each regress their own agent's reward components,
        which keeps one agent's action consequences out of the others' targets;
        a shared pair regresses the team mean instead. Returns the losses
        averaged over instances.
        """
        hp = self.hyper
        B = batch["state"].shape[0]
        state = self.scale_state(batch["state"])
        next_state = self.scale_state(batch["next_state"])
        next_obs = self.scale_obs(batch["next_obs"])
        actions_flat = batch["actions"].reshape(B, -1)
        not_done = 1.0 - batch["done"]

        next_actions = self._joint_target_actions(next_obs)
        next_in = np.concatenate([next_state, next_actions], axis=1)
        a_next = self._scene_weights_batch(next_obs)
        a_cur = self._scene_weights_batch(self.scale_obs(batch["obs"]))
        cur_in = np.concatenate([state, actions_flat], axis=1)

        losses_g: list[float] = []
        losses_s: list[float] = []
        for j in range(len(self.nets.critics_g)):
            if self.nets.share_critic:
                r_general = batch["r_general"].mean(axis=1)
                r_scene = batch["r_scene"].mean(axis=1)
            else:
                r_general = batch["r_general"][:, j]
                r_scene = batch["r_scene"][:, j]

            qg_next, _ = mlp_forward(self.nets.critic_g_targets[j], next_in)
            y_g = r_general + hp.gamma * not_done * qg_next[:, 0]
            heads_next, _ = mlp_forward(self.nets.critic_s_targets[j], next_in)
            y_s = r_scene + hp.gamma * not_done * (heads_next * a_next).sum(axis=1)

            qg, cache_g = mlp_forward(self.nets.critics_g[j], cur_in)
            err_g = qg[:, 0] - y_g
            loss_g = float(err_g @ err_g) / B
            heads, cache_s = mlp_forward(self.nets.critics_s[j], cur_in)
            err_s = (heads * a_cur).sum(axis=1) - y_s
            loss_s = float(err_s @ err_s) / B
            losses_g.append(loss_g)
            losses_s.append(loss_s)

            if not (np.isfinite(loss_g) and np.isfinite(loss_s)):
                self.counters.skipped_updates += 1
                continue

            grads_g, _ = mlp_backward(self.nets.critics_g[j], cache_g,
                                      (2.0 / B) * err_g[:, None])
            adam_step(self.nets.critics_g[j], clip_gradients(grads_g, hp.grad_clip),
                      self.opt_critics_g[j], hp.lr_critic)

            grads_s, _ = mlp_backward(self.nets.critics_s[j], cache_s,
                                      (2.0 / B) * err_s[:, None] * a_cur)
            adam_step(self.nets.critics_s[j], clip_gradients(grads_s, hp.grad_clip),
                      self.opt_critics_s[j], hp.lr_critic)

        mean_g = float(np.mean(losses_g))
        mean_s = float(np.mean(losses_s))
        self.last_losses.update(loss_g=mean_g, loss_s=mean_s)
        return mean_g, mean_s

    def actor_update(self, batch: dict[str, np.ndarray]) -> float:
        """Ascend the fused critic value; auxiliary cross-entropy grounds the gate.

        Gradient flows into the actors through the critics' action inputs, and
        into the encoder/gating stack through the scene mixture a (and through
        w = max(a) when the gate drives the fusion weight). Critic parameters
        are left untouched here. With per-agent critics each actor climbs its
        own pair, evaluated on its fresh action alongside the other agents'
        batch actions; with a shared pair all actors climb the one fused value
        of the joint fresh action.
        """
        hp = self.hyper
        B = batch["state"].shape[0]
        n = self.n_auvs
        state = self.scale_state(batch["state"])
        obs_scaled = self.scale_obs(batch["obs"])
        labels = batch["scene_label"]

        # fresh joint actions from the online actors
        actor_caches = []
        if self.nets.share_actor:
            flat_obs = obs_scaled.reshape(B * n, OBS_DIM)
            acts, cache = mlp_forward(self.nets.actors[0], flat_obs)
            actor_caches.append(cache)
            actions = acts.reshape(B, n * ACT_DIM)
        else:
            cols = []
            for i in range(n):
                out, cache = mlp_forward(self.nets.actors[i], obs_scaled[:, i, :])
                actor_caches.append(cache)
                cols.append(out)
            actions = np.concatenate(cols, axis=1)

        # scene pathway with caches for backprop
        flat_all = obs_scaled.reshape(B * n, OBS_DIM)
        latents, cache_enc = mlp_forward(self.nets.encoder, flat_all)
        latent_dim = latents.shape[-1]
        logits, cache_gate = mlp_forward(self.nets.gating,
                                         latents.reshape(B, n * latent_dim))
        a = softmax(logits)
        argmax = np.argmax(a, axis=1)

        if self.fixed_w is None:
            w = a[np.arange(B), argmax]
        else:
            w = np.full(B, self.fixed_w)

        use_general = self.fixed_w is None or self.fixed_w < 1.0
        use_scene = self.fixed_w is None or self.fixed_w > 0.0

        # one critic query per climbing entity: (critic index, input, which
        # action columns the query's gradient is allowed to reach)
        if self.nets.share_critic:
            cur = np.concatenate([state, actions], axis=1)
            queries = [(0, cur, slice(0, n * ACT_DIM))]
        else:
            batch_acts = batch["actions"].reshape(B, n * ACT_DIM)
            queries = []
            for i in range(n):
                cols = slice(i * ACT_DIM, (i + 1) * ACT_DIM)
                mixed = batch_acts.copy()
                mixed[:, cols] = actions[:, cols]
                queries.append((i, np.concatenate([state, mixed], axis=1), cols))

        evaluated = []
        fused_mean_sum = 0.0
        for j, cur_in, cols in queries:
            qg = np.zeros(B)
            qs = np.zeros(B)
            heads = None
            cache_g = cache_s = None
            if use_general:
                out_g, cache_g = mlp_forward(self.nets.critics_g[j], cur_in)
                qg = out_g[:, 0]
            if use_scene:
                heads, cache_s = mlp_forward(self.nets.critics_s[j], cur_in)
                qs = (heads * a).sum(axis=1)
            fused = (1.0 - w) * qg + w * qs
            fused_mean_sum += float(fused.mean())
            evaluated.append((j, cols, qg, qs, heads, cache_g, cache_s))

        ce = -np.log(np.maximum(a[np.arange(B), labels], 1e-300))
        loss = -fused_mean_sum / len(queries) + hp.lambda_scene * float(ce.mean())

        if not np.isfinite(loss):
            self.counters.skipped_updates += 1
            self.last_losses.update(loss_actor=loss)
            return loss

        dfused = np.full(B, -1.0 / (B * len(queries)))
        d_actions = np.zeros((B, n * ACT_DIM))
        da = np.zeros((B, N_SCENES))
        for j, cols, qg, qs, heads, cache_g, cache_s in evaluated:
            if use_general:
                _, dx_g = mlp_backward(self.nets.critics_g[j], cache_g,
                                       (dfused * (1.0 - w))[:, None])
                d_actions[:, cols] += dx_g[:, state.shape[1]:][:, cols]
            if use_scene:
                _, dx_s = mlp_backward(self.nets.critics_s[j], cache_s,
                                       (dfused * w)[:, None] * a)
                d_actions[:, cols] += dx_s[:, state.shape[1]:][:, cols]
                da += (dfused * w)[:, None] * heads
            if self.fixed_w is None:
                # w = a[argmax] contributes (q_s - q_g) through the max subgradient
                da[np.arange(B), argmax] += dfused * (qs - qg)

        # chain da through the softmax, then add the cross-entropy term on logits
        dlogits = a * (da - (a * da).sum(axis=1, keepdims=True))
        onehot = np.zeros((B, N_SCENES))
        onehot[np.arange(B), labels] = 1.0
        dlogits += (hp.lambda_scene / B) * (a - onehot)

        grads_gate, d_concat = mlp_backward(self.nets.gating, cache_gate, dlogits)
        grads_enc, _ = mlp_backward(self.nets.encoder, cache_enc,
                                    d_concat.reshape(B * n, latent_dim))
        adam_step(self.nets.gating, clip_gradients(grads_gate, hp.grad_clip),
                  self.opt_gating, hp.lr_gating)
        adam_step(self.nets.encoder, clip_gradients(grads_enc, hp.grad_clip),
                  self.opt_encoder, hp.lr_gating)

        d_actions = d_actions.reshape(B, n, ACT_DIM)
        if self.nets.share_actor:
            grads_a, _ = mlp_backward(self.nets.actors[0], actor_caches[0],
                                      d_actions.reshape(B * n, ACT_DIM))
            adam_step(self.nets.actors[0], clip_gradients(grads_a, hp.grad_clip),
                      self.opt_actors[0], hp.lr_actor)
        else:
            for i in range(n):
                grads_a, _ = mlp_backward(self.nets.actors[i], actor_caches[i],
                                          d_actions[:, i, :])
                adam_step(self.nets.actors[i], clip_gradients(grads_a, hp.grad_clip),
                          self.opt_actors[i], hp.lr_actor)

        self.last_losses.update(loss_actor=loss)
        return loss
