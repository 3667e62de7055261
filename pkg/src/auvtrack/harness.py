"""Episode rollout and the training / evaluation / replay entry points.

Determinism contract: a run is fully determined by its config (including the
seed). Every stochastic consumer gets its own stream derived from the seed, a
purpose id, and the episode index, so reordering one consumer never shifts
another. CSV outputs are byte-identical across repeat runs; wall-clock timing
goes to a separate sidecar that is exempt from that contract.

Tick order inside an episode: beacon pump (coordinator then gateway), observe,
finish the previous tick's transition, act, integrate, score. A transition
therefore completes one tick after it starts, once the observation its policy
would actually see (post-pump, views included) exists. The episode's final
transition completes against the final state with no extra pump.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import AcousticChannel
from .config import RunConfig, config_lines
from .env import init_world, observe, step_world
from .errors import ContractViolation
from .marl import Trainer, Transition, cluster_scene_label, global_state
from .metrics import (EVAL_LOG_HEADER, TRAIN_LOG_HEADER, TRAJECTORY_HEADER,
                      EpisodeRecord, EpisodeTrace, eval_log_row,
                      tracking_accuracy, train_log_row, trajectory_rows)
from .rewards import compose_reward
from .roles import add_pending, flush_episode, init_roles, lc_auv_cycle, usv_gc_cycle

KIND_TRAIN = 0
KIND_EVAL = 1
KIND_REPLAY = 2

_INIT_STREAM = 100
_SAMPLE_STREAM = 101


@dataclass
class EpisodeStreams:
    env_seed: int
    obs: np.random.Generator
    chan: np.random.Generator
    expl: np.random.Generator


def episode_streams(seed: int, *ids: int) -> EpisodeStreams:
    root = np.random.SeedSequence([seed, *ids])
    env_seed = int(root.generate_state(1, np.uint32)[0])
    obs, chan, expl = (np.random.default_rng(child) for child in root.spawn(3))
    return EpisodeStreams(env_seed=env_seed, obs=obs, chan=chan, expl=expl)


def trainer_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init = np.random.default_rng(np.random.SeedSequence([seed, _INIT_STREAM]))
    sample = np.random.default_rng(np.random.SeedSequence([seed, _SAMPLE_STREAM]))
    return init, sample


def sigma_at(cfg: RunConfig, episode: int) -> float:
    """Exploration scale for a 0-based episode index (closed form so parallel
    rollout contexts do not need shared mutable schedule state)."""
    hp = cfg.hyper
    return max(hp.sigma_min, hp.sigma_start * hp.sigma_decay ** episode)


@dataclass
class EpisodeResult:
    ret: float                # mean over AUVs of summed total reward
    comp_sums: np.ndarray     # (4,) AUV-mean sums: track, form, smooth, vel
    accuracy: float
    trace: EpisodeTrace | None
    dropped_transitions: int


class EpisodeContext:
    """One in-flight episode. step() advances a single tick; several contexts
    can be interleaved in lockstep against a shared trainer."""

    def __init__(self, cfg: RunConfig, trainer: Trainer | None, stream_ids: tuple[int, ...],
                 sigma: float, *, train: bool, record_trace: bool = False,
                 record_scenes: bool = False, random_policy: bool = False):
        if train and trainer is None:
            raise ContractViolation("training rollouts need a trainer")
        if not random_policy and trainer is None:
            raise ContractViolation("policy rollouts need a trainer")
        self.cfg = cfg
        self.trainer = trainer
        self.sigma = sigma
        self.train = train
        self.random_policy = random_policy
        self.record_trace = record_trace
        self.record_scenes = record_scenes and trainer is not None

        streams = episode_streams(cfg.scenario.seed, *stream_ids)
        self.sc = dataclasses.replace(cfg.scenario, seed=streams.env_seed)
        self.obs_rng = streams.obs
        self.expl_rng = streams.expl
        self.world = init_world(self.sc)
        self.channel = AcousticChannel(cfg.channel, streams.chan)
        self.role = init_roles(self.world, cfg, self.channel)
        self.gate_buffer = trainer.buffer if (train and cfg.comms_gated) else None

        n, m, T = self.sc.n_auvs, self.sc.n_targets, self.sc.episode_len
        self.comp_sums = np.zeros((n, 4))
        self.pending_transition: Transition | None = None
        self.pending_tick = -1
        self.auv_pos = np.zeros((T, n, 3))
        self.auv_vel = np.zeros((T, n, 3))
        self.target_pos = np.zeros((T, m, 3))
        self.target_vel = np.zeros((T, m, 3))
        self.assignments = np.zeros((T, n), dtype=np.int64)
        self.scene_dominant = np.full(T, -1, dtype=np.int64)
        self.scene_w = np.full(T, np.nan)

    @property
    def done(self) -> bool:
        return self.world.tick >= self.sc.episode_len

    def _observe_all(self) -> np.ndarray:
        return np.stack([
            observe(self.world, i, self.role.views[i], self.obs_rng).vector
            for i in range(self.sc.n_auvs)])

    def _warmup_exploration(self) -> bool:
        # before any learning can start, uniform random actions cover the
        # state space far faster than the untrained policy plus noise
        return (self.train
                and self.trainer.counters.env_steps < self.cfg.hyper.warmup_steps)

    def _complete_pending(self, next_obs: np.ndarray) -> None:
        tr = self.pending_transition
        if tr is None:
            return
        tr.next_obs = next_obs
        if self.gate_buffer is not None:
            add_pending(self.role, self.pending_tick, tr)
            self.trainer.train_step(None)
        else:
            self.trainer.train_step(tr)
        self.pending_transition = None

    def step(self) -> bool:
        """Advance one tick; returns True when the episode is finished."""
        if self.done:
            raise ContractViolation("episode already finished")
        world, sc, role = self.world, self.sc, self.role
        tick = world.tick
        t_now = tick * sc.dt

        lc_auv_cycle(role, world, self.gate_buffer, t_now)
        usv_gc_cycle(role, world, t_now)

        obs = self._observe_all()
        if self.train:
            self._complete_pending(obs)

        if self.random_policy or self._warmup_exploration():
            actions = self.expl_rng.uniform(-1.0, 1.0, (sc.n_auvs, 3))
        else:
            actions = self.trainer.select_actions(obs, self.sigma, self.expl_rng)

        label = cluster_scene_label(world, role.canonical, sc)
        world_next = step_world(world, [actions[i] for i in range(sc.n_auvs)], sc)

        r_total = np.zeros(sc.n_auvs)
        r_scene = np.zeros(sc.n_auvs)
        r_general = np.zeros(sc.n_auvs)
        for i in range(sc.n_auvs):
            b = compose_reward(world_next, i, role.views[i], self.cfg.rewards, sc)
            r_total[i] = b.r_total
            r_scene[i] = b.r_scene
            r_general[i] = b.r_general
            self.comp_sums[i] += (b.r_track, b.r_form, b.r_smooth, b.r_vel)
        role.latest_rewards[:] = r_total

        if self.train:
            if self.cfg.reward_split == "shared":
                r_scene = r_total.copy()
                r_general = r_total.copy()
            # the horizon is a time limit, not a terminal state, so the value
            # bootstrap runs through it; done stays wired up for the critic's
            # terminal masking but this env never produces a true terminal
            self.pending_transition = Transition(
                state=global_state(world), obs=obs, actions=actions,
                r_scene=r_scene, r_general=r_general,
                next_state=global_state(world_next), next_obs=obs,
                done=0.0, scene_label=label)
            self.pending_tick = tick

        for i, auv in enumerate(world_next.auvs):
            self.auv_pos[tick, i] = auv.position
            self.auv_vel[tick, i] = auv.velocity
        for j, target in enumerate(world_next.targets):
            self.target_pos[tick, j] = target.position
            self.target_vel[tick, j] = target.velocity
        self.assignments[tick] = role.canonical
        if self.record_scenes:
            weights = self.trainer.scene_eval(obs)
            self.scene_dominant[tick] = weights.dominant
            self.scene_w[tick] = weights.w

        self.world = world_next
        return self.done

    def finish(self) -> EpisodeResult:
        if not self.done:
            raise ContractViolation("episode still in flight")
        if self.train:
            self._complete_pending(self._observe_all())
            flush_episode(self.role, self.world, self.gate_buffer)
        accuracy = tracking_accuracy(self.auv_pos, self.target_pos,
                                     self.assignments, self.sc.d_target)
        trace = None
        if self.record_trace:
            trace = EpisodeTrace(
                auv_pos=self.auv_pos, auv_vel=self.auv_vel,
                target_pos=self.target_pos, target_vel=self.target_vel,
                assignments=self.assignments,
                scene_dominant=self.scene_dominant, scene_w=self.scene_w)
        return EpisodeResult(
            ret=float(np.mean(self.comp_sums.sum(axis=1))),
            comp_sums=self.comp_sums.mean(axis=0),
            accuracy=accuracy,
            trace=trace,
            dropped_transitions=self.role.dropped_transitions)


def run_episode(cfg: RunConfig, trainer: Trainer | None, stream_ids: tuple[int, ...],
                sigma: float, *, train: bool, record_trace: bool = False,
                record_scenes: bool = False, random_policy: bool = False) -> EpisodeResult:
    ctx = EpisodeContext(cfg, trainer, stream_ids, sigma, train=train,
                         record_trace=record_trace, record_scenes=record_scenes,
                         random_policy=random_policy)
    while not ctx.step():
        pass
    return ctx.finish()


def run_eval_suite(cfg: RunConfig, trainer: Trainer | None, n_episodes: int,
                   *, kind: int = KIND_EVAL, group: int = 0,
                   random_policy: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Greedy-policy (sigma=0) evaluation episodes; returns (returns, accuracies)."""
    returns = np.zeros(n_episodes)
    accuracies = np.zeros(n_episodes)
    for k in range(n_episodes):
        result = run_episode(cfg, trainer, (kind, group, k), 0.0, train=False,
                             random_policy=random_policy)
        returns[k] = result.ret
        accuracies[k] = result.accuracy
    return returns, accuracies


@dataclass
class TrainingOutcome:
    episodes: int
    records: list[EpisodeRecord]
    final_sigma: float
    final_eval_return: float
    final_eval_accuracy: float
    out_dir: Path
    final_checkpoint: Path


def run_training(cfg: RunConfig, out_dir: str | Path,
                 progress=None) -> TrainingOutcome:
    """Full training run: lockstep worker groups, incremental CSV logs,
    periodic evaluation plus checkpoints, and a final checkpoint."""
    from .checkpoint import save_checkpoint

    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text("\n".join(config_lines(cfg)) + "\n")

    init_rng, sample_rng = trainer_rngs(cfg.scenario.seed)
    trainer = Trainer(cfg, init_rng, sample_rng)

    records: list[EpisodeRecord] = []
    eval_rows: list[str] = []
    last_eval = (0.0, 0.0)
    next_eval = cfg.eval_every
    timing_lines = ["# wall-clock seconds per episode group; not deterministic"]

    with open(out / "training_log.csv", "w") as train_f, \
            open(out / "eval_log.csv", "w") as eval_f:
        train_f.write(TRAIN_LOG_HEADER + "\n")
        eval_f.write(EVAL_LOG_HEADER + "\n")

        episode = 0
        while episode < cfg.episodes:
            group_n = min(cfg.workers, cfg.episodes - episode)
            contexts = [
                EpisodeContext(cfg, trainer, (KIND_TRAIN, episode + c),
                               sigma_at(cfg, episode + c), train=True)
                for c in range(group_n)]
            started = time.perf_counter()
            for _ in range(cfg.scenario.episode_len):
                for ctx in contexts:
                    ctx.step()
            elapsed = time.perf_counter() - started
            timing_lines.append(f"{episode},{elapsed!r}")

            for c, ctx in enumerate(contexts):
                result = ctx.finish()
                rec = EpisodeRecord(
                    episode=episode + c, ret=result.ret,
                    r_track=float(result.comp_sums[0]),
                    r_form=float(result.comp_sums[1]),
                    r_smooth=float(result.comp_sums[2]),
                    r_vel=float(result.comp_sums[3]),
                    accuracy=result.accuracy,
                    sigma=sigma_at(cfg, episode + c),
                    wall_time=elapsed / group_n)
                records.append(rec)
                train_f.write(train_log_row(rec) + "\n")
            train_f.flush()
            episode += group_n

            while next_eval <= episode:
                returns, accuracies = run_eval_suite(
                    cfg, trainer, cfg.eval_episodes, group=next_eval)
                row = eval_log_row(next_eval, returns, accuracies)
                eval_rows.append(row)
                eval_f.write(row + "\n")
                eval_f.flush()
                last_eval = (float(np.mean(returns)), float(np.mean(accuracies)))
                save_checkpoint(out / f"ckpt_ep{next_eval}.bin", trainer,
                                next_eval, sigma_at(cfg, next_eval))
                if progress is not None:
                    progress(f"episode {next_eval}/{cfg.episodes}: "
                             f"eval return {last_eval[0]:.3f}, "
                             f"accuracy {last_eval[1]:.1f}%")
                next_eval += cfg.eval_every

    final_ckpt = out / "ckpt_final.bin"
    save_checkpoint(final_ckpt, trainer, cfg.episodes, sigma_at(cfg, cfg.episodes))
    (out / "timing.txt").write_text("\n".join(timing_lines) + "\n")

    return TrainingOutcome(
        episodes=cfg.episodes, records=records,
        final_sigma=sigma_at(cfg, cfg.episodes),
        final_eval_return=last_eval[0], final_eval_accuracy=last_eval[1],
        out_dir=out, final_checkpoint=final_ckpt)


def export_trajectories(trace: EpisodeTrace, path: str | Path) -> None:
    lines = [TRAJECTORY_HEADER] + trajectory_rows(trace)
    Path(path).write_text("\n".join(lines) + "\n")


def replay_episode(trainer: Trainer, cfg: RunConfig, out_path: str | Path,
                   episode_index: int = 0) -> EpisodeTrace:
    """Deterministic greedy rollout with per-tick scene annotation, written as
    a trajectory CSV."""
    result = run_episode(cfg, trainer, (KIND_REPLAY, episode_index), 0.0,
                         train=False, record_trace=True, record_scenes=True)
    export_trajectories(result.trace, out_path)
    return result.trace
