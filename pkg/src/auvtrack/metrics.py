"""Episode traces, the tracking-accuracy metric, and CSV log schemas.

CSV floats are written with repr so re-importing a log reproduces the stored
values exactly. Wall time is deliberately kept out of the deterministic logs;
it lives in the in-memory record and the timing sidecar only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EpisodeTrace:
    """Per-tick recording of one episode (post-step states)."""
    auv_pos: np.ndarray        # (T, n, 3)
    auv_vel: np.ndarray        # (T, n, 3)
    target_pos: np.ndarray     # (T, m, 3)
    target_vel: np.ndarray     # (T, m, 3)
    assignments: np.ndarray    # (T, n) canonical assignment in force
    scene_dominant: np.ndarray  # (T,) int, -1 when scenes were not evaluated
    scene_w: np.ndarray        # (T,) float, nan when scenes were not evaluated

    @property
    def ticks(self) -> int:
        return self.auv_pos.shape[0]


def tracking_accuracy(auv_pos: np.ndarray, target_pos: np.ndarray,
                      assignments: np.ndarray, d_target: float) -> float:
    """Percentage of (step, target) pairs where an assigned AUV is within
    d_target of its target: 100 * mean over steps of tracked/total."""
    ticks, n_targets = target_pos.shape[0], target_pos.shape[1]
    if ticks == 0:
        return 0.0
    tracked = 0
    for t in range(ticks):
        for j in range(n_targets):
            dists = np.linalg.norm(auv_pos[t] - target_pos[t, j], axis=1)
            if np.any((assignments[t] == j) & (dists <= d_target)):
                tracked += 1
    return 100.0 * tracked / (ticks * n_targets)


def trace_accuracy(trace: EpisodeTrace, d_target: float) -> float:
    return tracking_accuracy(trace.auv_pos, trace.target_pos,
                             trace.assignments, d_target)


@dataclass
class EpisodeRecord:
    """One training episode's summary row."""
    episode: int
    ret: float          # mean over AUVs of the summed total reward
    r_track: float      # per-component sums, AUV-means
    r_form: float
    r_smooth: float
    r_vel: float
    accuracy: float     # tracking accuracy, percent
    sigma: float        # exploration scale used
    wall_time: float    # seconds; excluded from the CSV on purpose


TRAIN_LOG_HEADER = "episode,return,r_track,r_form,r_smooth,r_vel,accuracy,sigma"
EVAL_LOG_HEADER = ("episode,eval_return_mean,eval_return_std,"
                   "eval_accuracy_mean,eval_accuracy_std")


def train_log_row(rec: EpisodeRecord) -> str:
    return ",".join([str(rec.episode)] +
                    [repr(float(v)) for v in (rec.ret, rec.r_track, rec.r_form,
                                              rec.r_smooth, rec.r_vel,
                                              rec.accuracy, rec.sigma)])


def eval_log_row(episode: int, returns: np.ndarray, accuracies: np.ndarray) -> str:
    return ",".join([str(episode),
                     repr(float(np.mean(returns))), repr(float(np.std(returns))),
                     repr(float(np.mean(accuracies))), repr(float(np.std(accuracies)))])


TRAJECTORY_HEADER = ("tick,entity_kind,entity_id,x,y,z,vx,vy,vz,"
                     "assigned_target,scene_dominant,w")


def trajectory_rows(trace: EpisodeTrace) -> list[str]:
    """One row per entity per tick: AUVs in id order, then targets."""
    rows = []
    n = trace.auv_pos.shape[1]
    m = trace.target_pos.shape[1]
    for t in range(trace.ticks):
        scene = int(trace.scene_dominant[t])
        w = trace.scene_w[t]
        w_text = repr(float(w)) if np.isfinite(w) else ""
        for i in range(n):
            p, v = trace.auv_pos[t, i], trace.auv_vel[t, i]
            rows.append(",".join(
                [str(t), "auv", str(i)]
                + [repr(float(c)) for c in (*p, *v)]
                + [str(int(trace.assignments[t, i])), str(scene), w_text]))
        for j in range(m):
            p, v = trace.target_pos[t, j], trace.target_vel[t, j]
            rows.append(",".join(
                [str(t), "target", str(j)]
                + [repr(float(c)) for c in (*p, *v)]
                + ["-1", str(scene), w_text]))
    return rows
