import numpy as np

from auvtrack.metrics import (EVAL_LOG_HEADER, TRAIN_LOG_HEADER,
                              TRAJECTORY_HEADER, EpisodeRecord, EpisodeTrace,
                              eval_log_row, tracking_accuracy, trace_accuracy,
                              train_log_row, trajectory_rows)


def test_accuracy_counts_step_target_pairs():
    # 4 steps, 2 targets, 1 AUV per target. Target 0 is covered every step;
    # target 1 only on the last two. 6 of 8 pairs -> 75%.
    T = 4
    auv_pos = np.zeros((T, 2, 3))
    target_pos = np.zeros((T, 2, 3))
    target_pos[:, 1, 0] = 100.0          # target 1 far away...
    auv_pos[:, 1, 0] = 100.0 + 20.0      # ...and its AUV out of reach
    auv_pos[2:, 1, 0] = 100.0 + 3.0      # until step 2
    assignments = np.tile(np.array([0, 1]), (T, 1))
    assert tracking_accuracy(auv_pos, target_pos, assignments, d_target=5.0) == 75.0


def test_accuracy_requires_assignment_match():
    # an AUV parked on the target does not count while assigned elsewhere
    auv_pos = np.zeros((1, 1, 3))
    target_pos = np.zeros((1, 2, 3))
    target_pos[0, 1, 0] = 50.0
    assignments = np.array([[1]])
    assert tracking_accuracy(auv_pos, target_pos, assignments, 5.0) == 0.0


def test_accuracy_boundary_inclusive():
    auv_pos = np.array([[[5.0, 0.0, 0.0]]])
    target_pos = np.zeros((1, 1, 3))
    assignments = np.zeros((1, 1), dtype=int)
    assert tracking_accuracy(auv_pos, target_pos, assignments, 5.0) == 100.0


def test_accuracy_empty_trace():
    assert tracking_accuracy(np.zeros((0, 1, 3)), np.zeros((0, 1, 3)),
                             np.zeros((0, 1), dtype=int), 5.0) == 0.0


def make_trace(T=3, n=2, m=1) -> EpisodeTrace:
    rng = np.random.default_rng(0)
    return EpisodeTrace(auv_pos=rng.normal(size=(T, n, 3)),
                        auv_vel=rng.normal(size=(T, n, 3)),
                        target_pos=rng.normal(size=(T, m, 3)),
                        target_vel=rng.normal(size=(T, m, 3)),
                        assignments=np.zeros((T, n), dtype=np.int64),
                        scene_dominant=np.full(T, -1, dtype=np.int64),
                        scene_w=np.full(T, np.nan))


def test_trace_accuracy_delegates():
    trace = make_trace()
    trace.auv_pos[:, 0] = 0.0
    trace.target_pos[:, 0] = 0.0
    assert trace_accuracy(trace, 1.0) == 100.0


def test_train_row_round_trips_floats():
    rec = EpisodeRecord(episode=7, ret=-3.0000000000000004, r_track=0.1,
                        r_form=-0.2, r_smooth=-0.30000000000000016, r_vel=-0.4,
                        accuracy=87.5, sigma=0.2999, wall_time=12.5)
    row = train_log_row(rec)
    parts = row.split(",")
    assert len(parts) == len(TRAIN_LOG_HEADER.split(","))
    assert parts[0] == "7"
    assert float(parts[1]) == rec.ret          # repr round-trip is exact
    assert float(parts[4]) == rec.r_smooth
    assert "wall" not in TRAIN_LOG_HEADER      # timing never enters the log


def test_eval_row_statistics():
    returns = np.array([1.0, 3.0])
    accuracies = np.array([50.0, 100.0])
    parts = eval_log_row(12, returns, accuracies).split(",")
    assert len(parts) == len(EVAL_LOG_HEADER.split(","))
    assert parts[0] == "12"
    assert float(parts[1]) == 2.0
    assert float(parts[2]) == 1.0
    assert float(parts[3]) == 75.0
    assert float(parts[4]) == 25.0


def test_trajectory_rows_shape_and_order():
    trace = make_trace(T=3, n=2, m=1)
    rows = trajectory_rows(trace)
    assert len(rows) == 3 * (2 + 1)
    width = len(TRAJECTORY_HEADER.split(","))
    assert all(len(r.split(",")) == width for r in rows)
    first = rows[0].split(",")
    assert first[:3] == ["0", "auv", "0"]
    assert rows[2].split(",")[:3] == ["0", "target", "0"]
    # scenes were not evaluated: dominant -1, w empty
    assert first[10] == "-1"
    assert first[11] == ""
    # target rows get the assignment sentinel
    assert rows[2].split(",")[9] == "-1"


def test_trajectory_rows_scene_fields():
    trace = make_trace(T=1, n=1, m=1)
    trace.scene_dominant[0] = 2
    trace.scene_w[0] = 0.75
    auv_row = trajectory_rows(trace)[0].split(",")
    assert auv_row[10] == "2"
    assert float(auv_row[11]) == 0.75
