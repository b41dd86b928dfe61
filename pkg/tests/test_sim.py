"""Rollout harness: perturbations, convergence, evaluation, heading checks."""

import csv
import json

import numpy as np
import pytest

from calm import (
    ClusterModel,
    ControllerConfig,
    Dataset,
    InvalidArgumentError,
    MeanTrajectory,
    PerturbationEvent,
    SchemaError,
    Trajectory,
    TransitionKernel,
    evaluate,
    fit,
    generate_dataset,
    load_perturbation_script,
    overlap_heading_check,
    rollout,
    rollout_to_csv,
    save_perturbation_script,
)
from calm.sim import match_clusters_to_labels

from conftest import make_line_mean

STABLE = TransitionKernel("stable_forward")


# -- events -------------------------------------------------------------------


def test_event_validation():
    PerturbationEvent(0, "offset", np.zeros(2))
    with pytest.raises(InvalidArgumentError):
        PerturbationEvent(-1, "offset", np.zeros(2))
    with pytest.raises(InvalidArgumentError):
        PerturbationEvent(0, "nudge", np.zeros(2))
    with pytest.raises(InvalidArgumentError):
        PerturbationEvent(0, "offset", np.array([np.inf, 0.0]))


def test_script_round_trip(tmp_path):
    events = (
        PerturbationEvent(3, "offset", np.array([0.1, -0.2])),
        PerturbationEvent(7, "set_position", np.array([1.5, 2.5])),
    )
    path = tmp_path / "script.json"
    save_perturbation_script(events, path)
    back = load_perturbation_script(path)
    assert len(back) == 2
    for a, b in zip(events, back):
        assert a.trigger_tick == b.trigger_tick
        assert a.mode == b.mode
        np.testing.assert_array_equal(a.vector, b.vector)


def test_script_error_fields(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"tick": 1}))
    with pytest.raises(SchemaError) as err:
        load_perturbation_script(path)
    assert err.value.field == "<root>"

    path.write_text(json.dumps([{"mode": "offset", "vector": [0, 0]}]))
    with pytest.raises(SchemaError) as err:
        load_perturbation_script(path)
    assert err.value.field == "[0].tick"

    path.write_text(json.dumps([{"tick": True, "mode": "offset", "vector": [0, 0]}]))
    with pytest.raises(SchemaError) as err:
        load_perturbation_script(path)
    assert err.value.field == "[0].tick"

    path.write_text(json.dumps([{"tick": 1, "mode": "zap", "vector": [0, 0]}]))
    with pytest.raises(SchemaError) as err:
        load_perturbation_script(path)
    assert err.value.field == "[0]"


# -- rollout ------------------------------------------------------------------


def line_model(n=10):
    mean = make_line_mean(n=n)
    return ClusterModel(means=(mean,))


def test_rollout_line_converges_to_endpoint():
    model = line_model()
    result = rollout(model, model.means[0].states[0], STABLE)
    assert result.converged
    assert result.terminal_cluster == 0
    end = model.means[0].endpoint
    tol = 0.5 * model.means[0].spacing
    assert np.linalg.norm(result.trajectory.states[-1] - end) <= tol
    assert result.n_ticks <= 10 * model.means[0].n_states


def test_rollout_deterministic():
    model = line_model()
    start = model.means[0].states[0] + np.array([0.2, 0.4])
    a = rollout(model, start, STABLE)
    b = rollout(model, start, STABLE)
    assert a.trajectory.states.tobytes() == b.trajectory.states.tobytes()
    assert np.array_equal(a.kv_trace, b.kv_trace)
    assert a.converged == b.converged


def test_rollout_zero_offset_is_noop():
    model = line_model()
    start = model.means[0].states[0]
    plain = rollout(model, start, STABLE)
    nudged = rollout(
        model,
        start,
        STABLE,
        perturbations=(PerturbationEvent(3, "offset", np.zeros(2)),),
    )
    assert plain.trajectory.states.tobytes() == nudged.trajectory.states.tobytes()
    assert np.array_equal(plain.active_cluster_trace, nudged.active_cluster_trace)


def test_rollout_set_position_enters_observed_trajectory():
    model = line_model()
    target = np.array([0.9, 0.9])
    result = rollout(
        model,
        model.means[0].states[0],
        STABLE,
        perturbations=(PerturbationEvent(4, "set_position", target),),
        max_ticks=20,
    )
    np.testing.assert_array_equal(result.trajectory.states[4], target)


def test_rollout_offset_applies_before_update():
    model = line_model()
    shift = np.array([0.0, 0.5])
    plain = rollout(model, model.means[0].states[0], STABLE, max_ticks=6)
    shifted = rollout(
        model,
        model.means[0].states[0],
        STABLE,
        perturbations=(PerturbationEvent(2, "offset", shift),),
        max_ticks=6,
    )
    np.testing.assert_array_equal(
        shifted.trajectory.states[2], plain.trajectory.states[2] + shift
    )


def test_rollout_validation():
    model = line_model()
    start = model.means[0].states[0]
    with pytest.raises(InvalidArgumentError):
        rollout(model, np.array([np.nan, 0.0]), STABLE)
    with pytest.raises(InvalidArgumentError):
        rollout(model, start, STABLE, perturbations=(PerturbationEvent(999, "offset", np.zeros(2)),), max_ticks=10)
    with pytest.raises(InvalidArgumentError):
        rollout(model, start, STABLE, perturbations=(PerturbationEvent(0, "offset", np.zeros(3)),))
    with pytest.raises(InvalidArgumentError):
        rollout(model, start, [STABLE, STABLE])


def test_rollout_non_stable_kernel_runs_full_budget():
    model = line_model(n=6)
    result = rollout(model, model.means[0].states[0], TransitionKernel("gradient_predict"), max_ticks=25)
    assert not result.converged
    assert result.n_ticks == 25


def test_rollout_convergence_tol_override():
    model = line_model()
    loose = rollout(model, model.means[0].states[0], STABLE, convergence_tol=50.0)
    # Absorption still takes F updates; afterwards any position is "close".
    assert loose.converged
    strict = rollout(
        model, model.means[0].states[0], STABLE, convergence_tol=1e-12, max_ticks=40
    )
    assert strict.n_ticks >= loose.n_ticks


def drag_script(mean, start_tick, n_ticks, start_index):
    """Consecutive set_position events walking along a mean's states,
    emulating a human holding the point on that corridor."""
    F = mean.n_states
    return tuple(
        PerturbationEvent(
            start_tick + j, "set_position", mean.states[min(start_index + j, F - 1)]
        )
        for j in range(n_ticks)
    )


def test_rollout_multi_motion_switch_on_perturbation(mm_model):
    means = mm_model.means
    start_cluster = 0
    other = 1
    start = means[start_cluster].states[0]
    F = means[other].n_states
    # A single teleport cannot overturn the log marginal the incumbent
    # accumulated; a sustained drag along the other corridor does. The
    # drag must also land ahead of the other cluster's alignment, since
    # the forward-only kernel cannot realign to states it has passed.
    tick = 5
    events = drag_script(means[other], tick, 16, int(0.65 * F))
    result = rollout(mm_model, start, STABLE, perturbations=events)
    trace = result.active_cluster_trace
    assert trace[tick - 1] == start_cluster
    flipped = np.flatnonzero(trace[tick:] == other)
    assert flipped.size > 0 and flipped[0] <= 25
    first_flip = tick + int(flipped[0])
    assert np.all(trace[first_flip:] == other)
    assert result.converged
    end = means[other].endpoint
    tol = 0.5 * means[other].spacing
    assert np.linalg.norm(result.trajectory.states[-1] - end) <= tol


# -- evaluate -----------------------------------------------------------------


def test_evaluate_straight_line_scale_sanity():
    xs = np.linspace(0.0, 2.0, 25)
    states = np.stack([xs, np.zeros(25)], axis=1)
    demos = tuple(Trajectory(states.copy(), 0.1) for _ in range(3))
    ds = Dataset(demos, name="line")
    model = fit(ds, k=1)
    report = evaluate(model, ds, STABLE)
    reversed_cost = float(
        np.linalg.norm(states - states[::-1], axis=1).sum()
    )  # lower bound on dtwd(demo, reversed demo) via the diagonal path
    assert report["mean_dtwd"] < reversed_cost / 100


def test_evaluate_report_shape(mm_model, mm_dataset):
    report = evaluate(mm_model, mm_dataset, STABLE)
    assert report["dataset"] == "multi_motion"
    assert report["n_demos"] == 6
    assert report["kernel"] == "stable_forward"
    assert report["k"] == 2
    assert report["dtwd_definition"]
    assert len(report["per_demo"]) == 6
    for entry in report["per_demo"]:
        assert {"demo", "label", "dtwd", "converged", "terminal_cluster", "ticks"} <= set(entry)
    assert report["reference_dtwd"] == 12.77
    assert "reference_note" in report
    assert json.dumps(report)  # JSON-ready


def test_evaluate_terminal_accuracy_multi_motion(mm_model, mm_dataset):
    report = evaluate(mm_model, mm_dataset, STABLE)
    assert report["terminal_accuracy"] >= 5 / 6
    mapping = report["cluster_to_label"]
    assert set(mapping.values()) == {0, 1}


def test_evaluate_unlabeled_has_no_accuracy(snake_model, snake_dataset):
    report = evaluate(snake_model, snake_dataset, STABLE)
    assert "terminal_accuracy" not in report
    assert report["reference_dtwd"] == 48.48
    assert report["mean_dtwd"] is not None


def test_evaluate_records_per_demo_errors():
    mean3d = MeanTrajectory(np.zeros((3, 3)) + np.arange(3)[:, None], 0.1, np.ones(3), np.eye(3))
    model = ClusterModel(means=(mean3d,))
    ds = generate_dataset("snake", seed=0, n_demos=2, n_points=12)
    report = evaluate(model, ds, STABLE)
    assert all("error" in e for e in report["per_demo"])
    assert report["mean_dtwd"] is None


def test_match_clusters_to_labels_permutation():
    clusters = [0, 0, 0, 1, 1, 1]
    labels = [1, 1, 1, 0, 0, 0]
    mapping = match_clusters_to_labels(clusters, labels, k=2)
    assert mapping == {0: 1, 1: 0}


# -- heading check ------------------------------------------------------------


def test_heading_check_single_pass_fails():
    xs = np.linspace(-2, 2, 40)
    traj = Trajectory(np.stack([xs, np.zeros(40)], axis=1), 0.1)
    check = overlap_heading_check(traj, np.zeros(2), 0.3)
    assert not check.passed
    assert check.n_passes == 1
    assert "1" in check.reason


def test_heading_check_flat_figure_eight_passes():
    t = np.linspace(0, 2 * np.pi, 200)
    states = np.stack([2 * np.sin(t), 0.5 * np.sin(2 * t)], axis=1)
    traj = Trajectory(states, 0.05)
    check = overlap_heading_check(traj, np.zeros(2), 0.25)
    assert check.passed
    assert check.n_passes >= 2
    assert check.min_heading_dot < 0


def test_heading_check_parallel_passes_fail():
    # Two passes through the ball going the same way: never opposed.
    leg1 = np.stack([np.linspace(-2, 2, 30), np.full(30, -0.05)], axis=1)
    leg2 = np.stack([np.linspace(-2, 2, 30), np.full(30, 0.05)], axis=1)
    states = np.concatenate([leg1, leg1[::-1] + np.array([0.0, 5.0]), leg2])
    check = overlap_heading_check(Trajectory(states, 0.1), np.zeros(2), 0.3)
    assert not check.passed
    assert check.n_passes == 2
    assert check.min_heading_dot is not None and check.min_heading_dot > 0


def test_heading_check_validation():
    traj = Trajectory(np.zeros((3, 2)), 0.1)
    with pytest.raises(InvalidArgumentError):
        overlap_heading_check(traj, np.zeros(3), 0.3)
    with pytest.raises(InvalidArgumentError):
        overlap_heading_check(traj, np.zeros(2), 0.0)


def test_heading_check_on_overlap_rollout(overlap_model):
    from calm import OVERLAP_CROSSING

    mean = overlap_model.means[0]
    result = rollout(overlap_model, mean.states[0], STABLE)
    check = overlap_heading_check(
        result.trajectory, np.asarray(OVERLAP_CROSSING), 0.35
    )
    assert check.passed


# -- csv ----------------------------------------------------------------------


def test_rollout_csv_round_trip(tmp_path):
    model = line_model()
    result = rollout(model, model.means[0].states[0] + np.array([0.1, 0.2]), STABLE, max_ticks=12)
    path = tmp_path / "trace.csv"
    rollout_to_csv(result, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x0", "x1", "cluster", "kv", "phase"]
    assert len(rows) - 1 == result.n_ticks
    for i, row in enumerate(rows[1:]):
        assert float(row[0]) == pytest.approx(i * result.trajectory.dt)
        assert float(row[1]) == result.trajectory.states[i, 0]
        assert float(row[2]) == result.trajectory.states[i, 1]
        assert int(row[3]) == result.active_cluster_trace[i]
        assert float(row[4]) == result.kv_trace[i]
