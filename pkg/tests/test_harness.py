import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from memctrl.baseline import PidController, PidGains
from memctrl.harness import (EpisodeAborted, ReplayController, ZeroController, avg_tracking_error,
                             compare_report, default_test_reference, default_train_reference,
                             episodes_to_plateau, make_reference, max_tracking_error,
                             read_trace_csv, run_episode, write_trace_csv)
from memctrl.plant import PlantConfig, SoftFingerPlant
from memctrl.rl.common import TrainLog, read_trainlog_csv, snapshot_if_improved

finite = st.floats(-90, 90)


# references

def test_steps_structure():
    ref = make_reference("steps", {"ramp_len": 0}, N=400)
    assert len(ref) == 401 and ref.N == 400
    levels = [ref[i] for i in (50, 150, 250, 350)]
    assert levels == [10.0, 40.0, 25.0, 60.0]
    assert len(np.unique(ref.values)) == 4


def test_sine_with_zero_frequency_is_constant():
    ref = make_reference("sine", {"freq": 0.0, "offset": 12.0, "amp": 5.0}, N=50)
    assert np.all(ref.values == ref.values[0])


def test_train_and_test_defaults_differ():
    tr, te = default_train_reference(), default_test_reference()
    assert tr.kind != te.kind
    assert tr.params.get("freq") != te.params.get("freq")


@pytest.mark.parametrize("kind", ["steps", "sine", "mixed"])
def test_reference_within_range(kind):
    ref = make_reference(kind, N=300)
    assert np.all(np.abs(ref.values) <= 90.0) and len(ref) == 301


def test_bad_references_rejected():
    with pytest.raises(ValueError):
        make_reference("steps", {"levels": [95.0]})
    with pytest.raises(ValueError):
        make_reference("chirp")
    with pytest.raises(ValueError):
        make_reference("steps", N=0)


# episodes

def test_zero_controller_on_zero_reference():
    tr = run_episode(ZeroController(), SoftFingerPlant(), np.zeros(30))
    assert np.all(tr.error == 0.0) and np.all(tr.reward == 0.0)


@given(st.lists(st.floats(0, 200), min_size=2, max_size=40), st.data())
def test_trace_error_definition_and_replay(us, data):
    ref = np.array(data.draw(st.lists(finite, min_size=len(us), max_size=len(us))))
    tr = run_episode(ReplayController(us), SoftFingerPlant(), ref)
    assert np.array_equal(tr.error, tr.theta - tr.theta_ref)
    assert len(tr) == len(ref) and tr.t.tolist() == list(range(len(ref)))
    again = run_episode(ReplayController(tr.u), SoftFingerPlant(), ref)
    assert np.array_equal(again.theta, tr.theta)


def test_trace_csv_round_trip(tmp_path):
    tr = run_episode(PidController(PidGains(2.0, 0.1)), SoftFingerPlant(), make_reference(N=50))
    path = write_trace_csv(tmp_path / "trace.csv", tr, {"seed": 0})
    back = read_trace_csv(path)
    assert all(np.array_equal(a, b) for a, b in zip(tr.columns(), back.columns()))
    assert path.read_text().splitlines()[1] == "t,theta,theta_ref,error,u,reward"


def test_blind_controller_gets_no_measurement():
    seen = []

    class Spy(ZeroController):
        def act(self, obs):
            seen.append(obs.theta)
            return 50.0
    run_episode(Spy(), SoftFingerPlant(), np.zeros(5))
    assert seen == [None] * 5


def test_non_finite_controller_output_aborts():
    class Bad(ZeroController):
        def act(self, obs):
            return math.nan if obs.t == 3 else 0.0
    with pytest.raises(EpisodeAborted) as ei:
        run_episode(Bad(), SoftFingerPlant(), np.zeros(10))
    assert len(ei.value.trace) == 3 and ei.value.trace.aborted


def test_noise_does_not_leak_into_noiseless_runs():
    ref = make_reference(N=50)
    a = run_episode(ZeroController(), SoftFingerPlant(PlantConfig()), ref)
    b = run_episode(ZeroController(), SoftFingerPlant(PlantConfig()), ref)
    assert np.array_equal(a.theta, b.theta)


# metrics

def test_metric_examples():
    assert avg_tracking_error([1, -1, 2]) == pytest.approx(4 / 3)
    assert avg_tracking_error([0.0, 0.0]) == 0.0
    assert max_tracking_error([1, -3, 2]) == 3.0
    assert max_tracking_error([-0.5]) == 0.5
    with pytest.raises(ValueError):
        avg_tracking_error([])


def test_average_matches_streaming_recomputation():
    e = np.random.default_rng(0).normal(size=10_000) * 20
    total, n = 0.0, 0
    for x in e:
        n += 1
        total += (abs(x) - total) / n     # running mean
    assert abs(avg_tracking_error(e) - total) <= 1e-12


@given(st.lists(finite, min_size=1, max_size=50))
def test_max_at_least_average(errs):
    assert max_tracking_error(errs) >= avg_tracking_error(errs) - 1e-12


# comparison report

def _trace_with_error(err):
    ref = np.full(5, err)
    return run_episode(ZeroController(), SoftFingerPlant(), ref)


def test_single_run_report(tmp_path):
    rep = compare_report([("pi", _trace_with_error(0.1), None)], tmp_path)
    lines = [ln for ln in open(rep.files["table"]) if not ln.startswith("#")]
    assert len(lines) == 2 and lines[1].startswith("pi,")
    assert rep.ranking == ["pi"]


def test_two_run_ranking(tmp_path):
    log = TrainLog()
    snapshot_if_improved(log, -2.0, None, 0.5, 0.1)
    rep = compare_report([("b", _trace_with_error(0.2), None), ("a", _trace_with_error(0.1), log)],
                         tmp_path, {"seed": 0})
    assert rep.ranking == ["a", "b"]
    assert rep.error_of("a") == pytest.approx(0.1) and rep.error_of("b") == pytest.approx(0.2)
    assert open(rep.files["ranking"]).read().strip() == "a < b"
    assert read_trainlog_csv(rep.files["rewards:a"]).mean_rewards == [-2.0]
    assert "rewards:b" not in rep.files


def test_ties_keep_input_order():
    rep = compare_report([("x", _trace_with_error(0.1), None), ("y", _trace_with_error(0.1), None)])
    assert rep.ranking == ["x", "y"]
    with pytest.raises(ValueError):
        compare_report([])


# plateau metric

def test_plateau_examples():
    assert episodes_to_plateau([-5.0] * 20) == 1                  # flat curve
    assert episodes_to_plateau(np.linspace(-1, -5, 30)) == 1      # getting worse
    step = [-10.0] * 10 + [-1.0] * 40
    # the trailing 5-episode mean first reaches 90% of the gain at episode 15
    assert episodes_to_plateau(step) == 15
    assert episodes_to_plateau(step, smooth=1) == 11


def test_plateau_ignores_dips_before_settling():
    r = [-10.0] * 5 + [-1.0] * 5 + [-10.0] * 5 + [-1.0] * 35
    assert episodes_to_plateau(r, smooth=1) == 16


@given(st.lists(st.floats(-100, 0), min_size=1, max_size=60))
def test_plateau_in_range(r):
    assert 1 <= episodes_to_plateau(r) <= len(r) + 1


def test_plateau_rejects_bad_curves():
    with pytest.raises(ValueError):
        episodes_to_plateau([])
    with pytest.raises(ValueError):
        episodes_to_plateau([-1.0, math.nan])
