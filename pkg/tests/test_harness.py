import json
import math

import numpy as np
import pytest

from anaconda.trace import EliminationRecord
from estimator.estimate_store import Witness, read_event_log
from harness.experiment_runner import (ExperimentRunner, PolicySpec, RunRecord, cw_retention,
                                       mean_and_stderr, perfect_replay_trial, resolve_jobs,
                                       restart_attribution, run_seeds, run_single, staged_replay)
from harness.persistence import RUN_HEADER, config_hash, write_json, write_run_artifacts
from harness.regret import regret_increment, regret_series
from harness.sweeps import (concentration_suite, dyadic_intervals, scaling_fit, spec_labels,
                            sweep_significant_switches, sweep_switches)
from measures.nonstationarity import significant_cw_switches
from prefs.preference_matrix import NoCondorcetWinner, example_switch_matrices, with_condorcet_winner
from prefs.sequences import rotating_drift_sequence, scripted_switch_sequence, stationary_sequence


def fake_record(episode_starts, eliminations=()):
    zeros = np.zeros(3)
    return RunRecord(seed=0, policy="anaconda", regret=zeros, cumulative=zeros,
                     episode_starts=tuple(episode_starts), eliminations=list(eliminations),
                     trace=None)


def test_regret_increment_examples():
    first, _ = example_switch_matrices()
    assert regret_increment(first, 0, 0) == 0.0
    assert regret_increment(first, 1, 1) == 0.5
    assert regret_increment(first, 0, 1) == 0.25
    assert regret_increment(with_condorcet_winner(3, 0, 0.3), 0, 2) == pytest.approx(0.15)
    with pytest.raises(NoCondorcetWinner):
        regret_increment(np.full((2, 2), 0.5), 0, 1)


def test_regret_series_matches_increments():
    env = scripted_switch_sequence(3, 60, 2, 0.3)
    rng = np.random.default_rng(1)
    first, second = rng.integers(3, size=60), rng.integers(3, size=60)
    series = regret_series(env, first, second)
    expected = [regret_increment(env.matrix(t), int(first[t - 1]), int(second[t - 1]))
                for t in range(1, 61)]
    assert np.allclose(series, expected)


def test_run_single_is_deterministic_and_bounded():
    env = scripted_switch_sequence(3, 1200, 2, 0.3)
    spec = PolicySpec("anaconda", elim_constant=0.3)
    first, second = run_single(env, spec, 5), run_single(env, spec, 5)
    assert np.array_equal(first.regret, second.regret)
    assert first.episode_starts == second.episode_starts
    assert np.all((first.regret >= 0) & (first.regret <= 0.5))
    assert np.allclose(first.cumulative, np.cumsum(first.regret))
    assert np.all(np.diff(first.cumulative) >= 0)
    assert first.dynamic_regret == pytest.approx(first.regret.sum())
    assert set(first.summary()) == {"seed", "policy", "dynamic_regret", "restarts", "eliminations"}


def test_run_seeds_keeps_seed_order():
    env = stationary_sequence(with_condorcet_winner(2, 0, 0.2), 200)
    records = run_seeds(env, PolicySpec("uniform_random"), [7, 3, 5])
    assert [r.seed for r in records] == [7, 3, 5]
    assert np.array_equal(records[1].regret, run_single(env, PolicySpec("uniform_random"), 3).regret)


def test_policy_spec_rejects_unknown_name():
    with pytest.raises(ValueError):
        PolicySpec("thompson")


def test_resolve_jobs():
    assert resolve_jobs(-1) >= 1
    assert resolve_jobs(3) == 3
    with pytest.raises(ValueError):
        resolve_jobs(0)


def test_mean_and_stderr():
    mean, stderr = mean_and_stderr([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert stderr == pytest.approx(1 / math.sqrt(3))
    with pytest.raises(ValueError):
        mean_and_stderr([1.0])


def test_restart_attribution_flags_switches_inside_episode():
    env = scripted_switch_sequence(2, 100, 1, 0.3)
    attributions = restart_attribution(fake_record((1, 40, 90)), env)
    assert [(a.episode_start, a.restart_round, a.cw_switched) for a in attributions] == [
        (1, 40, False), (40, 90, True)]


def test_cw_retention_only_counts_winner_leaving_good_set():
    env = scripted_switch_sequence(2, 100, 1, 0.3)
    witness = Witness(1, 1, 5)
    eliminations = [EliminationRecord(10, 0, "good", witness, 0),
                    EliminationRecord(12, 1, "good", witness, 0),
                    EliminationRecord(14, 0, "active", witness, 3),
                    EliminationRecord(70, 1, "good", witness, 0)]
    lost = cw_retention(fake_record((1,), eliminations), env)
    assert [(r.round, r.arm) for r in lost] == [(10, 0), (70, 1)]


def test_staged_replay_covers_first_bad_segment():
    env = scripted_switch_sequence(2, 9000, 1, 0.4)
    s, m = staged_replay(env, 0, 1.0)
    assert s == 4501
    assert m == 4096
    with pytest.raises(ValueError):
        staged_replay(stationary_sequence(with_condorcet_winner(2, 0, 0.4), 100), 1, 1.0)


@pytest.mark.slow
def test_perfect_replay_evicts_the_old_winner():
    env = scripted_switch_sequence(2, 9000, 1, 0.4)
    trials = [perfect_replay_trial(env, 0, 1.0, seed, elim_constant=0.5) for seed in range(20)]
    assert sum(t.eliminated for t in trials) >= 18
    for trial in trials:
        if trial.eliminated:
            assert trial.replay_start <= trial.elimination_round <= trial.replay_start + trial.replay_length


def test_experiment_runner_writes_artifacts(tmp_path):
    env = scripted_switch_sequence(2, 300, 1, 0.3)
    payload = {"horizon": 300, "policy": {"name": "anaconda"}}
    runner = ExperimentRunner(env, PolicySpec("anaconda", elim_constant=0.5), [0, 1], tmp_path,
                              config_payload=payload)
    records = runner.start_experiment()
    assert len(records) == 2
    summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert summary["policy"] == "anaconda"
    assert summary["mean_dynamic_regret"] == pytest.approx(np.mean([r.dynamic_regret for r in records]))
    assert "stderr_dynamic_regret" in summary
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["config_sha256"] == config_hash(payload)
    assert "runs/anaconda_seed0.csv" in manifest["files"]
    assert "traces/anaconda_seed1_trace.json" in manifest["files"]
    assert "measures.json" in manifest["files"]
    header = (tmp_path / "runs" / "anaconda_seed0.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(RUN_HEADER)


def test_experiment_runner_skips_disabled_stages(tmp_path):
    env = stationary_sequence(with_condorcet_winner(2, 0, 0.3), 100)
    runner = ExperimentRunner(env, PolicySpec("uniform_random"), [0], tmp_path,
                              stages_to_process=(0, 1, 0, 0))
    records = runner.start_experiment()
    assert len(records) == 1
    assert runner.measures is None
    assert list(tmp_path.iterdir()) == []


@pytest.mark.parametrize("stages", [(1, 1, 1), (1, 2, 1, 1)])
def test_experiment_runner_validates_stages(tmp_path, stages):
    env = stationary_sequence(with_condorcet_winner(2, 0, 0.3), 100)
    with pytest.raises(ValueError):
        ExperimentRunner(env, PolicySpec("uniform_random"), [0], tmp_path, stages_to_process=stages)


def test_write_json_is_canonical(tmp_path):
    path = write_json({"b": 1, "a": [1, 2]}, tmp_path / "x" / "out.json")
    text = path.read_text(encoding="utf-8")
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_uniform_regret_is_flat_in_switch_count():
    result = sweep_switches(2, [2000], [1, 3], 0.3, [PolicySpec("uniform_random")], [0, 1])
    assert len(result.cells) == 2
    assert abs(result.switch_slopes["uniform_random@2000"]) < 0.1
    payload = result.to_json()
    assert payload["cells"][0]["seeds"] == [0, 1]


def test_uniform_regret_is_linear_in_horizon():
    result = sweep_switches(2, [1000, 2000], [1], 0.3, [PolicySpec("uniform_random")], [0, 1])
    assert abs(result.horizon_slopes["uniform_random@1"] - 1.0) < 0.1


def test_sweep_needs_two_seeds():
    with pytest.raises(ValueError):
        sweep_switches(2, [100], [1], 0.3, [PolicySpec("uniform_random")], [0])


def test_scaling_fit():
    assert scaling_fit([1, 2, 4], [3, 6, 12]) == pytest.approx(1.0)
    assert scaling_fit([1, 4], [5, 10]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        scaling_fit([1], [1])
    with pytest.raises(ValueError):
        scaling_fit([1, 2], [0, 1])
    with pytest.raises(ValueError):
        scaling_fit([3, 3], [1, 2])


@pytest.mark.parametrize("horizon, count", [(1, 1), (4, 7), (5, 8)])
def test_dyadic_intervals(horizon, count):
    intervals = dyadic_intervals(horizon)
    assert len(intervals) == count
    assert all(1 <= s <= e <= horizon for s, e in intervals)


def test_concentration_extremes():
    assert concentration_suite(200, 3, 3, 0.0).frequency == 1.0
    result = concentration_suite(200, 3, 3, math.inf)
    assert result.frequency == 0.0
    assert result.to_json()["c1"] == "inf"
    with pytest.raises(ValueError):
        concentration_suite(200, 3, 0, 1.0)


def test_event_log_is_written_for_eliminating_policies(tmp_path):
    env = scripted_switch_sequence(2, 300, 1, 0.5)
    record = run_single(env, PolicySpec("anaconda", elim_constant=0.5), 4)
    paths = write_run_artifacts(record, tmp_path)
    events_path = tmp_path / "traces" / "anaconda_seed4_events.csv"
    assert events_path in paths
    replayed = read_event_log(events_path, 2)
    assert replayed.events() == record.store.events()
    assert replayed.event_at(150) == record.store.event_at(150)
    assert replayed.event_at(301) is None

    uniform = run_single(env, PolicySpec("uniform_random"), 4)
    assert uniform.store is None
    write_run_artifacts(uniform, tmp_path)
    assert not (tmp_path / "traces" / "uniform_random_seed4_events.csv").exists()


def test_duplicate_policy_names_get_distinct_labels():
    specs = [PolicySpec("uniform_random"), PolicySpec("uniform_random")]
    result = sweep_switches(2, [200], [1, 2], 0.3, specs, [0, 1])
    assert [c.label for c in result.cells] == ["uniform_random#0", "uniform_random#1"] * 2
    assert set(result.switch_slopes) == {"uniform_random#0@200", "uniform_random#1@200"}
    assert spec_labels([PolicySpec("anaconda"), PolicySpec("uniform_random")]) == [
        "anaconda", "uniform_random"]


def test_drift_sweep_uses_significant_switch_counts():
    result = sweep_significant_switches(3, [3000], [0, 2], 0.3, [PolicySpec("uniform_random")], [0, 1])
    counts = [c.num_switches for c in result.cells]
    assert counts == [len(significant_cw_switches(rotating_drift_sequence(3, 3000, n, 0.3)))
                      for n in (0, 2)]
    assert counts[0] == 0 < counts[1]
    assert all(c.environment == "utility_drift" for c in result.cells)
    assert abs(result.switch_slopes["uniform_random@3000"]) < 0.3


def test_drift_sweep_needs_two_seeds():
    with pytest.raises(ValueError):
        sweep_significant_switches(2, [100], [1], 0.3, [PolicySpec("uniform_random")], [0])


ANACONDA = PolicySpec("anaconda", elim_constant=0.5, log_replay_tree=False)


def mean_regret(env, spec, seeds):
    return mean_and_stderr([r.dynamic_regret for r in run_seeds(env, spec, seeds, jobs=-1)])[0]


@pytest.mark.slow
def test_restarts_follow_winner_switches():
    restarts = unattributed = 0
    for num_switches in (2, 4):
        env = scripted_switch_sequence(2, 10_000, num_switches, 0.5)
        for record in run_seeds(env, ANACONDA, list(range(100)), jobs=-1):
            attributions = restart_attribution(record, env)
            restarts += len(attributions)
            unattributed += sum(not a.cw_switched for a in attributions)
    assert restarts > 0
    assert unattributed <= 0.05 * restarts


@pytest.mark.slow
def test_estimator_deviation_bound_holds_at_c1_six():
    result = concentration_suite(10_000, 4, 200, 6.0, jobs=-1)
    assert result.violations <= 1
    assert result.frequency <= 0.01


@pytest.mark.slow
def test_winner_stays_good_with_five_arms():
    env = stationary_sequence(with_condorcet_winner(5, 0, 0.2), 20_000)
    spec = PolicySpec("anaconda", elim_constant=1.0, log_replay_tree=False)
    records = run_seeds(env, spec, list(range(100)), jobs=-1)
    assert sum(not cw_retention(r, env) for r in records) >= 95


@pytest.mark.slow
def test_oracle_restarts_beat_anaconda_and_misaligned_budget():
    env = scripted_switch_sequence(2, 20_000, 3, 0.5)
    seeds = list(range(20))
    oracle = mean_regret(env, PolicySpec("oracle_restart", elim_constant=0.5), seeds)
    # restarts at 6668 and 13335 miss the switches at 5001, 10001 and 15001
    misaligned = mean_regret(env, PolicySpec("fixed_budget_restart", elim_constant=0.5, num_restarts=2),
                             seeds)
    assert oracle < mean_regret(env, ANACONDA, seeds)
    assert misaligned > 2 * oracle


@pytest.mark.slow
def test_anaconda_beats_uniform_on_long_two_arm_horizon():
    env = stationary_sequence(with_condorcet_winner(2, 0, 0.5), 100_000)
    # uniform pairs lose 1/4 per round
    assert mean_regret(env, ANACONDA, [0, 1, 2]) < 0.75 * 0.25 * env.horizon


NEAR_UNIFORM_AT_FIVE_ARMS = pytest.mark.xfail(
    strict=False,
    reason="with K=5 and C=1 the threshold C·ln T·K·√n exceeds the evidence of a 0.3 gap until "
           "n ≈ 2.7·10⁴ exploring rounds, so below T ≈ 10⁵ ANACONDA plays like uniform_random")


@pytest.mark.slow
@NEAR_UNIFORM_AT_FIVE_ARMS
def test_regret_grows_like_root_switch_count():
    spec = PolicySpec("anaconda", log_replay_tree=False)
    result = sweep_switches(5, [20_000], [1, 2, 4, 8, 16], 0.3, [spec], list(range(50)), jobs=-1)
    assert 0.3 <= result.switch_slopes["anaconda@20000"] <= 0.7


@pytest.mark.slow
@NEAR_UNIFORM_AT_FIVE_ARMS
def test_regret_over_root_horizon_does_not_grow():
    spec = PolicySpec("anaconda", log_replay_tree=False)
    result = sweep_switches(5, [5000, 20_000, 80_000], [4], 0.3, [spec], list(range(20)), jobs=-1)
    normalized = [c.mean / math.sqrt(c.horizon) for c in sorted(result.cells, key=lambda c: c.horizon)]
    assert all(later <= 1.2 * earlier for earlier, later in zip(normalized, normalized[1:]))


@pytest.mark.slow
@NEAR_UNIFORM_AT_FIVE_ARMS
def test_stationary_regret_is_sublinear_with_five_arms():
    env = stationary_sequence(with_condorcet_winner(5, 0, 0.2), 20_000)
    records = run_seeds(env, PolicySpec("anaconda", log_replay_tree=False), list(range(100)), jobs=-1)
    quarter = env.horizon // 4
    sublinear = sum(r.cumulative[-1] / env.horizon <= 0.5 * r.cumulative[quarter - 1] / quarter
                    for r in records)
    assert sublinear >= 90
