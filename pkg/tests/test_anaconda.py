import math

import numpy as np
import pytest

from anaconda.anaconda import (AnacondaConfig, AnacondaPolicy, EmptyActiveSet, EpisodeState,
                               replay_durations, run)
from anaconda.trace import write_trace_csv, write_trace_json
from baselines.policy import rng_stream
from estimator.estimate_store import witness_holds
from prefs.preference_matrix import with_condorcet_winner
from prefs.sequences import scripted_switch_sequence, stationary_sequence


def play(config, env):
    policy = AnacondaPolicy(config)
    env_rng = rng_stream(config.seed, "environment")
    outcomes = [policy.step(env, env_rng) for _ in range(config.horizon)]
    return policy, outcomes


@pytest.mark.parametrize("kwargs", [
    {"horizon": 1, "num_arms": 2},
    {"horizon": 10, "num_arms": 1},
    {"horizon": 10, "num_arms": 2, "elim_constant": 0.0},
    {"horizon": 10, "num_arms": 2, "forced_replays": ((3, 3),)},
    {"horizon": 10, "num_arms": 2, "forced_replays": ((1, 2),)},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        AnacondaConfig(**kwargs)


@pytest.mark.parametrize("horizon, durations", [
    (2, (2,)),
    (8, (2, 4, 8)),
    (9, (2, 4, 8, 16)),
    (1000, tuple(2 ** i for i in range(1, 11))),
])
def test_replay_durations_are_powers_of_two(horizon, durations):
    assert replay_durations(horizon) == durations


def test_schedule_query_is_memoized_and_validated():
    episode = EpisodeState(0, 5, 3, 100, seed=1)
    bits = [episode.schedule_query(6, 2) for _ in range(5)]
    assert len(set(bits)) == 1
    assert EpisodeState(0, 5, 3, 100, seed=1).schedule_query(6, 2) == bits[0]
    with pytest.raises(ValueError):
        episode.schedule_query(5, 2)
    with pytest.raises(ValueError):
        episode.schedule_query(7, 3)


def test_schedule_rate_matches_formula():
    hits = sum(EpisodeState(index, 1, 2, 100, seed=3).schedule_query(5, 4)
               for index in range(100_000))
    # P(B = 1) = 1/√(4·4) = 0.25
    assert abs(hits / 100_000 - 0.25) < 0.005


def test_forced_replay_overrides_schedule():
    episode = EpisodeState(0, 1, 2, 64, seed=0, forced=((40, 64),))
    assert episode.schedule_query(40, 64)
    assert episode.child_duration(40) == 64


def test_pair_selection_is_uniform_over_ordered_pairs():
    k = 3
    policy = AnacondaPolicy(AnacondaConfig(horizon=10, num_arms=k, seed=2))
    counts = np.zeros((k, k))
    draws = 100_000
    for _ in range(draws):
        a, b = policy.select_pair(1)
        counts[a, b] += 1
    expected = draws / k ** 2
    sigma = math.sqrt(draws * (1 / k ** 2) * (1 - 1 / k ** 2))
    assert np.all(np.abs(counts - expected) < 3 * sigma)
    assert abs(np.trace(counts) / draws - 1 / k) < 0.01


def test_single_arm_active_set_plays_it_twice():
    policy = AnacondaPolicy(AnacondaConfig(horizon=10, num_arms=3, seed=0))
    policy.active = (2,)
    assert policy.select_pair(1) == (2, 2)


def test_empty_active_set_raises():
    policy = AnacondaPolicy(AnacondaConfig(horizon=10, num_arms=3, seed=0))
    policy.active = ()
    with pytest.raises(EmptyActiveSet):
        policy.select_pair(1)


def test_one_pair_per_round_and_frame_structure():
    env = scripted_switch_sequence(3, 3000, 2, 0.4)
    policy, outcomes = play(AnacondaConfig(horizon=3000, num_arms=3, elim_constant=0.2, seed=5), env)
    trace = policy.trace
    assert trace.rounds_played == 3000
    assert [o.t for o in outcomes] == list(range(1, 3001))
    assert trace.episode_starts[0] == 1
    assert all(1 <= o.active_size <= 3 for o in outcomes)
    assert all(o.frame_depth >= 1 for o in outcomes)
    # Episodes never go backwards and start exactly at recorded boundaries.
    episodes = trace.episode[:3000]
    assert np.all(np.diff(episodes) >= 0)
    for index, start in enumerate(trace.episode_starts):
        assert episodes[start - 1] == index

    nodes = {node.node_id: node for node in trace.replay_nodes}
    for node in nodes.values():
        if node.parent_id is None:
            assert node.duration == 3001 - node.start
        else:
            parent = nodes[node.parent_id]
            assert parent.start < node.start and parent.episode == node.episode
            assert node.duration in replay_durations(3000)
        assert node.end is not None and node.end > node.start


def test_eliminations_carry_valid_witnesses():
    env = scripted_switch_sequence(4, 300, 1, 0.45)
    config = AnacondaConfig(horizon=300, num_arms=4, elim_constant=0.05, seed=9)
    policy, _ = play(config, env)
    assert policy.trace.eliminations
    starts = {node.node_id: node.start for node in policy.trace.replay_nodes}
    for record in policy.trace.eliminations:
        witness = record.witness
        assert witness.s2 <= record.round
        assert witness.s1 >= starts[record.frame_id]
        assert witness_holds(policy.store, record.arm, witness, 300, 0.05)


def test_restart_begins_with_all_arms_good():
    env = scripted_switch_sequence(2, 4000, 1, 0.5)
    policy, outcomes = play(AnacondaConfig(horizon=4000, num_arms=2, elim_constant=0.1, seed=1), env)
    starts = policy.trace.episode_starts
    assert len(starts) >= 2
    for start in starts[1:]:
        assert outcomes[start - 1].frame_depth == 1
        assert outcomes[start - 1].active_size == 2


def test_runs_are_deterministic(tmp_path):
    env = scripted_switch_sequence(3, 1500, 2, 0.4)
    config = AnacondaConfig(horizon=1500, num_arms=3, elim_constant=0.3, seed=21)
    first, second = run(config, env), run(config, env)
    assert np.array_equal(first.pairs, second.pairs)
    write_trace_csv(first, tmp_path / "a.csv")
    write_trace_csv(second, tmp_path / "b.csv")
    write_trace_json(first, tmp_path / "a.json")
    write_trace_json(second, tmp_path / "b.json")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    header = (tmp_path / "a.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "t,a,b,o,active_size,frame_depth,episode"


def test_run_rejects_mismatched_environment():
    env = stationary_sequence(with_condorcet_winner(2, 0, 0.2), 50)
    with pytest.raises(ValueError):
        run(AnacondaConfig(horizon=60, num_arms=2), env)


def test_replay_tree_can_be_disabled():
    env = stationary_sequence(with_condorcet_winner(2, 0, 0.2), 200)
    trace = run(AnacondaConfig(horizon=200, num_arms=2, log_replay_tree=False), env)
    assert trace.replay_nodes == []
    assert trace.rounds_played == 200


@pytest.mark.slow
def test_winner_is_never_evicted_on_stationary_instance():
    env = stationary_sequence(with_condorcet_winner(2, 0, 0.4), 5000)
    kept = 0
    for seed in range(100):
        trace = run(AnacondaConfig(horizon=5000, num_arms=2, elim_constant=1.0, seed=seed), env)
        if not any(r.source == "good" and r.arm == 0 for r in trace.eliminations):
            kept += 1
    assert kept >= 95


def test_policy_logs_to_named_logger():
    policy = AnacondaPolicy(AnacondaConfig(horizon=10, num_arms=3, seed=0))
    assert policy.logger.name == "Anaconda_Log"
    assert policy.store.logger.name == "EstimateStore_Log"
