import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


TRACE_HEADER = ("t", "a", "b", "o", "active_size", "frame_depth", "episode")


@dataclass(frozen=True)
class EliminationRecord:
    """
    One arm removed from a candidate set.

    Attributes:
        round (int): Last played round when the elimination was decided.
        arm (int): Eliminated arm (0-based).
        source (str): "good" for the episode's A_good, "active" for a frame's A_t.
        witness: estimator.estimate_store.Witness certifying the elimination.
        frame_id (int): Replay frame whose set lost the arm (root frame for "good").
    """
    round: int
    arm: int
    source: str
    witness: object
    frame_id: int

    def to_json(self):
        return {"round": self.round, "arm": self.arm + 1, "source": self.source,
                "frame_id": self.frame_id,
                "witness": {"a_prime": self.witness.a_prime + 1,
                            "s1": self.witness.s1, "s2": self.witness.s2}}


@dataclass
class ReplayNode:
    """A replay frame; `end` is the first round after it finished (None while running)."""
    node_id: int
    parent_id: int | None
    episode: int
    start: int
    duration: int
    end: int | None = None


class PolicyTrace:
    """
    Per-round log of a policy run plus its eliminations, episode starts and replay tree.

    Rounds are appended strictly in order, exactly one pair per round.
    """

    def __init__(self, num_arms, horizon):
        self.num_arms = num_arms
        self.horizon = horizon
        self.rounds_played = 0
        self.first = np.zeros(horizon, dtype=np.int32)
        self.second = np.zeros(horizon, dtype=np.int32)
        self.outcome = np.zeros(horizon, dtype=np.int8)
        self.active_size = np.zeros(horizon, dtype=np.int32)
        self.frame_depth = np.zeros(horizon, dtype=np.int32)
        self.episode = np.zeros(horizon, dtype=np.int32)
        self.eliminations = []
        self.episode_starts = []
        self.replay_nodes = []

    def add_round(self, t, first, second, outcome, active_size, frame_depth, episode):
        if t != self.rounds_played + 1:
            raise ValueError(f"round {t} appended after round {self.rounds_played}")
        i = t - 1
        self.first[i] = first
        self.second[i] = second
        self.outcome[i] = outcome
        self.active_size[i] = active_size
        self.frame_depth[i] = frame_depth
        self.episode[i] = episode
        self.rounds_played = t

    def add_elimination(self, record):
        self.eliminations.append(record)

    def add_episode_start(self, t):
        self.episode_starts.append(t)

    def add_replay_node(self, node):
        self.replay_nodes.append(node)
        return node

    @property
    def pairs(self):
        n = self.rounds_played
        return np.column_stack((self.first[:n], self.second[:n]))

    def to_json(self):
        return {
            "num_arms": self.num_arms,
            "horizon": self.horizon,
            "rounds_played": self.rounds_played,
            "episode_starts": list(self.episode_starts),
            "eliminations": [record.to_json() for record in self.eliminations],
            "replay_tree": [asdict(node) for node in self.replay_nodes],
        }


def write_trace_csv(trace, path):
    """One row per round: t, a, b, o, active_size, frame_depth, episode (1-based arms)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for i in range(trace.rounds_played):
            writer.writerow((i + 1, int(trace.first[i]) + 1, int(trace.second[i]) + 1,
                             int(trace.outcome[i]), int(trace.active_size[i]),
                             int(trace.frame_depth[i]), int(trace.episode[i])))


def write_trace_json(trace, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(trace.to_json(), f, indent=2)
