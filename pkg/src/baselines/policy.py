from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from anaconda.trace import PolicyTrace


# Spawn-key labels of the independent random streams derived from one run seed.
STREAM_LABELS = {"environment": 0, "pairs": 1, "schedule": 2}


def rng_stream(seed, label, *keys):
    """
    Independent numpy Generator for (seed, label, *keys).

    Changing how many draws one stream makes never perturbs another stream.
    """
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(STREAM_LABELS[label], *keys)))


@dataclass(frozen=True)
class RoundOutcome:
    t: int
    first: int
    second: int
    outcome: int
    active_size: int
    frame_depth: int
    episode: int


class Policy(ABC):
    """
    A dueling policy: one ordered pair per round, then the observed outcome.

    Subclasses implement select_pair/observe; step() plays one full round against an
    environment and appends it to `trace`.

    Attributes:
        num_arms (int): K.
        horizon (int): T.
        seed (int): Run seed all internal randomness derives from.
        next_round (int): 1-based round the policy plays next.
        trace (PolicyTrace): Per-round log plus eliminations and episode starts.
    """

    name = "policy"

    def __init__(self, num_arms, horizon, seed):
        if num_arms < 2:
            raise ValueError(f"num_arms must be at least 2, got {num_arms}")
        if horizon < 2:
            raise ValueError(f"horizon must be at least 2, got {horizon}")
        self.num_arms = num_arms
        self.horizon = horizon
        self.seed = seed
        self.next_round = 1
        self.trace = PolicyTrace(num_arms, horizon)

    @abstractmethod
    def select_pair(self, t):
        """Returns the ordered pair (a_t, b_t) for round t."""

    @abstractmethod
    def observe(self, t, outcome):
        """Receives o_t(a_t, b_t) for the pair returned by select_pair(t)."""

    @property
    def active_size(self):
        return self.num_arms

    @property
    def frame_depth(self):
        return 1

    @property
    def episode(self):
        return 0

    def step(self, env, rng):
        """Plays round `next_round` against `env`, sampling the outcome from `rng`."""
        t = self.next_round
        if t > self.horizon:
            raise RuntimeError(f"{self.name}: horizon {self.horizon} already exhausted")
        first, second = self.select_pair(t)
        active_size, depth, episode = self.active_size, self.frame_depth, self.episode
        outcome = env.sample_outcome(t, first, second, rng)
        self.observe(t, outcome)
        self.trace.add_round(t, first, second, outcome, active_size, depth, episode)
        self.next_round = t + 1
        return RoundOutcome(t, first, second, outcome, active_size, depth, episode)
