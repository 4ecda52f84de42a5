import logging

from anaconda.trace import EliminationRecord
from baselines.policy import Policy, rng_stream
from estimator.estimate_store import DuelEvent, EstimateStore


class UniformRandomPolicy(Policy):
    """Draws both arms uniformly from all K arms every round."""

    name = "uniform_random"

    def __init__(self, num_arms, horizon, seed):
        super().__init__(num_arms, horizon, seed)
        self._pair_rng = rng_stream(seed, "pairs")

    def select_pair(self, t):
        first, second = self._pair_rng.integers(self.num_arms, size=2)
        return int(first), int(second)

    def observe(self, t, outcome):
        return None


class RestartingEliminationPolicy(Policy):
    """
    Single-frame elimination: pairs are drawn uniformly from the active set, which loses every
    arm that violates the elimination rule on an interval since the last restart.

    The policy restarts with all arms at every round in `restart_rounds` and whenever the active
    set empties.

    Args:
        num_arms (int): K.
        horizon (int): T.
        seed (int): Run seed.
        restart_rounds (iterable): Rounds in [2, T] at which to restart.
        elim_constant (float): C in the elimination threshold.
    """

    name = "restarting_elimination"

    def __init__(self, num_arms, horizon, seed, restart_rounds, elim_constant=1.0):
        super().__init__(num_arms, horizon, seed)
        self.logger = logging.getLogger("Baselines_Log")
        if not elim_constant > 0:
            raise ValueError(f"elim_constant must be positive, got {elim_constant}")
        self.restart_rounds = frozenset(int(t) for t in restart_rounds)
        if any(not 2 <= t <= horizon for t in self.restart_rounds):
            raise ValueError(f"restart rounds must lie in [2, {horizon}]")
        self.elim_constant = elim_constant
        self.store = EstimateStore(num_arms)
        self._pair_rng = rng_stream(seed, "pairs")
        self._episode = -1
        self._restart(1)

    @property
    def active_size(self):
        return len(self.active)

    @property
    def episode(self):
        return self._episode

    def _restart(self, t):
        self._episode += 1
        self.window_start = t
        self.checked_through = t - 1
        self.active = tuple(range(self.num_arms))
        self.trace.add_episode_start(t)
        self.logger.debug(f"{self.name}: restart {self._episode} at round {t}")

    def select_pair(self, t):
        first, second = self._pair_rng.integers(len(self.active), size=2)
        self._pending = (self.active[first], self.active[second])
        return self._pending

    def observe(self, t, outcome):
        first, second = self._pending
        self.store.record(DuelEvent(t, first, second, outcome, len(self.active)))
        members = set(self.active)
        for s2 in range(self.checked_through + 1, t + 1):
            found = self.store.violation_at(s2, self.window_start, members, self.horizon,
                                            self.elim_constant)
            if found is not None:
                arm, witness = found
                members.discard(arm)
                self.trace.add_elimination(EliminationRecord(t, arm, "active", witness, self._episode))
        self.checked_through = t
        self.active = tuple(sorted(members))
        if t < self.horizon and (t + 1 in self.restart_rounds or not self.active):
            self._restart(t + 1)


class OracleRestartPolicy(RestartingEliminationPolicy):
    """Restarts exactly at the true Condorcet winner switch rounds."""

    name = "oracle_restart"

    def __init__(self, num_arms, horizon, seed, switch_rounds, elim_constant=1.0):
        super().__init__(num_arms, horizon, seed, switch_rounds, elim_constant)


def fixed_restart_rounds(horizon, num_restarts):
    """Restarts every ⌈T/(n + 1)⌉ rounds: 1 + i·⌈T/(n + 1)⌉ for i = 1..n, capped at T."""
    if num_restarts < 0:
        raise ValueError(f"num_restarts must be non-negative, got {num_restarts}")
    period = -(-horizon // (num_restarts + 1))
    return [1 + i * period for i in range(1, num_restarts + 1) if 1 + i * period <= horizon]


class FixedBudgetRestartPolicy(RestartingEliminationPolicy):
    """Restarts a fixed number of times at equally spaced rounds, blind to the environment."""

    name = "fixed_budget_restart"

    def __init__(self, num_arms, horizon, seed, num_restarts, elim_constant=1.0):
        super().__init__(num_arms, horizon, seed, fixed_restart_rounds(horizon, num_restarts),
                         elim_constant)
        self.num_restarts = num_restarts


def uniform_random(num_arms, horizon, seed):
    return UniformRandomPolicy(num_arms, horizon, seed)


def oracle_restart(num_arms, horizon, seed, switch_rounds, elim_constant=1.0):
    return OracleRestartPolicy(num_arms, horizon, seed, switch_rounds, elim_constant)


def fixed_budget_restart(num_arms, horizon, seed, num_restarts, elim_constant=1.0):
    return FixedBudgetRestartPolicy(num_arms, horizon, seed, num_restarts, elim_constant)
