import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


EVENT_LOG_HEADER = ("t", "a", "b", "o", "active_size")


class EstimatorError(Exception):
    pass


class OutOfOrderRound(EstimatorError):
    """Raised when an event is recorded for a round that is not after the last recorded one."""

    def __init__(self, round, last_round):
        self.round = round
        self.last_round = last_round
        super().__init__(f"Round {round} recorded after round {last_round}")


class RangeError(EstimatorError):
    """Raised when an interval [s1, s2] is not inside the recorded rounds."""

    def __init__(self, s1, s2, last_round):
        self.s1 = s1
        self.s2 = s2
        self.last_round = last_round
        super().__init__(f"Interval [{s1}, {s2}] is outside the recorded rounds [1, {last_round}]")


@dataclass(frozen=True)
class DuelEvent:
    """
    One played ordered pair.

    Attributes:
        t (int): 1-based round.
        first (int): Arm a_t (0-based).
        second (int): Arm b_t (0-based), may equal `first`.
        outcome (int): 1 when `first` won the duel.
        active_size (int): |A_t| when the pair was drawn.
    """
    t: int
    first: int
    second: int
    outcome: int
    active_size: int

    @property
    def weight(self):
        return self.active_size ** 2 * self.outcome


@dataclass(frozen=True)
class Witness:
    """Interval [s1, s2] on which arm `a_prime` certifies the elimination rule against an arm."""
    a_prime: int
    s1: int
    s2: int


def elim_threshold(length, num_arms, horizon, elim_constant):
    """C·ln(T)·K·√(max(length, K²))."""
    return elim_constant * math.log(horizon) * num_arms * math.sqrt(max(length, num_arms ** 2))


class _PairLog:
    """Growable rounds/prefix-weight arrays for one ordered pair."""

    def __init__(self, capacity=16):
        self.rounds = np.empty(capacity, dtype=np.int64)
        # prefix[i] = total weight of the first i events
        self.prefix = np.zeros(capacity + 1)
        self.size = 0

    def append(self, t, weight):
        if self.size == self.rounds.size:
            self.rounds = np.concatenate((self.rounds, np.empty_like(self.rounds)))
            self.prefix = np.concatenate((self.prefix, np.zeros(self.rounds.size - self.prefix.size + 1)))
        self.rounds[self.size] = t
        self.prefix[self.size + 1] = self.prefix[self.size] + weight
        self.size += 1

    def span(self, s1, s2):
        rounds = self.rounds[:self.size]
        return (int(np.searchsorted(rounds, s1, side="left")),
                int(np.searchsorted(rounds, s2, side="right")))


class EstimateStore:
    """
    Sparse storage of the importance-weighted gap estimates

        δ̂_t(a', a) = |A_t|²·1{a_t = a', b_t = a}·o_t − 1/2.

    Only the played pair of each round is stored; every other pair contributes −1/2 per round,
    which interval sums add back in closed form.

    Attributes:
        num_arms (int): Number of arms K.
        last_round (int): Latest recorded round (0 before the first event).
    """

    def __init__(self, num_arms):
        if num_arms < 2:
            raise ValueError(f"num_arms must be at least 2, got {num_arms}")
        self.logger = logging.getLogger("EstimateStore_Log")
        self.num_arms = num_arms
        self.last_round = 0
        self._events = {}
        self._pairs = [[_PairLog() for _ in range(num_arms)] for _ in range(num_arms)]

    def record(self, event):
        """
        Adds one round's duel.

        Raises:
            OutOfOrderRound: If event.t is not strictly after the last recorded round.
            ValueError: If the event's arms, outcome or active-set size are invalid.
        """
        if event.t <= self.last_round:
            self.logger.error(f"Event for round {event.t} arrived after round {self.last_round}")
            raise OutOfOrderRound(event.t, self.last_round)
        if not (0 <= event.first < self.num_arms and 0 <= event.second < self.num_arms):
            raise ValueError(f"invalid arms ({event.first}, {event.second}) for K={self.num_arms}")
        if not 1 <= event.active_size <= self.num_arms:
            raise ValueError(f"active_size must lie in [1, {self.num_arms}], got {event.active_size}")
        if event.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {event.outcome}")

        self._events[event.t] = event
        self._pairs[event.first][event.second].append(event.t, event.weight)
        self.last_round = event.t

    def event_at(self, t):
        return self._events.get(t)

    def events(self):
        return list(self._events.values())

    def estimate(self, t, a_prime, a):
        event = self.event_at(t)
        if event is not None and event.first == a_prime and event.second == a:
            return event.weight - 0.5
        return -0.5

    def _check_range(self, s1, s2):
        if not 1 <= s1 <= s2 <= self.last_round:
            raise RangeError(s1, s2, self.last_round)

    def interval_sum(self, a_prime, a, s1, s2):
        """Σ_{t=s1}^{s2} δ̂_t(a', a), both endpoints included."""
        self._check_range(s1, s2)
        pair = self._pairs[a_prime][a]
        lo, hi = pair.span(s1, s2)
        return float(pair.prefix[hi] - pair.prefix[lo]) - (s2 - s1 + 1) / 2

    def dense_estimates(self, s1, s2):
        """(s2 − s1 + 1, K, K) array of δ̂_t for t = s1..s2."""
        self._check_range(s1, s2)
        dense = np.full((s2 - s1 + 1, self.num_arms, self.num_arms), -0.5)
        for t in range(s1, s2 + 1):
            event = self._events.get(t)
            if event is not None:
                dense[t - s1, event.first, event.second] += event.weight
        return dense

    def best_window(self, a_prime, a, window_start, s2, horizon, elim_constant):
        """
        Maximises Σ_{t=s1}^{s2} δ̂_t(a', a) − elim_threshold(s2 − s1) over s1 ∈ [window_start, s2].

        Between two events of the pair the statistic strictly increases with s1, so the maximum
        is attained at window_start or at an event round of the pair; only those are scanned.

        Returns:
            tuple: (statistic, s1) of the best candidate.
        """
        self._check_range(window_start, s2)
        pair = self._pairs[a_prime][a]
        lo, hi = pair.span(window_start, s2)
        starts = np.concatenate(([window_start], pair.rounds[lo:hi]))
        before = np.concatenate(([pair.prefix[lo]], pair.prefix[lo:hi]))
        sums = (pair.prefix[hi] - before) - (s2 - starts + 1) / 2
        k = self.num_arms
        thresholds = (elim_constant * math.log(horizon) * k
                      * np.sqrt(np.maximum(s2 - starts, k * k)))
        statistic = sums - thresholds
        best = int(np.argmax(statistic))
        return float(statistic[best]), int(starts[best])

    def violation_at(self, s2, window_start, candidates, horizon, elim_constant):
        """
        Checks whether round s2 completes a new violation of the elimination rule.

        A violation ending at s2 that did not already end at s2 − 1 needs a positive-weight
        event of the violating pair at s2, so only the pair played at s2 is examined.

        Returns:
            tuple or None: (arm, Witness) for the played second arm if it is in `candidates`
                           and violates the rule on some [s1, s2] ⊆ [window_start, s2].
        """
        event = self._events.get(s2)
        if event is None or event.weight == 0 or event.second not in candidates:
            return None
        statistic, s1 = self.best_window(event.first, event.second, window_start, s2,
                                         horizon, elim_constant)
        if statistic > 0:
            return event.second, Witness(event.first, s1, s2)
        return None


def find_violation(store, a, window_start, now, horizon, elim_constant):
    """
    Searches [window_start, now) for a witness (a', s1, s2) with
    interval_sum(a', a, s1, s2) > elim_threshold(s2 − s1, K, T, C).

    The earliest completing interval is reported; the decision equals an exhaustive scan over
    all window_start ≤ s1 ≤ s2 < now.

    Returns:
        Witness or None
    """
    if window_start >= now:
        raise ValueError(f"window_start {window_start} must precede now {now}")
    last = min(now - 1, store.last_round)
    if last < window_start:
        return None
    for s2 in range(window_start, last + 1):
        found = store.violation_at(s2, window_start, (a,), horizon, elim_constant)
        if found is not None:
            return found[1]
    return None


def witness_holds(store, a, witness, horizon, elim_constant):
    """Recomputes a recorded witness against the store."""
    total = store.interval_sum(witness.a_prime, a, witness.s1, witness.s2)
    return total > elim_threshold(witness.s2 - witness.s1, store.num_arms, horizon, elim_constant)


def write_event_log(store, path):
    """Dumps the events as CSV (t, a, b, o, active_size) with 1-based arms."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(EVENT_LOG_HEADER)
        for event in store.events():
            writer.writerow((event.t, event.first + 1, event.second + 1,
                             event.outcome, event.active_size))


def read_event_log(path, num_arms):
    """Rebuilds an EstimateStore from a CSV written by write_event_log."""
    store = EstimateStore(num_arms)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != EVENT_LOG_HEADER:
            raise ValueError(f"{path}: expected header {','.join(EVENT_LOG_HEADER)}")
        for row in reader:
            store.record(DuelEvent(t=int(row["t"]),
                                   first=int(row["a"]) - 1,
                                   second=int(row["b"]) - 1,
                                   outcome=int(row["o"]),
                                   active_size=int(row["active_size"])))
    return store
