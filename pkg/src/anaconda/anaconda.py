import logging
import math
from dataclasses import dataclass, field

from anaconda.trace import EliminationRecord, ReplayNode
from baselines.policy import Policy, rng_stream
from estimator.estimate_store import DuelEvent, EstimateStore


class EmptyActiveSet(RuntimeError):
    """Raised when a pair must be drawn from an empty active set."""

    def __init__(self, round, frame_id):
        self.round = round
        self.frame_id = frame_id
        super().__init__(f"Active set of frame {frame_id} is empty at round {round}")


def replay_durations(horizon):
    """Candidate replay lengths m ∈ {2, 4, ..., 2^⌈log₂ T⌉}."""
    top = max(1, (horizon - 1).bit_length())
    return tuple(2 ** i for i in range(1, top + 1))


@dataclass(frozen=True)
class AnacondaConfig:
    """
    Parameters of one ANACONDA run.

    Attributes:
        horizon (int): T ≥ 2.
        num_arms (int): K ≥ 2.
        elim_constant (float): C > 0 in the elimination threshold.
        seed (int): Run seed; pair selection and the replay schedule derive independent streams.
        log_replay_tree (bool): Record every replay frame in the trace.
        forced_replays (tuple): (s, m) pairs forcing B_{s,m} = 1 in the first episode.
    """
    horizon: int
    num_arms: int
    elim_constant: float = 1.0
    seed: int = 0
    log_replay_tree: bool = True
    forced_replays: tuple = ()

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError(f"horizon must be at least 2, got {self.horizon}")
        if self.num_arms < 2:
            raise ValueError(f"num_arms must be at least 2, got {self.num_arms}")
        if not self.elim_constant > 0:
            raise ValueError(f"elim_constant must be positive, got {self.elim_constant}")
        durations = replay_durations(self.horizon)
        for s, m in self.forced_replays:
            if not 2 <= s <= self.horizon or m not in durations:
                raise ValueError(f"forced replay ({s}, {m}) needs 2 ≤ s ≤ {self.horizon} "
                                 f"and m in {durations}")


class EpisodeState:
    """
    One episode ℓ: its start t_ℓ, the candidate set A_good and the replay schedule.

    B_{s,m} ~ Bernoulli(1/√(m·(s − t_ℓ))) is drawn lazily, one row over all m per round s, from a
    stream keyed by (seed, ℓ, s), so every query of the same (s, m) returns the same value.
    """

    def __init__(self, index, start, num_arms, horizon, seed, forced=()):
        self.index = index
        self.start = start
        self.good = set(range(num_arms))
        self.good_checked_through = start - 1
        self.seed = seed
        self.durations = replay_durations(horizon)
        self._forced = set(forced)
        self._rows = {}

    def _row(self, s):
        row = self._rows.get(s)
        if row is None:
            draws = rng_stream(self.seed, "schedule", self.index, s).random(len(self.durations))
            elapsed = s - self.start
            row = tuple(bool(u < 1.0 / math.sqrt(m * elapsed))
                        for u, m in zip(draws, self.durations))
            self._rows[s] = row
        return row

    def schedule_query(self, s, m):
        """B_{s,m} for a round s after the episode start."""
        if s <= self.start:
            raise ValueError(f"schedule round {s} must follow the episode start {self.start}")
        if m not in self.durations:
            raise ValueError(f"replay length {m} not in {self.durations}")
        if (s, m) in self._forced:
            return True
        return self._row(s)[self.durations.index(m)]

    def child_duration(self, s):
        """Largest m with B_{s,m} = 1, or None."""
        for m in reversed(self.durations):
            if self.schedule_query(s, m):
                return m
        return None


@dataclass
class ReplayFrame:
    """
    One level of the replay recursion.

    Attributes:
        frame_id (int): Node id in the replay tree.
        t_start (int): First round of the frame.
        m0 (int): Scheduled length; the frame runs while t ≤ t_start + m0.
        local (tuple): A_local, the active set saved before the frame last yielded to a child.
        checked_through (int): Last s2 already scanned for this frame's eliminations.
    """
    frame_id: int
    t_start: int
    m0: int
    local: tuple = ()
    checked_through: int = 0
    node: ReplayNode | None = field(default=None, repr=False)


class AnacondaPolicy(Policy):
    """
    Adaptive non-stationary dueling with randomly scheduled replays.

    The recursion of replays is unrolled into an explicit frame stack so that the policy can be
    driven one round at a time. Within an episode the innermost frame draws two arms uniformly,
    with replacement, from its active set. After every round arms are eliminated from the
    episode's A_good over [t_ℓ, t); after a frame yields control back (a child ended or the round
    finished without a new child) its active set is rebuilt from A_local minus every arm that
    violates the elimination rule on some interval inside [t_start, t).

    Args:
        config (AnacondaConfig): Run parameters.
    """

    name = "anaconda"

    def __init__(self, config):
        super().__init__(config.num_arms, config.horizon, config.seed)
        self.logger = logging.getLogger("Anaconda_Log")
        self.config = config
        self.store = EstimateStore(config.num_arms)
        self.frames = []
        self.active = ()
        self.episode_state = None
        self._pair_rng = rng_stream(config.seed, "pairs")
        self._pending = None
        self._next_frame_id = 0
        self._start_episode(1)

    @property
    def active_size(self):
        return len(self.active)

    @property
    def frame_depth(self):
        return len(self.frames)

    @property
    def episode(self):
        return self.episode_state.index

    def select_pair(self, t):
        if t != self.next_round:
            raise ValueError(f"expected round {self.next_round}, got {t}")
        if not self.active:
            frame_id = self.frames[-1].frame_id if self.frames else -1
            self.logger.error(f"Round {t}: no arm left to play in frame {frame_id}")
            raise EmptyActiveSet(t, frame_id)
        first, second = self._pair_rng.integers(len(self.active), size=2)
        self._pending = (self.active[first], self.active[second])
        return self._pending

    def observe(self, t, outcome):
        if self._pending is None:
            raise RuntimeError(f"observe({t}) called before select_pair({t})")
        first, second = self._pending
        self._pending = None
        self.store.record(DuelEvent(t, first, second, outcome, len(self.active)))

        self._eliminate_good(t, t - 1)
        self.frames[-1].local = self.active
        t_next = t + 1
        if t_next <= self.horizon and self.episode_state.good:
            m = self.episode_state.child_duration(t_next)
            if m is not None:
                self._push_frame(t_next, m)
                return
        self._resume(t_next)

    def _start_episode(self, t):
        index = 0 if self.episode_state is None else self.episode_state.index + 1
        forced = self.config.forced_replays if index == 0 else ()
        self.episode_state = EpisodeState(index, t, self.num_arms, self.horizon, self.seed, forced)
        self.trace.add_episode_start(t)
        self.logger.info(f"Episode {index} starts at round {t}")
        self._push_frame(t, self.horizon + 1 - t)

    def _push_frame(self, t, m):
        parent = self.frames[-1].node if self.frames else None
        frame_id = self._next_frame_id
        self._next_frame_id += 1
        node = ReplayNode(frame_id, parent.node_id if parent is not None else None,
                          self.episode_state.index, t, m)
        if self.config.log_replay_tree:
            self.trace.add_replay_node(node)
        if self.frames:
            self.logger.debug(f"Replay {frame_id} of length {m} starts at round {t} (depth {len(self.frames) + 1})")
        self.frames.append(ReplayFrame(frame_id, t, m, checked_through=t - 1, node=node))
        self.active = tuple(range(self.num_arms))

    def _frame_continues(self, frame, t):
        return t <= self.horizon and t <= frame.t_start + frame.m0 and bool(self.episode_state.good)

    def _resume(self, t):
        """Rebuilds the innermost frame's active set at round t, unwinding finished frames."""
        while self.frames:
            frame = self.frames[-1]
            self.active = self._eliminate_active(frame, t - 1)
            if self._frame_continues(frame, t) and not self.active:
                # The A_good check of round t scans the same rounds; with this frame's set empty
                # it also empties A_good.
                self._eliminate_good(t - 1, t - 1)
            if self._frame_continues(frame, t):
                return
            frame.node.end = t
            self.frames.pop()
        if t <= self.horizon:
            self._start_episode(t)

    def _eliminate_good(self, now, upto):
        state = self.episode_state
        for s2 in range(state.good_checked_through + 1, upto + 1):
            if not state.good:
                break
            found = self.store.violation_at(s2, state.start, state.good, self.horizon,
                                            self.config.elim_constant)
            if found is not None:
                arm, witness = found
                state.good.discard(arm)
                self._record_elimination(now, arm, "good", witness, self.frames[0].frame_id)
        state.good_checked_through = max(state.good_checked_through, upto)
        if not state.good:
            self.logger.info(f"Round {now}: A_good of episode {state.index} is empty")

    def _eliminate_active(self, frame, upto):
        members = set(frame.local)
        for s2 in range(frame.checked_through + 1, upto + 1):
            found = self.store.violation_at(s2, frame.t_start, members, self.horizon,
                                            self.config.elim_constant)
            if found is not None:
                arm, witness = found
                members.discard(arm)
                self._record_elimination(upto, arm, "active", witness, frame.frame_id)
        frame.checked_through = max(frame.checked_through, upto)
        return tuple(sorted(members))

    def _record_elimination(self, now, arm, source, witness, frame_id):
        self.logger.debug(f"Round {now}: arm {arm} leaves {source} set of frame {frame_id} "
                          f"(beaten by {witness.a_prime} on [{witness.s1}, {witness.s2}])")
        self.trace.add_elimination(EliminationRecord(now, arm, source, witness, frame_id))


def run(config, env):
    """
    Plays ANACONDA for config.horizon rounds against a preference sequence.

    Outcomes are sampled from the environment stream of config.seed, so runs with equal configs
    and sequences are identical.

    Returns:
        PolicyTrace
    """
    if env.horizon != config.horizon or env.num_arms != config.num_arms:
        raise ValueError(f"environment is T={env.horizon}, K={env.num_arms} but the config asks "
                         f"for T={config.horizon}, K={config.num_arms}")
    policy = AnacondaPolicy(config)
    env_rng = rng_stream(config.seed, "environment")
    for _ in range(config.horizon):
        policy.step(env, env_rng)
    return policy.trace
