import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from prefs.preference_matrix import (MATRIX_TOLERANCE, NoCondorcetWinner, PreferenceError,
                                     PreferenceMatrix, validate_matrix_array,
                                     with_condorcet_winner)


log = logging.getLogger("Preferences_Log")


@dataclass(frozen=True)
class LinearLink:
    """σ(x) = 0.5 + scale·x/2; only valid while |scale·Δu| ≤ 1."""
    scale: float = 1.0

    def __call__(self, x):
        return 0.5 + self.scale * np.asarray(x) / 2.0

    def check_domain(self, differences):
        worst = float(np.abs(self.scale * differences).max(initial=0.0))
        if worst > 1.0 + MATRIX_TOLERANCE:
            log.error(f"Linear link leaves [0, 1]: |scale·Δu| reaches {worst}")
            raise PreferenceError(
                f"linear link requires |scale·Δu| ≤ 1, got {worst:.6g}")


@dataclass(frozen=True)
class LogisticLink:
    """σ(x) = 1 / (1 + exp(−scale·x))."""
    scale: float = 1.0

    def __call__(self, x):
        return expit(self.scale * np.asarray(x))

    def check_domain(self, differences):
        return None


def make_link(name, scale=1.0):
    if scale <= 0:
        raise PreferenceError(f"link scale must be positive, got {scale}")
    if name == "linear":
        return LinearLink(scale)
    if name == "logistic":
        return LogisticLink(scale)
    raise PreferenceError(f"unknown link '{name}' (expected 'linear' or 'logistic')")


class UtilityModel:
    """
    Utility-based preferences: P_t(a, b) = σ(u_t(a) − u_t(b)) for a symmetric monotone link σ.

    Args:
        utilities (array-like): (T, K) per-round per-arm utilities (a single (K,) row is
                                treated as one round).
        link (LinearLink or LogisticLink): The link function.
    """

    def __init__(self, utilities, link=None):
        utilities = np.atleast_2d(np.asarray(utilities, dtype=float))
        if utilities.shape[1] < 2:
            raise PreferenceError("a utility model needs at least 2 arms")
        self.utilities = utilities
        self.link = link if link is not None else LinearLink()
        differences = utilities[:, :, None] - utilities[:, None, :]
        self.link.check_domain(differences)
        self._differences = differences

    def matrices(self):
        """Returns the (T, K, K) array of preference matrices, complement-exact."""
        raw = np.clip(self.link(self._differences), 0.0, 1.0)
        k = raw.shape[-1]
        upper = np.triu(np.ones((k, k), dtype=bool), 1)
        p = np.where(upper, raw, 0.0)
        p = p + np.where(upper, 1.0 - raw, 0.0).transpose(0, 2, 1)
        p[:, np.arange(k), np.arange(k)] = 0.5
        return p

    def matrix(self, index=0):
        return PreferenceMatrix(self.matrices()[index])


class PreferenceSequence:
    """
    Immutable sequence P_1, ..., P_T of preference matrices with a unique Condorcet winner in
    every round. Rounds are 1-based, arms 0-based.

    Attributes:
        horizon (int): Number of rounds T.
        num_arms (int): Number of arms K.
        p (np.ndarray): Read-only (T, K, K) array; p[t - 1] is P_t.
        winners (np.ndarray): Read-only (T,) array of Condorcet winners.
        generator (str): Name of the generator that produced the sequence.
        switch_rounds (tuple): Rounds t ≥ 2 whose Condorcet winner differs from round t − 1.
    """

    def __init__(self, p, generator="explicit", known_switch_rounds=None):
        p = np.array(p, dtype=float)
        if p.ndim != 3 or p.shape[0] < 1:
            raise PreferenceError(f"expected a (T, K, K) array, got shape {p.shape}")
        self._validate(p)
        beats = p > 0.5
        k = p.shape[1]
        beats[:, np.arange(k), np.arange(k)] = True
        is_winner = beats.all(axis=2)
        has_winner = is_winner.any(axis=1)
        if not has_winner.all():
            bad_round = int(np.flatnonzero(~has_winner)[0]) + 1
            log.error(f"Sequence '{generator}' rejected: no Condorcet winner in round {bad_round}")
            raise NoCondorcetWinner(round=bad_round)

        winners = is_winner.argmax(axis=1)
        p.setflags(write=False)
        winners.setflags(write=False)
        self.p = p
        self.winners = winners
        self.horizon = p.shape[0]
        self.num_arms = k
        self.generator = generator
        self.switch_rounds = tuple(int(t) + 2 for t in np.flatnonzero(winners[1:] != winners[:-1]))

        if known_switch_rounds is not None and tuple(known_switch_rounds) != self.switch_rounds:
            log.error(f"Generator metadata {known_switch_rounds} disagrees with the winner path")
            raise PreferenceError(
                f"scripted switch rounds {tuple(known_switch_rounds)} do not match the "
                f"Condorcet winner changes {self.switch_rounds}")
        self._winner_gaps = None

    @staticmethod
    def _validate(p):
        k = p.shape[1]
        if k < 2 or p.shape[2] != k:
            raise PreferenceError(f"rounds must hold square matrices of at least 2 arms, got {p.shape[1:]}")
        diagonal = np.arange(k)
        broken = ~np.isfinite(p).all(axis=(1, 2))
        with np.errstate(invalid="ignore"):
            broken |= ((p < -MATRIX_TOLERANCE) | (p > 1 + MATRIX_TOLERANCE)).any(axis=(1, 2))
            broken |= (np.abs(p + p.transpose(0, 2, 1) - 1.0) > MATRIX_TOLERANCE).any(axis=(1, 2))
            broken |= (np.abs(p[:, diagonal, diagonal] - 0.5) > MATRIX_TOLERANCE).any(axis=1)
        if broken.any():
            index = int(np.flatnonzero(broken)[0])
            # Re-run the scalar check for its specific message.
            validate_matrix_array(p[index], context=f"round {index + 1}")

    def matrix(self, t):
        return PreferenceMatrix(self.p[t - 1])

    def winner(self, t):
        return int(self.winners[t - 1])

    def winner_gaps(self):
        """(T, K) array with entry [t − 1, a] = δ_t(a_t^*, a)."""
        if self._winner_gaps is None:
            rounds = np.arange(self.horizon)
            gaps = self.p[rounds, self.winners, :] - 0.5
            gaps.setflags(write=False)
            self._winner_gaps = gaps
        return self._winner_gaps

    def sample_outcome(self, t, a, b, rng):
        """o_t(a, b) ~ Bernoulli(P_t(a, b)) using the caller-owned Generator."""
        return int(rng.random() < self.p[t - 1, a, b])

    def describe(self):
        return {"generator": self.generator,
                "horizon": self.horizon,
                "num_arms": self.num_arms,
                "switch_rounds": list(self.switch_rounds)}

    def __repr__(self):
        return (f"PreferenceSequence(generator={self.generator!r}, horizon={self.horizon}, "
                f"num_arms={self.num_arms}, switches={len(self.switch_rounds)})")


def _as_array(matrix):
    if isinstance(matrix, PreferenceMatrix):
        return matrix.p
    return PreferenceMatrix(matrix).p


def explicit_sequence(matrices):
    """One matrix per round, in order."""
    return PreferenceSequence(np.stack([_as_array(m) for m in matrices]), generator="explicit")


def stationary_sequence(matrix, horizon):
    return PreferenceSequence(np.repeat(_as_array(matrix)[None, :, :], horizon, axis=0),
                              generator="stationary", known_switch_rounds=())


def periodic_sequence(matrices, horizon):
    """P_t = matrices[(t − 1) mod n]."""
    base = np.stack([_as_array(m) for m in matrices])
    index = np.arange(horizon) % base.shape[0]
    return PreferenceSequence(base[index], generator="periodic")


def piecewise_constant_sequence(horizon, segments, generator="piecewise_constant"):
    """
    Builds a sequence that is constant between segment starts.

    Args:
        horizon (int): Number of rounds T.
        segments (list): (start_round, matrix) pairs; the first start must be 1 and starts must
                         strictly increase within [1, T].
    """
    if not segments:
        raise PreferenceError("piecewise constant sequence needs at least one segment")
    starts = [int(start) for start, _ in segments]
    if starts[0] != 1:
        raise PreferenceError(f"the first segment must start at round 1, got {starts[0]}")
    if any(later <= earlier for earlier, later in zip(starts, starts[1:])) or starts[-1] > horizon:
        raise PreferenceError(f"segment starts must increase strictly within [1, {horizon}]: {starts}")

    arrays = [_as_array(matrix) for _, matrix in segments]
    ends = starts[1:] + [horizon + 1]
    lengths = [end - start for start, end in zip(starts, ends)]
    p = np.concatenate([np.repeat(a[None, :, :], n, axis=0) for a, n in zip(arrays, lengths)])

    winners = []
    for array in arrays:
        try:
            winners.append(_winner_of(array))
        except NoCondorcetWinner:
            winners.append(None)
    known = None
    if None not in winners:
        known = tuple(start for start, before, after in zip(starts[1:], winners, winners[1:])
                      if before != after)
    return PreferenceSequence(p, generator=generator, known_switch_rounds=known)


def _winner_of(array):
    beats = array > 0.5
    np.fill_diagonal(beats, True)
    winners = np.flatnonzero(beats.all(axis=1))
    if winners.size == 0:
        raise NoCondorcetWinner()
    return int(winners[0])


def scripted_switch_starts(horizon, num_switches):
    """Equally spaced segment starts: 1 + ⌊i·T/(S + 1)⌋ for i = 0..S."""
    if num_switches < 0:
        raise PreferenceError(f"num_switches must be non-negative, got {num_switches}")
    if horizon < num_switches + 1:
        raise PreferenceError(f"horizon {horizon} too short for {num_switches} switches")
    return [1 + (i * horizon) // (num_switches + 1) for i in range(num_switches + 1)]


def scripted_switch_sequence(k, horizon, num_switches, gap):
    """
    Piecewise constant sequence with `num_switches` equally spaced Condorcet winner switches.
    Segment i is won by arm i mod k with margin `gap`; all other pairs are tied.
    """
    starts = scripted_switch_starts(horizon, num_switches)
    segments = [(start, with_condorcet_winner(k, i % k, gap)) for i, start in enumerate(starts)]
    return piecewise_constant_sequence(horizon, segments, generator="scripted_switches")


def rotating_drift_sequence(k, horizon, num_rotations, gap, ramp_fraction=0.1):
    """
    Utility drift through `num_rotations` + 1 equal phases under a logistic link. In phase i arm a
    holds rank (a − i) mod k; the top two ranks are `gap` apart in preference, and consecutive
    phases are joined by a linear ramp over about `ramp_fraction` of a phase.
    """
    if not 0 < gap < 0.5:
        raise PreferenceError(f"rotating drift needs a gap in (0, 0.5), got {gap}")
    phases = num_rotations + 1
    length = horizon // phases
    if length < 2:
        raise PreferenceError(f"horizon {horizon} too short for {phases} phases")
    # odd ramps keep mirrored rank swaps off integer rounds, so no round is tied
    ramp = 2 * int(ramp_fraction * length / 2) + 1
    ranks = np.arange(k)
    base = -logit(0.5 + gap) * (ranks + 0.01 * np.sqrt(ranks))
    keyframes = []
    for i in range(phases):
        utilities = base[(ranks - i) % k].tolist()
        start = 1 + i * length
        keyframes.append((start, utilities))
        if i < phases - 1:
            keyframes.append((start + length - ramp, utilities))
    return utility_drift_sequence(horizon, keyframes, LogisticLink())


def utility_drift_sequence(horizon, keyframes, link=None):
    """
    Utilities interpolated piecewise-linearly between keyframes, mapped through the link.

    Args:
        horizon (int): Number of rounds T.
        keyframes (list): (round, utilities) pairs with strictly increasing rounds in [1, T];
                          utilities are held constant before the first and after the last keyframe.
        link: LinearLink (default) or LogisticLink.
    """
    if not keyframes:
        raise PreferenceError("utility drift needs at least one keyframe")
    try:
        rounds = np.array([r for r, _ in keyframes], dtype=float)
        values = np.array([u for _, u in keyframes], dtype=float)
    except (TypeError, ValueError) as e:
        raise PreferenceError(f"keyframes must pair a round with a list of utilities ({e})") from e
    if values.ndim != 2 or values.shape[1] < 2:
        raise PreferenceError("keyframe utilities must be lists of at least 2 values of equal length")
    if np.any(np.diff(rounds) <= 0) or rounds[0] < 1 or rounds[-1] > horizon:
        raise PreferenceError(f"keyframe rounds must increase strictly within [1, {horizon}]")

    grid = np.arange(1, horizon + 1, dtype=float)
    utilities = np.column_stack([np.interp(grid, rounds, values[:, arm])
                                 for arm in range(values.shape[1])])
    model = UtilityModel(utilities, link)
    return PreferenceSequence(model.matrices(), generator="utility_drift")


def random_utility_matrix(k, rng, link=None):
    """Matrix from uniform [0, 1] utilities; distinct utilities almost surely."""
    model = UtilityModel(rng.random(k), link)
    return PreferenceMatrix(model.matrices()[0])
