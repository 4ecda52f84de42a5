import logging
import math
from dataclasses import dataclass

import numpy as np

from measures.nonstationarity import first_crossings, significant_cw_switches


log = logging.getLogger("Measures_Log")


@dataclass(frozen=True)
class Segment:
    """Rounds [start, end) of one segment; `is_bad` marks segments that crossed the threshold."""
    start: int
    end: int
    is_bad: bool

    @property
    def length(self):
        return self.end - self.start


@dataclass(frozen=True)
class SafeArm:
    """
    Last safe arm of the significant phase [phase_start, phase_end).

    Attributes:
        crossing_round (int or None): Round at which `arm` crossed the significance threshold,
                                      None when it never did (incomplete final phase).
    """
    phase_start: int
    phase_end: int
    arm: int
    crossing_round: int | None


def cw_phases(seq):
    """Phases [τ_i, τ_{i+1}) of constant Condorcet winner; the last phase ends at T + 1."""
    starts = [1] + list(seq.switch_rounds)
    ends = starts[1:] + [seq.horizon + 1]
    return list(zip(starts, ends))


def bad_segments(seq, t_start, a, c3):
    """
    Splits every Condorcet-winner phase intersecting [t_start, T] into segments for arm `a`.

    Inside a phase with winner a_i^*, segment j starts at s_j and the next boundary s_{j+1} is
    the smallest round in (s_j, phase end) with
    Σ_{t=s_j}^{s_{j+1}} δ_t(a_i^*, a) > c3·log(T)·K·√(s_{j+1} − s_j).
    When no such round exists the phase closes with a non-bad segment ending at the phase end.

    Returns:
        list[Segment]: Segments tiling [t_start, T + 1) in order.
    """
    if c3 <= 0:
        raise ValueError(f"c3 must be positive, got {c3}")
    if not 1 <= t_start < seq.horizon:
        raise ValueError(f"t_start must lie in [1, {seq.horizon}), got {t_start}")

    scale = c3 * math.log(seq.horizon) * seq.num_arms
    regret = seq.winner_gaps()[:, a]
    segments = []
    for phase_start, phase_end in cw_phases(seq):
        if phase_end <= t_start:
            continue
        start = max(phase_start, t_start)
        while True:
            crossing = _next_bad_boundary(regret, start, phase_end, scale)
            if crossing is None:
                segments.append(Segment(start, phase_end, False))
                break
            segments.append(Segment(start, crossing, True))
            start = crossing
    return segments


def _next_bad_boundary(regret, start, phase_end, scale):
    candidates = np.arange(start + 1, phase_end)
    if candidates.size == 0:
        return None
    sums = np.cumsum(regret[start - 1:phase_end - 1])[1:]
    crossed = np.flatnonzero(sums > scale * np.sqrt(candidates - start))
    if crossed.size == 0:
        return None
    return int(candidates[crossed[0]])


def bad_round(seq, t_start, a, c3, c4):
    """
    Smallest s > t_start with Σ_{bad segments ending before s} √(length) > c4·log(T)·√(s − t_start),
    or None when no round up to T qualifies.
    """
    if c4 <= 0:
        raise ValueError(f"c4 must be positive, got {c4}")
    scale = c4 * math.log(seq.horizon)
    accumulated = 0.0
    for segment in bad_segments(seq, t_start, a, c3):
        if not segment.is_bad:
            continue
        accumulated += math.sqrt(segment.length)
        # The left side only grows when a bad segment completes, the right side grows with s.
        candidate = segment.end + 1
        if candidate > seq.horizon:
            break
        if accumulated > scale * math.sqrt(candidate - t_start):
            return candidate
    return None


def last_safe_arms(seq):
    """
    For every significant phase, the arm whose first significance crossing comes last.

    Arms that never cross beat every arm that does; ties go to the smallest index.
    """
    gaps = seq.winner_gaps()
    starts = [1] + list(significant_cw_switches(seq))
    ends = starts[1:] + [seq.horizon + 1]
    safe_arms = []
    for phase_start, phase_end in zip(starts, ends):
        last_s2 = min(phase_end - 1, seq.horizon - 2)
        crossings = first_crossings(gaps, phase_start, last_s2)
        keys = [math.inf if c is None else c for c in crossings]
        arm = int(np.argmax(keys))
        safe_arms.append(SafeArm(phase_start, phase_end, arm, crossings[arm]))
    return safe_arms
