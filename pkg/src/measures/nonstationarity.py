import logging
import math
from dataclasses import asdict, dataclass

import numpy as np


log = logging.getLogger("Measures_Log")


@dataclass(frozen=True)
class MeasureReport:
    """
    The five non-stationarity measures of one preference sequence.

    Attributes:
        pref_switches (int): Rounds whose matrix differs from the previous round's.
        cw_switches (int): Rounds whose Condorcet winner differs from the previous round's.
        sig_switch_rounds (tuple): Rounds at which significant Condorcet winner switches occur.
        total_variation (float): Summed max-entry drift between consecutive matrices.
        cw_variation (float): Summed max drift of the current winner's row.
    """
    pref_switches: int
    cw_switches: int
    sig_switch_rounds: tuple
    total_variation: float
    cw_variation: float

    @property
    def sig_switch_count(self):
        return len(self.sig_switch_rounds)

    def check_orderings(self):
        """Returns the list of violated ordering chains (empty when all hold)."""
        problems = []
        if not self.sig_switch_count <= self.cw_switches <= self.pref_switches:
            problems.append(
                f"expected sig ≤ cw ≤ pref switches, got {self.sig_switch_count}, "
                f"{self.cw_switches}, {self.pref_switches}")
        if self.cw_variation > self.total_variation:
            problems.append(
                f"cw_variation {self.cw_variation} exceeds total_variation {self.total_variation}")
        return problems

    def to_json(self):
        report = asdict(self)
        report["sig_switch_rounds"] = list(self.sig_switch_rounds)
        report["sig_switch_count"] = self.sig_switch_count
        return report


def count_pref_switches(seq):
    """Σ_{t=2..T} 1{P_t ≠ P_{t−1}} with exact equality."""
    changed = np.any(seq.p[1:] != seq.p[:-1], axis=(1, 2))
    return int(changed.sum())


def count_cw_switches(seq):
    """Σ_{t=2..T} 1{a_t^* ≠ a_{t−1}^*}."""
    return int(np.count_nonzero(seq.winners[1:] != seq.winners[:-1]))


def total_variation(seq):
    """Σ_{t=2..T} max_{a,b} |P_t(a, b) − P_{t−1}(a, b)|."""
    if seq.horizon < 2:
        return 0.0
    drift = np.abs(seq.p[1:] - seq.p[:-1]).max(axis=(1, 2))
    return float(math.fsum(drift))


def cw_variation(seq):
    """Σ_{t=2..T} max_a |P_t(a_t^*, a) − P_{t−1}(a_t^*, a)| with a_t^* the round-t winner."""
    if seq.horizon < 2:
        return 0.0
    rounds = np.arange(1, seq.horizon)
    winners = seq.winners[1:]
    drift = np.abs(seq.p[rounds, winners, :] - seq.p[rounds - 1, winners, :]).max(axis=1)
    return float(math.fsum(drift))


def first_crossings(winner_gaps, phase_start, last_s2):
    """
    Per arm, the first round s2 in (phase_start, last_s2] such that some
    s1 ∈ [phase_start, s2) gives Σ_{t=s1}^{s2} δ_t(a_t^*, a) ≥ √(K(s2 − s1)).

    Args:
        winner_gaps (np.ndarray): (T, K) array of δ_t(a_t^*, a).
        phase_start (int): 1-based round where the scan starts.
        last_s2 (int): Largest admissible s2.

    Returns:
        list: Crossing round per arm, None for arms that never cross.
    """
    num_arms = winner_gaps.shape[1]
    crossings = []
    for arm in range(num_arms):
        crossings.append(_first_crossing(winner_gaps[:, arm], phase_start, last_s2, num_arms))
    return crossings


def _first_crossing(regret, phase_start, last_s2, num_arms):
    if last_s2 <= phase_start:
        return None
    window = regret[phase_start - 1:last_s2]
    if not np.any(window > 0):
        return None
    # prefix[i] = Σ of the first i rounds of the window.
    prefix = np.concatenate(([0.0], np.cumsum(window)))
    for offset in range(1, window.size):
        s1_offsets = np.arange(offset)
        sums = prefix[offset + 1] - prefix[s1_offsets]
        thresholds = np.sqrt(num_arms * (offset - s1_offsets))
        if np.any(sums >= thresholds):
            return phase_start + offset
    return None


def significant_cw_switches(seq):
    """
    Rounds τ̂_1, ..., τ̂_S̃ of significant Condorcet winner switches.

    τ̂_{i+1} is the first round in [τ̂_i, T) such that every arm has accumulated regret
    Σ_{t=s1}^{s2} δ_t(a_t^*, a) ≥ √(K(s2 − s1)) on some τ̂_i ≤ s1 < s2 < τ̂_{i+1}.
    """
    gaps = seq.winner_gaps()
    horizon = seq.horizon
    rounds = []
    phase_start = 1
    while True:
        # s2 < τ̂_{i+1} ≤ T − 1
        crossings = first_crossings(gaps, phase_start, horizon - 2)
        if any(c is None for c in crossings):
            break
        next_switch = max(crossings) + 1
        rounds.append(next_switch)
        log.debug(f"Significant switch at round {next_switch} (phase from {phase_start})")
        phase_start = next_switch
    return tuple(rounds)


def measure_report(seq):
    return MeasureReport(
        pref_switches=count_pref_switches(seq),
        cw_switches=count_cw_switches(seq),
        sig_switch_rounds=significant_cw_switches(seq),
        total_variation=total_variation(seq),
        cw_variation=cw_variation(seq))
