import numpy as np

from prefs.preference_matrix import PreferenceMatrix, condorcet_winner


def regret_increment(matrix, first, second):
    """
    Expected instantaneous dynamic regret (δ(a*, a_t) + δ(a*, b_t)) / 2 of a played pair.

    Args:
        matrix (PreferenceMatrix or array-like): The true P_t.
        first (int): a_t.
        second (int): b_t.

    Raises:
        NoCondorcetWinner: If P_t has no Condorcet winner.
    """
    if not isinstance(matrix, PreferenceMatrix):
        matrix = PreferenceMatrix(matrix)
    winner = condorcet_winner(matrix)
    return ((matrix.p[winner, first] - 0.5) + (matrix.p[winner, second] - 0.5)) / 2.0


def regret_series(seq, first, second):
    """Vectorised regret_increment for rounds 1..n given the played arms of those rounds."""
    first = np.asarray(first)
    second = np.asarray(second)
    gaps = seq.winner_gaps()[:first.size]
    rounds = np.arange(first.size)
    return (gaps[rounds, first] + gaps[rounds, second]) / 2.0
