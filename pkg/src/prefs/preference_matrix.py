import logging

import numpy as np


log = logging.getLogger("Preferences_Log")

# Tolerance for the complement and diagonal invariants.
MATRIX_TOLERANCE = 1e-12


class PreferenceError(ValueError):
    """Raised when a preference matrix, model or sequence is invalid."""

    def __init__(self, message):
        self.message = message
        super().__init__(message)


class NoCondorcetWinner(PreferenceError):
    """
    Raised when a preference matrix has no arm beating every other arm.

    Attributes:
        round (int or None): 1-based round of the offending matrix inside a sequence,
                             None when a bare matrix was checked.
    """

    def __init__(self, round=None):
        self.round = round
        if round is None:
            message = "Preference matrix has no Condorcet winner"
        else:
            message = f"Preference matrix of round {round} has no Condorcet winner"
        super().__init__(message)


def validate_matrix_array(p, context="matrix"):
    """
    Checks the shape, range, complement and diagonal invariants of a K×K array.

    Args:
        p (np.ndarray): Candidate preference matrix.
        context (str): Text used in error messages (e.g. "round 12").

    Raises:
        PreferenceError: If any invariant is violated.
    """
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise PreferenceError(f"{context}: expected a square matrix, got shape {p.shape}")
    if p.shape[0] < 2:
        raise PreferenceError(f"{context}: at least 2 arms are required, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise PreferenceError(f"{context}: entries must be finite")
    if p.min() < -MATRIX_TOLERANCE or p.max() > 1 + MATRIX_TOLERANCE:
        raise PreferenceError(f"{context}: entries must lie in [0, 1]")
    if np.abs(p + p.T - 1.0).max() > MATRIX_TOLERANCE:
        raise PreferenceError(f"{context}: p[a][b] + p[b][a] must equal 1")
    if np.abs(np.diag(p) - 0.5).max() > MATRIX_TOLERANCE:
        raise PreferenceError(f"{context}: diagonal entries must equal 0.5")


class PreferenceMatrix:
    """
    K×K matrix of pairwise win probabilities; p[a][b] is the chance that arm a beats arm b.

    Arms are 0-based. The underlying array is read-only after construction.

    Attributes:
        k (int): Number of arms.
        p (np.ndarray): Read-only (k, k) float array.
    """

    def __init__(self, p):
        array = np.array(p, dtype=float)
        validate_matrix_array(array)
        array.setflags(write=False)
        self.p = array
        self.k = array.shape[0]

    @classmethod
    def from_rows(cls, rows):
        """Builds a matrix from a row-major nested list (the JSON representation)."""
        try:
            array = np.asarray(rows, dtype=float)
        except (TypeError, ValueError) as e:
            raise PreferenceError(f"matrix rows must be equal-length lists of numbers ({e})") from e
        return cls(array)

    def to_rows(self):
        return self.p.tolist()

    def __eq__(self, other):
        if not isinstance(other, PreferenceMatrix):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.p, other.p)

    def __hash__(self):
        return hash(self.p.tobytes())

    def __repr__(self):
        return f"PreferenceMatrix(k={self.k}, p={self.to_rows()})"


def condorcet_winner(matrix):
    """
    Returns the arm beating every other arm with probability strictly above 1/2.

    Ties (p = 0.5 off the diagonal) count as no domination.

    Raises:
        NoCondorcetWinner: If no such arm exists.
    """
    beats = matrix.p > 0.5
    np.fill_diagonal(beats, True)
    winners = np.flatnonzero(beats.all(axis=1))
    if winners.size == 0:
        raise NoCondorcetWinner()
    return int(winners[0])


def gap(matrix, a, b):
    """δ(a, b) = p[a][b] − 1/2."""
    return float(matrix.p[a, b]) - 0.5


def sample_outcome(matrix, a, b, rng):
    """Draws o ~ Bernoulli(p[a][b]) from the caller-owned numpy Generator; 1 means a won."""
    return int(rng.random() < matrix.p[a, b])


def _gaps(matrix):
    return matrix.p - 0.5


def check_sst(matrix):
    """
    Strong stochastic transitivity over all ordered triplets a ≻ b ≻ c:
    δ(a, c) ≥ max(δ(a, b), δ(b, c)).
    """
    d = _gaps(matrix)
    d_ab = d[:, :, None]
    d_bc = d[None, :, :]
    d_ac = d[:, None, :]
    ordered = (d_ab > 0) & (d_bc > 0)
    violated = ordered & (d_ac < np.maximum(d_ab, d_bc) - MATRIX_TOLERANCE)
    return not bool(violated.any())


def check_sti(matrix):
    """
    Stochastic triangle inequality over all ordered triplets a ≻ b ≻ c:
    δ(a, c) ≤ δ(a, b) + δ(b, c).
    """
    d = _gaps(matrix)
    d_ab = d[:, :, None]
    d_bc = d[None, :, :]
    d_ac = d[:, None, :]
    ordered = (d_ab > 0) & (d_bc > 0)
    violated = ordered & (d_ac > d_ab + d_bc + MATRIX_TOLERANCE)
    return not bool(violated.any())


def check_triangle(matrix):
    """
    For every triplet with a ≻ b and a ≻ c: δ(a, c) ≤ 2δ(a, b) + δ(b, c).

    Holds whenever the matrix satisfies both check_sst and check_sti.
    """
    d = _gaps(matrix)
    d_ab = d[:, :, None]
    d_bc = d[None, :, :]
    d_ac = d[:, None, :]
    dominated = (d_ab > 0) & (d_ac > 0)
    violated = dominated & (d_ac > 2 * d_ab + d_bc + MATRIX_TOLERANCE)
    return not bool(violated.any())


def with_condorcet_winner(k, winner, gap):
    """
    Matrix in which `winner` beats every other arm with probability 0.5 + gap and all other
    pairs are tied.

    Args:
        k (int): Number of arms (≥ 2).
        winner (int): 0-based index of the Condorcet winner.
        gap (float): Winning margin in (0, 0.5].
    """
    if not 0 < gap <= 0.5:
        log.error(f"Condorcet gap out of range: {gap}")
        raise PreferenceError(f"gap must lie in (0, 0.5], got {gap}")
    if not 0 <= winner < k:
        raise PreferenceError(f"winner {winner} is not an arm of a {k}-arm matrix")
    p = np.full((k, k), 0.5)
    p[winner, :] = 0.5 + gap
    p[:, winner] = 0.5 - gap
    p[winner, winner] = 0.5
    return PreferenceMatrix(p)


def example_switch_matrices():
    """
    Two-arm pair with opposite winners: arm 0 wins surely under the first matrix,
    arm 1 under the second.
    """
    first = PreferenceMatrix([[0.5, 1.0], [0.0, 0.5]])
    second = PreferenceMatrix([[0.5, 0.0], [1.0, 0.5]])
    return first, second


def alternating_matrices():
    """
    Three-arm pair in which arm 0 stays the Condorcet winner while the preference between the
    two suboptimal arms flips from certain win to certain loss.
    """
    first = PreferenceMatrix([[0.5, 0.55, 0.55],
                              [0.45, 0.5, 1.0],
                              [0.45, 0.0, 0.5]])
    second = PreferenceMatrix([[0.5, 0.55, 0.55],
                               [0.45, 0.5, 0.0],
                               [0.45, 1.0, 0.5]])
    return first, second
