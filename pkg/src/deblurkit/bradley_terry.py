"""Bradley-Terry strength fitting from a pairwise winning matrix.

Maximum likelihood via the classic minorization-maximization update

    pi_i <- W_i / sum_{j != i} n_ij / (pi_i + pi_j)

where W_i are total wins of item i and n_ij = w_ij + w_ji the number of
comparisons. The likelihood is non-decreasing under this update; scores
are reported anchored so item 0 has strength exactly 1.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedGraphError

SMOOTHING_EPS = 1e-6


@dataclass(frozen=True)
class BTResult:
    scores: np.ndarray  # positive strengths, scores[0] == 1
    iterations: int
    log_likelihood: tuple  # per-iteration trace (non-decreasing)
    smoothed: bool  # whether zero-win smoothing was applied


def validate_win_matrix(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"winning matrix must be square, got {w.shape}")
    if (w < 0).any():
        raise ValueError("winning matrix entries must be nonnegative")
    if np.diagonal(w).any():
        raise ValueError("winning matrix diagonal must be zero")
    return w


def _check_connected(n_ij: np.ndarray) -> None:
    n = n_ij.shape[0]
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in np.nonzero(n_ij[i] > 0)[0]:
            if j not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise DisconnectedGraphError(
            f"comparison graph is disconnected (unreached items: {missing})"
        )


def log_likelihood(w: np.ndarray, p: np.ndarray) -> float:
    """Sum over ordered pairs of w_ij * log(p_i / (p_i + p_j))."""
    ll = 0.0
    n = w.shape[0]
    for i in range(n):
        for j in range(n):
            if i != j and w[i, j] > 0:
                ll += w[i, j] * (np.log(p[i]) - np.log(p[i] + p[j]))
    return float(ll)


def fit_bradley_terry(w, tol: float = 1e-10, max_iter: int = 10_000) -> BTResult:
    """Fit anchored Bradley-Terry strengths from a winning matrix."""
    w = validate_win_matrix(w)
    n_ij = w + w.T
    _check_connected(n_ij)

    smoothed = False
    zero_rows = np.nonzero(w.sum(axis=1) == 0)[0]
    if zero_rows.size:
        # zero-win items get tiny pseudo-wins on their existing edges only
        w = w.copy()
        for i in zero_rows:
            w[i, n_ij[i] > 0] += SMOOTHING_EPS
        n_ij = w + w.T
        smoothed = True

    n = w.shape[0]
    wins = w.sum(axis=1)
    p = np.ones(n, dtype=np.float64)
    trace = [log_likelihood(w, p)]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        pair_sum = p[:, None] + p[None, :]
        denom = np.where(n_ij > 0, n_ij / pair_sum, 0.0).sum(axis=1)
        p_new = wins / denom
        p_new /= p_new.sum()
        rel_change = np.max(np.abs(p_new - p) / p)
        p = p_new
        trace.append(log_likelihood(w, p))
        if rel_change < tol:
            break
    return BTResult(
        scores=p / p[0],
        iterations=iterations,
        log_likelihood=tuple(trace),
        smoothed=smoothed,
    )


def load_win_matrix_csv(path) -> np.ndarray:
    """Read a winning matrix from comma-separated text (optional header row)."""
    rows = []
    for line in open(path):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            continue  # header row
    return np.asarray(rows, dtype=np.float64)
