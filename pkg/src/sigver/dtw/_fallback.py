"""Pure numpy DTW kernel used when the compiled extension is unavailable.

The cumulative matrix is filled one anti-diagonal at a time; each cell still
performs ``d + min(diag, up, left)`` with the same operand order as the
compiled loop, so both backends agree bit for bit.
"""

from __future__ import annotations

import numpy as np


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        diff = a[:, None, k] - b[None, :, k]
        s = s + diff * diff
    return np.sqrt(s)


def accumulated_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = a.shape[0], b.shape[0]
    d = pairwise_distance(a, b)
    # one row/column of +inf padding so neighbours of the border are defined
    P = np.full((n + 1, m + 1), np.inf)
    for s in range(n + m - 1):
        i = np.arange(max(0, s - m + 1), min(n - 1, s) + 1)
        j = s - i
        if s == 0:
            P[1, 1] = d[0, 0]
            continue
        best = np.minimum(np.minimum(P[i, j], P[i, j + 1]), P[i + 1, j])
        P[i + 1, j + 1] = d[i, j] + best
    return P[1:, 1:].copy()


def backtrack(D: np.ndarray) -> np.ndarray:
    i, j = D.shape[0] - 1, D.shape[1] - 1
    steps = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        steps.append((i, j))
    return np.array(steps[::-1], dtype=np.int64)
