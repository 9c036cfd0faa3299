"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np

# backtracking preference when costs tie: diagonal, then (i-1, j), then (i, j-1)
_MOVE_RANK = {(1, 1): 0, (1, 0): 1, (0, 1): 2}


def frame_distance(u, v) -> float:
    return math.sqrt(sum((float(p) - float(q)) ** 2 for p, q in zip(u, v)))


def brute_force_dtw(a, b):
    """Enumerate every monotone, continuous path from (0, 0) to the far corner.

    Costs accumulate from the start of the path.  Among minimum-cost paths the
    one whose reversed move sequence ranks lowest under ``_MOVE_RANK`` wins,
    which is the path a tie-breaking backtrack would recover.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64).T).T
    b = np.atleast_2d(np.asarray(b, dtype=np.float64).T).T
    n, m = len(a), len(b)
    dist = [[frame_distance(a[i], b[j]) for j in range(m)] for i in range(n)]
    best = [math.inf, None, None]

    def walk(i, j, cost, path):
        if i == n - 1 and j == m - 1:
            moves = tuple(_MOVE_RANK[(path[k][0] - path[k - 1][0], path[k][1] - path[k - 1][1])]
                          for k in range(len(path) - 1, 0, -1))
            if cost < best[0] or (cost == best[0] and moves < best[2]):
                best[0], best[1], best[2] = cost, list(path), moves
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < n and nj < m:
                path.append((ni, nj))
                walk(ni, nj, cost + dist[ni][nj], path)
                path.pop()

    walk(0, 0, dist[0][0], [(0, 0)])
    return best[0], best[1]


def brute_force_eer(genuine, impostor):
    """Sweep every candidate threshold with plain loops."""
    candidates = sorted(set(genuine) | set(impostor))
    candidates = [-math.inf] + candidates + [math.inf]
    best = None
    for t in candidates:
        far = sum(1 for s in impostor if s >= t) / len(impostor)
        frr = sum(1 for s in genuine if s < t) / len(genuine)
        gap = abs(far - frr)
        if best is None or gap < best[0]:
            best = (gap, (far + frr) / 2, t)
    return best[1], best[2]
