"""Minimum-cost bipartite matching between predictions and ground truth."""

from __future__ import annotations

import numpy as np


def hungarian_match(cost) -> np.ndarray:
    """Optimal injective map gt -> pred for a [N_pred, N_gt] cost matrix.

    Returns ``pred_of_gt`` with ``pred_of_gt[j]`` the prediction assigned to
    ground truth ``j``. Shortest augmenting paths with dual potentials; every
    scan resolves ties toward the lowest prediction index, so the result is
    deterministic.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {cost.shape}")
    n_pred, n_gt = cost.shape
    if n_gt > n_pred:
        raise ValueError(f"more ground truths ({n_gt}) than predictions ({n_pred})")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    if n_gt == 0:
        return np.zeros(0, dtype=np.intp)

    # rows = ground truths (1-based), columns = predictions (1-based); index 0 is the virtual start
    c = cost.T
    u = np.zeros(n_gt + 1)
    v = np.zeros(n_pred + 1)
    row_of_col = np.zeros(n_pred + 1, dtype=np.intp)
    way = np.zeros(n_pred + 1, dtype=np.intp)
    for i in range(1, n_gt + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n_pred + 1, np.inf)
        used = np.zeros(n_pred + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used[1:]
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1  # first minimum = lowest index
            delta = cand[j1 - 1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while True:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
            if j0 == 0:
                break

    pred_of_gt = np.empty(n_gt, dtype=np.intp)
    for j in range(1, n_pred + 1):
        if row_of_col[j]:
            pred_of_gt[row_of_col[j] - 1] = j - 1
    return pred_of_gt


def assignment_cost(cost, pred_of_gt) -> float:
    cost = np.asarray(cost, dtype=np.float64)
    return float(sum(cost[p, g] for g, p in enumerate(pred_of_gt)))
