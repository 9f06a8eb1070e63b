"""Minimum-cost bipartite matching of predictions to ground-truth labels.

There is no natural order in which a model must emit the objects of an
image, so targets are aligned to predictions by solving a rectangular
linear assignment problem with coordinate distance as the cost before the
loss is computed. The solver is the Kuhn-Munkres algorithm with row/column
potentials (O(n^3)); matching is per grid cell, so instances are tiny.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import CellTargets, GridSpec

__all__ = [
    "Assignment",
    "MatchedTargets",
    "build_cost",
    "solve_assignment",
    "match_cell",
    "reorder_targets",
]


@dataclass(frozen=True)
class Assignment:
    """Result of a solved assignment.

    ``match[j]`` is the prediction row assigned to ground-truth column j;
    no row appears twice. ``total_cost`` is the sum of matched entries.
    """

    match: tuple[int, ...]
    total_cost: float


@dataclass
class MatchedTargets:
    """One cell's targets permuted to sit at their matched slot indices."""

    present: np.ndarray  # (k,)
    coords: np.ndarray  # (k, r)
    class_ids: np.ndarray  # (k,)
    total_cost: float


def build_cost(pred_coords: np.ndarray, gt_coords: np.ndarray) -> np.ndarray:
    """Euclidean-distance cost matrix, predictions as rows, ground truth as columns.

    For boxes (r = 4) only the first two components (the center) enter the
    distance, keeping point and box datasets under one rule.
    """
    pred = np.atleast_2d(np.asarray(pred_coords, dtype=np.float64))
    gt = np.atleast_2d(np.asarray(gt_coords, dtype=np.float64))
    if pred.shape[1] != gt.shape[1]:
        raise ValueError(
            f"coordinate arity mismatch: predictions r={pred.shape[1]}, "
            f"ground truth r={gt.shape[1]}"
        )
    if pred.shape[1] == 4:
        pred = pred[:, :2]
        gt = gt[:, :2]
    diff = pred[:, None, :] - gt[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _kuhn_munkres(cost: np.ndarray) -> np.ndarray:
    """Assign every row of an n x m (n <= m) cost matrix to a distinct column.

    Potentials-based Kuhn-Munkres with successive shortest augmenting paths.
    Internally 1-indexed; returns row_to_col (0-indexed).
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row matched to column j, 0 = free
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = -1
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] != 0:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col


def solve_assignment(cost: np.ndarray) -> Assignment:
    """Match every ground-truth column to a distinct prediction row at minimum total cost.

    Requires at least as many prediction rows as ground-truth columns (pad
    externally otherwise) and finite, nonnegative costs. An empty matrix
    yields an empty assignment.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {c.shape}")
    rows, cols = c.shape
    if rows == 0 or cols == 0:
        return Assignment(match=(), total_cost=0.0)
    if not np.isfinite(c).all():
        raise ValueError("cost matrix contains non-finite entries")
    if (c < 0).any():
        raise ValueError("cost matrix contains negative entries")
    if rows < cols:
        raise ValueError(
            f"need rows >= cols (predictions >= ground truths), got {rows} < {cols}"
        )
    # Ground-truth columns all get matched; run them as the short side.
    gt_to_pred = _kuhn_munkres(c.T)
    total = float(sum(c[gt_to_pred[j], j] for j in range(cols)))
    return Assignment(match=tuple(int(i) for i in gt_to_pred), total_cost=total)


def match_cell(
    pred_coords: np.ndarray,
    present: np.ndarray,
    coords: np.ndarray,
    class_ids: np.ndarray,
    total_slots: int | None = None,
) -> MatchedTargets:
    """Reorder one cell's targets so each sits at its matched prediction slot.

    ``pred_coords`` holds the cell's k predicted coordinate rows; the target
    arrays are that cell's slice of CellTargets. Slots left without a target
    are padded (present 0, zero coords). Empty cells skip the solver.
    """
    pred = np.asarray(pred_coords, dtype=np.float64)
    k = pred.shape[0] if total_slots is None else total_slots
    present = np.asarray(present, dtype=np.float64)
    gt_idx = np.nonzero(present > 0)[0]
    out = MatchedTargets(
        present=np.zeros(k),
        coords=np.zeros((k, coords.shape[1])),
        class_ids=np.zeros(k, dtype=np.int64),
        total_cost=0.0,
    )
    if gt_idx.size == 0:
        return out
    cost = build_cost(pred, coords[gt_idx])
    assignment = solve_assignment(cost)
    for j, slot in enumerate(assignment.match):
        src = gt_idx[j]
        out.present[slot] = 1.0
        out.coords[slot] = coords[src]
        out.class_ids[slot] = class_ids[src]
    out.total_cost = assignment.total_cost
    return out


def reorder_targets(
    pred_coords_grid: np.ndarray, targets: CellTargets, spec: GridSpec
) -> CellTargets:
    """Apply match_cell to every cell of an image.

    ``pred_coords_grid`` is the (G, G, k, r) coordinate block of a prediction
    tensor. Returns a new CellTargets aligned slot-by-slot with it.
    """
    g, k = spec.grid_size, spec.slots_per_cell
    if pred_coords_grid.shape != (g, g, k, spec.coord_arity):
        raise ValueError(
            f"coordinate grid shape {pred_coords_grid.shape} does not match spec"
        )
    matched = CellTargets.empty(spec)
    for row in range(g):
        for col in range(g):
            cell = match_cell(
                pred_coords_grid[row, col],
                targets.present[row, col],
                targets.coords[row, col],
                targets.class_ids[row, col],
            )
            matched.present[row, col] = cell.present
            matched.coords[row, col] = cell.coords
            matched.class_ids[row, col] = cell.class_ids
    return matched
