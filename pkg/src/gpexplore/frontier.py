"""Probabilistic frontier maps and macro-action extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .geometry import GridSpec, Pose2, world_to_cell
from .gpom import EPS, GaussianMap
from .planning import PlanResult, astar, nearest_free, traversable

EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class FrontierConfig:
    beta: float = 3.0
    gamma_f: float = 10.0
    threshold: float = 0.6
    min_cluster_size: int = 14
    max_clusters: int = 20
    p_free: float = 0.35
    p_occupied: float = 0.65  # likely-occupied cells never count as frontier


@dataclass
class FrontierMap:
    grid: GridSpec
    prob: np.ndarray
    score: Optional[np.ndarray] = None  # unsquashed boundary score


@dataclass
class MacroAction:
    centroid: Tuple[float, float]
    cluster_size: int
    goal: Tuple[int, int]
    path: List[Tuple[int, int]] = field(default_factory=list)
    path_cost: float = math.inf

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.path_cost)


def gradient_l1(field: np.ndarray, resolution: float = 1.0) -> np.ndarray:
    """``|dp/dx| + |dp/dy|`` with central differences inside, one-sided at borders."""
    field = np.asarray(field, dtype=float)
    grads = []
    for axis in (0, 1):
        if field.shape[axis] < 2:
            grads.append(np.zeros_like(field))
        else:
            grads.append(np.gradient(field, resolution, axis=axis))
    return np.abs(grads[0]) + np.abs(grads[1])


def frontier_score(p, p_occupied, resolution: float, beta: float) -> np.ndarray:
    """All boundaries minus obstacle boundaries and the obstacle-map bias."""
    return gradient_l1(p, resolution) - beta * (gradient_l1(p_occupied, resolution)
                                                + np.asarray(p_occupied) - 0.5)


def build_frontier_map(m: GaussianMap, m_o: GaussianMap, beta: float = 3.0,
                       gamma_f: float = 10.0) -> FrontierMap:
    """Frontier probability from the merged map ``m`` and the obstacle map ``m_o``.

    The logistic weight ``gamma_f * sqrt(sigma_min / sigma)`` damps cells
    whose merged variance is far above the best-known cell.
    """
    if m.grid != m_o.grid:
        raise ValueError("maps must share a grid")
    score = frontier_score(m.prob, m_o.prob, m.grid.resolution, beta)
    weight = gamma_f * np.sqrt(np.min(m.var) / m.var)
    f = np.clip(expit(weight * score), EPS, 1.0 - EPS)
    return FrontierMap(m.grid, f, score)


def binary_frontier_map(mask: np.ndarray, grid: GridSpec) -> FrontierMap:
    """Wrap a binary frontier mask (grid baseline) as a frontier probability field."""
    return FrontierMap(grid, np.where(mask, 1.0 - EPS, EPS))


def cluster_frontiers(f: FrontierMap, threshold: float, min_size: int,
                      max_clusters: int, allowed: Optional[np.ndarray] = None) -> List[np.ndarray]:
    """8-connected clusters of ``f > threshold``, largest first.

    Only cells in ``allowed`` take part when it is given.  Clusters smaller
    than ``min_size`` are dropped; ties in size keep the cluster whose first
    cell in (row, col) order comes first.  Each cluster is returned as an
    (n, 2) array of (row, col) indices.
    """
    mask = f.prob > threshold
    if allowed is not None:
        mask &= allowed
    labels, n = ndimage.label(mask, structure=EIGHT)
    if n == 0:
        return []
    clusters = [np.argwhere(labels == k) for k in range(1, n + 1)]
    clusters = [c for c in clusters if len(c) >= min_size]
    clusters.sort(key=lambda c: (-len(c), int(c[0][0]), int(c[0][1])))
    return clusters[:max_clusters]


def snap_to_free(centroid, cells: np.ndarray, free: np.ndarray,
                 grid: GridSpec) -> Optional[Tuple[Tuple[float, float], Tuple[int, int]]]:
    """Keep the centroid if its cell is free, else move it to the nearest free
    cell center inside the cluster's bounding box."""
    cell = world_to_cell(centroid, grid)
    if cell is not None and free[cell[1], cell[0]]:
        return (float(centroid[0]), float(centroid[1])), cell
    r0, c0 = cells.min(axis=0)
    r1, c1 = cells.max(axis=0)
    box = free[r0:r1 + 1, c0:c1 + 1]
    if not box.any():
        return None
    rows, cols = np.nonzero(box)
    rows, cols = rows + r0, cols + c0
    cx = grid.origin[0] + (cols + 0.5) * grid.resolution
    cy = grid.origin[1] + (rows + 0.5) * grid.resolution
    d2 = (cx - centroid[0]) ** 2 + (cy - centroid[1]) ** 2
    k = int(np.argmin(d2))  # nonzero() is row-major, so ties go to the lowest (row, col)
    return (float(cx[k]), float(cy[k])), (int(cols[k]), int(rows[k]))


def extract_macro_actions(f: FrontierMap, prob: np.ndarray, robot: Pose2,
                          cfg: FrontierConfig = FrontierConfig()) -> List[MacroAction]:
    """Threshold, cluster, snap and reachability-check frontier targets.

    ``prob`` is the occupancy probability used for planning; cells with
    ``prob < cfg.p_free`` are traversable and cells with
    ``prob >= cfg.p_occupied`` (walls seen edge-on, the map border) are not
    frontier candidates.  Planning starts from the robot's
    cell, or the nearest free cell if the map does not yet call it free.  An
    empty list means there is nothing left to explore.
    """
    grid = f.grid
    free = traversable(prob, cfg.p_free)
    cell = world_to_cell(robot.position, grid)
    if cell is None:
        raise ValueError("robot outside the map")
    start = nearest_free(cell, free)
    if start is None:
        return []
    actions = []
    allowed = np.asarray(prob) < cfg.p_occupied
    for cells in cluster_frontiers(f, cfg.threshold, cfg.min_cluster_size, cfg.max_clusters,
                                   allowed):
        xs = grid.origin[0] + (cells[:, 1] + 0.5) * grid.resolution
        ys = grid.origin[1] + (cells[:, 0] + 0.5) * grid.resolution
        snapped = snap_to_free((float(xs.mean()), float(ys.mean())), cells, free, grid)
        if snapped is None:
            continue
        point, goal = snapped
        plan: PlanResult = astar(start, goal, prob, cfg.p_free, grid.resolution, free=free)
        if not plan.found:
            continue
        actions.append(MacroAction(point, len(cells), goal, plan.path, plan.cost))
    return actions
