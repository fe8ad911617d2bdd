"""8-connected A* over an occupancy probability grid."""
from __future__ import annotations

import heapq
import math
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .geometry import path_length

SQRT2 = math.sqrt(2.0)
Cell = Tuple[int, int]  # (ix, iy)

_STEPS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


class PlanResult(NamedTuple):
    path: List[Cell]
    cost: float
    found: bool


def traversable(prob: np.ndarray, p_free: float) -> np.ndarray:
    return np.asarray(prob) < p_free


def neighbours(cell: Cell, free: np.ndarray):
    """Free 8-neighbours of ``cell``; diagonal moves may not cut a blocked corner."""
    h, w = free.shape
    ix, iy = cell
    for dx, dy in _STEPS:
        nx, ny = ix + dx, iy + dy
        if not (0 <= nx < w and 0 <= ny < h) or not free[ny, nx]:
            continue
        if dx and dy and not (free[iy, nx] and free[ny, ix]):
            continue
        yield (nx, ny), (SQRT2 if dx and dy else 1.0)


def astar(start: Cell, goal: Cell, prob: np.ndarray, p_free: float, resolution: float = 1.0,
          free: Optional[np.ndarray] = None) -> PlanResult:
    """Shortest 8-connected path through cells with ``prob < p_free``.

    The heuristic is the Euclidean distance.  Open-list ties are broken by
    lower f, then lower h, then (row, col) order, so results are
    deterministic.  The cost is reported from the step counts of the path so
    equal paths give bit-identical costs.
    """
    if free is None:
        free = traversable(prob, p_free)
    sx, sy = start
    gx, gy = goal
    if not free[sy, sx]:
        raise ValueError(f"start cell {start} is not free")
    if not free[gy, gx]:
        return PlanResult([], math.inf, False)

    def h(c):
        return math.hypot(c[0] - gx, c[1] - gy)

    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    h0 = h(start)
    heap = [(h0, h0, sy, sx)]
    while heap:
        _, _, cy, cx = heapq.heappop(heap)
        cell = (cx, cy)
        if cell in closed:
            continue
        if cell == goal:
            path = []
            while cell is not None:
                path.append(cell)
                cell = parent[cell]
            path.reverse()
            return PlanResult(path, path_length(path, resolution), True)
        closed.add(cell)
        gc = g[cell]
        for nb, step in neighbours(cell, free):
            if nb in closed:
                continue
            ng = gc + step
            if ng < g.get(nb, math.inf) - 1e-12:
                g[nb] = ng
                parent[nb] = cell
                hn = h(nb)
                heapq.heappush(heap, (ng + hn, hn, nb[1], nb[0]))
    return PlanResult([], math.inf, False)


def nearest_free(cell: Cell, free: np.ndarray, max_radius: int = 3) -> Optional[Cell]:
    """``cell`` itself if free, else the closest free cell within ``max_radius``
    (Euclidean, ties to the lowest (row, col))."""
    ix, iy = cell
    if free[iy, ix]:
        return cell
    h, w = free.shape
    r0, r1 = max(iy - max_radius, 0), min(iy + max_radius + 1, h)
    c0, c1 = max(ix - max_radius, 0), min(ix + max_radius + 1, w)
    rows, cols = np.nonzero(free[r0:r1, c0:c1])
    if rows.size == 0:
        return None
    d2 = (rows + r0 - iy) ** 2 + (cols + c0 - ix) ** 2
    k = int(np.argmin(d2))
    return (int(cols[k] + c0), int(rows[k] + r0))
