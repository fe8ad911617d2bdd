"""Poses, grid indexing and exact grid ray traversal.

Cells are addressed as ``(ix, iy)`` tuples.  Every per-cell array in the
package has shape ``(height, width)`` and is indexed ``arr[iy, ix]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

Cell = Tuple[int, int]


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]; angles already in range are returned as is."""
    if -math.pi < a <= math.pi:
        return float(a)
    a = math.atan2(math.sin(a), math.cos(a))
    if a <= -math.pi:
        a = math.pi
    return a


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def compose(self, delta: "Pose2") -> "Pose2":
        """Apply ``delta`` expressed in this pose's frame."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Pose2(
            self.x + c * delta.x - s * delta.y,
            self.y + s * delta.x + c * delta.y,
            self.heading + delta.heading,
        )

    def to_global(self, local_xy) -> np.ndarray:
        """Rotate and translate local points (n, 2) into the world frame."""
        pts = np.atleast_2d(np.asarray(local_xy, dtype=float))
        c, s = math.cos(self.heading), math.sin(self.heading)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T + np.array([self.x, self.y])


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned grid; ``origin`` is the lower-left corner in meters."""

    origin: Tuple[float, float]
    resolution: float
    width: int
    height: int

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def world_to_cell(self, p) -> Optional[Cell]:
        return world_to_cell(p, self)

    def cell_center(self, cell: Cell) -> Tuple[float, float]:
        return cell_center(cell, self)

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """World x and y of every cell center, each shaped like the grid."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def world_to_cells(self, pts) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized ``world_to_cell``: returns (ix, iy, inside)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ix = np.floor((pts[:, 0] - self.origin[0]) / self.resolution).astype(int)
        iy = np.floor((pts[:, 1] - self.origin[1]) / self.resolution).astype(int)
        inside = (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)
        return ix, iy, inside


def world_to_cell(p, g: GridSpec) -> Optional[Cell]:
    """Floor-based world to cell mapping; ``None`` when outside the grid."""
    ix = math.floor((p[0] - g.origin[0]) / g.resolution)
    iy = math.floor((p[1] - g.origin[1]) / g.resolution)
    if 0 <= ix < g.width and 0 <= iy < g.height:
        return (ix, iy)
    return None


def cell_center(cell: Cell, g: GridSpec) -> Tuple[float, float]:
    return (
        g.origin[0] + (cell[0] + 0.5) * g.resolution,
        g.origin[1] + (cell[1] + 0.5) * g.resolution,
    )


@dataclass(frozen=True)
class Ray:
    origin: Tuple[float, float]
    bearing: float
    max_range: float

    def __post_init__(self):
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")


class RayCast(NamedTuple):
    range: float
    hit: bool
    cells: list
    entry: list  # distance along the ray at which each cell is entered


def cast_ray(ray: Ray, occ: np.ndarray, g: GridSpec, occupied_threshold: float = 0.5) -> RayCast:
    """Walk every grid cell crossed by ``ray`` (Amanatides-Woo traversal).

    Traversal stops at the first cell with ``occ >= occupied_threshold``, at
    ``max_range``, or where the ray leaves the grid.  The origin cell is not
    reported unless it is itself occupied, in which case the hit range is 0.
    A hit reports the distance at which the ray enters the hit cell.
    """
    if not math.isfinite(ray.bearing):
        raise ValueError("ray bearing must be finite")
    start = world_to_cell(ray.origin, g)
    if start is None:
        raise ValueError(f"ray origin {ray.origin} outside the grid")
    ix, iy = start
    if occ[iy, ix] >= occupied_threshold:
        return RayCast(0.0, True, [start], [0.0])

    res = g.resolution
    dx, dy = math.cos(ray.bearing), math.sin(ray.bearing)
    if abs(dx) < 1e-15:
        dx = 0.0
    if abs(dy) < 1e-15:
        dy = 0.0
    lx = ray.origin[0] - g.origin[0]
    ly = ray.origin[1] - g.origin[1]

    if dx > 0:
        step_x, t_max_x, t_delta_x = 1, ((ix + 1) * res - lx) / dx, res / dx
    elif dx < 0:
        step_x, t_max_x, t_delta_x = -1, (ix * res - lx) / dx, -res / dx
    else:
        step_x, t_max_x, t_delta_x = 0, math.inf, math.inf
    if dy > 0:
        step_y, t_max_y, t_delta_y = 1, ((iy + 1) * res - ly) / dy, res / dy
    elif dy < 0:
        step_y, t_max_y, t_delta_y = -1, (iy * res - ly) / dy, -res / dy
    else:
        step_y, t_max_y, t_delta_y = 0, math.inf, math.inf

    cells, entry = [], []
    tie = 1e-12 * res
    while True:
        if abs(t_max_x - t_max_y) <= tie:
            # ray passes exactly through a corner
            t = t_max_x
            ix += step_x
            iy += step_y
            t_max_x += t_delta_x
            t_max_y += t_delta_y
        elif t_max_x < t_max_y:
            t = t_max_x
            ix += step_x
            t_max_x += t_delta_x
        else:
            t = t_max_y
            iy += step_y
            t_max_y += t_delta_y
        if t >= ray.max_range:
            break
        if not (0 <= ix < g.width and 0 <= iy < g.height):
            break
        cells.append((ix, iy))
        entry.append(max(t, 0.0))
        if occ[iy, ix] >= occupied_threshold:
            return RayCast(max(t, 0.0), True, cells, entry)
    return RayCast(float(ray.max_range), False, cells, entry)


def path_length(cells: Sequence[Cell], resolution: float) -> float:
    """Length of an 8-connected cell path (1 or sqrt(2) per step)."""
    n_straight, n_diag = step_counts(cells)
    return (n_straight + n_diag * math.sqrt(2.0)) * resolution


def step_counts(cells: Sequence[Cell]) -> Tuple[int, int]:
    n_straight = n_diag = 0
    for a, b in zip(cells[:-1], cells[1:]):
        if a[0] != b[0] and a[1] != b[1]:
            n_diag += 1
        else:
            n_straight += 1
    return n_straight, n_diag
