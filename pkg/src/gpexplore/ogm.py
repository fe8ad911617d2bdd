"""Log-odds occupancy grid, the independent-cell baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation
from scipy.special import expit

from .geometry import GridSpec, Ray, cast_ray, world_to_cell
from .sensor import Scan

L_OCC = math.log(0.7 / 0.3)
L_FREE = math.log(0.3 / 0.7)
L_MAX = 10.0
UNKNOWN_BAND = 0.01


@dataclass(frozen=True)
class InverseSensorModel:
    l_occ: float = L_OCC
    l_free: float = L_FREE
    l_max: float = L_MAX


@dataclass
class LogOddsGrid:
    """Occupancy grid stored as integer hit/pass counts per cell.

    Log-odds are ``hits * l_occ + passes * l_free`` clamped to
    ``[-l_max, l_max]``.  Keeping counts makes updates exactly additive, so
    the grid does not depend on the order in which scans arrive.
    """

    grid: GridSpec
    hits: np.ndarray
    passes: np.ndarray
    model: InverseSensorModel = InverseSensorModel()

    @classmethod
    def empty(cls, grid: GridSpec, model: InverseSensorModel = InverseSensorModel()) -> "LogOddsGrid":
        return cls(grid, np.zeros(grid.shape, dtype=np.int64),
                   np.zeros(grid.shape, dtype=np.int64), model)

    @property
    def logodds(self) -> np.ndarray:
        m = self.model
        return np.clip(self.hits * m.l_occ + self.passes * m.l_free, -m.l_max, m.l_max)

    @property
    def prob(self) -> np.ndarray:
        return expit(self.logodds)

    @property
    def observed(self) -> np.ndarray:
        return (self.hits + self.passes) > 0

    def copy(self) -> "LogOddsGrid":
        return LogOddsGrid(self.grid, self.hits.copy(), self.passes.copy(), self.model)


def beam_cells(scan: Scan, grid: GridSpec):
    """Per beam: (free cells, hit cell or None), traced on the beam itself."""
    free_grid = np.zeros(grid.shape)
    out = []
    for r, b, hit in zip(scan.ranges, scan.bearings, scan.hits):
        bearing = scan.pose.heading + b
        if r <= 0:
            out.append(([], None))
            continue
        rc = cast_ray(Ray(scan.pose.position, bearing, float(r)), free_grid, grid)
        cells = list(rc.cells)
        hit_cell = None
        if hit:
            end = (scan.pose.x + r * math.cos(bearing), scan.pose.y + r * math.sin(bearing))
            hit_cell = world_to_cell(end, grid)
            if hit_cell is not None and cells and cells[-1] == hit_cell:
                cells.pop()
        out.append((cells, hit_cell))
    return out


def ogm_update(gridmap: LogOddsGrid, scan: Scan) -> LogOddsGrid:
    """Add inverse-sensor-model evidence for every beam of ``scan``.

    The robot's own cell gets one free update per scan, cells crossed by a
    beam get a free update and the endpoint cell of a hit an occupied one.
    """
    out = gridmap.copy()
    origin = world_to_cell(scan.pose.position, gridmap.grid)
    if origin is None:
        raise ValueError("scan pose outside the map")
    out.passes[origin[1], origin[0]] += 1
    for cells, hit_cell in beam_cells(scan, gridmap.grid):
        for ix, iy in cells:
            out.passes[iy, ix] += 1
        if hit_cell is not None:
            out.hits[hit_cell[1], hit_cell[0]] += 1
    return out


def unknown_mask(gridmap: LogOddsGrid, band: float = UNKNOWN_BAND) -> np.ndarray:
    return np.abs(gridmap.logodds) < band


def frontier_mask(gridmap: LogOddsGrid, p_free: float = 0.35,
                  band: float = UNKNOWN_BAND) -> np.ndarray:
    """Free cells with at least one unknown 8-neighbour."""
    free = gridmap.prob < p_free
    near_unknown = binary_dilation(unknown_mask(gridmap, band), structure=np.ones((3, 3), bool))
    return free & near_unknown
