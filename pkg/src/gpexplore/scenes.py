"""Fixed, seeded scenes shared by the CLI, the regression data and the tests.

``sparse_scans`` scatters a few low-density scans over the free space of an
environment.  ``corridor_scene`` is a straight corridor whose near half has
been scanned from three poses while the far half is still unknown.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from . import gpom, ogm
from .envs import Environment
from .geometry import GridSpec, Pose2
from .sensor import Scan, simulate_scan
from .sim import GPParams

SPARSE_BEAMS = 20
SPARSE_SCANS = 25
SPARSE_MAPPING = gpom.MappingConfig(free_spacing=1.0)  # keeps 25 scans under the batch cap


def sparse_scans(env: Environment, n_scans: int = SPARSE_SCANS, seed: int = 0,
                 n_z: int = SPARSE_BEAMS, r_max: float = 4.0,
                 range_sigma: float = 0.03) -> List[Scan]:
    """Scans at ``n_scans`` distinct free cells with random headings."""
    rng = np.random.default_rng(seed)
    free = np.argwhere(~env.truth)
    if n_scans > len(free):
        raise ValueError("more scans than free cells")
    picks = free[rng.choice(len(free), n_scans, replace=False)]
    scans = []
    for iy, ix in picks:
        x, y = env.grid.cell_center((int(ix), int(iy)))
        pose = Pose2(x, y, float(rng.uniform(-np.pi, np.pi)))
        scans.append(simulate_scan(pose, env.truth, env.grid, n_z, r_max, range_sigma, rng))
    return scans


@dataclass
class CorridorScene:
    truth: np.ndarray
    grid: GridSpec
    scans: List[Scan]
    maps: gpom.MapPair
    observed: np.ndarray  # cells crossed by at least one beam
    band: np.ndarray  # free cells on the known/unknown boundary inside the corridor
    walls: np.ndarray  # observed wall cells


CORRIDOR_SHAPE = (16, 48)
CORRIDOR_RESOLUTION = 0.25
CORRIDOR_POSES = ((1.5, 2.0), (2.5, 2.0), (3.5, 2.0))


def corridor_truth() -> np.ndarray:
    """Corridor open to the east, walls on rows 2 and 13 and column 2."""
    t = np.zeros(CORRIDOR_SHAPE, dtype=bool)
    t[2, 2:] = t[13, 2:] = True
    t[2:14, 2] = True
    return t


def corridor_scene(seed: int = 0, params: GPParams = GPParams(),
                   cfg: gpom.MappingConfig = gpom.MappingConfig()) -> CorridorScene:
    truth = corridor_truth()
    grid = GridSpec((0.0, 0.0), CORRIDOR_RESOLUTION, truth.shape[1], truth.shape[0])
    rng = np.random.default_rng(seed)
    maps = gpom.MapPair.prior(grid, cfg.prior_variance)
    beams = ogm.LogOddsGrid.empty(grid)
    scans = []
    for x, y in CORRIDOR_POSES:
        s = simulate_scan(Pose2(x, y, 0.0), truth, grid, 133, 4.0, 0.03, rng)
        scans.append(s)
        maps = gpom.igpom2_step(maps, s, params.occupied, params.free, cfg)
        beams = ogm.ogm_update(beams, s)
    observed = beams.observed
    # last observed column of each corridor row
    band = np.zeros_like(observed)
    for row in range(3, 13):
        cols = np.flatnonzero(observed[row])
        band[row, cols.max()] = True
    walls = truth & observed
    return CorridorScene(truth, grid, scans, maps, observed, band, walls)


SPARSE_LOG = "structured_25.csv"
CORRIDOR_MAP = "corridor_map.csv"
CORRIDOR_VANTAGE = (3.0, 2.0)


def write_bundled_scenes(directory) -> None:
    """Regenerate the committed scan log and half-explored map."""
    from pathlib import Path

    from . import envs, mapio
    directory = Path(directory)
    mapio.write_scan_log(directory / SPARSE_LOG,
                         sparse_scans(envs.load_environment("structured"), seed=0))
    m = corridor_scene().maps.merged
    mapio.write_map_csv(directory / CORRIDOR_MAP, m.grid, m.mu, m.var, m.prob)
