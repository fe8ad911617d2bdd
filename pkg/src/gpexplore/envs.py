"""Bundled ground-truth environments.

Both maps are generated procedurally from fixed seeds; the committed PGM
files in ``data/`` are the output of :func:`write_bundled` and are what the
simulator loads.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import GridSpec, Pose2, world_to_cell
from .mapio import load_environment_pgm, save_environment_pgm

DATA = resources.files("gpexplore") / "data"

STRUCTURED_RESOLUTION = 0.25
CAMPUS_RESOLUTION = 1.0


@dataclass
class Environment:
    name: str
    truth: np.ndarray
    grid: GridSpec
    spawn: Pose2

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=bool)
        self.truth.setflags(write=False)
        if self.truth.shape != self.grid.shape:
            raise ValueError("truth grid does not match GridSpec")
        cell = world_to_cell(self.spawn.position, self.grid)
        if cell is None or self.truth[cell[1], cell[0]]:
            raise ValueError(f"spawn {self.spawn} is not in free space")


def structured_map(seed: int = 7) -> np.ndarray:
    """40x40 office-like layout: a corridor with five rooms and clutter."""
    rng = np.random.default_rng(seed)
    occ = np.zeros((40, 40), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    # corridor between rows 17..22
    occ[16, :] = True
    occ[23, :] = True
    # lower rooms, walls at columns 13 and 26
    occ[1:16, 13] = True
    occ[1:16, 26] = True
    # upper rooms, wall at column 20
    occ[24:39, 20] = True
    for c0 in (4, 17, 31):
        occ[16, c0:c0 + 4] = False
    for c0 in (7, 28):
        occ[23, c0:c0 + 4] = False
    # door between the two upper rooms
    occ[30:34, 20] = False
    rooms = [(1, 15, 1, 12), (1, 15, 14, 25), (1, 15, 27, 38), (24, 38, 1, 19), (24, 38, 21, 38)]
    for r0, r1, c0, c1 in rooms:
        for _ in range(2):
            h, w = rng.integers(2, 4, size=2)
            r = rng.integers(r0 + 3, r1 - h - 1)
            c = rng.integers(c0 + 2, c1 - w - 1)
            occ[r:r + h, c:c + w] = True
    return occ


def campus_map(seed: int = 11) -> np.ndarray:
    """120x120 open area with scattered rectangular buildings."""
    rng = np.random.default_rng(seed)
    occ = np.zeros((120, 120), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    placed = []
    tries = 0
    while len(placed) < 14 and tries < 2000:
        tries += 1
        h, w = rng.integers(6, 20, size=2)
        r, c = rng.integers(4, 116 - h), rng.integers(4, 116 - w)
        if any(r < pr + ph + 5 and pr < r + h + 5 and c < pc + pw + 5 and pc < c + w + 5
               for pr, pc, ph, pw in placed):
            continue
        if r <= 62 <= r + h + 3 and c <= 62 <= c + w + 3:
            continue
        placed.append((r, c, h, w))
        occ[r:r + h, c:c + w] = True
    return occ


def write_bundled(directory=None) -> None:
    directory = Path(directory) if directory is not None else Path(str(DATA))
    directory.mkdir(parents=True, exist_ok=True)
    save_environment_pgm(directory / "structured.pgm", structured_map())
    save_environment_pgm(directory / "campus.pgm", campus_map())


def load_environment(name_or_path, resolution: float = None, spawn=None) -> Environment:
    """Load a bundled environment by name or any PGM file by path."""
    if name_or_path == "structured":
        truth = load_environment_pgm(DATA / "structured.pgm")
        res = resolution or STRUCTURED_RESOLUTION
        spawn = spawn or (5.125, 5.125, 0.0)
    elif name_or_path == "campus":
        truth = load_environment_pgm(DATA / "campus.pgm")
        res = resolution or CAMPUS_RESOLUTION
        spawn = spawn or (62.5, 62.5, 0.0)
    else:
        truth = load_environment_pgm(name_or_path)
        res = resolution or STRUCTURED_RESOLUTION
        if spawn is None:
            raise ValueError("a spawn pose is required for custom environments")
    grid = GridSpec((0.0, 0.0), res, truth.shape[1], truth.shape[0])
    name = name_or_path if name_or_path in ("structured", "campus") else Path(name_or_path).stem
    return Environment(name, truth, grid, Pose2(*spawn))
