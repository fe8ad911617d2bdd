"""Mutual information between an occupancy map and a future 360-degree scan.

For every beam the cells along it (up to the first cell that is likely
occupied) are treated as independent Bernoulli variables.  The expected
posterior entropy of each cell is integrated numerically over the range
measurement, using the beam mixture model for "the beam stops at cell j"
and a uniform density when no cell on the beam reflects it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import GridSpec, Pose2, Ray, cast_ray, world_to_cell
from .gpom import EPS, bernoulli_entropy
from .sensor import BeamModelConfig, beam_bearings, beam_likelihood, unknown_cell_likelihood


@dataclass(frozen=True)
class MIConfig:
    n_z: int = 133
    r_max: float = 4.0
    s_z: float = 10.0 / 3.0
    p_o: float = 0.65
    p_f: float = 0.35

    def __post_init__(self):
        if self.n_z < 1 or not self.r_max > 0 or not self.s_z > 0:
            raise ValueError("n_z, r_max and s_z must be positive")
        if not 0.5 < self.p_o < 1.0:
            raise ValueError("p_o must lie in (0.5, 1)")
        if not 0.0 < self.p_f < self.p_o:
            raise ValueError("p_f must lie in (0, p_o)")

    def beam_model(self, base: Optional[BeamModelConfig] = None) -> BeamModelConfig:
        """Mixture model at this range, max readings smeared over one integration step."""
        base = base or BeamModelConfig()
        return BeamModelConfig(base.sigma_hit, base.lambda_short, self.r_max, base.z_hit,
                               base.z_short, base.z_max, base.z_rand,
                               min(1.0 / self.s_z, self.r_max))


@dataclass
class MIMap:
    grid: GridSpec
    info: np.ndarray
    perceived: np.ndarray  # cells on at least one beam


def cell_entropy(p):
    return bernoulli_entropy(p)


def integration_ranges(z_hat: float, s_z: float) -> np.ndarray:
    """``1/s_z, 2/s_z, ...`` up to and including ``z_hat``."""
    n = int(np.floor(z_hat * s_z + 1e-9))
    return np.arange(1, n + 1) / s_z


def beam_information(probs, distances, z_hat: float, s_z: float,
                     model: BeamModelConfig) -> np.ndarray:
    """Expected entropy reduction of each cell along one beam.

    ``probs`` are occupancy probabilities of the in-beam cells in order,
    ``distances`` the range at which the beam reaches each of them.  The
    posterior of cell i given range z sums two cases: the beam stops at i,
    or it stops earlier at j < i, which leaves cell i at its prior.
    """
    m = np.clip(np.asarray(probs, dtype=float), EPS, 1.0 - EPS)
    d = np.asarray(distances, dtype=float)
    zs = integration_ranges(z_hat, s_z)
    h = bernoulli_entropy(m)
    if m.size == 0 or zs.size == 0:
        return np.maximum(h, 0.0)
    free_before = np.concatenate([[1.0], np.cumprod(1.0 - m)[:-1]])
    w = m * free_before  # probability that the beam stops at cell j
    like = beam_likelihood(zs[:, None], d[None, :], model)  # (Z, K)
    stop = like * w
    p_z = unknown_cell_likelihood(zs, model) * np.prod(1.0 - m) + stop.sum(axis=1)
    earlier = np.cumsum(stop, axis=1) - stop
    post = (stop + m * earlier) / p_z[:, None]
    h_post = bernoulli_entropy(post)
    h_bar = (p_z[:, None] * h_post).sum(axis=0) / s_z
    return np.maximum(h - h_bar, 0.0)


def trace_beams(vantage: Pose2, prob: np.ndarray, grid: GridSpec, cfg: MIConfig):
    """Yield (cells, entry distances, expected range) for every beam."""
    for b in beam_bearings(cfg.n_z):
        rc = cast_ray(Ray(vantage.position, vantage.heading + b, cfg.r_max), prob, grid, cfg.p_o)
        yield rc.cells, rc.entry, rc.range


def build_mi_map(vantage: Pose2, prob: np.ndarray, grid: GridSpec, cfg: MIConfig = MIConfig(),
                 model: Optional[BeamModelConfig] = None) -> MIMap:
    """Per-cell information gain of a full scan taken at ``vantage``.

    Cells off every beam keep their current entropy.  A cell crossed by
    several beams receives the sum of the per-beam gains, capped at its
    entropy.
    """
    prob = np.clip(np.asarray(prob, dtype=float), EPS, 1.0 - EPS)
    cell = world_to_cell(vantage.position, grid)
    if cell is None:
        raise ValueError("vantage outside the map")
    if not prob[cell[1], cell[0]] < cfg.p_f:
        raise ValueError(f"vantage {vantage.position} is not in a free cell")
    model = cfg.beam_model(model)
    h = bernoulli_entropy(prob)
    gain = np.zeros(grid.shape)
    perceived = np.zeros(grid.shape, dtype=bool)
    for cells, entry, z_hat in trace_beams(vantage, prob, grid, cfg):
        if not cells:
            continue
        ix = np.array([c[0] for c in cells])
        iy = np.array([c[1] for c in cells])
        gain_b = beam_information(prob[iy, ix], entry, z_hat, cfg.s_z, model)
        np.add.at(gain, (iy, ix), gain_b)
        perceived[iy, ix] = True
    info = np.where(perceived, np.minimum(gain, h), h)
    return MIMap(grid, info, perceived)


def total_information(mi: MIMap) -> float:
    """Sum of information over the cells seen by at least one beam, each once."""
    return float(mi.info[mi.perceived].sum())
