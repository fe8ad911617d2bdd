"""Range-finder measurement model, scan simulation and training-set construction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .geometry import GridSpec, Pose2, Ray, cast_ray, world_to_cell

OCCUPIED_LABEL = 1.0
FREE_LABEL = -1.0


@dataclass(frozen=True)
class BeamModelConfig:
    """Four-component beam mixture (hit, short, max, random).

    ``max_band`` is the width of the interval below ``r_max`` over which the
    max-range point mass is spread so that it has a finite density.
    """

    sigma_hit: float = 0.03
    lambda_short: float = 0.2
    r_max: float = 4.0
    z_hit: float = 0.7
    z_short: float = 0.1
    z_max: float = 0.1
    z_rand: float = 0.1
    max_band: float = 0.3

    def __post_init__(self):
        weights = (self.z_hit, self.z_short, self.z_max, self.z_rand)
        if min(weights) < 0:
            raise ValueError("mixture weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must sum to 1, got {sum(weights)}")
        if not (self.sigma_hit > 0 and self.lambda_short > 0 and self.r_max > 0):
            raise ValueError("sigma_hit, lambda_short and r_max must be positive")
        if not 0 < self.max_band <= self.r_max:
            raise ValueError("max_band must lie in (0, r_max]")

    @classmethod
    def from_weights(cls, z_hit, z_short, z_max, z_rand, **kw) -> "BeamModelConfig":
        """Build a config from unnormalized mixture weights."""
        total = z_hit + z_short + z_max + z_rand
        if total <= 0:
            raise ValueError("at least one mixture weight must be positive")
        return cls(z_hit=z_hit / total, z_short=z_short / total,
                   z_max=z_max / total, z_rand=z_rand / total, **kw)


def beam_likelihood(z, expected, cfg: BeamModelConfig):
    """Density of measuring range ``z`` when the beam should stop at ``expected``.

    Broadcasts over array inputs.  The hit Gaussian is truncated to
    [0, r_max] and the short-return exponential to [0, expected]; both are
    renormalized on their support.
    """
    z = np.asarray(z, dtype=float)
    e = np.asarray(expected, dtype=float)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(e))):
        raise ValueError("beam_likelihood requires finite inputs")
    r_max = cfg.r_max
    inside = (z >= 0.0) & (z <= r_max)

    s = cfg.sigma_hit
    eta = ndtr((r_max - e) / s) - ndtr(-e / s)
    gauss = np.exp(-0.5 * ((z - e) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    p_hit = np.where(inside, gauss / np.maximum(eta, 1e-300), 0.0)

    lam = cfg.lambda_short
    with np.errstate(divide="ignore", invalid="ignore"):
        short_norm = -np.expm1(-lam * e)
        p_short = np.where((z >= 0.0) & (z <= e) & (short_norm > 0),
                           lam * np.exp(-lam * z) / short_norm, 0.0)

    p_max = np.where((z >= r_max - cfg.max_band) & (z <= r_max), 1.0 / cfg.max_band, 0.0)
    p_rand = np.where(inside, 1.0 / r_max, 0.0)

    out = cfg.z_hit * p_hit + cfg.z_short * p_short + cfg.z_max * p_max + cfg.z_rand * p_rand
    return float(out) if out.ndim == 0 else out


def unknown_cell_likelihood(z, cfg: BeamModelConfig):
    """Likelihood of a range when no map cell along the beam reflects it."""
    z = np.asarray(z, dtype=float)
    out = np.where((z >= 0.0) & (z <= cfg.r_max), 1.0 / cfg.r_max, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class Scan:
    pose: Pose2
    ranges: np.ndarray
    bearings: np.ndarray
    r_max: float

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        self.bearings = np.asarray(self.bearings, dtype=float)
        if self.ranges.shape != self.bearings.shape:
            raise ValueError("ranges and bearings differ in length")
        if np.any(self.ranges < 0) or np.any(self.ranges > self.r_max):
            raise ValueError("ranges must lie in [0, r_max]")
        if self.bearings.size > 1 and np.any(np.diff(self.bearings) <= 0):
            raise ValueError("bearings must be strictly increasing")

    @property
    def n_z(self) -> int:
        return int(self.ranges.size)

    @property
    def hits(self) -> np.ndarray:
        return self.ranges < self.r_max

    def with_pose(self, pose: Pose2) -> "Scan":
        return Scan(pose, self.ranges.copy(), self.bearings.copy(), self.r_max)


@dataclass
class TrainingSet:
    occupied: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    free: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    @property
    def X(self) -> np.ndarray:
        return np.vstack([self.occupied, self.free])

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([np.full(len(self.occupied), OCCUPIED_LABEL),
                               np.full(len(self.free), FREE_LABEL)])

    def __len__(self):
        return len(self.occupied) + len(self.free)

    @classmethod
    def concat(cls, sets) -> "TrainingSet":
        sets = list(sets)
        if not sets:
            return cls()
        return cls(np.vstack([s.occupied for s in sets]), np.vstack([s.free for s in sets]))


def beam_bearings(n_z: int) -> np.ndarray:
    """``n_z`` bearings evenly spaced over a full turn, starting at -pi."""
    return -math.pi + 2.0 * math.pi * np.arange(n_z) / n_z


def simulate_scan(true_pose: Pose2, truth: np.ndarray, grid: GridSpec, n_z: int,
                  r_max: float, range_sigma: float = 0.0, rng=None) -> Scan:
    """Ray-cast ``n_z`` beams over a binary ground-truth grid.

    Hits get additive Gaussian range noise and are clamped to [0, r_max];
    misses read exactly ``r_max``.
    """
    cell = world_to_cell(true_pose.position, grid)
    if cell is None:
        raise ValueError("pose outside the map")
    if truth[cell[1], cell[0]]:
        raise ValueError(f"pose {true_pose} lies in an occupied cell")
    rng = np.random.default_rng(rng)
    bearings = beam_bearings(n_z)
    noise = rng.normal(0.0, range_sigma, size=n_z) if range_sigma > 0 else np.zeros(n_z)
    occ = truth.astype(float)
    ranges = np.empty(n_z)
    for k, b in enumerate(bearings):
        rc = cast_ray(Ray(true_pose.position, true_pose.heading + b, r_max), occ, grid, 0.5)
        ranges[k] = min(max(rc.range + noise[k], 0.0), r_max) if rc.hit else r_max
    return Scan(true_pose, ranges, bearings, r_max)


def build_training_data(scan: Scan, n_f_min: int = 1, free_spacing: float = 0.5,
                        margin: float = 0.0, mode: str = "equidistant", rng=None) -> TrainingSet:
    """Occupied endpoints and free samples along every beam of ``scan``.

    Each beam of range ``r`` contributes ``max(n_f_min, ceil(r / free_spacing))``
    free points on the segment from the sensor to ``r - margin``.  Equidistant
    points sit at ``(j + 1) / n`` of that segment, so the last one lies
    exactly ``margin`` before the endpoint and free space is covered right
    up to obstacles without colliding with the occupied label.  With no
    margin the points sit at ``(j + 1) / (n + 1)`` of the full beam.  Max-range
    readings only give free points.
    """
    if mode not in ("equidistant", "uniform"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    rng = np.random.default_rng(rng) if mode == "uniform" else None
    pose = scan.pose
    angles = pose.heading + scan.bearings
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    origin = np.array(pose.position)
    hits = scan.hits

    occupied = origin + scan.ranges[hits, None] * dirs[hits]

    free = []
    for k in range(scan.n_z):
        r = scan.ranges[k]
        length = r - margin
        if length <= 0:
            continue
        n = max(int(n_f_min), int(math.ceil(r / free_spacing - 1e-9)))
        if mode == "equidistant":
            # without a margin keep the last point off the endpoint itself
            delta = length * (np.arange(n) + 1.0) / (n if margin > 0 else n + 1)
        else:
            delta = rng.uniform(0.0, length, size=n)
            delta = delta[delta > 0]
        free.append(origin + delta[:, None] * dirs[k])
    free = np.vstack(free) if free else np.empty((0, 2))
    return TrainingSet(occupied.reshape(-1, 2), free)
