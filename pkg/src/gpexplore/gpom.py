"""Incremental Gaussian-process occupancy maps (I-GPOM and I-GPOM2).

Local GPs are evaluated on a window of global cell centers around the robot
and fused point-wise into the global map with the Bayesian committee
machine under an uninformative prior.  Occupancy probabilities come from
squashing the fused mean, moderated by its variance.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from . import gp
from .geometry import GridSpec, Pose2
from .sensor import Scan, TrainingSet, build_training_data

log = logging.getLogger(__name__)

PRIOR_VARIANCE = 1e6
EPS = 1e-6


class EmptyTrainingSetWarning(UserWarning):
    pass


@dataclass
class MappingConfig:
    window_half_extent: float = 4.0
    n_f_min: int = 1
    free_spacing: float = 0.5
    sampling: str = "equidistant"
    gamma: float = 1.0
    prior_variance: float = PRIOR_VARIANCE
    variance_floor: float = gp.VARIANCE_FLOOR


@dataclass
class GaussianMap:
    grid: GridSpec
    mu: np.ndarray
    var: np.ndarray
    prob: np.ndarray
    observed: np.ndarray

    @classmethod
    def prior(cls, grid: GridSpec, prior_variance: float = PRIOR_VARIANCE) -> "GaussianMap":
        return cls(grid, np.zeros(grid.shape), np.full(grid.shape, float(prior_variance)),
                   np.full(grid.shape, 0.5), np.zeros(grid.shape, dtype=bool))

    def copy(self) -> "GaussianMap":
        return GaussianMap(self.grid, self.mu.copy(), self.var.copy(),
                           self.prob.copy(), self.observed.copy())


@dataclass
class MapPair:
    occupied: GaussianMap
    free: GaussianMap
    merged: GaussianMap

    @classmethod
    def prior(cls, grid: GridSpec, prior_variance: float = PRIOR_VARIANCE) -> "MapPair":
        m_o = GaussianMap.prior(grid, prior_variance)
        m_f = GaussianMap.prior(grid, prior_variance)
        return cls(m_o, m_f, merge_maps(m_o, m_f))

    def copy(self) -> "MapPair":
        return MapPair(self.occupied.copy(), self.free.copy(), self.merged.copy())


@dataclass
class Window:
    rows: slice
    cols: slice
    points: np.ndarray  # (n, 2) cell centers, row-major over the window

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows.stop - self.rows.start, self.cols.stop - self.cols.start)

    def __len__(self):
        return len(self.points)


def test_data_window(pose: Pose2, half_extent: float, grid: GridSpec) -> Window:
    """Cell centers of all in-bounds cells inside the square of side
    ``2 * half_extent`` centered on ``pose``."""
    if not half_extent > 0:
        raise ValueError("half_extent must be positive")
    res = grid.resolution
    tol = 1e-9
    fx = (pose.x - grid.origin[0]) / res - 0.5
    fy = (pose.y - grid.origin[1]) / res - 0.5
    h = half_extent / res
    c0 = max(int(np.ceil(fx - h - tol)), 0)
    c1 = min(int(np.floor(fx + h + tol)), grid.width - 1)
    r0 = max(int(np.ceil(fy - h - tol)), 0)
    r1 = min(int(np.floor(fy + h + tol)), grid.height - 1)
    if c1 < c0 or r1 < r0:
        return Window(slice(0, 0), slice(0, 0), np.empty((0, 2)))
    xs = grid.origin[0] + (np.arange(c0, c1 + 1) + 0.5) * res
    ys = grid.origin[1] + (np.arange(r0, r1 + 1) + 0.5) * res
    X, Y = np.meshgrid(xs, ys)
    return Window(slice(r0, r1 + 1), slice(c0, c1 + 1), np.column_stack([X.ravel(), Y.ravel()]))


def fuse_bcm(mu_a, var_a, mu_b, var_b):
    """Point-wise Bayesian committee machine fusion of two Gaussian estimates."""
    var_c = 1.0 / (1.0 / var_a + 1.0 / var_b)
    mu_c = var_c * (mu_a / var_a + mu_b / var_b)
    return mu_c, var_c


def logistic_occupancy(mu, var, gamma: float = 1.0, eps: float = EPS):
    """Squash a Gaussian latent value into an occupancy probability.

    The mean is scaled by the inverse standard deviation, so uncertain
    cells are pulled towards 0.5.
    """
    p = expit(gamma * np.asarray(mu) / np.sqrt(var))
    return np.clip(p, eps, 1.0 - eps)


def _fuse_window(m: GaussianMap, win: Window, pred: gp.Prediction, cfg: MappingConfig) -> None:
    rows, cols = win.rows, win.cols
    shape = win.shape
    mu, var = fuse_bcm(m.mu[rows, cols], m.var[rows, cols],
                       pred.mean.reshape(shape), pred.variance.reshape(shape))
    var = np.maximum(var, cfg.variance_floor)
    m.mu[rows, cols] = mu
    m.var[rows, cols] = var
    m.prob[rows, cols] = logistic_occupancy(mu, var, cfg.gamma)
    m.observed[rows, cols] = True


def _inside(points: np.ndarray, grid: GridSpec) -> np.ndarray:
    if len(points) == 0:
        return points.reshape(0, 2)
    _, _, inside = grid.world_to_cells(points)
    return points[inside]


def scan_training_data(scan: Scan, grid: GridSpec, cfg: MappingConfig, rng=None) -> TrainingSet:
    ts = build_training_data(scan, cfg.n_f_min, cfg.free_spacing, grid.resolution,
                             cfg.sampling, rng)
    return TrainingSet(_inside(ts.occupied, grid), _inside(ts.free, grid))


def igpom_step(m: GaussianMap, scan: Scan, params: gp.Hyperparameters,
               cfg: MappingConfig, rng=None) -> GaussianMap:
    """Fuse one scan into a single-GP occupancy map."""
    ts = scan_training_data(scan, m.grid, cfg, rng)
    if len(ts) == 0:
        warnings.warn("scan produced no training points inside the map", EmptyTrainingSetWarning)
        return m.copy()
    win = test_data_window(scan.pose, cfg.window_half_extent, m.grid)
    out = m.copy()
    if len(win) == 0:
        return out
    model = gp.fit(ts.X, ts.y, params.kernel, params.noise_variance)
    _fuse_window(out, win, gp.predict(model, win.points, cfg.variance_floor), cfg)
    return out


def merge_maps(m_o: GaussianMap, m_f: GaussianMap, gamma: float = 1.0,
               window: Optional[Window] = None, into: Optional[GaussianMap] = None) -> GaussianMap:
    """Cell-wise BCM merge of the occupied and free maps, then squash."""
    if m_o.grid != m_f.grid:
        raise ValueError("maps must share a grid")
    if into is None:
        mu, var = fuse_bcm(m_o.mu, m_o.var, m_f.mu, m_f.var)
        return GaussianMap(m_o.grid, mu, var, logistic_occupancy(mu, var, gamma),
                           m_o.observed | m_f.observed)
    r, c = window.rows, window.cols
    mu, var = fuse_bcm(m_o.mu[r, c], m_o.var[r, c], m_f.mu[r, c], m_f.var[r, c])
    into.mu[r, c] = mu
    into.var[r, c] = var
    into.prob[r, c] = logistic_occupancy(mu, var, gamma)
    into.observed[r, c] = m_o.observed[r, c] | m_f.observed[r, c]
    return into


def igpom2_step(maps: MapPair, scan: Scan, params_o: gp.Hyperparameters,
                params_f: gp.Hyperparameters, cfg: MappingConfig, rng=None) -> MapPair:
    """Fuse one scan into separate occupied/free GP maps and re-merge them."""
    ts = scan_training_data(scan, maps.merged.grid, cfg, rng)
    out = maps.copy()
    if len(ts) == 0:
        warnings.warn("scan produced no training points inside the map", EmptyTrainingSetWarning)
        return out
    win = test_data_window(scan.pose, cfg.window_half_extent, maps.merged.grid)
    if len(win) == 0:
        return out
    if len(ts.occupied):
        model_o = gp.fit(ts.occupied, np.ones(len(ts.occupied)),
                         params_o.kernel, params_o.noise_variance)
        _fuse_window(out.occupied, win, gp.predict(model_o, win.points, cfg.variance_floor), cfg)
    if len(ts.free):
        model_f = gp.fit(ts.free, -np.ones(len(ts.free)),
                         params_f.kernel, params_f.noise_variance)
        _fuse_window(out.free, win, gp.predict(model_f, win.points, cfg.variance_floor), cfg)
    merge_maps(out.occupied, out.free, cfg.gamma, window=win, into=out.merged)
    return out


def batch_gpom(scans: List[Scan], grid: GridSpec, params: gp.Hyperparameters,
               cfg: MappingConfig, rng=None) -> GaussianMap:
    """Single GP over the concatenated training data of all scans.

    Exact and cubic in the number of points; capped at
    ``gp.MAX_TRAINING_POINTS``.  Used as a reference for the incremental map.
    """
    rng = np.random.default_rng(rng)
    ts = TrainingSet.concat(scan_training_data(s, grid, cfg, rng) for s in scans)
    if len(ts) == 0:
        raise ValueError("no training data")
    model = gp.fit(ts.X, ts.y, params.kernel, params.noise_variance)
    X, Y = grid.cell_centers()
    pred = gp.predict(model, np.column_stack([X.ravel(), Y.ravel()]), cfg.variance_floor)
    m = GaussianMap.prior(grid, cfg.prior_variance)
    mu, var = fuse_bcm(m.mu, m.var, pred.mean.reshape(grid.shape), pred.variance.reshape(grid.shape))
    m.mu, m.var = mu, np.maximum(var, cfg.variance_floor)
    m.prob = logistic_occupancy(m.mu, m.var, cfg.gamma)
    m.observed[:] = True
    return m


def bernoulli_entropy(p):
    p = np.clip(np.asarray(p, dtype=float), EPS, 1.0 - EPS)
    return -(p * np.log(p) + (1.0 - p) * np.log1p(-p))


def jsd(p, q) -> float:
    """Mean per-cell Jensen-Shannon divergence (nats) of two Bernoulli fields."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("fields differ in shape")
    d = bernoulli_entropy(0.5 * (p + q)) - 0.5 * (bernoulli_entropy(p) + bernoulli_entropy(q))
    return float(np.mean(np.maximum(d, 0.0)))


@dataclass
class RegenState:
    threshold: float = 0.025
    known_margin: float = 0.4
    cumulative_jsd: float = 0.0
    scan_history: List[Scan] = field(default_factory=list)
    regenerations: int = 0


def drift_jsd(before: np.ndarray, after: np.ndarray, known_margin: float) -> float:
    """Mean JSD over the cells already confidently known in ``before``.

    Newly observed cells are excluded so ordinary exploration does not
    read as drift.  Returns 0 when nothing is known yet.
    """
    before = np.asarray(before, dtype=float)
    after = np.asarray(after, dtype=float)
    known = np.abs(before - 0.5) >= known_margin
    if not known.any():
        return 0.0
    return jsd(before[known], after[known])


def occupancy_of(m) -> np.ndarray:
    """Occupancy probabilities of a single map or the merged field of a pair."""
    return m.merged.prob if isinstance(m, MapPair) else m.prob


def maybe_regenerate(state: RegenState, before, after, rebuild: Callable[[List[Scan]], object]):
    """Accumulate map drift and rebuild from the scan history past the threshold.

    ``before``/``after`` are GaussianMaps or MapPairs.  Returns the
    (possibly rebuilt) map and the updated state.
    """
    state.cumulative_jsd += drift_jsd(occupancy_of(before), occupancy_of(after), state.known_margin)
    if state.cumulative_jsd > state.threshold:
        log.info("cumulative JSD %.4f > %.4f: regenerating from %d scans",
                 state.cumulative_jsd, state.threshold, len(state.scan_history))
        rebuilt = rebuild(state.scan_history)
        state.cumulative_jsd = 0.0
        state.regenerations += 1
        return rebuilt, state
    return after, state
