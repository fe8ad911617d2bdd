"""Closed-loop exploration simulator and run metrics.

One run: scan at the spawn pose, then repeatedly build frontiers, pick a
macro-action, follow its A* path cell by cell and scan every
``scan_stride`` cells.  Mapping uses the odometry estimate of the pose,
which drifts away from the truth.  Optionally a pose correction every
``correction_every`` scans stands in for a SLAM back end and spreads the
accumulated error over the scans since the previous correction.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import gp, gpom, mapio, ogm
from .envs import Environment
from .explore import DecisionRecord, UtilityConfig, select_action, write_decision_log
from .frontier import FrontierConfig, binary_frontier_map, build_frontier_map, extract_macro_actions
from .geometry import Pose2, normalize_angle, world_to_cell
from .metrics import auc, entropy_rate, map_entropy
from .mi import MIConfig
from .sensor import BeamModelConfig, Scan, simulate_scan

log = logging.getLogger(__name__)

MISSION_COMPLETE = "mission-complete"
STEP_CAP = "step-cap"


@dataclass(frozen=True)
class NoiseConfig:
    """Odometry noise per meter traveled (x, y, heading) and range noise."""

    odom_sigma: Tuple[float, float, float] = (0.1, 0.1, 0.0026)
    range_sigma: float = 0.03
    correction_sigma: Tuple[float, float, float] = (0.03, 0.03, 0.0013)
    correction_every: int = 0  # 0: pure odometry, no corrections

    def __post_init__(self):
        if min(self.odom_sigma) < 0 or self.range_sigma < 0 or min(self.correction_sigma) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if self.correction_every < 0:
            raise ValueError("correction_every must be non-negative")


@dataclass(frozen=True)
class GPParams:
    occupied: gp.Hyperparameters = gp.Hyperparameters(gp.KernelConfig("matern32", 0.15, 1.0), 0.01)
    free: gp.Hyperparameters = gp.Hyperparameters(gp.KernelConfig("matern32", 0.25, 1.0), 0.1)
    joint: gp.Hyperparameters = gp.Hyperparameters(gp.KernelConfig("matern32", 0.35, 1.0), 0.01)


@dataclass(frozen=True)
class SimConfig:
    utility: UtilityConfig = UtilityConfig()
    frontier: FrontierConfig = FrontierConfig()
    mi: MIConfig = MIConfig()
    beam: BeamModelConfig = BeamModelConfig()
    mapping: gpom.MappingConfig = field(default_factory=gpom.MappingConfig)
    gp: GPParams = GPParams()
    noise: NoiseConfig = NoiseConfig()
    n_z: int = 133
    sensor_range: float = 4.0
    scan_stride: int = 3
    step_cap: int = 500
    regen_threshold: float = 0.025
    perfect_pose: bool = False
    snapshot_every: int = 0
    revisit_cells: float = 2.0  # drop frontiers this close to an already reached goal


@dataclass
class RunMetrics:
    steps: int = 0
    scans: int = 0
    travel_distance: float = 0.0
    entropy: List[float] = field(default_factory=list)  # index 0 = prior map, then after each step
    h_final: float = float("nan")
    n_actions: List[int] = field(default_factory=list)
    regenerations: int = 0
    collisions: int = 0
    auc: float = float("nan")
    status: str = ""
    wall_time: Dict[str, float] = field(default_factory=dict)

    @property
    def mer(self) -> float:
        return entropy_rate(self.h_initial, self.h_final, self.steps)

    @property
    def h_initial(self) -> float:
        return self.entropy[0]


@dataclass
class RunResult:
    metrics: RunMetrics
    decisions: List[DecisionRecord]
    maps: object  # MapPair or LogOddsGrid
    observed: np.ndarray
    true_path: List[Tuple[float, float]]


class _Clock:
    def __init__(self):
        self.totals: Dict[str, float] = {}

    def add(self, phase: str, start: float) -> None:
        self.totals[phase] = self.totals.get(phase, 0.0) + time.perf_counter() - start


class Explorer:
    """State of one exploration run."""

    def __init__(self, env: Environment, cfg: SimConfig, seed: int = 0):
        self.env = env
        self.cfg = cfg
        ss = np.random.SeedSequence(seed)
        sense_seq, odom_seq, sample_seq = ss.spawn(3)
        self.sense_rng = np.random.default_rng(sense_seq)
        self.odom_rng = np.random.default_rng(odom_seq)
        self.sample_rng = np.random.default_rng(sample_seq)
        self.true_pose = env.spawn
        self.history: List[Scan] = []
        self.est_pose = env.spawn
        self.gp_mode = cfg.utility.uses_gp_map
        self.maps = (gpom.MapPair.prior(env.grid, cfg.mapping.prior_variance) if self.gp_mode
                     else ogm.LogOddsGrid.empty(env.grid))
        self.beam_grid = ogm.LogOddsGrid.empty(env.grid)  # beam coverage, used for scoring
        self.regen = gpom.RegenState(threshold=cfg.regen_threshold, scan_history=self.history)
        self.uncorrected: List[int] = []  # history indices since the last correction
        self.metrics = RunMetrics()
        self.clock = _Clock()
        self.blocked = np.zeros(env.grid.shape, dtype=bool)  # cells the robot bumped into
        self.reached: List[Tuple[float, float]] = []  # goals of completed actions
        self.true_path = [env.spawn.position]

    # sensing and mapping

    def prob(self) -> np.ndarray:
        return self.maps.merged.prob if self.gp_mode else self.maps.prob

    def sense(self) -> None:
        cfg = self.cfg
        truth_scan = simulate_scan(self.true_pose, self.env.truth, self.env.grid, cfg.n_z,
                                   cfg.sensor_range, cfg.noise.range_sigma, self.sense_rng)
        scan = truth_scan.with_pose(self.est_pose)
        self.history.append(scan)
        self.uncorrected.append(len(self.history) - 1)
        self.metrics.scans += 1
        t0 = time.perf_counter()
        if world_to_cell(scan.pose.position, self.env.grid) is not None:
            self.beam_grid = ogm.ogm_update(self.beam_grid, scan)
        before = self.maps
        self.maps = self._fuse(self.maps, scan)
        if self.gp_mode:
            self.maps, self.regen = gpom.maybe_regenerate(self.regen, before, self.maps,
                                                          self._rebuild)
            self.metrics.regenerations = self.regen.regenerations
        self.clock.add("mapping", t0)
        every = cfg.noise.correction_every
        if not cfg.perfect_pose and every and len(self.uncorrected) >= every:
            self._correct_pose()

    def _fuse(self, maps, scan: Scan):
        cfg = self.cfg
        if self.gp_mode:
            return gpom.igpom2_step(maps, scan, cfg.gp.occupied, cfg.gp.free, cfg.mapping,
                                    self.sample_rng)
        if world_to_cell(scan.pose.position, self.env.grid) is None:
            return maps
        return ogm.ogm_update(maps, scan)

    def _rebuild(self, scans: List[Scan]):
        maps = gpom.MapPair.prior(self.env.grid, self.cfg.mapping.prior_variance)
        for s in scans:
            maps = self._fuse(maps, s)
        return maps

    def _correct_pose(self) -> None:
        """Snap the estimate to a noisy copy of the truth and spread the
        correction linearly over the scans since the previous one."""
        sig = self.cfg.noise.correction_sigma
        t = self.true_pose
        corrected = Pose2(t.x + self.odom_rng.normal(0.0, sig[0]),
                          t.y + self.odom_rng.normal(0.0, sig[1]),
                          t.heading + self.odom_rng.normal(0.0, sig[2]))
        dx = corrected.x - self.est_pose.x
        dy = corrected.y - self.est_pose.y
        dh = normalize_angle(corrected.heading - self.est_pose.heading)
        n = len(self.uncorrected)
        for k, idx in enumerate(self.uncorrected):
            frac = (k + 1) / n
            p = self.history[idx].pose
            self.history[idx] = self.history[idx].with_pose(
                Pose2(p.x + frac * dx, p.y + frac * dy, p.heading + frac * dh))
        self.est_pose = corrected
        self.uncorrected = []

    # motion

    def step(self, frm, to) -> bool:
        """Execute the grid step ``frm -> to`` planned on the map.

        The true robot moves by the commanded displacement, so it stays
        offset from the plan by the current pose error.  A step into an
        occupied true cell, or cutting an occupied corner, is refused and the
        planned cell is remembered as blocked.
        """
        grid = self.env.grid
        (x0, y0), (x1, y1) = grid.cell_center(frm), grid.cell_center(to)
        dx, dy = x1 - x0, y1 - y0
        prev = self.true_pose
        nx, ny = prev.x + dx, prev.y + dy
        if self._hits_obstacle(prev.position, (nx, ny)):
            self.blocked[to[1], to[0]] = True
            self.metrics.collisions += 1
            return False
        step = math.hypot(dx, dy)
        heading = math.atan2(dy, dx) if step > 0 else prev.heading
        self.true_pose = Pose2(nx, ny, heading)
        self.metrics.travel_distance += step
        self.true_path.append((nx, ny))
        if self.cfg.perfect_pose:
            self.est_pose = self.true_pose
            return True
        # odometry applies the commanded step in the estimate's (rotated) frame
        sig = self.cfg.noise.odom_sigma
        e = self.est_pose
        err = e.heading - prev.heading
        c, s = math.cos(err), math.sin(err)
        self.est_pose = Pose2(e.x + c * dx - s * dy + self.odom_rng.normal(0.0, sig[0] * step),
                              e.y + s * dx + c * dy + self.odom_rng.normal(0.0, sig[1] * step),
                              heading + err + self.odom_rng.normal(0.0, sig[2] * step))
        return True

    def _hits_obstacle(self, a, b) -> bool:
        grid = self.env.grid
        cb = world_to_cell(b, grid)
        if cb is None or self.env.truth[cb[1], cb[0]]:
            return True
        ca = world_to_cell(a, grid)
        if ca is not None and ca[0] != cb[0] and ca[1] != cb[1]:
            return bool(self.env.truth[ca[1], cb[0]] or self.env.truth[cb[1], ca[0]])
        return False

    # decision making

    def candidate_actions(self):
        cfg = self.cfg
        prob = np.where(self.blocked, 1.0, self.prob())
        if self.gp_mode:
            fmap = build_frontier_map(self.maps.merged, self.maps.occupied,
                                      cfg.frontier.beta, cfg.frontier.gamma_f)
        else:
            fmap = binary_frontier_map(ogm.frontier_mask(self.maps, cfg.frontier.p_free),
                                       self.env.grid)
        robot = self.true_pose if cfg.perfect_pose else self.est_pose
        if world_to_cell(robot.position, self.env.grid) is None:
            robot = self.true_pose
        actions = extract_macro_actions(fmap, prob, robot, cfg.frontier)
        res = self.env.grid.resolution
        radius = cfg.revisit_cells * res
        return [a for a in actions if a.path_cost >= 1.5 * res
                and all(math.hypot(a.centroid[0] - gx, a.centroid[1] - gy) > radius
                        for gx, gy in self.reached)]

    def entropy(self) -> float:
        return map_entropy(self.prob(), self.env.grid.resolution)


def _boxed_in(env: Environment) -> bool:
    ix, iy = world_to_cell(env.spawn.position, env.grid)
    h, w = env.truth.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            nx, ny = ix + dx, iy + dy
            if (dx or dy) and 0 <= nx < w and 0 <= ny < h and not env.truth[ny, nx]:
                return False
    return True


def run_exploration(env: Environment, cfg: SimConfig = SimConfig(), seed: int = 0,
                    out_dir=None) -> RunResult:
    """Explore ``env`` with ``cfg.utility.policy`` until no frontier is left or
    ``cfg.step_cap`` macro-actions have been executed."""
    if _boxed_in(env):
        raise RuntimeError(f"robot is boxed in at spawn {env.spawn}")
    ex = Explorer(env, cfg, seed)
    m = ex.metrics
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    m.entropy.append(ex.entropy())  # all cells unknown
    decisions: List[DecisionRecord] = []
    status = STEP_CAP
    if cfg.step_cap > 0:
        ex.sense()
    for step in range(1, cfg.step_cap + 1):
        t0 = time.perf_counter()
        actions = ex.candidate_actions()
        ex.clock.add("frontier", t0)
        t0 = time.perf_counter()
        best, evals = select_action(actions, ex.prob(), env.grid, cfg.utility, cfg.mi, cfg.beam)
        ex.clock.add("utility", t0)
        if best is None:
            status = MISSION_COMPLETE
            break
        a = best.action
        decisions.append(DecisionRecord(step, cfg.utility.policy, len(actions), a.centroid[0],
                                        a.centroid[1], best.information, best.cost, best.utility))
        t0 = time.perf_counter()
        moved = 0
        for frm, to in zip(a.path, a.path[1:]):
            if not ex.step(frm, to):
                break
            moved += 1
            if moved % cfg.scan_stride == 0:
                ex.clock.add("motion", t0)
                ex.sense()
                t0 = time.perf_counter()
        else:
            ex.reached.append(a.centroid)
        ex.clock.add("motion", t0)
        if moved % cfg.scan_stride != 0 or moved == 0:
            ex.sense()
        m.steps = step
        m.n_actions.append(len(actions))
        m.entropy.append(ex.entropy())
        if out is not None and cfg.snapshot_every and step % cfg.snapshot_every == 0:
            mapio.write_pgm(out / f"map_{step:04d}.pgm", mapio.probability_image(ex.prob()))
    m.status = status
    m.h_final = ex.entropy()
    observed = ex.beam_grid.observed
    try:
        m.auc = auc(ex.prob(), env.truth, observed)
    except ValueError:
        m.auc = float("nan")
    m.wall_time = dict(ex.clock.totals)
    result = RunResult(m, decisions, ex.maps, observed, ex.true_path)
    if out is not None:
        write_run(out, result, seed)
    return result


SUMMARY_HEADER = "policy,seed,status,steps,scans,travel_distance,h_initial,h_final,mer,auc,regenerations,collisions"


def summary_row(policy: str, seed: int, m: RunMetrics) -> str:
    vals = [m.travel_distance, m.h_initial, m.h_final, m.mer, m.auc]
    return (f"{policy},{seed},{m.status},{m.steps},{m.scans},"
            + ",".join(mapio.format_float(v) for v in vals)
            + f",{m.regenerations},{m.collisions}")


def write_run(out: Path, result: RunResult, seed: int) -> None:
    m = result.metrics
    policy = result.decisions[0].policy if result.decisions else ""
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write(SUMMARY_HEADER + "\n" + summary_row(policy, seed, m) + "\n")
    write_decision_log(out / "decisions.csv", result.decisions)
    with open(out / "metrics.csv", "w", newline="") as fh:
        fh.write("step,map_entropy,n_actions\n")
        for k, h in enumerate(m.entropy):
            n = m.n_actions[k - 1] if k > 0 else 0
            fh.write(f"{k},{mapio.format_float(h)},{n}\n")
    prob = result.maps.merged.prob if isinstance(result.maps, gpom.MapPair) else result.maps.prob
    mapio.write_pgm(out / "map_final.pgm", mapio.probability_image(prob))
    (out / "timing.txt").write_text("".join(f"{k}={v:.3f}\n" for k, v in sorted(m.wall_time.items())))
