"""Greedy action selection for the four exploration policies.

NF and GPNF pick the frontier with the shortest path.  OGMI and GPMI add
the information a full scan at the frontier would yield, traded against
path length by ``alpha``.  NF/OGMI plan on the occupancy grid, GPNF/GPMI on
the merged GP map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .frontier import MacroAction
from .geometry import GridSpec, Pose2
from .mi import MIConfig, build_mi_map, total_information
from .planning import PlanResult, astar  # noqa: F401  re-exported
from .sensor import BeamModelConfig

POLICIES = ("NF", "OGMI", "GPNF", "GPMI")


@dataclass(frozen=True)
class UtilityConfig:
    policy: str = "GPMI"
    alpha: float = 0.1

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def uses_information(self) -> bool:
        return self.policy in ("OGMI", "GPMI")

    @property
    def uses_gp_map(self) -> bool:
        return self.policy in ("GPNF", "GPMI")


class Evaluation(NamedTuple):
    action: MacroAction
    information: float
    cost: float
    utility: float


def evaluate_action(action: MacroAction, prob: np.ndarray, grid: GridSpec, cfg: UtilityConfig,
                    mi_cfg: MIConfig = MIConfig(),
                    beam: Optional[BeamModelConfig] = None) -> Evaluation:
    """Utility ``alpha * f_I - f_c`` (information policies) or ``-f_c``."""
    if not action.reachable:
        raise ValueError("action is not reachable")
    info = 0.0
    if cfg.uses_information and cfg.alpha > 0:
        vantage = Pose2(action.centroid[0], action.centroid[1], 0.0)
        info = total_information(build_mi_map(vantage, prob, grid, mi_cfg, beam))
    utility = cfg.alpha * info - action.path_cost if cfg.uses_information else -action.path_cost
    return Evaluation(action, info, action.path_cost, utility)


def _rank_key(ev: Evaluation):
    # highest utility, then shortest path, then lowest centroid
    return (-ev.utility, ev.cost, ev.action.centroid[0], ev.action.centroid[1])


def select_action(actions: Sequence[MacroAction], prob: np.ndarray, grid: GridSpec,
                  cfg: UtilityConfig, mi_cfg: MIConfig = MIConfig(),
                  beam: Optional[BeamModelConfig] = None):
    """Best action and every evaluation, or ``(None, [])`` when the set is empty
    (mission complete)."""
    if not actions:
        return None, []
    evals = [evaluate_action(a, prob, grid, cfg, mi_cfg, beam) for a in actions]
    best = min(evals, key=_rank_key)
    return best, evals


@dataclass
class DecisionRecord:
    step: int
    policy: str
    n_actions: int
    chosen_cx: float
    chosen_cy: float
    f_I: float
    f_c: float
    u: float

    HEADER = "step,policy,n_actions,chosen_cx,chosen_cy,f_I,f_c,u"

    def row(self) -> str:
        vals = [self.chosen_cx, self.chosen_cy, self.f_I, self.f_c, self.u]
        return f"{self.step},{self.policy},{self.n_actions}," + ",".join("%.17g" % v for v in vals)


def write_decision_log(path, records: List[DecisionRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(DecisionRecord.HEADER + "\n")
        for r in records:
            fh.write(r.row() + "\n")

