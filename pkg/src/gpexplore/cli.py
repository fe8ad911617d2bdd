"""Command line entry point: ``gpexplore {map,explore,mi,frontier,bench}``.

Every command writes its artifacts into one output directory: ``--out`` if
given, otherwise a per-command folder under ``$GPEXPLORE_OUT`` (default
``runs``).  The effective configuration is saved next to the artifacts as
``config.txt`` so a run can be repeated with ``--config``.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import config as cfgmod
from . import envs, gpom, mapio, metrics, ogm, scenes, sim
from .explore import POLICIES
from .frontier import build_frontier_map, extract_macro_actions
from .geometry import Pose2
from .mi import build_mi_map, total_information

log = logging.getLogger("gpexplore")

OUT_ENV = "GPEXPLORE_OUT"
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_STEP_CAP = 3


class CommandError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _base_config(command: str) -> cfgmod.RunConfig:
    base = cfgmod.RunConfig()
    if command in ("map", "frontier"):
        # the bundled sparse log is mapped with coarser free sampling
        base = replace(base, sim=replace(base.sim, mapping=scenes.SPARSE_MAPPING))
    return base


def _run_config(args, command: str) -> cfgmod.RunConfig:
    base = _base_config(command)
    cfg = cfgmod.load(args.config, base) if args.config else base
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.policy is not None:
        cfg = cfg.with_policy(args.policy)
    if args.perfect_pose:
        cfg = replace(cfg, sim=replace(cfg.sim, perfect_pose=True))
    return cfg


def _out_dir(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs")) / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _environment(cfg: cfgmod.RunConfig, fallback_spawn=None) -> envs.Environment:
    spawn = cfg.spawn
    if spawn is None and cfg.environment not in ("structured", "campus"):
        spawn = fallback_spawn
    return envs.load_environment(cfg.environment, cfg.resolution, spawn)


def _read_scans(path) -> list:
    path = Path(path) if path else envs.DATA / scenes.SPARSE_LOG
    if not Path(path).exists():
        raise CommandError(f"scan log not found: {path}")
    try:
        return mapio.read_scan_log(path)
    except ValueError as e:
        raise CommandError(str(e)) from None


def _write_gaussian(out: Path, stem: str, m: gpom.GaussianMap) -> None:
    mapio.write_pgm(out / f"{stem}.pgm", mapio.probability_image(m.prob))
    mapio.write_map_csv(out / f"{stem}.csv", m.grid, m.mu, m.var, m.prob)


def _parse_point(text: str):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}") from None
    return x, y


# ---------------------------------------------------------------- commands

def cmd_map(args) -> int:
    cfg = _run_config(args, "map")
    scans = _read_scans(args.scans)
    first = scans[0].pose
    env = _environment(cfg, (first.x, first.y, first.heading))
    out = _out_dir(args, "map")
    mcfg, params = cfg.sim.mapping, cfg.sim.gp
    rng = np.random.default_rng(cfg.seed)
    single = gpom.GaussianMap.prior(env.grid, mcfg.prior_variance)
    pair = gpom.MapPair.prior(env.grid, mcfg.prior_variance)
    grid_map = ogm.LogOddsGrid.empty(env.grid)
    t_inc = 0.0
    for s in scans:
        t0 = time.perf_counter()
        single = gpom.igpom_step(single, s, params.joint, mcfg, rng)
        t_inc += time.perf_counter() - t0
        pair = gpom.igpom2_step(pair, s, params.occupied, params.free, mcfg, rng)
        grid_map = ogm.ogm_update(grid_map, s)
    mask = grid_map.observed
    rows = [("igpom", single.prob), ("igpom2", pair.merged.prob), ("ogm", grid_map.prob)]
    _write_gaussian(out, "igpom", single)
    _write_gaussian(out, "igpom2", pair.merged)
    mapio.write_pgm(out / "ogm.pgm", mapio.probability_image(grid_map.prob))
    mapio.write_field_csv(out / "ogm.csv", env.grid, grid_map.prob, "p")
    if args.batch_oracle:
        t0 = time.perf_counter()
        try:
            batch = gpom.batch_gpom(scans, env.grid, params.joint, mcfg, rng)
        except ValueError as e:
            raise CommandError(f"batch oracle: {e}") from None
        t_batch = time.perf_counter() - t0
        _write_gaussian(out, "batch", batch)
        rows.append(("batch", batch.prob))
    scores = [(name, metrics.auc(p, env.truth, mask)) for name, p in rows]
    with open(out / "auc.csv", "w", newline="") as fh:
        fh.write("map,auc\n")
        for name, a in scores:
            fh.write(f"{name},{mapio.format_float(a)}\n")
    cfgmod.save(out / "config.txt", cfg)
    print(f"{len(scans)} scans, {int(mask.sum())} observed cells")
    for name, a in scores:
        print(f"  {name:<7} AUC {a:.4f}")
    if args.batch_oracle:
        delta = abs(scores[0][1] - scores[-1][1])
        print(f"  |AUC(igpom) - AUC(batch)| = {delta:.4f}")
        print(f"  incremental {t_inc / len(scans) * 1e3:.1f} ms/scan, batch {t_batch * 1e3:.1f} ms")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_explore(args) -> int:
    cfg = _run_config(args, "explore")
    if args.step_cap is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, step_cap=args.step_cap))
    env = _environment(cfg)
    out = _out_dir(args, f"explore-{cfg.policy}-{env.name}-s{cfg.seed}")
    try:
        result = sim.run_exploration(env, cfg.sim, cfg.seed, out)
    except RuntimeError as e:
        raise CommandError(str(e)) from None
    cfgmod.save(out / "config.txt", cfg)
    m = result.metrics
    print(f"{cfg.policy} on {env.name}, seed {cfg.seed}: {m.status} after {m.steps} steps")
    print(f"  travel {m.travel_distance:.2f} m, H {m.h_initial:.2f} -> {m.h_final:.2f} nats, "
          f"MER {m.mer:.3f}, AUC {m.auc:.4f}")
    print(f"artifacts in {out}")
    return EXIT_OK if m.status == sim.MISSION_COMPLETE else EXIT_STEP_CAP


def cmd_mi(args) -> int:
    cfg = _run_config(args, "mi")
    path = Path(args.map) if args.map else envs.DATA / scenes.CORRIDOR_MAP
    if args.map is None and args.vantage is None:
        args.vantage = scenes.CORRIDOR_VANTAGE
    if args.vantage is None:
        raise CommandError("--vantage x,y is required with a custom map")
    try:
        grid, fields = mapio.read_map_csv(path)
    except (OSError, ValueError) as e:
        raise CommandError(f"cannot read map {path}: {e}") from None
    if "p" not in fields:
        raise CommandError(f"{path} has no 'p' column")
    vantage = Pose2(args.vantage[0], args.vantage[1], 0.0)
    try:
        mi = build_mi_map(vantage, fields["p"], grid, cfg.sim.mi, cfg.sim.beam)
    except ValueError as e:
        raise CommandError(str(e)) from None
    out = _out_dir(args, "mi")
    mapio.write_field_pgm(out / "mi.pgm", mi.info, 0.0, math.log(2.0))
    mapio.write_field_csv(out / "mi.csv", grid, mi.info, "mi")
    cfgmod.save(out / "config.txt", cfg)
    print(f"total information at {args.vantage}: {total_information(mi):.4f} nats "
          f"over {int(mi.perceived.sum())} cells")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_frontier(args) -> int:
    cfg = _run_config(args, "frontier")
    scans = _read_scans(args.scans)
    last = scans[-1].pose
    env = _environment(cfg, (last.x, last.y, last.heading))
    mcfg, params = cfg.sim.mapping, cfg.sim.gp
    rng = np.random.default_rng(cfg.seed)
    pair = gpom.MapPair.prior(env.grid, mcfg.prior_variance)
    for s in scans:
        pair = gpom.igpom2_step(pair, s, params.occupied, params.free, mcfg, rng)
    fcfg = cfg.sim.frontier
    fmap = build_frontier_map(pair.merged, pair.occupied, fcfg.beta, fcfg.gamma_f)
    actions = extract_macro_actions(fmap, pair.merged.prob, last, fcfg)
    out = _out_dir(args, "frontier")
    mapio.write_field_pgm(out / "frontier.pgm", fmap.prob, 0.0, 1.0)
    mapio.write_field_csv(out / "frontier.csv", env.grid, fmap.prob, "f")
    _write_gaussian(out, "igpom2", pair.merged)
    mapio.write_actions_csv(out / "actions.csv", actions)
    cfgmod.save(out / "config.txt", cfg)
    print(f"{len(actions)} reachable frontier actions from ({last.x:.3f}, {last.y:.3f})")
    for a in actions:
        print(f"  ({a.centroid[0]:.3f}, {a.centroid[1]:.3f}) size {a.cluster_size} "
              f"cost {a.path_cost:.3f} m")
    print(f"artifacts in {out}")
    return EXIT_OK


def _bench_one(job):
    cfg, out = job
    env = _environment(cfg)
    result = sim.run_exploration(env, cfg.sim, cfg.seed, out)
    return cfg.policy, cfg.seed, sim.summary_row(cfg.policy, cfg.seed, result.metrics), \
        result.metrics.mer, result.metrics.h_final


def bench_summary(rows) -> List[tuple]:
    """Per-policy medians of MER and final entropy, in policy order."""
    out = []
    for policy in POLICIES:
        mers = [r[3] for r in rows if r[0] == policy]
        hs = [r[4] for r in rows if r[0] == policy]
        if mers:
            out.append((policy, len(mers), float(np.median(mers)), float(np.median(hs))))
    return out


def cmd_bench(args) -> int:
    cfg = _run_config(args, "bench")
    if args.step_cap is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, step_cap=args.step_cap))
    policies = [args.policy] if args.policy else list(POLICIES)
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    out = _out_dir(args, "bench")
    jobs = [(replace(cfg.with_policy(p), seed=s), out / p / f"seed{s:03d}")
            for p in policies for s in seeds]
    workers = args.workers or os.cpu_count() or 1
    if workers == 1:
        rows = [_bench_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_bench_one, jobs))
    rows.sort(key=lambda r: (POLICIES.index(r[0]), r[1]))
    with open(out / "runs.csv", "w", newline="") as fh:
        fh.write(sim.SUMMARY_HEADER + "\n")
        for r in rows:
            fh.write(r[2] + "\n")
    summary = bench_summary(rows)
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write("policy,runs,median_mer,median_h_final\n")
        for policy, n, mer, h in summary:
            fh.write(f"{policy},{n},{mapio.format_float(mer)},{mapio.format_float(h)}\n")
    cfgmod.save(out / "config.txt", cfg)
    for policy, n, mer, h in summary:
        print(f"  {policy:<5} {n} runs  median MER {mer:8.3f}  median H_final {h:8.3f}")
    print(f"artifacts in {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, batch: bool = False) -> None:
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--policy", choices=POLICIES, help="exploration policy (overrides the config)")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<command>)")
    p.add_argument("--perfect-pose", action="store_true", help="map with the true pose")
    if batch:
        p.add_argument("--batch-oracle", action="store_true",
                       help="also build the batch GP map and report the AUC difference")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpexplore", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="build I-GPOM, I-GPOM2 and OGM maps from a scan log")
    p.add_argument("scans", nargs="?", help="scan log CSV (default: bundled 25-scan log)")
    _common(p, batch=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("explore", help="run one closed-loop exploration")
    p.add_argument("--step-cap", type=int, help="maximum number of macro-actions")
    _common(p)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("mi", help="mutual information map for a vantage point")
    p.add_argument("map", nargs="?", help="map CSV with a 'p' column (default: bundled corridor)")
    p.add_argument("--vantage", type=_parse_point, help="x,y in meters")
    _common(p)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("frontier", help="frontier map and macro-actions from a scan log")
    p.add_argument("scans", nargs="?", help="scan log CSV (default: bundled 25-scan log)")
    _common(p)
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("bench", help="all policies over several seeds")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, starting at --seed")
    p.add_argument("--step-cap", type=int, help="maximum number of macro-actions per run")
    p.add_argument("--workers", type=int, default=0, help="worker processes (default: CPU count)")
    _common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, cfgmod.ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
