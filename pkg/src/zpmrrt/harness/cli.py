"""Command line entry point: ``zpmrrt <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..geom import ChainModel
from ..planner import classical_rrt, zpmrrt
from . import experiments as ex
from .config import Config, ConfigError, header_lines, load_config
from .plots import emit_plots, plot_tracking
from .scenes import dump_scene, load_scene, random_scene

EXIT_OK, EXIT_HARNESS, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="override the base seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--method", choices=(ex.ZPMRRT, ex.RRT),
                        help="restrict to one planner")
    p = argparse.ArgumentParser(prog="zpmrrt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("track", parents=[common], help="hand tracking demo, both controllers")
    sub.add_parser("plan", parents=[common], help="single planning query")
    sub.add_parser("trials", parents=[common], help="seeded emplacement trials")
    sub.add_parser("tvlqr", parents=[common], help="ZPMRRT versus iterated TVLQR")
    g = sub.add_parser("scene-gen", parents=[common], help="random admissible scene file")
    g.add_argument("--obstacles", type=int, default=3)
    return p


def _track(cfg: Config, out: Path, args) -> int:
    logs = ex.run_tracking_demo(cfg)
    head = ex.experiment_header(cfg, "track")
    rows = ["controller,final_drift,rms_error,degraded_steps"]
    for name, log in logs.items():
        ex.write_text(out / f"tracking_{name}.csv", ex.tracking_csv(log, head))
        rows.append(f"{name},{log.final_drift!r},{log.rms_error!r},{log.degraded_steps}")
        print(f"{name:10s} final drift {log.final_drift:.3e}  rms error {log.rms_error:.4f}")
    ex.write_text(out / "tracking_summary.csv", head + "\n".join(rows) + "\n")
    plot_tracking(logs, out / "tracking.svg")
    return EXIT_OK


def _plan(cfg: Config, out: Path, args) -> int:
    chain = ChainModel.swimmer()
    scene = load_scene(cfg.plan.scene, chain)
    rng = np.random.default_rng(cfg.trials.seed)
    free = scene.free_u_shapes(chain)
    if cfg.plan.start == "scene":
        if scene.start is None:
            raise ConfigError("scene defines no start shape")
        theta_s = scene.start
    elif cfg.plan.start == "random":
        if not free:
            raise ConfigError("scene leaves no U-shape start free")
        theta_s = free[rng.integers(len(free))]
    else:
        raise ConfigError(f"[plan] start must be 'random' or 'scene', got {cfg.plan.start!r}")
    method = args.method or ex.ZPMRRT
    if method == ex.ZPMRRT:
        sampler = (lambda r: free[r.integers(len(free))]) if cfg.plan.start == "random" else None
        res = zpmrrt(theta_s, scene.goal, scene.world, cfg.planner, start_sampler=sampler,
                     chain=chain, drag=cfg.drag, rng=rng)
    else:
        res = classical_rrt(theta_s, scene.goal, scene.world, cfg.planner,
                            chain=chain, drag=cfg.drag, rng=rng)
    head = header_lines(cfg, experiment="plan", seed=cfg.trials.seed, method=method,
                        scene=scene.name, status=res.status, join_index=res.join_index)
    lines = ["index," + ",".join(f"theta_{j}" for j in range(chain.num_joints))]
    lines += [f"{i}," + ",".join(repr(float(v)) for v in row) for i, row in enumerate(res.path)]
    ex.write_text(out / "plan.csv", head + "\n".join(lines) + "\n")
    msg = f"{method}: {res.status} after {res.replans} replans, {len(res.path)} vertices"
    if res.success:
        d, p, _ = ex.execution_metrics(chain, cfg.drag, res.waypoints, res.waypoint_join_index,
                                       cfg.exec_dt, [1.0])
        msg += f", final delta_d {d[0]:.3e}, delta_psi {p[0]:.3e}"
    print(msg)
    return EXIT_OK


def _write_report(cfg: Config, out: Path, records, experiment: str, prefix: str) -> None:
    head = ex.experiment_header(cfg, experiment)
    cells = ex.aggregate(records, ex.path_grid(cfg.trials.grid_points))
    ex.write_text(out / f"{prefix}trials.csv", ex.trials_csv(records, head))
    ex.write_text(out / f"{prefix}aggregate.csv", ex.aggregate_csv(cells, head))
    ex.write_text(out / f"{prefix}summary.csv", ex.summary_csv(cells, head))
    emit_plots(cells, out, prefix)
    for c in cells:
        print(f"{c.scene:6s} {c.method:7s} success {c.successes}/{c.successes + c.failures}"
              f"  final mean delta_d {c.mean_d[-1]:.3e}  delta_psi {c.mean_psi[-1]:.3e}")


def _trials(cfg: Config, out: Path, args) -> int:
    methods = (args.method,) if args.method else ex.METHODS
    records = ex.run_emplacement_trials(cfg, methods)
    _write_report(cfg, out, records, "trials", "")
    return EXIT_OK


def _tvlqr(cfg: Config, out: Path, args) -> int:
    records = ex.run_tvlqr_comparison(cfg)
    _write_report(cfg, out, records, "tvlqr", "tvlqr_")
    head = ex.experiment_header(cfg, "tvlqr")
    for r in records:
        if "solution" in r.extra:
            ex.write_text(out / "tvlqr_solutions" / f"trial_{r.trial_id:03d}.csv",
                          ex.tvlqr_solution_csv(r.extra["solution"], head))
    return EXIT_OK


def _scene_gen(cfg: Config, out: Path, args) -> int:
    if args.obstacles < 0:
        raise ConfigError("--obstacles must be non-negative")
    scene = random_scene(np.random.default_rng(cfg.trials.seed), args.obstacles)
    scene.name = f"random_{args.obstacles}_{cfg.trials.seed}"
    path = out / f"{scene.name}.scene"
    ex.write_text(path, dump_scene(scene))
    print(path)
    return EXIT_OK


COMMANDS = {"track": _track, "plan": _plan, "trials": _trials, "tvlqr": _tvlqr,
            "scene-gen": _scene_gen}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, Path(args.out), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any failure inside the harness
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_HARNESS


if __name__ == "__main__":
    sys.exit(main())
