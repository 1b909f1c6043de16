"""Experiment drivers: tracking demo, emplacement trials, TVLQR comparison."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..dynamics import integrate_waypoints
from ..geom import ChainModel, wrap_angle
from ..planner import classical_rrt, random_u_shape, zpmrrt
from ..tracking import KINEMATIC, ZPM, TraceLog, TraceTask, run_trace
from ..tvlqr import CostWeights, TvlqrSolution, iterate_tvlqr
from .config import Config, header_lines
from .scenes import Scene, load_scene

ZPMRRT = "zpmrrt"
RRT = "rrt"
TVLQR = "tvlqr"
METHODS = (RRT, ZPMRRT)
TRIAL_COLUMNS = ("trial_id", "method", "obstacles", "status", "s", "delta_d", "delta_psi")


@dataclass(frozen=True)
class TrialSpec:
    experiment: str  # emplace_rrt | emplace_zpmrrt | tvlqr_compare
    scene: str
    num_trials: int
    seed: int

    def __post_init__(self):
        if self.num_trials < 1:
            raise ValueError("num_trials must be at least 1")


@dataclass
class TrialRecord:
    trial_id: int
    method: str
    scene: str
    obstacles: int
    status: str
    s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta_d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta_psi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    join_fraction: float = 0.0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == "success"


@dataclass
class CellSummary:
    method: str
    scene: str
    obstacles: int
    successes: int
    failures: int
    s: np.ndarray
    mean_d: np.ndarray
    min_d: np.ndarray
    max_d: np.ndarray
    mean_psi: np.ndarray
    min_psi: np.ndarray
    max_psi: np.ndarray


def path_grid(points: int = 101) -> np.ndarray:
    return np.round(np.linspace(0.0, 1.0, points), 12)


def trial_seed(seed: int, trial_id: int) -> int:
    return int(seed) ^ int(trial_id)


def execution_metrics(chain, drag, waypoints, join_waypoint: int, dt: float, grid):
    """Execute a joint polyline and resample base displacement on ``grid``.

    Thrusters are assumed to restore the base pose once the joining segment
    ends, so from waypoint ``join_waypoint`` on, displacement is measured
    from the pose at the join.  Returns ``(delta_d, delta_psi, join_fraction)``.
    """
    W = np.asarray(waypoints, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if len(W) < 2:
        return np.zeros_like(grid), np.zeros_like(grid), 0.0
    tr = integrate_waypoints(chain, drag, W, dt)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(tr.shapes, axis=0), axis=1))])
    total = arc[-1]
    if total == 0.0:
        return np.zeros_like(grid), np.zeros_like(grid), 0.0
    join_arc = float(np.sum(np.linalg.norm(np.diff(W[: join_waypoint + 1], axis=0), axis=1)))
    ref = np.zeros(len(arc), dtype=int)
    j = 0
    if join_waypoint > 0:
        j = int(np.searchsorted(arc, join_arc - 1e-12))
        ref[j:] = j
    p = tr.poses
    dd = np.hypot(p[:, 0] - p[ref, 0], p[:, 1] - p[ref, 1])
    dpsi = np.abs(wrap_angle(p[:, 2] - p[ref, 2]))
    s = arc / total
    return np.interp(grid, s, dd), np.interp(grid, s, dpsi), float(s[j])


# --- emplacement ---------------------------------------------------------


def _emplacement_trial(cfg: Config, scene_ref: str, method: str, trial_id: int) -> TrialRecord:
    chain = ChainModel.swimmer()
    scene = load_scene(scene_ref, chain)
    grid = path_grid(cfg.trials.grid_points)
    rng = np.random.default_rng(trial_seed(cfg.trials.seed, trial_id))
    free = scene.free_u_shapes(chain)
    if not free:
        raise RuntimeError(f"scene {scene.name} leaves no U-shape start free")
    theta_s = free[rng.integers(len(free))]
    t0 = time.perf_counter()
    if method == ZPMRRT:
        sampler = lambda r: free[r.integers(len(free))]
        res = zpmrrt(theta_s, scene.goal, scene.world, cfg.planner, start_sampler=sampler,
                     chain=chain, drag=cfg.drag, rng=rng)
    elif method == RRT:
        res = classical_rrt(theta_s, scene.goal, scene.world, cfg.planner,
                            chain=chain, drag=cfg.drag, rng=rng)
    else:
        raise ValueError(f"unknown method {method!r}")
    rec = TrialRecord(trial_id, method, scene.name, scene.num_obstacles, res.status)
    if res.success:
        rec.delta_d, rec.delta_psi, rec.join_fraction = execution_metrics(
            chain, cfg.drag, res.waypoints, res.waypoint_join_index, cfg.exec_dt, grid
        )
        rec.s = grid
    rec.wall_time = time.perf_counter() - t0
    rec.extra = {"iterations": res.iterations, "replans": res.replans}
    return rec


def _run_jobs(fn, jobs: Sequence[tuple], workers: int) -> list:
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def run_emplacement_trials(
    cfg: Config, methods: Iterable[str] = METHODS, scenes: Iterable[str] | None = None
) -> list[TrialRecord]:
    """Seeded trials for every (scene, method) cell, in deterministic order."""
    scenes = tuple(scenes or cfg.trials.scenes)
    jobs = [
        (cfg, sc, m, t)
        for sc in scenes
        for m in methods
        for t in range(cfg.trials.num_trials)
    ]
    return _run_jobs(_emplacement_trial, jobs, cfg.trials.workers)


# --- TVLQR comparison ----------------------------------------------------


def _tvlqr_trial(cfg: Config, method: str, trial_id: int) -> TrialRecord:
    chain = ChainModel.swimmer()
    scene = load_scene("empty", chain)
    grid = path_grid(cfg.trials.grid_points)
    rng = np.random.default_rng(trial_seed(cfg.trials.seed, trial_id))
    theta_s = random_u_shape(rng, chain)
    t0 = time.perf_counter()
    rec = TrialRecord(trial_id, method, scene.name, 0, "success")
    if method == ZPMRRT:
        res = zpmrrt(theta_s, scene.goal, scene.world, cfg.planner,
                     chain=chain, drag=cfg.drag, rng=rng)
        rec.status = res.status
        if res.success:
            rec.delta_d, rec.delta_psi, rec.join_fraction = execution_metrics(
                chain, cfg.drag, res.waypoints, res.waypoint_join_index, cfg.exec_dt, grid
            )
            rec.s = grid
    elif method == TVLQR:
        t = cfg.tvlqr
        sol = iterate_tvlqr(
            chain, cfg.drag, theta_s, scene.goal, iterations=t.iterations,
            weights=CostWeights.default(chain.num_joints, t.r_weight),
            horizon=t.horizon, num_knots=t.knots,
        )
        rec.status = "failure" if sol.failed else "success"
        rec.delta_d, rec.delta_psi, _ = execution_metrics(
            chain, cfg.drag, sol.shapes, 0, cfg.exec_dt, grid
        )
        rec.s = grid
        rec.extra = {"solution": sol}
    else:
        raise ValueError(f"unknown method {method!r}")
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_tvlqr_comparison(cfg: Config, methods: Iterable[str] = (ZPMRRT, TVLQR)) -> list[TrialRecord]:
    """Obstacle-free trials from random U-shapes with no choice of start."""
    jobs = [(cfg, m, t) for m in methods for t in range(cfg.trials.num_trials)]
    return _run_jobs(_tvlqr_trial, jobs, cfg.trials.workers)


# --- tracking ------------------------------------------------------------


def run_tracking_demo(cfg: Config) -> dict[str, TraceLog]:
    chain = ChainModel.swimmer()
    task = TraceTask(gain=cfg.tracking.gain, approach_time=cfg.tracking.approach_time)
    return {
        ctl: run_trace(chain, cfg.drag, task, ctl, dt=cfg.tracking.dt) for ctl in (ZPM, KINEMATIC)
    }


# --- aggregation and CSV -------------------------------------------------


def _f(x: float) -> str:
    return repr(float(x))


def aggregate(records: Sequence[TrialRecord], grid) -> list[CellSummary]:
    """Mean and min/max bands per (method, scene) over successful trials."""
    grid = np.asarray(grid, dtype=float)
    cells: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        cells.setdefault((r.method, r.scene, r.obstacles), []).append(r)
    out = []
    for (method, scene, obstacles), recs in cells.items():
        ok = [r for r in recs if r.success]
        if ok:
            D = np.array([r.delta_d for r in ok])
            P = np.array([r.delta_psi for r in ok])
            stats = (D.mean(0), D.min(0), D.max(0), P.mean(0), P.min(0), P.max(0))
        else:
            stats = tuple(np.full(len(grid), np.nan) for _ in range(6))
        out.append(CellSummary(method, scene, obstacles, len(ok), len(recs) - len(ok), grid, *stats))
    return out


def trials_csv(records: Sequence[TrialRecord], header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in records:
        if not r.success or len(r.s) == 0:
            w.writerow([r.trial_id, r.method, r.obstacles, r.status, "", "", ""])
            continue
        for s, d, p in zip(r.s, r.delta_d, r.delta_psi):
            w.writerow([r.trial_id, r.method, r.obstacles, r.status, _f(s), _f(d), _f(p)])
    return buf.getvalue()


def aggregate_csv(cells: Sequence[CellSummary], header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "scene", "obstacles", "s", "mean_d", "min_d", "max_d",
                "mean_psi", "min_psi", "max_psi"])
    for c in cells:
        for i, s in enumerate(c.s):
            w.writerow([c.method, c.scene, c.obstacles, _f(s), _f(c.mean_d[i]), _f(c.min_d[i]),
                        _f(c.max_d[i]), _f(c.mean_psi[i]), _f(c.min_psi[i]), _f(c.max_psi[i])])
    return buf.getvalue()


def summary_csv(cells: Sequence[CellSummary], header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "scene", "obstacles", "successes", "failures",
                "final_mean_d", "final_mean_psi"])
    for c in cells:
        w.writerow([c.method, c.scene, c.obstacles, c.successes, c.failures,
                    _f(c.mean_d[-1]), _f(c.mean_psi[-1])])
    return buf.getvalue()


def tracking_csv(log: TraceLog, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    n = log.shapes.shape[1]
    w.writerow(["t"] + [f"theta_{j}" for j in range(n)]
               + ["hand_x", "hand_y", "target_x", "target_y", "base_x", "base_y", "base_psi", "err"])
    for k in range(len(log.times)):
        row = [log.times[k], *log.shapes[k], *log.hand[k], *log.target[k], *log.base.poses[k],
               log.error[k]]
        w.writerow([_f(v) for v in row])
    return buf.getvalue()


def tvlqr_solution_csv(sol: TvlqrSolution, header: str = "") -> str:
    """Knot states and controls, followed by the per-iteration cost history."""
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    n = sol.controls.shape[1]
    w.writerow(["knot", "t", "x", "y", "psi"] + [f"theta_{j}" for j in range(n)]
               + [f"u_{j}" for j in range(n)])
    for k, (t, x) in enumerate(zip(sol.times, sol.states)):
        u = sol.controls[k] if k < len(sol.controls) else np.full(n, np.nan)
        w.writerow([k] + [_f(v) for v in (t, *x, *u)])
    w.writerow([])
    w.writerow(["iteration", "cost"])
    for i, c in enumerate(sol.cost_history):
        w.writerow([i, _f(c)])
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def read_trials_csv(path) -> list[dict]:
    """Rows of a trials CSV, skipping the comment header."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def experiment_header(cfg: Config, experiment: str, **meta) -> str:
    return header_lines(cfg, experiment=experiment, seed=cfg.trials.seed, **meta)
