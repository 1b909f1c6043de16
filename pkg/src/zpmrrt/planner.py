"""Goal-rooted RRT planners in joint space.

``zpmrrt`` grows a tree from the goal shape whose extensions follow the
projection of the remaining error onto the null space of the perturbation
map, so every stored tree edge induces (to first order) no base motion.
``classical_rrt`` runs the same loop with straight-line extensions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .collision import World
from .dynamics import DragModel, link_resistance, perturbation_matrix
from .geom import ChainModel
from .zpm import ORTHOGONAL_TOL, SINGULAR_TOL

ZPM = "zpm"
STRAIGHT = "straight"

SUCCESS = "success"
TIMEOUT = "timeout"
COLLISION_EXHAUSTED = "collision_exhausted"


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = 0.01
    node_spacing: float = 0.1
    goal_tol: float = 1.0
    goal_bias: float = 0.5
    extend_timeout: int = 10_000
    max_iterations: int = 100
    plan_interval: Optional[float] = None
    max_replans: int = 4
    rng_seed: int = 0
    joint_limit: float = np.pi
    smoothing_passes: int = 3
    smooth_tol: Optional[float] = None
    half_width: float = 0.0
    orthogonal_tol: float = ORTHOGONAL_TOL
    singular_tol: float = SINGULAR_TOL

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.node_spacing < self.dt:
            raise ValueError("node_spacing must be at least dt")
        if self.goal_tol <= 0:
            raise ValueError("goal_tol must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.extend_timeout < 1 or self.max_iterations < 1 or self.max_replans < 0:
            raise ValueError("budgets must be positive")

    @property
    def shortcut_tol(self) -> float:
        return self.dt if self.smooth_tol is None else self.smooth_tol


class Tree:
    """Vertices with parent links; each vertex keeps the dense edge from its parent."""

    def __init__(self, root, capacity: int = 256):
        root = np.asarray(root, dtype=float)
        self._buf = np.empty((capacity, root.size))
        self._buf[0] = root
        self.parents: list[Optional[int]] = [None]
        self.edges: list[Optional[np.ndarray]] = [None]
        self.residuals: list[Optional[np.ndarray]] = [None]

    def __len__(self) -> int:
        return len(self.parents)

    @property
    def nodes(self) -> np.ndarray:
        return self._buf[: len(self)]

    def add(self, shape, parent: int, edge=None, residuals=None) -> int:
        if not 0 <= parent < len(self):
            raise IndexError("parent must already be in the tree")
        k = len(self)
        if k == len(self._buf):
            self._buf = np.concatenate([self._buf, np.empty_like(self._buf)])
        self._buf[k] = shape
        self.parents.append(parent)
        self.edges.append(None if edge is None else np.asarray(edge, dtype=float))
        self.residuals.append(None if residuals is None else np.asarray(residuals))
        return k

    def path_to_root(self, k: int) -> list[int]:
        out = [k]
        while self.parents[out[-1]] is not None:
            out.append(self.parents[out[-1]])
        return out


@dataclass
class PlanResult:
    status: str
    path: np.ndarray
    waypoints: np.ndarray
    join_index: int = 0
    waypoint_join_index: int = 0
    per_step_zpm_residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    start: Optional[np.ndarray] = None
    method: str = ZPM
    iterations: int = 0
    replans: int = 0
    tree_size: int = 0

    @property
    def success(self) -> bool:
        return self.status == SUCCESS


def sample(rng: np.random.Generator, i: int, theta_s, goal_bias: float = 0.5, joint_limit=np.pi):
    """Start shape with probability ``goal_bias``, else uniform in the joint box.

    ``i`` is the iteration counter; it does not change the distribution.
    """
    theta_s = np.asarray(theta_s, dtype=float)
    if rng.random() < goal_bias:
        return theta_s.copy()
    return rng.uniform(-joint_limit, joint_limit, size=theta_s.shape)


def nearest(tree: Tree, shape) -> int:
    d = np.sum((tree.nodes - np.asarray(shape)) ** 2, axis=1)
    return int(np.argmin(d))


def random_u_shape(rng: np.random.Generator, chain: ChainModel) -> np.ndarray:
    theta = np.zeros(chain.num_joints)
    theta[chain.left_joints[rng.integers(len(chain.left_joints))]] = -np.pi / 2
    theta[chain.right_joints[rng.integers(len(chain.right_joints))]] = np.pi / 2
    return theta


def all_u_shapes(chain: ChainModel) -> list[np.ndarray]:
    out = []
    for left in chain.left_joints:
        for right in chain.right_joints:
            theta = np.zeros(chain.num_joints)
            theta[left] = -np.pi / 2
            theta[right] = np.pi / 2
            out.append(theta)
    return out


@dataclass
class _Problem:
    chain: ChainModel
    drag: DragModel
    world: World
    cfg: PlannerConfig
    self_collision: bool = True

    def __post_init__(self):
        self._K = link_resistance(self.chain, self.drag)
        self._obs = np.ascontiguousarray(self.world.obstacles, dtype=float)

    def blocked(self, theta) -> bool:
        return bool(
            _kernels.blocked(
                np.ascontiguousarray(theta, dtype=float),
                self.chain.base_link_index,
                self.chain.link_length,
                self._obs,
                float(self.cfg.half_width),
                self.self_collision,
                float(self.cfg.joint_limit),
            )
        )

    def segment_blocked(self, a, b) -> bool:
        """Straight joint-space segment checked at dt/2 resolution, endpoints included."""
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / (0.5 * self.cfg.dt))))
        return any(self.blocked(a + (b - a) * (k / n)) for k in range(n + 1))


def steer(problem: _Problem, theta0, target, mode: str, max_steps: int):
    """Micro-step from ``theta0`` toward ``target``.

    Returns ``(dense, residuals, reason)``.  ``dense`` starts at ``theta0``;
    ``residuals[k]`` is |P dtheta| / |dtheta| at the start of micro-step k
    (ZPM mode only, else empty).  ``reason`` is one of "orthogonal",
    "reached", "collision", "singular", "timeout".
    """
    cfg = problem.cfg
    dense, res, code = _kernels.steer(
        np.ascontiguousarray(theta0, dtype=float),
        np.ascontiguousarray(target, dtype=float),
        mode == ZPM,
        float(cfg.dt),
        int(max_steps),
        problem.chain.base_link_index,
        problem.chain.link_length,
        problem._K,
        problem._obs,
        float(cfg.half_width),
        problem.self_collision,
        float(cfg.joint_limit),
        float(cfg.orthogonal_tol),
        float(cfg.singular_tol),
    )
    if mode != ZPM:
        res = np.zeros(0)
    return dense, res, _kernels.REASONS[code]


def _split_into_vertices(dense: np.ndarray, spacing: float) -> list[int]:
    """Indices into ``dense`` where a vertex is stored: every ``spacing`` of arc, plus the end."""
    idx = []
    acc = 0.0
    for k in range(1, len(dense)):
        acc += float(np.linalg.norm(dense[k] - dense[k - 1]))
        if acc >= spacing - 1e-12:
            idx.append(k)
            acc = 0.0
    if len(dense) > 1 and (not idx or idx[-1] != len(dense) - 1):
        idx.append(len(dense) - 1)
    return idx


def extend_along_zpm(
    tree: Tree,
    near_index: int,
    sample_shape,
    world: World,
    cfg: PlannerConfig,
    chain: ChainModel,
    drag: DragModel,
    mode: str = ZPM,
):
    """Grow ``tree`` from ``near_index`` toward ``sample_shape``.

    Vertices are added every ``cfg.node_spacing`` of joint-space arc and at
    the point where extension stops, each parented to the previous one.
    Returns ``(reached_shape, added_indices, reason)``.
    """
    problem = _Problem(chain, drag, world, cfg)
    return _extend(problem, tree, near_index, sample_shape, mode)


def _extend(problem: _Problem, tree: Tree, near_index: int, sample_shape, mode: str):
    dense, res, reason = steer(
        problem, tree.nodes[near_index], sample_shape, mode, problem.cfg.extend_timeout
    )
    added: list[int] = []
    parent, last = near_index, 0
    for k in _split_into_vertices(dense, problem.cfg.node_spacing):
        edge_res = res[last:k] if mode == ZPM else None
        parent = tree.add(dense[k], parent, dense[last : k + 1], edge_res)
        added.append(parent)
        last = k
    return dense[-1].copy(), added, reason


def arc_length(points) -> float:
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))


def _straight_edge(a, b, dt: float) -> np.ndarray:
    n = max(1, int(np.ceil(np.linalg.norm(b - a) / dt - 1e-9)))
    return a + np.outer(np.arange(n + 1) / n, b - a)


def step_residuals(chain: ChainModel, drag: DragModel, dense) -> np.ndarray:
    """|P(theta_k) dtheta_k| / |dtheta_k| for each step, evaluated at the step start."""
    dense = np.asarray(dense, dtype=float)
    out = np.zeros(max(len(dense) - 1, 0))
    for k in range(len(out)):
        d = dense[k + 1] - dense[k]
        n = np.linalg.norm(d)
        if n > 0:
            out[k] = np.linalg.norm(perturbation_matrix(chain, drag, dense[k]) @ d) / n
    return out


@dataclass
class _Segment:
    """Path as vertices with dense edges; edges[k] joins vertices k and k + 1."""

    vertices: list
    edges: list
    residuals: list

    def arc(self, lo: int, hi: int) -> float:
        return sum(arc_length(e) for e in self.edges[lo:hi])


def _shortcut(problem: _Problem, seg: _Segment, lo: int, hi: int, mode: str, res_cap: float):
    a, b = seg.vertices[lo], seg.vertices[hi]
    old_len = seg.arc(lo, hi)
    if mode == ZPM:
        dense, res, _ = steer(problem, a, b, ZPM, problem.cfg.extend_timeout)
        gap = b - dense[-1]
        g = float(np.linalg.norm(gap))
        if g > problem.cfg.shortcut_tol:
            return None
        if g > 0:
            P = perturbation_matrix(problem.chain, problem.drag, dense[-1])
            closing = float(np.linalg.norm(P @ gap)) / g
            if closing > res_cap or problem.segment_blocked(dense[-1], b):
                return None
            dense = np.vstack([dense, b])
            res = np.append(res, closing)
    else:
        if problem.segment_blocked(a, b):
            return None
        dense = _straight_edge(a, b, problem.cfg.dt)
        res = None
    if arc_length(dense) >= old_len:
        return None
    return dense, res


def _smooth_range(problem, seg: _Segment, lo, hi, rng, mode, res_cap) -> _Segment:
    if hi - lo < 2:
        return _Segment(seg.vertices[lo : hi + 1], seg.edges[lo:hi], seg.residuals[lo:hi])
    cut = _shortcut(problem, seg, lo, hi, mode, res_cap)
    if cut is not None:
        dense, res = cut
        return _Segment([seg.vertices[lo], seg.vertices[hi]], [dense], [res])
    mid = int(rng.integers(lo + 1, hi))
    left = _smooth_range(problem, seg, lo, mid, rng, mode, res_cap)
    right = _smooth_range(problem, seg, mid, hi, rng, mode, res_cap)
    return _Segment(
        left.vertices + right.vertices[1:],
        left.edges + right.edges,
        left.residuals + right.residuals,
    )


def _max_residual(seg: _Segment) -> float:
    vals = [float(np.max(r)) for r in seg.residuals if r is not None and len(r)]
    return max(vals, default=0.0)


def _smooth_segment(problem, seg: _Segment, rng, mode, passes: int) -> _Segment:
    res_cap = _max_residual(seg)
    for _ in range(passes):
        seg = _smooth_range(problem, seg, 0, len(seg.vertices) - 1, rng, mode, res_cap)
    return seg


def smooth(
    path,
    world: World,
    cfg: PlannerConfig,
    chain: ChainModel,
    drag: DragModel,
    rng: np.random.Generator,
    mode: str = ZPM,
    edges=None,
):
    """Recursive random-split shortcutting, repeated ``cfg.smoothing_passes`` times.

    ZPM shortcuts follow the projected steering law and must end within
    ``cfg.shortcut_tol`` of the segment end; the closing step may not raise
    the worst per-step residual of the input.  Returns ``(vertices, edges)``.
    """
    path = [np.asarray(p, dtype=float) for p in path]
    if edges is None:
        edges = [_straight_edge(path[k], path[k + 1], cfg.dt) for k in range(len(path) - 1)]
    residuals = [
        step_residuals(chain, drag, e) if mode == ZPM else None for e in edges
    ]
    seg = _Segment(path, list(edges), residuals)
    if len(path) > 2:
        seg = _smooth_segment(_Problem(chain, drag, world, cfg), seg, rng, mode, cfg.smoothing_passes)
    return np.array(seg.vertices), seg.edges


def _assemble(problem, tree: Tree, contact: int, theta_s, rng, mode) -> PlanResult:
    order = tree.path_to_root(contact)
    vertices = [tree.nodes[k].copy() for k in order]
    edges = [tree.edges[k][::-1].copy() for k in order[:-1]]
    residuals = [
        tree.residuals[k][::-1].copy() if tree.residuals[k] is not None else None
        for k in order[:-1]
    ]
    seg = _Segment(vertices, edges, residuals)
    if len(vertices) > 2 and problem.cfg.smoothing_passes > 0:
        seg = _smooth_segment(problem, seg, rng, mode, problem.cfg.smoothing_passes)

    theta_s = np.asarray(theta_s, dtype=float)
    vertices, edges = list(seg.vertices), list(seg.edges)
    residuals = list(seg.residuals)
    join = 0
    if np.linalg.norm(vertices[0] - theta_s) > 0:
        vertices.insert(0, theta_s.copy())
        edges.insert(0, _straight_edge(theta_s, seg.vertices[0], problem.cfg.dt))
        residuals.insert(0, None)
        join = 1

    chunks = [vertices[0][None, :]] + [e[1:] for e in edges]
    waypoints = np.vstack(chunks)
    step_res = []
    for e, r in zip(edges, residuals):
        step_res.append(r if r is not None else step_residuals(problem.chain, problem.drag, e))
    per_step = np.concatenate(step_res) if step_res else np.zeros(0)
    wjoin = len(edges[0]) - 1 if join else 0
    return PlanResult(
        status=SUCCESS,
        path=np.array(vertices),
        waypoints=waypoints,
        join_index=join,
        waypoint_join_index=wjoin,
        per_step_zpm_residual=per_step,
        start=theta_s.copy(),
        method=mode,
    )


def _plan_once(problem: _Problem, theta_s, theta_g, rng, mode, start_sampler):
    cfg = problem.cfg
    tree = Tree(theta_g)
    candidate = np.asarray(theta_s, dtype=float)
    deadline = None if cfg.plan_interval is None else time.monotonic() + cfg.plan_interval
    all_collided = True
    for i in range(cfg.max_iterations):
        if deadline is not None and time.monotonic() > deadline:
            break
        if rng.random() < cfg.goal_bias:
            if start_sampler is not None:
                candidate = np.asarray(start_sampler(rng), dtype=float)
            target = candidate
        else:
            target = rng.uniform(-cfg.joint_limit, cfg.joint_limit, size=len(theta_g))
        near = nearest(tree, target)
        reached, added, reason = _extend(problem, tree, near, target, mode)
        all_collided &= reason == "collision"
        contact = added[-1] if added else near
        if np.linalg.norm(reached - candidate) < cfg.goal_tol:
            if not problem.segment_blocked(candidate, tree.nodes[contact]):
                result = _assemble(problem, tree, contact, candidate, rng, mode)
                result.iterations = i + 1
                result.tree_size = len(tree)
                return result
    status = COLLISION_EXHAUSTED if all_collided else TIMEOUT
    return PlanResult(status, np.zeros((0, len(theta_g))), np.zeros((0, len(theta_g))),
                      iterations=cfg.max_iterations, tree_size=len(tree), method=mode)


def _plan(theta_s, theta_g, world, cfg, chain, drag, mode, start_sampler, rng):
    chain = chain or ChainModel.swimmer()
    drag = drag or DragModel()
    theta_s = np.asarray(theta_s, dtype=float)
    theta_g = np.asarray(theta_g, dtype=float)
    problem = _Problem(chain, drag, world, cfg)
    if problem.blocked(theta_g):
        raise ValueError("goal shape is in collision")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    if np.array_equal(theta_s, theta_g):
        return PlanResult(SUCCESS, theta_g[None].copy(), theta_g[None].copy(),
                          start=theta_s.copy(), method=mode, tree_size=1)
    result = None
    for attempt in range(cfg.max_replans + 1):
        result = _plan_once(problem, theta_s, theta_g, rng, mode, start_sampler)
        result.replans = attempt
        if result.success:
            break
    return result


def zpmrrt(
    theta_s,
    theta_g,
    world: World,
    cfg: PlannerConfig,
    start_sampler: Optional[Callable[[np.random.Generator], np.ndarray]] = None,
    chain: ChainModel | None = None,
    drag: DragModel | None = None,
    rng: np.random.Generator | None = None,
) -> PlanResult:
    """Plan from ``theta_s`` to ``theta_g`` with a goal-rooted ZPM tree.

    With ``start_sampler`` the start is re-drawn every time the start is
    sampled and any drawn shape within ``cfg.goal_tol`` is accepted.  The
    returned path begins with a straight joining segment onto the tree;
    ``join_index`` marks the vertex where the ZPM segment begins.  Up to
    ``cfg.max_replans`` fresh trees are grown after a failed interval.
    """
    return _plan(theta_s, theta_g, world, cfg, chain, drag, ZPM, start_sampler, rng)


def classical_rrt(
    theta_s,
    theta_g,
    world: World,
    cfg: PlannerConfig,
    start_sampler=None,
    chain: ChainModel | None = None,
    drag: DragModel | None = None,
    rng: np.random.Generator | None = None,
) -> PlanResult:
    return _plan(theta_s, theta_g, world, cfg, chain, drag, STRAIGHT, start_sampler, rng)


def with_overrides(cfg: PlannerConfig, **kw) -> PlannerConfig:
    return replace(cfg, **kw)
