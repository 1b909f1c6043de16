"""Viscous connection of a slender chain under resistive-force drag.

Every link feels a per-unit-length force ``-(c_t * v_t, c_n * v_n)`` in its
own frame.  Summing those forces into the base frame gives a wrench that is
linear in the base body velocity and the joint rates; zeroing it yields the
perturbation map that sends joint rates to base body velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .geom import (
    ChainModel,
    Pose2,
    _chain_geometry,
    inverse_adjoints,
    link_velocity_maps,
    se2_exp,
    twist_bracket,
    wrap_angle,
)


class SingularModelError(RuntimeError):
    """The body-drag block of the wrench map cannot be inverted."""


@dataclass(frozen=True)
class DragModel:
    c_tangential: float = 1.0
    c_normal: float = 10.0
    quadrature_points: int = 4

    def __post_init__(self):
        if self.c_tangential <= 0 or self.c_normal <= 0:
            raise ValueError("drag coefficients must be positive")
        if self.quadrature_points < 1:
            raise ValueError("quadrature_points must be >= 1")

    @property
    def ratio(self) -> float:
        return self.c_normal / self.c_tangential

    @classmethod
    def with_ratio(cls, ratio: float, c_tangential: float = 1.0, **kw) -> "DragModel":
        return cls(c_tangential=c_tangential, c_normal=ratio * c_tangential, **kw)


@dataclass
class PerturbationMap:
    matrix: np.ndarray
    at_shape: np.ndarray

    def __matmul__(self, theta_dot):
        return self.matrix @ theta_dot


@dataclass
class BaseTrajectory:
    times: np.ndarray
    poses: np.ndarray  # (T, 3) rows of (x, y, psi), psi unwrapped
    shapes: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.poses = np.asarray(self.poses, dtype=float)
        if len(self.times) != len(self.poses):
            raise ValueError("times and poses differ in length")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be monotone")

    def __len__(self) -> int:
        return len(self.times)

    def pose(self, k: int) -> Pose2:
        return Pose2.from_array(self.poses[k])


@lru_cache(maxsize=64)
def _link_resistance(link_length: float, c_t: float, c_n: float, order: int) -> np.ndarray:
    """3x3 link-frame resistance about the midpoint by Gauss-Legendre quadrature."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s = 0.5 * link_length * nodes
    w = 0.5 * link_length * weights
    K = np.zeros((3, 3))
    for si, wi in zip(s, w):
        # point velocity in link frame = G @ (u, v, omega); force acts at the same point
        G = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, si]])
        K += wi * G.T @ np.diag([c_t, c_n]) @ G
    return K


def wrench_matrix(chain: ChainModel, drag: DragModel, shape) -> np.ndarray:
    """3 x (3 + n) matrix W with wrench = W @ concat(xi, theta_dot)."""
    frames, joints = _chain_geometry(chain, shape)
    ad_inv = inverse_adjoints(frames)
    K = _link_resistance(
        chain.link_length, drag.c_tangential, drag.c_normal, drag.quadrature_points
    )
    # per-link resistance pulled back to the base frame: Ad^T K Ad
    A = np.einsum("lji,jk,lkm->lim", ad_inv, K, ad_inv)
    b = chain.base_link_index
    n = chain.num_joints
    # joint j drives links j+1.. on the right arm and links ..j on the left arm
    moved = np.empty((n, 3, 3))
    if b < n:
        moved[b:] = np.cumsum(A[::-1], axis=0)[::-1][b + 1 :]
    if b > 0:
        moved[:b] = np.cumsum(A[:b], axis=0)
    tw = np.column_stack([joints[:, 1], -joints[:, 0], np.ones(n)])
    W = np.empty((3, 3 + n))
    W[:, :3] = -A.sum(axis=0)
    W[:, 3:] = -np.einsum("jik,jk->ij", moved, tw)
    return W


def wrench_matrix_by_links(chain: ChainModel, drag: DragModel, shape) -> np.ndarray:
    """Same matrix assembled link by link from the link velocity maps."""
    frames, _ = _chain_geometry(chain, shape)
    ad_inv = inverse_adjoints(frames)
    maps = link_velocity_maps(chain, shape)
    K = _link_resistance(
        chain.link_length, drag.c_tangential, drag.c_normal, drag.quadrature_points
    )
    return -np.einsum("lji,jk,lkm->im", ad_inv, K, maps)


def total_wrench(chain: ChainModel, drag: DragModel, shape, xi, shape_vel) -> np.ndarray:
    """Net drag (fx, fy, torque) on the chain expressed in the base frame."""
    xi = np.asarray(xi.as_array() if hasattr(xi, "as_array") else xi, dtype=float)
    q = np.concatenate([xi, np.asarray(shape_vel, dtype=float)])
    return wrench_matrix(chain, drag, shape) @ q


def link_resistance(chain: ChainModel, drag: DragModel) -> np.ndarray:
    return _link_resistance(
        chain.link_length, drag.c_tangential, drag.c_normal, drag.quadrature_points
    )


def perturbation_matrix(chain: ChainModel, drag: DragModel, shape) -> np.ndarray:
    """3 x n map from joint rates to base body velocity."""
    theta = np.ascontiguousarray(shape, dtype=float)
    if theta.shape != (chain.num_joints,):
        raise ValueError(f"expected {chain.num_joints} joint angles, got {theta.shape}")
    K = link_resistance(chain, drag)
    W = _kernels.wrench_matrix(theta, chain.base_link_index, chain.link_length, K)
    w_xi, w_theta = W[:, :3], W[:, 3:]
    scale = np.abs(w_xi).max()
    det = np.linalg.det(w_xi)
    if not np.isfinite(det) or scale == 0.0 or abs(det) < 1e-14 * scale**3:
        raise SingularModelError(f"body drag block is singular (det={det:.3g})")
    return -np.linalg.solve(w_xi, w_theta)


def perturbation_map(chain: ChainModel, drag: DragModel, shape) -> PerturbationMap:
    theta = np.asarray(shape, dtype=float).copy()
    return PerturbationMap(perturbation_matrix(chain, drag, theta), theta)


def _step_pose(pose: np.ndarray, xi: np.ndarray, h: float) -> np.ndarray:
    d = se2_exp(xi * h)
    c, s = np.cos(pose[2]), np.sin(pose[2])
    return np.array(
        [pose[0] + c * d.x - s * d.y, pose[1] + s * d.x + c * d.y, pose[2] + xi[2] * h]
    )


def integrate_base(
    chain: ChainModel,
    drag: DragModel,
    shape_path: Callable[[float], tuple[np.ndarray, np.ndarray]],
    t_end: float,
    dt: float,
    start: Pose2 = Pose2(),
    t_start: float = 0.0,
) -> BaseTrajectory:
    """Reconstruct base motion driven by a time-parameterised shape.

    ``shape_path(t)`` returns ``(theta, theta_dot)``.  The body twist is
    averaged with fourth-order Runge-Kutta weights over each step and applied
    through the SE(2) exponential, so heading is never re-normalised.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = max(1, int(np.ceil((t_end - t_start) / dt - 1e-9)))
    h = (t_end - t_start) / n_steps
    times = t_start + h * np.arange(n_steps + 1)
    poses = np.empty((n_steps + 1, 3))
    shapes = np.empty((n_steps + 1, chain.num_joints))
    poses[0] = start.as_array() if isinstance(start, Pose2) else np.asarray(start, dtype=float)

    def body_vel(t):
        th, thd = shape_path(t)
        return perturbation_matrix(chain, drag, th) @ thd, th

    k1, shapes[0] = body_vel(times[0])
    for k in range(n_steps):
        t = times[k]
        k2, _ = body_vel(t + 0.5 * h)
        k4, th_next = body_vel(t + h)
        # pose-independent twist: k2 and k3 coincide; the bracket term is
        # the fourth-order Magnus correction for the non-commuting group
        xi = (k1 + 4.0 * k2 + k4) / 6.0 + (h / 12.0) * twist_bracket(k1, k4)
        poses[k + 1] = _step_pose(poses[k], xi, h)
        shapes[k + 1] = th_next
        k1 = k4
    return BaseTrajectory(times, poses, shapes)


def piecewise_linear_path(waypoints, speed: float = 1.0):
    """Constant joint-space speed parameterisation of a waypoint sequence.

    Returns ``(shape_path, knot_times)``; time equals arc length / speed.
    Rates are evaluated on the segment containing ``t``, taking the later
    segment at a knot only when ``t`` lies strictly inside it.
    """
    W = np.asarray(waypoints, dtype=float)
    seg = np.diff(W, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    knots = np.concatenate([[0.0], np.cumsum(lengths)]) / speed
    total = knots[-1]

    def shape_path(t: float):
        if len(W) == 1 or total == 0.0:
            return W[-1].copy(), np.zeros(W.shape[1])
        t = min(max(t, 0.0), total)
        i = int(np.searchsorted(knots, t, side="left")) - 1
        i = min(max(i, 0), len(seg) - 1)
        while lengths[i] == 0.0 and i < len(seg) - 1:
            i += 1
        dur = knots[i + 1] - knots[i]
        if dur == 0.0:
            return W[i + 1].copy(), np.zeros(W.shape[1])
        u = (t - knots[i]) / dur
        return W[i] + u * seg[i], seg[i] / dur

    return shape_path, knots


def integrate_waypoints(
    chain: ChainModel,
    drag: DragModel,
    waypoints,
    dt: float,
    start: Pose2 = Pose2(),
) -> BaseTrajectory:
    """Execute a joint-space polyline at unit speed.

    Each segment is split into equal substeps no longer than ``dt`` so rate
    discontinuities always fall on step boundaries.  Compiled counterpart of
    ``integrate_base`` over ``piecewise_linear_path``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    W = np.ascontiguousarray(waypoints, dtype=float)
    if W.ndim != 2 or W.shape[1] != chain.num_joints:
        raise ValueError(f"waypoints must be (k, {chain.num_joints})")
    pose = start.as_array() if isinstance(start, Pose2) else np.asarray(start, dtype=float)
    times, poses, shapes = _kernels.integrate_polyline(
        W, dt, pose, chain.base_link_index, chain.link_length, link_resistance(chain, drag)
    )
    return BaseTrajectory(times, poses, shapes)


def joint_arc_fraction(shapes: np.ndarray) -> np.ndarray:
    shapes = np.asarray(shapes, dtype=float)
    if len(shapes) < 2:
        return np.zeros(len(shapes))
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(shapes, axis=0), axis=1))])
    return arc / arc[-1] if arc[-1] > 0 else np.linspace(0.0, 1.0, len(shapes))


def displacement_metrics(traj: BaseTrajectory, path_fraction: Sequence[float] | None = None):
    """Distance and heading change from the first pose, per sample.

    Returns ``(s, delta_d, delta_psi)``.  ``s`` is the fraction of joint-space
    arc length traversed when the trajectory carries shapes, otherwise the
    fraction of elapsed time.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    p = traj.poses
    delta_d = np.hypot(p[:, 0] - p[0, 0], p[:, 1] - p[0, 1])
    delta_psi = np.abs(wrap_angle(p[:, 2] - p[0, 2]))
    delta_psi = np.atleast_1d(delta_psi)
    if path_fraction is not None:
        s = np.asarray(path_fraction, dtype=float)
    elif traj.shapes is not None:
        s = joint_arc_fraction(traj.shapes)
    else:
        span = traj.times[-1] - traj.times[0]
        s = (traj.times - traj.times[0]) / span if span > 0 else np.zeros(len(traj))
    return s, delta_d, delta_psi
