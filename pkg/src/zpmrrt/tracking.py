"""Closed-form hand tracking with and without the perturbation constraint."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .dynamics import (
    BaseTrajectory,
    DragModel,
    _step_pose,
    link_resistance,
    perturbation_matrix,
)
from .geom import (
    LEFT_END,
    RIGHT_END,
    ChainModel,
    Pose2,
    end_effector_positions,
    manipulator_jacobian,
    twist_bracket,
)

KINEMATIC = "kinematic"
ZPM = "zpm"
RANK_TOL = 1e-8


def _pinv_solve(A: np.ndarray, b: np.ndarray, rank_tol: float = RANK_TOL):
    """Minimum-norm least-squares solution and a rank-deficiency flag."""
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rank_tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    degraded = not bool(np.all(keep))
    x = vt[keep].T @ ((u[:, keep].T @ b) / s[keep])
    return x, degraded


def kinematic_track_step(chain: ChainModel, shape, x_ee_desired_vel, end: str = RIGHT_END):
    """Joint rates from the Jacobian pseudoinverse alone.

    Returns ``(theta_dot, degraded)``.
    """
    J = manipulator_jacobian(chain, shape, end)
    return _pinv_solve(J, np.asarray(x_ee_desired_vel, dtype=float))


def zpm_track_step(
    chain: ChainModel, drag: DragModel, shape, x_ee_desired_vel, end: str = RIGHT_END
):
    """Joint rates that move the hand while holding base velocity at zero.

    Solves the stacked system [J; P] theta_dot = [x_ee_dot; 0] by
    pseudoinverse.  Returns ``(theta_dot, degraded)``.
    """
    J = manipulator_jacobian(chain, shape, end)
    P = perturbation_matrix(chain, drag, shape)
    A = np.vstack([J, P])
    rhs = np.concatenate([np.asarray(x_ee_desired_vel, dtype=float), np.zeros(3)])
    return _pinv_solve(A, rhs)


@dataclass(frozen=True)
class Curve:
    """A planar curve traced over ``duration`` seconds, in the base frame."""

    name: str
    point: Callable[[float], np.ndarray]  # u in [0, 1] -> (x, y)
    duration: float = 4.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    def at(self, t: float) -> np.ndarray:
        return np.asarray(self.point(min(max(t / self.duration, 0.0), 1.0)), dtype=float)


def line_curve(start, end, duration=4.0) -> Curve:
    a, b = np.asarray(start, float), np.asarray(end, float)
    return Curve("line", lambda u: a + u * (b - a), duration)


def square_curve(center, side, duration=6.0) -> Curve:
    c = np.asarray(center, float)
    h = side / 2.0
    # start at the top-right corner, run leftward first
    corners = c + np.array([[h, h], [-h, h], [-h, -h], [h, -h], [h, h]])

    def point(u):
        k = min(int(u * 4), 3)
        f = u * 4 - k
        return corners[k] + f * (corners[k + 1] - corners[k])

    return Curve("square", point, duration)


def circle_curve(center, radius, duration=6.0) -> Curve:
    c = np.asarray(center, float)
    return Curve(
        "circle",
        lambda u: c + radius * np.array([np.cos(2 * np.pi * u), np.sin(2 * np.pi * u)]),
        duration,
    )


def builtin_curves() -> list[Curve]:
    """Line, square and circle, each about 0.2 bodylengths, ordered right to left."""
    return [
        line_curve((0.30, 0.20), (0.10, 0.20), duration=4.0),
        square_curve((0.0, 0.26), 0.16, duration=6.0),
        circle_curve((-0.20, 0.20), 0.08, duration=6.0),
    ]


def default_start_shape(chain: ChainModel, curl: float = 0.3) -> np.ndarray:
    """Both arms curled forward by ``curl`` per joint."""
    theta = np.zeros(chain.num_joints)
    theta[list(chain.left_joints)] = -curl
    theta[list(chain.right_joints)] = curl
    return theta


@dataclass
class TraceTask:
    curves: Sequence[Curve] = field(default_factory=builtin_curves)
    gain: float = 5.0
    approach_time: float = 1.0
    start_shape: np.ndarray | None = None

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if not self.curves:
            raise ValueError("a trace task needs at least one curve")


@dataclass
class TraceLog:
    controller: str
    times: np.ndarray
    shapes: np.ndarray
    hand: np.ndarray  # world frame
    target: np.ndarray  # world frame, anchored at the initial base pose
    base: BaseTrajectory
    error: np.ndarray
    active_hand: list[str]
    curve_index: np.ndarray
    degraded_steps: int = 0

    @property
    def rms_error(self) -> float:
        return float(np.sqrt(np.mean(self.error**2)))

    @property
    def final_drift(self) -> float:
        p = self.base.poses
        return float(np.hypot(p[-1, 0] - p[0, 0], p[-1, 1] - p[0, 1]))


def _hand(chain, shape, end):
    ends = end_effector_positions(chain, shape)
    return ends[0] if end == LEFT_END else ends[1]


def run_trace(
    chain: ChainModel,
    drag: DragModel,
    task: TraceTask,
    controller: str = ZPM,
    dt: float = 1e-3,
    start: Pose2 = Pose2(),
) -> TraceLog:
    """Trace every curve in turn with the nearer hand under residual feedback.

    Each curve is preceded by ``task.approach_time`` seconds in which the
    target slides linearly from the hand to the curve start.  Shape and base
    are advanced together: classical RK4 on the shape, and on the base the
    SE(2) exponential of the stage-weighted twist with its Magnus correction.
    """
    if controller not in (KINEMATIC, ZPM):
        raise ValueError(f"unknown controller {controller!r}")
    theta = (
        default_start_shape(chain) if task.start_shape is None else np.array(task.start_shape, float)
    )
    pose = start.as_array()
    anchor = start
    degraded = 0
    K = link_resistance(chain, drag)
    b, ell = chain.base_link_index, chain.link_length

    times, shapes, hands, targets, poses, errs, curve_idx, active = [], [], [], [], [], [], [], []
    t_global = 0.0

    def rates(th, desired, end):
        nonlocal degraded
        thd, xi, bad = _kernels.track_rates(
            th, desired, task.gain, end == RIGHT_END, controller == ZPM, b, ell, K, RANK_TOL
        )
        degraded += bad
        return thd, xi

    def record(th, ps, desired_local, end, k):
        hand_b, _ = _kernels.hand_jacobian(th, b, ell, end == RIGHT_END)
        c, s = np.cos(ps[2]), np.sin(ps[2])
        hand_w = ps[:2] + np.array([c * hand_b[0] - s * hand_b[1], s * hand_b[0] + c * hand_b[1]])
        target_w = anchor.transform_point(desired_local)
        times.append(t_global)
        shapes.append(th.copy())
        hands.append(hand_w)
        targets.append(target_w)
        poses.append(ps.copy())
        errs.append(float(np.linalg.norm(hand_w - target_w)))
        curve_idx.append(k)

    for k, curve in enumerate(task.curves):
        ends = end_effector_positions(chain, theta)
        c0 = curve.at(0.0)
        end = LEFT_END if np.linalg.norm(ends[0] - c0) < np.linalg.norm(ends[1] - c0) else RIGHT_END
        active.append(end)
        h0 = _hand(chain, theta, end)
        span = task.approach_time + curve.duration

        def desired(t, h0=h0, c0=c0, curve=curve):
            if t < task.approach_time:
                return h0 + (t / task.approach_time) * (c0 - h0)
            return curve.at(t - task.approach_time)

        n_steps = max(1, int(np.ceil(span / dt - 1e-9)))
        h = span / n_steps
        if k == 0:
            record(theta, pose, desired(0.0), end, k)
        for i in range(n_steps):
            t = i * h
            k1, v1 = rates(theta, desired(t), end)
            k2, v2 = rates(theta + 0.5 * h * k1, desired(t + 0.5 * h), end)
            k3, v3 = rates(theta + 0.5 * h * k2, desired(t + 0.5 * h), end)
            k4, v4 = rates(theta + h * k3, desired(t + h), end)
            theta = theta + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            xi = (v1 + 2 * v2 + 2 * v3 + v4) / 6.0 + (h / 12.0) * twist_bracket(v1, v4)
            pose = _step_pose(pose, xi, h)
            t_global += h
            record(theta, pose, desired(t + h), end, k)

    times = np.array(times)
    return TraceLog(
        controller=controller,
        times=times,
        shapes=np.array(shapes),
        hand=np.array(hands),
        target=np.array(targets),
        base=BaseTrajectory(times, np.array(poses), np.array(shapes)),
        error=np.array(errs),
        active_hand=active,
        curve_index=np.array(curve_idx),
        degraded_steps=degraded,
    )
