"""Iterated time-varying LQR on the stacked (base pose, shape) system.

The state is ``x = (x_b, y_b, psi_b, theta)`` with the shape velocity as
control, so ``d/dt x = [R(psi) P(theta); I] u``.  Each iteration linearizes
the discrete one-step map about the current nominal rollout, solves a
backward Riccati recursion with affine terms, and rolls the closed loop out
on the nonlinear map to obtain the next nominal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import DragModel, link_resistance, perturbation_matrix
from .geom import ChainModel, Pose2

NUM_KNOTS = 50
HORIZON = 10.0
SUBSTEPS = 4
ITERATIONS = 20
FD_EPS = 1e-5
REGULARIZATION = 1e-9


class RiccatiFailure(RuntimeError):
    """Raised when the control Hessian stays indefinite after regularization."""


@dataclass(frozen=True)
class AugmentedState:
    pose: Pose2
    theta: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.pose.as_array(), np.asarray(self.theta, dtype=float)])

    @classmethod
    def from_array(cls, x) -> "AugmentedState":
        x = np.asarray(x, dtype=float)
        return cls(Pose2(x[0], x[1], x[2]), x[3:].copy())


@dataclass(frozen=True)
class CostWeights:
    Q: np.ndarray
    Qf: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("Q", "Qf"):
            M = getattr(self, name)
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be symmetric positive semidefinite")
        if not np.allclose(self.R, self.R.T) or np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be symmetric positive definite")

    @classmethod
    def default(cls, num_joints: int, r: float = 1e-2) -> "CostWeights":
        """Base-only running weight, full terminal weight, isotropic effort weight."""
        D = 3 + num_joints
        Q = np.zeros((D, D))
        Q[:3, :3] = np.eye(3)
        return cls(Q, np.eye(D), r * np.eye(num_joints))


@dataclass
class RiccatiSolution:
    gains: np.ndarray  # (N, n, D); control law u = -K dx + k
    feedforward: np.ndarray  # (N, n)
    cost_to_go: np.ndarray  # (N + 1, D, D)


@dataclass
class TvlqrSolution:
    times: np.ndarray
    states: np.ndarray  # (NUM_KNOTS, 3 + n)
    controls: np.ndarray  # (NUM_KNOTS - 1, n)
    gains: np.ndarray
    cost_history: list[float] = field(default_factory=list)
    failed: bool = False

    @property
    def shapes(self) -> np.ndarray:
        return self.states[:, 3:]


def augmented_dynamics(chain: ChainModel, drag: DragModel, state, u) -> np.ndarray:
    """Time derivative of the stacked state under shape velocity ``u``."""
    x = state.as_array() if isinstance(state, AugmentedState) else np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    xi = perturbation_matrix(chain, drag, x[3:]) @ u
    c, s = np.cos(x[2]), np.sin(x[2])
    return np.concatenate([[c * xi[0] - s * xi[1], s * xi[0] + c * xi[1], xi[2]], u])


def step_map(chain: ChainModel, drag: DragModel, x, u, dt_knot: float, substeps: int = SUBSTEPS):
    """Explicit one-knot map of the stacked system with ``u`` held constant."""
    return _kernels.augmented_step(
        np.ascontiguousarray(x, dtype=float),
        np.ascontiguousarray(u, dtype=float),
        dt_knot,
        substeps,
        chain.base_link_index,
        chain.link_length,
        link_resistance(chain, drag),
    )


def linearize_along(
    chain: ChainModel,
    drag: DragModel,
    states,
    controls,
    dt_knot: float,
    substeps: int = SUBSTEPS,
    eps: float = FD_EPS,
):
    """Per-knot ``(A_k, B_k)`` of the discrete map by central differences."""
    xs = np.ascontiguousarray(states, dtype=float)
    us = np.ascontiguousarray(controls, dtype=float)
    if len(xs) != len(us) + 1:
        raise ValueError("need one more state than controls")
    return _kernels.linearize(
        xs, us, dt_knot, substeps, eps,
        chain.base_link_index, chain.link_length, link_resistance(chain, drag),
    )


def _solve_pd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(M + REGULARIZATION * np.eye(len(M)))
        except np.linalg.LinAlgError as exc:
            raise RiccatiFailure("R + B'SB is not positive definite") from exc
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def backward_riccati(
    A, B, Q, Qf, R, q=None, qf=None, r=None, steps: int | None = None
) -> RiccatiSolution:
    """Discrete time-varying Riccati recursion from the terminal weight.

    Minimizes sum_k (x'Qx/2 + q_k'x + u'Ru/2 + r_k'u) + x_N'Qf x_N/2 + qf'x_N
    over the linear system x_{k+1} = A_k x_k + B_k u_k.

    ``A`` and ``B`` are stacks of per-step matrices, or single matrices
    repeated over ``steps`` stages (default one).  Optional linear
    cost terms ``q`` (per step, on the state), ``qf`` (terminal) and ``r``
    (per step, on the control) produce the feedforward of the affine law
    ``u_k = -K_k x_k + k_k``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 2:
        steps = 1 if steps is None else steps
        A = np.broadcast_to(A, (steps,) + A.shape)
        B = np.broadcast_to(B, (steps,) + B.shape)
    N, D, n = B.shape
    q = np.zeros((N, D)) if q is None else np.asarray(q, dtype=float)
    r = np.zeros((N, n)) if r is None else np.asarray(r, dtype=float)
    S = np.array(Qf, dtype=float)
    s = np.zeros(D) if qf is None else np.asarray(qf, dtype=float).copy()
    gains = np.empty((N, n, D))
    ff = np.empty((N, n))
    cost_to_go = np.empty((N + 1, D, D))
    cost_to_go[N] = S
    for k in range(N - 1, -1, -1):
        Ak, Bk = A[k], B[k]
        SB = S @ Bk
        Quu = R + Bk.T @ SB
        Qux = SB.T @ Ak
        qu = r[k] + Bk.T @ s
        sol = _solve_pd(Quu, np.column_stack([Qux, qu]))
        K, kff = sol[:, :D], -sol[:, D]
        gains[k], ff[k] = K, kff
        s = q[k] + Ak.T @ s + Qux.T @ kff
        S = Q + Ak.T @ S @ Ak - Qux.T @ K
        S = 0.5 * (S + S.T)
        cost_to_go[k] = S
    return RiccatiSolution(gains, ff, cost_to_go)


def trajectory_cost(states, controls, weights: CostWeights, reference, terminal) -> float:
    """Sum of running and terminal quadratic costs about fixed references."""
    dx = np.asarray(states[:-1]) - reference
    run = np.einsum("ki,ij,kj->", dx, weights.Q, dx)
    eff = np.einsum("ki,ij,kj->", controls, weights.R, controls)
    df = np.asarray(states[-1]) - terminal
    return float(run + eff + df @ weights.Qf @ df)


def _straight_seed(theta_start, theta_goal, start_pose, chain, drag, dt_knot, num_knots):
    us = np.tile((theta_goal - theta_start) / ((num_knots - 1) * dt_knot), (num_knots - 1, 1))
    xs = np.empty((num_knots, 3 + len(theta_start)))
    xs[0] = np.concatenate([start_pose, theta_start])
    for k in range(num_knots - 1):
        xs[k + 1] = step_map(chain, drag, xs[k], us[k], dt_knot)
    return xs, us


def iterate_tvlqr(
    chain: ChainModel,
    drag: DragModel,
    theta_start,
    theta_goal,
    iterations: int = ITERATIONS,
    weights: CostWeights | None = None,
    horizon: float = HORIZON,
    num_knots: int = NUM_KNOTS,
    start: Pose2 = Pose2(),
) -> TvlqrSolution:
    """Refine a straight joint-space seed by repeated linearize/solve/rollout.

    The base reference is the initial pose throughout; the shape is pulled
    to ``theta_goal`` only through the terminal weight.  ``cost_history[i]``
    is the cost of the nominal after ``i`` refinements (entry 0 is the seed).
    On a Riccati failure the best trajectory so far is returned with
    ``failed`` set.
    """
    th0 = np.asarray(theta_start, dtype=float)
    thg = np.asarray(theta_goal, dtype=float)
    if th0.shape != (chain.num_joints,) or thg.shape != th0.shape:
        raise ValueError(f"shapes must have {chain.num_joints} joints")
    if num_knots < 2 or horizon <= 0:
        raise ValueError("need at least two knots and a positive horizon")
    w = weights or CostWeights.default(chain.num_joints)
    dt_knot = horizon / (num_knots - 1)
    p0 = start.as_array()
    reference = np.concatenate([p0, np.zeros_like(th0)])
    terminal = np.concatenate([p0, thg])
    K = link_resistance(chain, drag)
    b, ell = chain.base_link_index, chain.link_length

    xs, us = _straight_seed(th0, thg, p0, chain, drag, dt_knot, num_knots)
    gains = np.zeros((num_knots - 1, chain.num_joints, 3 + chain.num_joints))
    history = [trajectory_cost(xs, us, w, reference, terminal)]
    best = (history[0], xs, us, gains)
    failed = False
    for _ in range(iterations):
        A, B = linearize_along(chain, drag, xs, us, dt_knot)
        q = (xs[:-1] - reference) @ w.Q
        r = us @ w.R
        qf = w.Qf @ (xs[-1] - terminal)
        try:
            sol = backward_riccati(A, B, w.Q, w.Qf, w.R, q=q, qf=qf, r=r)
        except RiccatiFailure:
            failed = True
            break
        xs, us = _kernels.rollout(
            xs[0], xs, us, sol.gains, sol.feedforward, dt_knot, SUBSTEPS, b, ell, K
        )
        gains = sol.gains
        history.append(trajectory_cost(xs, us, w, reference, terminal))
        if history[-1] < best[0]:
            best = (history[-1], xs, us, gains)
    if failed:
        _, xs, us, gains = best
    return TvlqrSolution(
        times=dt_knot * np.arange(num_knots),
        states=xs,
        controls=us,
        gains=gains,
        cost_history=history,
        failed=failed,
    )
