import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

from zpmrrt import tvlqr
from zpmrrt.dynamics import perturbation_matrix
from zpmrrt.geom import Pose2
from zpmrrt.planner import random_u_shape
from zpmrrt.tvlqr import (
    AugmentedState,
    CostWeights,
    RiccatiFailure,
    augmented_dynamics,
    backward_riccati,
    iterate_tvlqr,
    linearize_along,
    step_map,
    trajectory_cost,
)

GOAL = np.r_[np.full(6, -0.4), np.full(6, 0.4)]


def test_augmented_dynamics_blocks(chain, drag, rng):
    theta = rng.uniform(-1, 1, 12)
    state = AugmentedState(Pose2(0.1, -0.2, 0.7), theta)
    assert np.array_equal(augmented_dynamics(chain, drag, state, np.zeros(12)), np.zeros(15))
    u = rng.normal(size=12)
    f = augmented_dynamics(chain, drag, state, u)
    assert np.array_equal(f[3:], u)
    xi = perturbation_matrix(chain, drag, theta) @ u
    c, s = np.cos(0.7), np.sin(0.7)
    assert np.allclose(f[:3], [c * xi[0] - s * xi[1], s * xi[0] + c * xi[1], xi[2]], atol=1e-12)
    assert np.allclose(AugmentedState.from_array(state.as_array()).theta, theta)


def test_step_map_is_consistent_with_derivative(chain, drag, rng):
    x = np.r_[0.0, 0.0, 0.3, rng.uniform(-1, 1, 12)]
    u = rng.normal(size=12)
    h = 1e-4
    fd = (step_map(chain, drag, x, u, h) - x) / h
    assert np.allclose(fd, augmented_dynamics(chain, drag, x, u), atol=1e-3)


def test_linearization_at_rest(chain, drag):
    dt = 10.0 / 49
    xs = np.zeros((2, 15))
    A, B = linearize_along(chain, drag, xs, np.zeros((1, 12)), dt)
    assert np.allclose(A[0], np.eye(15), atol=1e-9)
    assert np.allclose(B[0][3:], dt * np.eye(12), atol=1e-9)


def test_linearization_richardson_and_expansion(chain, drag, rng):
    dt = 0.05
    xs = np.r_[0.1, 0.2, 0.3, rng.uniform(-1, 1, 12)][None].repeat(2, 0)
    us = rng.normal(scale=0.3, size=(1, 12))
    xs[1] = step_map(chain, drag, xs[0], us[0], dt)
    A1, B1 = linearize_along(chain, drag, xs, us, dt, eps=1e-5)
    A2, B2 = linearize_along(chain, drag, xs, us, dt, eps=5e-6)
    for M1, M2 in ((A1, A2), (B1, B2)):
        assert np.abs(M1 - M2).max() < 1e-6 * max(1.0, np.abs(M2).max())
    assert np.allclose(B1[0][3:], dt * np.eye(12), atol=1e-12)
    P = perturbation_matrix(chain, drag, xs[0, 3:])
    c, s = np.cos(0.3), np.sin(0.3)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    assert np.abs(B1[0][:3] - dt * R @ P).max() < 5 * dt**2 * np.abs(P).max()


def test_scalar_riccati_example():
    sol = backward_riccati([[1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert sol.gains.shape == (1, 1, 1)
    assert np.isclose(sol.gains[0, 0, 0], 0.5)


def test_zero_weights_give_zero_gains(rng):
    A = rng.normal(size=(5, 4, 4))
    B = rng.normal(size=(5, 4, 2))
    sol = backward_riccati(A, B, np.zeros((4, 4)), np.zeros((4, 4)), np.eye(2))
    assert np.all(sol.gains == 0) and np.all(sol.feedforward == 0)


def test_riccati_converges_to_algebraic_solution(rng):
    A = rng.normal(size=(4, 4)) * 0.6
    B = rng.normal(size=(4, 2))
    Q, R = np.eye(4), 0.5 * np.eye(2)
    sol = backward_riccati(A, B, Q, np.zeros((4, 4)), R, steps=500)
    S = solve_discrete_are(A, B, Q, R)
    K = np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
    assert np.abs(sol.gains[0] - K).max() < 1e-8
    assert np.abs(sol.cost_to_go[0] - S).max() < 1e-8


def test_affine_riccati_matches_direct_quadratic_program(rng):
    # stack the finite-horizon problem over the controls and solve it exactly
    N, D, n = 4, 3, 2
    A, B = rng.normal(size=(N, D, D)) * 0.7, rng.normal(size=(N, D, n))
    Q, Qf, R = np.diag([1.0, 0.5, 0.0]), np.eye(D), 0.3 * np.eye(n)
    q, r, qf = rng.normal(size=(N, D)), rng.normal(size=(N, n)), rng.normal(size=D)
    x0 = rng.normal(size=D)
    # x_k = F_k x0 + G_k U
    F = [np.eye(D)]
    G = [np.zeros((D, N * n))]
    for k in range(N):
        F.append(A[k] @ F[-1])
        Gk = A[k] @ G[-1]
        Gk[:, k * n:(k + 1) * n] += B[k]
        G.append(Gk)
    H = np.kron(np.eye(N), R)
    g = r.reshape(-1).copy()
    for k in range(N):
        Wk, wk = (Q, q[k]) if k < N else (Qf, qf)
        H += G[k].T @ Wk @ G[k]
        g += G[k].T @ (Wk @ F[k] @ x0 + wk)
    H += G[N].T @ Qf @ G[N]
    g += G[N].T @ (Qf @ F[N] @ x0 + qf)
    U = np.linalg.solve(H, -g).reshape(N, n)
    sol = backward_riccati(A, B, Q, Qf, R, q=q, qf=qf, r=r)
    x = x0
    for k in range(N):
        u = -sol.gains[k] @ x + sol.feedforward[k]
        assert np.allclose(u, U[k], atol=1e-10)
        x = A[k] @ x + B[k] @ u


def test_indefinite_control_hessian_fails():
    with pytest.raises(RiccatiFailure):
        backward_riccati([[1.0]], [[1.0]], [[0.0]], [[-5.0]], [[1.0]])


def test_cost_weights_validation():
    w = CostWeights.default(12)
    assert np.array_equal(w.Q[:3, :3], np.eye(3)) and np.all(w.Q[3:] == 0)
    assert np.array_equal(w.Qf, np.eye(15)) and np.allclose(w.R, 1e-2 * np.eye(12))
    with pytest.raises(ValueError):
        CostWeights(np.eye(2), np.eye(2), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        CostWeights(-np.eye(2), np.eye(2), np.eye(1))


def test_start_equal_goal_is_free(chain, drag):
    sol = iterate_tvlqr(chain, drag, GOAL, GOAL, iterations=2)
    assert sol.cost_history[-1] == 0.0
    assert np.allclose(sol.states, np.r_[0, 0, 0, GOAL])
    assert sol.states.shape == (50, 15) and sol.gains.shape == (49, 12, 15)


@pytest.fixture(scope="module")
def solved(chain, drag):
    theta_s = random_u_shape(np.random.default_rng(2), chain)
    return theta_s, iterate_tvlqr(chain, drag, theta_s, GOAL)


def test_cost_bookkeeping(solved):
    _, sol = solved
    w = CostWeights.default(12)
    ref = np.zeros(15)
    term = np.r_[0, 0, 0, GOAL]
    total = 0.0
    for k in range(49):
        dx = sol.states[k] - ref
        total += dx[:3] @ dx[:3] + 1e-2 * sol.controls[k] @ sol.controls[k]
    total += np.sum((sol.states[-1] - term) ** 2)
    assert np.isclose(sol.cost_history[-1], total, rtol=1e-12)
    # the shape reference does not enter the running cost
    other = np.r_[0, 0, 0, np.ones(12)]
    assert trajectory_cost(sol.states, sol.controls, w, other, term) == \
        trajectory_cost(sol.states, sol.controls, w, ref, term)


def test_refinement_settles_and_reaches(solved):
    _, sol = solved
    c = np.array(sol.cost_history)
    assert len(c) == 21 and not sol.failed
    assert c[-1] < 0.1 * c[0]
    assert np.linalg.norm(sol.shapes[-1] - GOAL) < 0.2


def test_refinement_is_reproducible(chain, drag, solved):
    theta_s, sol = solved
    again = iterate_tvlqr(chain, drag, theta_s, GOAL)
    assert np.array_equal(again.gains, sol.gains)
    assert again.cost_history == sol.cost_history


def test_riccati_failure_returns_best(chain, drag, monkeypatch):
    calls = {"n": 0}
    real = tvlqr.backward_riccati

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] > 2:
            raise RiccatiFailure("forced")
        return real(*a, **k)

    monkeypatch.setattr(tvlqr, "backward_riccati", flaky)
    theta_s = random_u_shape(np.random.default_rng(0), chain)
    sol = iterate_tvlqr(chain, drag, theta_s, GOAL, iterations=5)
    assert sol.failed and len(sol.cost_history) == 3
    assert min(sol.cost_history) == pytest.approx(
        trajectory_cost(sol.states, sol.controls, CostWeights.default(12), np.zeros(15),
                        np.r_[0, 0, 0, GOAL]))
