"""Compiled inner loops for the planner and integrators.

These mirror the vectorised numpy code in ``geom``, ``dynamics`` and
``collision``; the test suite cross-checks the two.
"""

from __future__ import annotations

import numpy as np
from numba import njit

REASON_ORTHOGONAL = 0
REASON_REACHED = 1
REASON_COLLISION = 2
REASON_SINGULAR = 3
REASON_TIMEOUT = 4

REASONS = ("orthogonal", "reached", "collision", "singular", "timeout")


@njit(cache=True)
def geometry(theta, b, ell):
    n = theta.size
    N = n + 1
    phi = np.zeros(N)
    mids = np.zeros((N, 2))
    joints = np.zeros((n, 2))
    acc = 0.0
    x = 0.5 * ell
    y = 0.0
    for i in range(b + 1, N):
        acc += theta[i - 1]
        c = np.cos(acc)
        s = np.sin(acc)
        phi[i] = acc
        joints[i - 1, 0] = x
        joints[i - 1, 1] = y
        mids[i, 0] = x + 0.5 * ell * c
        mids[i, 1] = y + 0.5 * ell * s
        x += ell * c
        y += ell * s
    acc = 0.0
    x = -0.5 * ell
    y = 0.0
    for i in range(b - 1, -1, -1):
        acc += theta[i]
        c = np.cos(acc)
        s = np.sin(acc)
        phi[i] = acc
        joints[i, 0] = x
        joints[i, 1] = y
        mids[i, 0] = x - 0.5 * ell * c
        mids[i, 1] = y - 0.5 * ell * s
        x -= ell * c
        y -= ell * s
    return phi, mids, joints


@njit(cache=True)
def wrench_matrix(theta, b, ell, K):
    phi, mids, joints = geometry(theta, b, ell)
    n = theta.size
    N = n + 1
    A = np.empty((N, 3, 3))
    ad = np.zeros((3, 3))
    for l in range(N):
        c = np.cos(phi[l])
        s = np.sin(phi[l])
        x = mids[l, 0]
        y = mids[l, 1]
        ix = -c * x - s * y
        iy = s * x - c * y
        ad[0, 0] = c
        ad[0, 1] = s
        ad[0, 2] = iy
        ad[1, 0] = -s
        ad[1, 1] = c
        ad[1, 2] = -ix
        ad[2, 2] = 1.0
        A[l] = ad.T @ K @ ad
    W = np.zeros((3, 3 + n))
    for l in range(N):
        W[:, :3] -= A[l]
    acc = np.zeros((3, 3))
    for i in range(N - 1, b, -1):
        acc += A[i]
        j = i - 1
        W[:, 3 + j] = -(acc[:, 0] * joints[j, 1] - acc[:, 1] * joints[j, 0] + acc[:, 2])
    acc = np.zeros((3, 3))
    for j in range(b):
        acc += A[j]
        W[:, 3 + j] = -(acc[:, 0] * joints[j, 1] - acc[:, 1] * joints[j, 0] + acc[:, 2])
    return W


@njit(cache=True)
def perturbation_matrix(theta, b, ell, K):
    W = wrench_matrix(theta, b, ell, K)
    return -np.linalg.solve(W[:, :3], W[:, 3:])


@njit(cache=True)
def _point_segment_distance(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    den = dx * dx + dy * dy
    t = 0.0
    if den > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / den
        t = min(max(t, 0.0), 1.0)
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return np.sqrt(qx * qx + qy * qy)


@njit(cache=True)
def _segment_distance(a1x, a1y, b1x, b1y, a2x, a2y, b2x, b2y):
    d1x = b1x - a1x
    d1y = b1y - a1y
    d2x = b2x - a2x
    d2y = b2y - a2y
    o1 = d1x * (a2y - a1y) - d1y * (a2x - a1x)
    o2 = d1x * (b2y - a1y) - d1y * (b2x - a1x)
    o3 = d2x * (a1y - a2y) - d2y * (a1x - a2x)
    o4 = d2x * (b1y - a2y) - d2y * (b1x - a2x)
    if o1 * o2 < 0.0 and o3 * o4 < 0.0:
        return 0.0
    d = _point_segment_distance(a1x, a1y, a2x, a2y, b2x, b2y)
    d = min(d, _point_segment_distance(b1x, b1y, a2x, a2y, b2x, b2y))
    d = min(d, _point_segment_distance(a2x, a2y, a1x, a1y, b1x, b1y))
    d = min(d, _point_segment_distance(b2x, b2y, a1x, a1y, b1x, b1y))
    return d


@njit(cache=True)
def collides(theta, b, ell, obstacles, half_width, self_collision):
    phi, mids, _ = geometry(theta, b, ell)
    N = phi.size
    seg = np.empty((N, 4))
    for i in range(N):
        hx = 0.5 * ell * np.cos(phi[i])
        hy = 0.5 * ell * np.sin(phi[i])
        seg[i, 0] = mids[i, 0] - hx
        seg[i, 1] = mids[i, 1] - hy
        seg[i, 2] = mids[i, 0] + hx
        seg[i, 3] = mids[i, 1] + hy
    for k in range(obstacles.shape[0]):
        lim = obstacles[k, 2] + half_width
        for i in range(N):
            d = _point_segment_distance(
                obstacles[k, 0], obstacles[k, 1], seg[i, 0], seg[i, 1], seg[i, 2], seg[i, 3]
            )
            if d < lim:
                return True
    if self_collision:
        for i in range(N):
            for j in range(i + 2, N):
                d = _segment_distance(
                    seg[i, 0], seg[i, 1], seg[i, 2], seg[i, 3],
                    seg[j, 0], seg[j, 1], seg[j, 2], seg[j, 3],
                )
                if d <= 2.0 * half_width:
                    return True
    return False


@njit(cache=True)
def blocked(theta, b, ell, obstacles, half_width, self_collision, joint_limit):
    for v in theta:
        if abs(v) > joint_limit:
            return True
    return collides(theta, b, ell, obstacles, half_width, self_collision)


@njit(cache=True)
def steer(
    theta0, target, zpm_mode, dt, max_steps, b, ell, K,
    obstacles, half_width, self_collision, joint_limit, orth_tol, sing_tol,
):
    n = theta0.size
    m = 3
    dense = np.empty((max_steps + 1, n))
    res = np.empty(max_steps)
    theta = theta0.copy()
    dense[0] = theta
    reason = REASON_TIMEOUT
    k = 0
    u = np.zeros(n)
    P = np.zeros((m, n))
    while k < max_steps:
        d = target - theta
        dist = np.sqrt(np.sum(d * d))
        if zpm_mode:
            P = perturbation_matrix(theta, b, ell, K)
            _, s, vt = np.linalg.svd(P)
            if s[0] == 0.0 or s[m - 1] < sing_tol * s[0]:
                reason = REASON_SINGULAR
                break
            null = np.ascontiguousarray(vt[m:])
            p = (null @ d) @ null
            pn = np.sqrt(np.sum(p * p))
            if dist == 0.0 or pn <= orth_tol * dist or pn <= 0.5 * dt:
                reason = REASON_ORTHOGONAL
                break
            u = p / pn
            step = dt
        else:
            if dist == 0.0:
                reason = REASON_REACHED
                break
            u = d / dist
            step = min(dt, dist)
        new = theta + step * u
        if blocked(new, b, ell, obstacles, half_width, self_collision, joint_limit):
            reason = REASON_COLLISION
            break
        if zpm_mode:
            r = np.ascontiguousarray(P) @ u
            res[k] = np.sqrt(np.sum(r * r))
        else:
            res[k] = np.nan
        theta = new
        k += 1
        dense[k] = theta
    return dense[: k + 1].copy(), res[:k].copy(), reason


@njit(cache=True)
def body_velocity(theta, theta_dot, b, ell, K):
    return perturbation_matrix(theta, b, ell, K) @ theta_dot


@njit(cache=True)
def hand_jacobian(theta, b, ell, right):
    """Hand position and its 2 x n joint Jacobian, base fixed."""
    phi, mids, joints = geometry(theta, b, ell)
    n = theta.size
    tip = n if right else 0
    sgn = 1.0 if right else -1.0
    hx = mids[tip, 0] + sgn * 0.5 * ell * np.cos(phi[tip])
    hy = mids[tip, 1] + sgn * 0.5 * ell * np.sin(phi[tip])
    J = np.zeros((2, n))
    lo, hi = (b, n) if right else (0, b)
    for j in range(lo, hi):
        J[0, j] = -(hy - joints[j, 1])
        J[1, j] = hx - joints[j, 0]
    return np.array([hx, hy]), J


@njit(cache=True)
def _pinv_solve(A, rhs, rank_tol):
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    x = np.zeros(A.shape[1])
    bad = False
    for i in range(s.size):
        if s[0] > 0.0 and s[i] > rank_tol * s[0]:
            x += (u[:, i] @ rhs) / s[i] * vt[i]
        else:
            bad = True
    return x, bad


@njit(cache=True)
def track_rates(theta, desired, gain, right, zpm_mode, b, ell, K, rank_tol):
    """Joint rates, body twist and rank flag for residual hand feedback."""
    hand, J = hand_jacobian(theta, b, ell, right)
    P = perturbation_matrix(theta, b, ell, K)
    xdot = gain * (desired - hand)
    if zpm_mode:
        n = theta.size
        A = np.zeros((5, n))
        A[:2] = J
        A[2:] = P
        rhs = np.zeros(5)
        rhs[:2] = xdot
        thd, bad = _pinv_solve(A, rhs, rank_tol)
    else:
        thd, bad = _pinv_solve(J, xdot, rank_tol)
    return thd, P @ thd, bad


@njit(cache=True)
def step_pose(pose, xi, h):
    """Right-compose ``pose`` with exp(h * xi); heading stays unwrapped."""
    vx = xi[0] * h
    vy = xi[1] * h
    w = xi[2] * h
    if abs(w) < 1e-9:
        a = 1.0 - w * w / 6.0
        bb = w / 2.0 - w * w * w / 24.0
    else:
        a = np.sin(w) / w
        bb = 2.0 * np.sin(0.5 * w) ** 2 / w
    dx = a * vx - bb * vy
    dy = bb * vx + a * vy
    c = np.cos(pose[2])
    s = np.sin(pose[2])
    out = np.empty(3)
    out[0] = pose[0] + c * dx - s * dy
    out[1] = pose[1] + s * dx + c * dy
    out[2] = pose[2] + w
    return out


@njit(cache=True)
def segment_twist(theta, rate, h, b, ell, K):
    """Fourth-order Magnus twist over a step of constant joint rate."""
    k1 = perturbation_matrix(theta, b, ell, K) @ rate
    k2 = perturbation_matrix(theta + 0.5 * h * rate, b, ell, K) @ rate
    k4 = perturbation_matrix(theta + h * rate, b, ell, K) @ rate
    xi = (k1 + 4.0 * k2 + k4) / 6.0
    xi[0] += (h / 12.0) * (k1[1] * k4[2] - k1[2] * k4[1])
    xi[1] += (h / 12.0) * (k1[2] * k4[0] - k1[0] * k4[2])
    return xi


@njit(cache=True)
def integrate_polyline(W, dt, pose0, b, ell, K):
    """Unit-speed execution of a joint polyline; returns times, poses, shapes."""
    M, n = W.shape
    counts = np.zeros(M, dtype=np.int64)
    total = 1
    for i in range(M - 1):
        L = np.sqrt(np.sum((W[i + 1] - W[i]) ** 2))
        if L > 0.0:
            counts[i] = max(1, int(np.ceil(L / dt - 1e-9)))
            total += counts[i]
    times = np.empty(total)
    poses = np.empty((total, 3))
    shapes = np.empty((total, n))
    times[0] = 0.0
    poses[0] = pose0
    shapes[0] = W[0]
    k = 0
    t = 0.0
    for i in range(M - 1):
        if counts[i] == 0:
            continue
        d = W[i + 1] - W[i]
        L = np.sqrt(np.sum(d * d))
        h = L / counts[i]
        rate = d / L
        for j in range(counts[i]):
            theta = W[i] + (j * h) * rate
            xi = segment_twist(theta, rate, h, b, ell, K)
            poses[k + 1] = step_pose(poses[k], xi, h)
            shapes[k + 1] = W[i] + ((j + 1) * h) * rate
            times[k + 1] = t + (j + 1) * h
            k += 1
        shapes[k] = W[i + 1]
        t += L
        times[k] = t
    return times, poses, shapes


@njit(cache=True)
def augmented_step(x, u, h, substeps, b, ell, K):
    """Discrete map of the stacked (world pose, shape) system under constant u."""
    n = u.size
    hs = h / substeps
    pose = x[:3].copy()
    theta = x[3:].copy()
    for _ in range(substeps):
        xi = segment_twist(theta, u, hs, b, ell, K)
        pose = step_pose(pose, xi, hs)
        theta = theta + hs * u
    out = np.empty(3 + n)
    out[:3] = pose
    out[3:] = theta
    return out


@njit(cache=True)
def linearize(xs, us, h, substeps, eps, b, ell, K):
    """Central-difference Jacobians of ``augmented_step`` at each knot."""
    N, n = us.shape
    D = xs.shape[1]
    A = np.empty((N, D, D))
    B = np.empty((N, D, n))
    for k in range(N):
        for i in range(D):
            xp = xs[k].copy()
            xm = xs[k].copy()
            xp[i] += eps
            xm[i] -= eps
            A[k, :, i] = (
                augmented_step(xp, us[k], h, substeps, b, ell, K)
                - augmented_step(xm, us[k], h, substeps, b, ell, K)
            ) / (2.0 * eps)
        for i in range(n):
            up = us[k].copy()
            um = us[k].copy()
            up[i] += eps
            um[i] -= eps
            B[k, :, i] = (
                augmented_step(xs[k], up, h, substeps, b, ell, K)
                - augmented_step(xs[k], um, h, substeps, b, ell, K)
            ) / (2.0 * eps)
    return A, B


@njit(cache=True)
def rollout(x0, xs_nom, us_nom, gains, ff, h, substeps, b, ell, K):
    """Closed-loop rollout u_k = u_nom_k + ff_k - K_k (x_k - x_nom_k)."""
    N, n = us_nom.shape
    xs = np.empty_like(xs_nom)
    us = np.empty_like(us_nom)
    xs[0] = x0
    for k in range(N):
        us[k] = us_nom[k] + ff[k] - gains[k] @ (xs[k] - xs_nom[k])
        xs[k + 1] = augmented_step(xs[k], us[k], h, substeps, b, ell, K)
    return xs, us
