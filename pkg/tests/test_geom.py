import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from zpmrrt import _kernels
from zpmrrt.geom import (
    LEFT_END,
    RIGHT_END,
    ChainModel,
    Pose2,
    adjoint,
    end_effector_positions,
    forward_kinematics,
    joint_positions,
    link_endpoints,
    link_velocity_maps,
    manipulator_jacobian,
    se2_exp,
    twist_bracket,
    wrap_angle,
)

angles = st.floats(-np.pi, np.pi, allow_nan=False)
shapes = arrays(np.float64, 12, elements=st.floats(-3.0, 3.0))


def hom(x, y, psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, x], [s, c, y], [0, 0, 1.0]])


def naive_frames(chain, base, theta):
    """Walk the chain with homogeneous matrices, one joint at a time."""
    ell, b = chain.link_length, chain.base_link_index
    T = [None] * chain.num_links
    T[b] = base.matrix()
    for i in range(b + 1, chain.num_links):
        T[i] = T[i - 1] @ hom(ell / 2, 0, 0) @ hom(0, 0, theta[i - 1]) @ hom(ell / 2, 0, 0)
    for i in range(b - 1, -1, -1):
        T[i] = T[i + 1] @ hom(-ell / 2, 0, 0) @ hom(0, 0, theta[i]) @ hom(-ell / 2, 0, 0)
    return T


def test_wrap_angle_range():
    a = np.linspace(-20, 20, 1001)
    w = wrap_angle(a)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    assert np.allclose(np.sin(w), np.sin(a)) and np.allclose(np.cos(w), np.cos(a))
    assert wrap_angle(-np.pi) == np.pi


@given(angles, angles, st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_pose_compose_matches_matrices(p1, p2, x1, y1, x2, y2):
    a, b = Pose2(x1, y1, p1), Pose2(x2, y2, p2)
    assert np.allclose((a @ b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)
    assert np.allclose((a @ a.inverse()).as_array(), 0.0, atol=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_se2_exp_matches_matrix_exponential(vx, vy, w):
    X = np.array([[0, -w, vx], [w, 0, vy], [0, 0, 0.0]])
    assert np.allclose(se2_exp([vx, vy, w]).matrix(), expm(X), atol=1e-10)


def test_se2_exp_small_angle_branch_is_continuous():
    a = se2_exp([0.3, -0.2, 0.999e-9]).as_array()
    b = se2_exp([0.3, -0.2, 1.001e-9]).as_array()
    assert np.allclose(a, b, rtol=0, atol=1e-11)


@given(angles, st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_adjoint_is_conjugation(psi, x, y, vx, vy, w):
    g = Pose2(x, y, psi).matrix()
    X = np.array([[0, -w, vx], [w, 0, vy], [0, 0, 0.0]])
    Y = g @ X @ np.linalg.inv(g)
    assert np.allclose(adjoint((x, y, psi)) @ [vx, vy, w], [Y[0, 2], Y[1, 2], Y[1, 0]], atol=1e-10)


def test_chain_layout(chain):
    assert chain.num_joints == 12
    assert list(chain.left_joints) == list(range(6))
    assert list(chain.right_joints) == list(range(6, 12))
    assert chain.total_length == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ChainModel(num_links=3, link_length=1.0, base_link_index=5)


def test_straight_chain_hands_at_half_bodylength(chain):
    ends = end_effector_positions(chain, np.zeros(12))
    assert np.allclose(ends, [[-0.5, 0.0], [0.5, 0.0]], atol=1e-15)


def test_u_shape_opens_forward(chain):
    theta = np.zeros(12)
    theta[2], theta[8] = -np.pi / 2, np.pi / 2
    ends = end_effector_positions(chain, theta)
    assert ends[0, 1] > 0 and ends[1, 1] > 0


@settings(max_examples=50, deadline=None)
@given(shapes, angles, st.floats(-1, 1), st.floats(-1, 1))
def test_forward_kinematics_matches_naive_composition(chain, theta, psi, x, y):
    base = Pose2(x, y, psi)
    fk = forward_kinematics(chain, base, theta)
    for T, f in zip(naive_frames(chain, base, theta), fk):
        assert np.allclose(T, hom(*f), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(shapes)
def test_links_keep_their_length_and_connect(chain, theta):
    seg = link_endpoints(chain, theta)
    assert np.allclose(np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1), chain.link_length)
    assert np.allclose(seg[1:, 0], seg[:-1, 1], atol=1e-14)
    assert np.allclose(joint_positions(chain, theta), seg[1:, 0], atol=1e-14)


def test_shape_validation(chain):
    with pytest.raises(ValueError):
        forward_kinematics(chain, Pose2(), np.zeros(11))
    with pytest.raises(ValueError):
        end_effector_positions(chain, np.full(12, np.nan))
    with pytest.raises(ValueError):
        manipulator_jacobian(chain, np.zeros(12), "elbow")


@pytest.mark.parametrize("end", [LEFT_END, RIGHT_END])
def test_jacobian_matches_finite_differences(chain, rng, end):
    k = 0 if end == LEFT_END else 1
    for _ in range(20):
        theta = rng.uniform(-np.pi, np.pi, 12)
        J = manipulator_jacobian(chain, theta, end)
        h = 1e-6
        fd = np.empty_like(J)
        for j in range(12):
            e = np.zeros(12)
            e[j] = h
            fd[:, j] = (end_effector_positions(chain, theta + e)[k]
                        - end_effector_positions(chain, theta - e)[k]) / (2 * h)
        assert np.abs(J - fd).max() < 1e-6 * max(1.0, np.abs(J).max())


def test_jacobian_only_uses_its_own_arm(chain, rng):
    theta = rng.uniform(-1, 1, 12)
    assert np.all(manipulator_jacobian(chain, theta, RIGHT_END)[:, :6] == 0)
    assert np.all(manipulator_jacobian(chain, theta, LEFT_END)[:, 6:] == 0)


def test_distal_joint_column_has_link_length_magnitude(chain):
    J = manipulator_jacobian(chain, np.zeros(12), RIGHT_END)
    assert np.allclose(J[:, 11], [0.0, chain.link_length])


def test_compiled_hand_jacobian_agrees(chain, rng):
    for _ in range(10):
        theta = rng.uniform(-np.pi, np.pi, 12)
        for right, end, k in ((True, RIGHT_END, 1), (False, LEFT_END, 0)):
            hand, J = _kernels.hand_jacobian(theta, 6, chain.link_length, right)
            assert np.allclose(hand, end_effector_positions(chain, theta)[k], atol=1e-14)
            assert np.allclose(J, manipulator_jacobian(chain, theta, end), atol=1e-14)


def test_link_velocity_maps_match_finite_differences(chain, rng):
    theta = rng.uniform(-1, 1, 12)
    xi = rng.normal(size=3)
    thd = rng.normal(size=12)
    maps = link_velocity_maps(chain, theta)
    h = 1e-6

    def frames(t):
        return forward_kinematics(chain, se2_exp(xi * t), theta + t * thd)

    d = (frames(h) - frames(-h)) / (2 * h)
    f0 = frames(0.0)
    for i in range(chain.num_links):
        c, s = np.cos(f0[i, 2]), np.sin(f0[i, 2])
        body = np.array([c * d[i, 0] + s * d[i, 1], -s * d[i, 0] + c * d[i, 1], d[i, 2]])
        assert np.allclose(maps[i] @ np.concatenate([xi, thd]), body, atol=1e-7)


@given(*[st.floats(-2, 2)] * 6)
def test_twist_bracket_is_matrix_commutator(a0, a1, a2, b0, b1, b2):
    def hat(v):
        return np.array([[0, -v[2], v[0]], [v[2], 0, v[1]], [0, 0, 0.0]])

    a, b = [a0, a1, a2], [b0, b1, b2]
    C = hat(a) @ hat(b) - hat(b) @ hat(a)
    assert np.allclose(hat(twist_bracket(a, b)), C, atol=1e-12)
