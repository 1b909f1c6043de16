"""Planar rigid-body algebra and serial-chain kinematics.

Joint ``j`` sits between links ``j`` and ``j + 1``.  Its angle is the
counter-clockwise rotation of the link farther from the base relative to
the link nearer the base, so the same sign bends either arm the same way
when viewed outward from the base.  Under this convention a "U" has a
negative joint on the left arm and a positive joint on the right arm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEFT_END = "left_end"
RIGHT_END = "right_end"


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    # leave in-range angles bit-exact
    w = np.where((a > -np.pi) & (a <= np.pi), a, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    @classmethod
    def from_array(cls, a) -> "Pose2":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi])

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.psi), np.sin(self.psi)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = np.cos(self.psi), np.sin(self.psi)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.psi + other.psi,
        )

    __matmul__ = compose

    def inverse(self) -> "Pose2":
        c, s = np.cos(self.psi), np.sin(self.psi)
        return Pose2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.psi)

    def transform_point(self, p) -> np.ndarray:
        c, s = np.cos(self.psi), np.sin(self.psi)
        p = np.asarray(p, dtype=float)
        return np.array([self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]])


@dataclass(frozen=True)
class Twist2:
    vx: float = 0.0
    vy: float = 0.0
    wz: float = 0.0

    @classmethod
    def from_array(cls, a) -> "Twist2":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.wz])

    def __add__(self, other: "Twist2") -> "Twist2":
        return Twist2(self.vx + other.vx, self.vy + other.vy, self.wz + other.wz)

    def __mul__(self, k: float) -> "Twist2":
        return Twist2(k * self.vx, k * self.vy, k * self.wz)

    __rmul__ = __mul__


def se2_exp(xi) -> Pose2:
    """Group exponential of a body twist held for unit time."""
    vx, vy, w = (float(v) for v in xi)
    if abs(w) < 1e-9:
        # second-order series keeps the small-angle branch smooth
        a = 1.0 - w * w / 6.0
        b = w / 2.0 - w**3 / 24.0
    else:
        a = np.sin(w) / w
        # 1 - cos(w) written without cancellation
        b = 2.0 * np.sin(0.5 * w) ** 2 / w
    return Pose2(a * vx - b * vy, b * vx + a * vy, w)


def twist_bracket(a, b) -> np.ndarray:
    """Lie bracket [a, b] of two se(2) twists given as (vx, vy, omega)."""
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], 0.0])


def adjoint(pose) -> np.ndarray:
    """3x3 adjoint of an SE(2) pose given as (x, y, psi)."""
    x, y, psi = pose
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, y], [s, c, -x], [0.0, 0.0, 1.0]])


def inverse_adjoints(frames: np.ndarray) -> np.ndarray:
    """Stacked adjoints of the inverses of an (N, 3) array of poses."""
    x, y, psi = frames[:, 0], frames[:, 1], frames[:, 2]
    c, s = np.cos(psi), np.sin(psi)
    # inverse pose: R^T, -R^T p
    ix = -c * x - s * y
    iy = s * x - c * y
    out = np.zeros((len(frames), 3, 3))
    out[:, 0, 0] = c
    out[:, 0, 1] = s
    out[:, 1, 0] = -s
    out[:, 1, 1] = c
    out[:, 0, 2] = iy
    out[:, 1, 2] = -ix
    out[:, 2, 2] = 1.0
    return out


@dataclass(frozen=True)
class ChainModel:
    num_links: int = 13
    link_length: float = 1.0 / 13.0
    base_link_index: int = 6

    def __post_init__(self):
        if self.num_links < 2:
            raise ValueError("a chain needs at least two links")
        if not 0 <= self.base_link_index < self.num_links:
            raise ValueError("base_link_index out of range")
        if self.link_length <= 0:
            raise ValueError("link_length must be positive")

    @property
    def num_joints(self) -> int:
        return self.num_links - 1

    @property
    def total_length(self) -> float:
        return self.num_links * self.link_length

    @property
    def left_joints(self) -> range:
        return range(0, self.base_link_index)

    @property
    def right_joints(self) -> range:
        return range(self.base_link_index, self.num_joints)

    @classmethod
    def swimmer(cls) -> "ChainModel":
        """The thirteen-link, one-bodylength reference swimmer."""
        return cls(num_links=13, link_length=1.0 / 13.0, base_link_index=6)


def _check_shape(chain: ChainModel, shape) -> np.ndarray:
    theta = np.asarray(shape, dtype=float)
    if theta.shape != (chain.num_joints,):
        raise ValueError(
            f"shape has {theta.shape} entries, chain has {chain.num_joints} joints"
        )
    if not np.all(np.isfinite(theta)):
        raise ValueError("shape contains non-finite entries")
    return theta


def link_angles(chain: ChainModel, shape) -> np.ndarray:
    theta = _check_shape(chain, shape)
    b = chain.base_link_index
    phi = np.zeros(chain.num_links)
    phi[b + 1 :] = np.cumsum(theta[b:])
    if b > 0:
        phi[:b] = np.cumsum(theta[:b][::-1])[::-1]
    return phi


def _chain_geometry(chain: ChainModel, shape):
    """Link midpoint frames and joint positions, both in the base-link frame."""
    phi = link_angles(chain, shape)
    b, ell = chain.base_link_index, chain.link_length
    t = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    mids = np.zeros((chain.num_links, 2))
    joints = np.zeros((chain.num_joints, 2))
    # joint j is the +end of link j and the -end of link j + 1
    if b < chain.num_joints:
        right = np.cumsum(ell * t[b + 1 :], axis=0)
        joints[b] = [ell / 2.0, 0.0]
        joints[b + 1 :] = joints[b] + right[:-1]
        mids[b + 1 :] = joints[b:] + 0.5 * ell * t[b + 1 :]
    if b > 0:
        left = np.cumsum(ell * t[:b][::-1], axis=0)[::-1]
        joints[b - 1] = [-ell / 2.0, 0.0]
        joints[: b - 1] = joints[b - 1] - left[1:]
        mids[:b] = joints[:b] - 0.5 * ell * t[:b]
    frames = np.column_stack([mids, phi])
    return frames, joints


def forward_kinematics(chain: ChainModel, base: Pose2, shape) -> np.ndarray:
    """World frames of every link midpoint as an (N, 3) array of (x, y, psi).

    Headings are left unwrapped so they stay continuous along a chain.
    """
    local, _ = _chain_geometry(chain, shape)
    c, s = np.cos(base.psi), np.sin(base.psi)
    out = np.empty_like(local)
    out[:, 0] = base.x + c * local[:, 0] - s * local[:, 1]
    out[:, 1] = base.y + s * local[:, 0] + c * local[:, 1]
    out[:, 2] = base.psi + local[:, 2]
    return out


def joint_positions(chain: ChainModel, shape) -> np.ndarray:
    return _chain_geometry(chain, shape)[1]


def link_endpoints(chain: ChainModel, shape) -> np.ndarray:
    """(N, 2, 2) array of link segment endpoints in the base frame."""
    frames, _ = _chain_geometry(chain, shape)
    half = 0.5 * chain.link_length * np.stack(
        [np.cos(frames[:, 2]), np.sin(frames[:, 2])], axis=1
    )
    return np.stack([frames[:, :2] - half, frames[:, :2] + half], axis=1)


def end_effector_positions(chain: ChainModel, shape) -> np.ndarray:
    """Hand positions (left end, right end) in the base frame, shape (2, 2)."""
    ends = link_endpoints(chain, shape)
    return np.array([ends[0, 0], ends[-1, 1]])


def _subchain_joints(chain: ChainModel, end_selector: str) -> range:
    if end_selector == LEFT_END:
        return chain.left_joints
    if end_selector == RIGHT_END:
        return chain.right_joints
    raise ValueError(f"unknown end selector {end_selector!r}")


def manipulator_jacobian(chain: ChainModel, shape, end_selector: str) -> np.ndarray:
    """2 x n map from joint rates to the selected hand's velocity, base held fixed."""
    joints = _subchain_joints(chain, end_selector)
    hands = end_effector_positions(chain, shape)
    hand = hands[0] if end_selector == LEFT_END else hands[1]
    pj = joint_positions(chain, shape)
    J = np.zeros((2, chain.num_joints))
    for j in joints:
        r = hand - pj[j]
        J[:, j] = [-r[1], r[0]]
    return J


def joint_twists(chain: ChainModel, shape) -> np.ndarray:
    """Unit-rate spatial twists (base frame) of each joint, shape (n, 3)."""
    pj = joint_positions(chain, shape)
    return np.column_stack([pj[:, 1], -pj[:, 0], np.ones(chain.num_joints)])


def distal_mask(chain: ChainModel) -> np.ndarray:
    """mask[i, j] is True when joint j moves link i relative to the base."""
    b = chain.base_link_index
    i = np.arange(chain.num_links)[:, None]
    j = np.arange(chain.num_joints)[None, :]
    return ((j >= b) & (i > j)) | ((j < b) & (i <= j))


def link_velocity_maps(chain: ChainModel, shape) -> np.ndarray:
    """Per-link 3 x (3 + n) maps from (xi, theta_dot) to link body velocity.

    Link body velocity is expressed at the link midpoint in the link frame.
    """
    frames, _ = _chain_geometry(chain, shape)
    ad_inv = inverse_adjoints(frames)
    tw = joint_twists(chain, shape)
    mask = distal_mask(chain)
    n = chain.num_joints
    spatial = np.zeros((chain.num_links, 3, 3 + n))
    spatial[:, :, :3] = np.eye(3)
    spatial[:, :, 3:] = np.where(mask[:, None, :], tw.T[None, :, :], 0.0)
    return ad_inv @ spatial
