"""Static-base collision checks for a planar chain among circular obstacles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import ChainModel, link_endpoints


@dataclass
class World:
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        obs = np.asarray(self.obstacles, dtype=float).reshape(-1, 3)
        if np.any(obs[:, 2] <= 0):
            raise ValueError("obstacle radii must be positive")
        self.obstacles = obs

    def __len__(self) -> int:
        return len(self.obstacles)


def point_segment_distance(p, a, b):
    """Distance from points p to segments ab; all arrays broadcast over (..., 2)."""
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.where(denom > 0, np.sum((p - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def segment_distance(a1, b1, a2, b2):
    """Minimum distance between segment pairs (zero when they cross)."""
    d1, d2 = b1 - a1, b2 - a2
    o1 = _cross(d1, a2 - a1)
    o2 = _cross(d1, b2 - a1)
    o3 = _cross(d2, a1 - a2)
    o4 = _cross(d2, b1 - a2)
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
    dist = np.minimum.reduce(
        [
            point_segment_distance(a1, a2, b2),
            point_segment_distance(b1, a2, b2),
            point_segment_distance(a2, a1, b1),
            point_segment_distance(b2, a1, b1),
        ]
    )
    return np.where(crossing, 0.0, dist)


_pair_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _self_pairs(num_links: int):
    if num_links not in _pair_cache:
        i, j = np.triu_indices(num_links, k=2)
        _pair_cache[num_links] = (i, j)
    return _pair_cache[num_links]


def segments_in_collision(
    segs: np.ndarray, world: World, half_width: float = 0.0, self_collision: bool = True
) -> bool:
    a, b = segs[:, 0], segs[:, 1]
    if len(world):
        c = world.obstacles[:, :2]
        r = world.obstacles[:, 2]
        d = point_segment_distance(c[:, None, :], a[None], b[None])
        if np.any(d < (r + half_width)[:, None]):
            return True
    if self_collision:
        i, j = _self_pairs(len(segs))
        d = segment_distance(a[i], b[i], a[j], b[j])
        # zero-width links collide only when they touch
        if np.any(d <= 2.0 * half_width):
            return True
    return False


def collision_check(
    chain: ChainModel, shape, world: World, half_width: float = 0.0, self_collision: bool = True
) -> bool:
    """True when the chain, base held at the origin, hits an obstacle or itself.

    An obstacle is hit when a link lies strictly closer than its radius
    (plus ``half_width``); exact tangency is free.
    """
    return segments_in_collision(link_endpoints(chain, shape), world, half_width, self_collision)
