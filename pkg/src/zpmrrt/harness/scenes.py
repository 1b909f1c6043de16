"""Scene files: circular obstacles plus goal and optional start shapes."""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..collision import World, collision_check
from ..geom import ChainModel
from ..planner import all_u_shapes
from .config import ConfigError

BUILTIN = ("empty", "one", "two", "three")
OBSTACLE_RADIUS = 0.08


def pincer_goal(chain: ChainModel, curl: float = 0.4) -> np.ndarray:
    """Both arms curled inward so the hands close in front of the base."""
    theta = np.zeros(chain.num_joints)
    theta[list(chain.left_joints)] = -curl
    theta[list(chain.right_joints)] = curl
    return theta


@dataclass
class Scene:
    name: str
    world: World
    goal: np.ndarray
    start: np.ndarray | None = None

    @property
    def num_obstacles(self) -> int:
        return len(self.world)

    def free_u_shapes(self, chain: ChainModel) -> list[np.ndarray]:
        return [u for u in all_u_shapes(chain) if not collision_check(chain, u, self.world)]


def _floats(raw: str) -> np.ndarray:
    return np.array([float(v) for v in raw.replace(",", " ").split()])


def parse_scene(text: str, chain: ChainModel | None = None) -> Scene:
    chain = chain or ChainModel.swimmer()
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        p.read_string(text)
        sec = p["scene"]
        name = sec.get("name", "scene")
        goal = _floats(sec["goal"])
        start = _floats(sec["start"]) if "start" in sec else None
        obs = [_floats(v) for v in p["obstacles"].values()] if p.has_section("obstacles") else []
    except (configparser.Error, KeyError, ValueError) as exc:
        raise ConfigError(f"bad scene file: {exc}") from exc
    if goal.shape != (chain.num_joints,) or (start is not None and start.shape != goal.shape):
        raise ConfigError(f"scene shapes must have {chain.num_joints} joints")
    if any(o.shape != (3,) for o in obs):
        raise ConfigError("each obstacle needs cx, cy, r")
    try:
        world = World(np.array(obs).reshape(-1, 3))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Scene(name, world, goal, start)


def _fmt(values) -> str:
    return ", ".join(f"{v:.6g}" for v in values)


def dump_scene(scene: Scene) -> str:
    lines = ["[scene]", f"name = {scene.name}", f"goal = {_fmt(scene.goal)}"]
    if scene.start is not None:
        lines.append(f"start = {_fmt(scene.start)}")
    lines += ["", "[obstacles]"]
    lines += [f"o{i + 1} = {_fmt(o)}" for i, o in enumerate(scene.world.obstacles)]
    return "\n".join(lines) + "\n"


def load_scene(ref: str, chain: ChainModel | None = None) -> Scene:
    """Built-in scene by name, or a scene file path."""
    if ref in BUILTIN:
        text = resources.files("zpmrrt.scenes").joinpath(f"{ref}.scene").read_text()
    else:
        try:
            text = Path(ref).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scene {ref}: {exc}") from exc
    return parse_scene(text, chain)


def random_scene(
    rng: np.random.Generator,
    num_obstacles: int,
    chain: ChainModel | None = None,
    radius: float = OBSTACLE_RADIUS,
    box=((-0.45, 0.45), (0.1, 0.45)),
    max_tries: int = 10_000,
) -> Scene:
    """Obstacles drawn uniformly in ``box``, rejected while the goal collides
    or no U-shape start is left free."""
    chain = chain or ChainModel.swimmer()
    goal = pincer_goal(chain)
    (x0, x1), (y0, y1) = box
    for _ in range(max_tries):
        obs = np.column_stack(
            [rng.uniform(x0, x1, num_obstacles), rng.uniform(y0, y1, num_obstacles),
             np.full(num_obstacles, radius)]
        )
        scene = Scene(f"random{num_obstacles}", World(obs), goal)
        if collision_check(chain, goal, scene.world):
            continue
        if scene.free_u_shapes(chain):
            return scene
    raise RuntimeError("no admissible scene found")
