"""Flat INI configuration shared by every experiment."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..dynamics import DragModel
from ..planner import PlannerConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


DEFAULT_TEXT = """\
[dynamics]
c_tangential = 1.0
c_normal = 10.0
quadrature_points = 4
exec_dt = 0.001

[planner]
dt = 0.01
node_spacing = 0.1
goal_tol = 1.0
goal_bias = 0.5
extend_timeout = 10000
max_iterations = 100
max_replans = 4
smoothing_passes = 3
half_width = 0.0

[tracking]
gain = 5.0
dt = 0.001
approach_time = 1.0

[tvlqr]
iterations = 20
horizon = 10.0
knots = 50
r_weight = 0.01

[trials]
num_trials = 30
seed = 0
scenes = one, two, three
grid_points = 101
workers = 1

[plan]
scene = three
start = random
"""


@dataclass(frozen=True)
class TrackingSettings:
    gain: float = 5.0
    dt: float = 1e-3
    approach_time: float = 1.0


@dataclass(frozen=True)
class TvlqrSettings:
    iterations: int = 20
    horizon: float = 10.0
    knots: int = 50
    r_weight: float = 1e-2


@dataclass(frozen=True)
class TrialSettings:
    num_trials: int = 30
    seed: int = 0
    scenes: tuple[str, ...] = ("one", "two", "three")
    grid_points: int = 101
    workers: int = 1


@dataclass(frozen=True)
class PlanSettings:
    scene: str = "three"
    start: str = "random"


@dataclass(frozen=True)
class Config:
    drag: DragModel
    exec_dt: float
    planner: PlannerConfig
    tracking: TrackingSettings
    tvlqr: TvlqrSettings
    trials: TrialSettings
    plan: PlanSettings
    text: str  # verbatim source, echoed into output headers

    def with_seed(self, seed: int) -> "Config":
        return replace(self, trials=replace(self.trials, seed=seed))


def _typed(section: configparser.SectionProxy, cls, exclude=()):
    kw = {}
    known = {f.name: f for f in fields(cls)}
    for key in section:
        if key in exclude:
            continue
        if key not in known:
            raise ConfigError(f"unknown key [{section.name}] {key}")
        default = getattr(cls(), key)
        raw = section[key].strip()
        try:
            if isinstance(default, bool):
                kw[key] = section.getboolean(key)
            elif isinstance(default, int):
                kw[key] = int(raw)
            elif isinstance(default, float) or default is None:
                kw[key] = float(raw)
            elif isinstance(default, tuple):
                kw[key] = tuple(p.strip() for p in raw.split(",") if p.strip())
            else:
                kw[key] = raw
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section.name}] {key}: {raw!r}") from exc
    return kw


def parse_config(text: str) -> Config:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(DEFAULT_TEXT)
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    allowed = {"dynamics", "planner", "tracking", "tvlqr", "trials", "plan"}
    extra = set(parser.sections()) - allowed
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    try:
        dyn = parser["dynamics"]
        drag = DragModel(
            c_tangential=dyn.getfloat("c_tangential"),
            c_normal=dyn.getfloat("c_normal"),
            quadrature_points=dyn.getint("quadrature_points"),
        )
        exec_dt = dyn.getfloat("exec_dt")
        extra_dyn = set(dyn) - {"c_tangential", "c_normal", "quadrature_points", "exec_dt"}
        if extra_dyn:
            raise ConfigError(f"unknown keys in [dynamics]: {sorted(extra_dyn)}")
        planner = PlannerConfig(**_typed(parser["planner"], PlannerConfig))
        tracking = TrackingSettings(**_typed(parser["tracking"], TrackingSettings))
        tvlqr = TvlqrSettings(**_typed(parser["tvlqr"], TvlqrSettings))
        trials = TrialSettings(**_typed(parser["trials"], TrialSettings))
        plan = PlanSettings(**_typed(parser["plan"], PlanSettings))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if exec_dt <= 0 or tracking.dt <= 0 or tracking.gain <= 0:
        raise ConfigError("time steps and gains must be positive")
    if trials.num_trials < 1 or trials.grid_points < 2 or trials.workers < 1:
        raise ConfigError("num_trials, grid_points and workers must be positive")
    if tvlqr.knots < 2 or tvlqr.horizon <= 0 or tvlqr.r_weight <= 0 or tvlqr.iterations < 0:
        raise ConfigError("invalid [tvlqr] settings")
    return Config(drag, exec_dt, planner, tracking, tvlqr, trials, plan, text or DEFAULT_TEXT)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def header_lines(cfg: Config, **meta) -> str:
    """Comment block carrying run metadata and the config text."""
    out = io.StringIO()
    for key, value in meta.items():
        out.write(f"# {key} = {value}\n")
    for line in cfg.text.splitlines():
        out.write(f"# | {line}\n")
    return out.getvalue()
