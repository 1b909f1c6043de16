"""Zero-perturbation motion planning for a floating-base Purcell swimmer."""

from .collision import World, collision_check
from .dynamics import DragModel, integrate_base, integrate_waypoints, perturbation_matrix
from .geom import ChainModel, Pose2
from .planner import PlannerConfig, PlanResult, classical_rrt, zpmrrt
from .zpm import null_basis

__all__ = [
    "ChainModel",
    "DragModel",
    "PlanResult",
    "PlannerConfig",
    "Pose2",
    "World",
    "classical_rrt",
    "collision_check",
    "integrate_base",
    "integrate_waypoints",
    "null_basis",
    "perturbation_matrix",
    "zpmrrt",
]
