"""Visual servoing of a suspended cable-driven parallel robot.

Kinematics, 2 1/2 D visual servoing with feature-space trajectory tracking,
a closed-loop stability criterion with workspace grids, and a kinematic
simulator for perturbation experiments.
"""

from .cdpr import RobotDescription, acrobot
from .geometry import Pose, Twist, se3_exp
from .sim import ExperimentConfig, deviation_metrics, load_perturbation_set, run

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "Pose",
    "RobotDescription",
    "Twist",
    "acrobot",
    "deviation_metrics",
    "load_perturbation_set",
    "run",
    "se3_exp",
]
