"""Pedestrian and vehicle motion in shared spaces: social forces, car
rules and Stackelberg games, with calibration, clustering and metrics."""

from .params import GameParams, SfmParams, defaults
from .scenario import AgentKind, AgentTrack, InputProfile, Obstacle, Scenario, load_trajectories

__version__ = "0.1.0"

__all__ = [
    "AgentKind",
    "AgentTrack",
    "GameParams",
    "InputProfile",
    "Obstacle",
    "Scenario",
    "SfmParams",
    "defaults",
    "load_trajectories",
]
