"""Experimental domains: random gridworld, PAC-MAN, HIV treatment."""

from .gridworld import GridworldSpec, build_gridworld, state_rewards
from .pacman import PacmanSpec, build_pacman
from . import hiv

__all__ = [
    "GridworldSpec",
    "build_gridworld",
    "state_rewards",
    "PacmanSpec",
    "build_pacman",
    "hiv",
]
