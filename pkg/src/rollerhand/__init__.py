"""Kinematics, control and imitation learning for a steerable-roller grasper."""

__version__ = "0.1.0"
