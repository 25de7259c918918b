"""Crowd navigation lab.

2D pedestrian world with ORCA crowds, a recurrent value/policy network
trained by imitation and temporal-difference learning, a grid-based global
planner, and an evaluation/statistics harness.
"""

__version__ = "0.1.0"
