"""Timing-aware reinforcement learning for autonomous driving at unsignalized junctions.

A SAC actor proposes accelerations; a second SAC agent, the timing taker,
chooses over how many steps that proposal is phased in from a lattice
planner's action.  The package includes the traffic simulator, the planner,
the learning code from scratch in numpy, and a CLI.
"""

__version__ = "0.1.0"
