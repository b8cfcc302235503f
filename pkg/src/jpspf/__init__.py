"""Proportional-fair scheduling with channel-probing cost.

Optimal-stopping probe/transmit rules with known channel statistics, a
static-threshold reduction, a learning variant for unknown statistics,
baselines, closed-form steady-state analysis and a slot simulator.
"""

__version__ = "0.1.0"
