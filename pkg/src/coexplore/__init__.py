"""Deterministic multi-robot collaborative exploration simulator.

Simulated ground robots explore a shared 2D world, exchange frontier
candidates through a central coordination server, suppress redundant
frontiers via pairwise map-overlap analysis, and manage SLAM uncertainty
with an eigenvalue-based edge metric and guided re-localization.
"""

__version__ = "0.1.0"
