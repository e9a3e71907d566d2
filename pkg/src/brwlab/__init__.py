"""Desk-scale laboratory for branching random walks in the boundary case.

Simulation, spinal decompositions, ladder/renewal fluctuation theory, and
the norming experiments that tie them together, each checked against exact
small-system oracles.
"""

__version__ = "0.1.0"
