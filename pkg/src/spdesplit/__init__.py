"""Splitting-based dG solver for semi-linear parabolic SPDEs.

Interior-penalty dG in space, Douglas-Rachford domain-decomposition
splitting in time, Q-Wiener multiplicative noise, plus a Monte Carlo
strong-error harness and a numeric lemma-check suite.
"""

__version__ = "0.1.0"
