"""Stochastic six-vertex model laboratory: exact transfer matrices, exact-distribution
row-to-row Monte Carlo with height tracking, and entropy solutions of the Burgers-type
limit-shape equation, plus a comparison harness."""

__version__ = "0.1.0"
