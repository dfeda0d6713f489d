"""Desk-scale workbench for informative bathymetric survey planning.

Online sparse variational GP mapping with uncertain inputs, a two-layer
Bayesian-optimisation planner over Dubins paths, and lawn-mower/myopic
baselines scored by map RMSE versus distance travelled.
"""

__version__ = "0.1.0"

__all__ = ["terrain", "vehicle", "sensor", "svgp", "planner", "baselines", "evaluation",
           "harness", "cli"]
