"""Local correlation entropy of dynamical systems: estimators, constructions and checks."""

__version__ = "0.1.0"
