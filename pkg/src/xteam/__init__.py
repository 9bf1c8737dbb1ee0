"""Simulation and verification lab for exchangeable continuous-time stochastic teams."""

from .measures import EmpiricalMeasure
from .parallel import using_threads

__version__ = "0.1.0"
__all__ = ["EmpiricalMeasure", "using_threads", "__version__"]
