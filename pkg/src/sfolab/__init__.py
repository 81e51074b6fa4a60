"""Streaming least squares testbed for stochastic momentum methods."""
from .optimizers import HyperParams, JainParams, Method
from .problems import Kind, ProblemInstance, make_instance

__version__ = "0.1.0"

__all__ = ["HyperParams", "JainParams", "Kind", "Method", "ProblemInstance", "make_instance", "__version__"]
