"""Mean-field simulator for a three-level V-configuration cold-atom laser.

Modules: ``model`` (parameters and superoperators), ``dynamics`` (time
integration and ramps), ``stability`` (linear stability of the non-lasing
state), ``floquet`` (self-consistent lasing state), ``estimates`` (closed-form
scales) and ``harness``/``cli`` (configured runs and output).
"""
from .model import PhysicalParams, default_params

__all__ = ["PhysicalParams", "default_params"]
__version__ = "0.1.0"
