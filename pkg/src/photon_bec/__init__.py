"""Fluctuation dynamics of a driven-dissipative photon condensate."""

from .core import (
    ConvergenceError,
    ModelError,
    ModelParams,
    StiffnessError,
    ValidationError,
    dye_cavity_params,
    kennard_stepanov,
    validate,
)

__version__ = "0.1.0"
