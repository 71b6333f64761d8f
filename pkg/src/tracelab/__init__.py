"""Numerical laboratory for traces and extensions of weighted Sobolev functions
on the upper half-space."""

from .dyadic import Box, CubeIndex, LayerId
from .errors import (ConfigError, DomainError, InvalidParams, LevelError, LevelOutOfRange,
                     MissingGradient, NormFailure, NotSelectedLayer, TraceLabError)
from .field import CounterexampleParams, ScalarField, counterexample_field
from .grid import BoundaryGridFunction, grid_average
from .weight import WeightParams

__version__ = "0.1.0"
