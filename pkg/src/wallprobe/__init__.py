"""Through-wall dielectric profile reconstruction: FDTD data, GAN and classical inversion."""

from .errors import (ConfigError, DivergenceError, GeometryError, InvalidArgument, ParseError, ShapeError,
                     SolverError, StabilityError, StateError, WallprobeError)
from .gan import ModelBundle, NeuralInverter, TrainConfig
from .classical import ClassicalInverter
from .metrics import nmse

__version__ = "0.1.0"
