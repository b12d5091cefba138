"""Event-enhanced detection of a Dirac particle in 1+1 dimensions.

Arrival-time and traversal-time distributions from absorbing detector
windows, Monte Carlo event sampling, and the classical relativistic
baselines they are compared against.
"""
from .arrival import ArrivalResult, DensityCurve, boost_arrival, run_arrival, run_arrival_pair
from .classical import classical_arrival, classical_boost, classical_traversal
from .detectors import DetectorSpec, make_window
from .errors import (
    ConfigurationError,
    ConstructionError,
    DomainError,
    EEQTError,
    NoDetectionError,
    NumericalInstabilityError,
    UsageError,
)
from .propagator import GridSpec, Propagator
from .relkin import Grid, InitialStateSpec, ModelParams, SpinorSlice, StateKind
from .traversal import TraversalResult, boost_traversal, run_traversal, run_traversal_pair

__version__ = "0.1.0"
