"""Simulation of a sequential, nonabsorbing microwave single-photon detector.

A three-level artificial atom mediates a photon-number-conditional phase
shift of a coherent state stored in a resonator; the resonator is later read
out through the atom with continuous homodyne measurement.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoundsError,
    ConfigError,
    DegenerateDetuningError,
    DimensionMismatchError,
    InvariantViolation,
    PositivityBreakdown,
    SeqdetError,
    StepSizeUnderflow,
    SubsystemError,
    TruncationError,
)
from .params import ProbeParams, SystemParams, headline_params, readout_params, kappa0_comparison_params  # noqa: E402
