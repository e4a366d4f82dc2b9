"""Phase-only uplink positioning with a distributed phase-coherent AP network."""

from . import (ambiguity_net, errors, evaluation, geometry, hyperbola_solver,
               oracle, simulator)
from .geometry import (AmbiguityBounds, Deployment, GroundTruth, Region,
                       ambiguity_bounds, deploy_aps, ground_truth, wrap_phase)
from .hyperbola_solver import Flag, SolverConfig, SolverResult, solve
from .simulator import Dataset, FailureMask, RadioConfig, Sample, generate_dataset

__version__ = "0.1.0"
