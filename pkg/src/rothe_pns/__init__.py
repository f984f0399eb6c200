"""Rothe-Galerkin finite element solver for the unsteady p-Navier-Stokes equations."""

from .config import ExperimentConfig
from .constitutive import StressModel
from .elements import ElementFamily, MixedSpace, build_space
from .forms import DiscreteState, Forcing
from .harness import convergence_sweep, run_experiment, verify
from .mesh import Mesh, build_rectangle_mesh, refine_regular, refine_uniformly
from .nonlinear import NewtonConfig, newton_solve
from .timestepping import TimeGrid, run

__version__ = "0.1.0"

__all__ = [
    "DiscreteState", "ElementFamily", "ExperimentConfig", "Forcing", "Mesh",
    "MixedSpace", "NewtonConfig", "StressModel", "TimeGrid", "build_rectangle_mesh",
    "build_space", "convergence_sweep", "newton_solve", "refine_regular",
    "refine_uniformly", "run", "run_experiment", "verify",
]
