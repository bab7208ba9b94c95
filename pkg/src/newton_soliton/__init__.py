"""Ground states, linearised spectra, orbit distances and semiclassical soliton
dynamics for the Schrodinger-Newton (Choquard) equation on a periodic box."""

from .ground_state import GroundState, compute_ground_state, load_or_compute, radial_shooting_oracle
from .kernels import BACKEND
from .spectral import Field3, Grid3

__all__ = [
    "BACKEND",
    "Field3",
    "Grid3",
    "GroundState",
    "compute_ground_state",
    "load_or_compute",
    "radial_shooting_oracle",
]
