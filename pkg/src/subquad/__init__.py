"""Minimizers of vector Allen-Cahn energies with sub-quadratic multi-well potentials."""
from .field import Field, Grid, init_field, total_energy
from .minimizer import MinimizeConfig, minimize
from .potential import MinimaSet, Potential

__all__ = ["Field", "Grid", "MinimaSet", "MinimizeConfig", "Potential", "init_field", "minimize", "total_energy"]
