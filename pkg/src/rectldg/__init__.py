"""Reduced Landau-de Gennes equilibria of nematic liquid crystals on rectangles."""

from .boundary import DIRICHLET, ROBIN, TABLE_STATES, BoundarySpec
from .energy import EnergyParams, energy, residual
from .grid import Grid, QField, RectDomain, make_grid

__all__ = [
    "DIRICHLET",
    "ROBIN",
    "TABLE_STATES",
    "BoundarySpec",
    "EnergyParams",
    "Grid",
    "QField",
    "RectDomain",
    "energy",
    "make_grid",
    "residual",
]
