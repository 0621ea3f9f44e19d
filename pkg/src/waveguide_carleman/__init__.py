"""Numerical laboratory for weighted estimates and conductivity recovery in a waveguide."""

from .grid import CrossSection, Grid, Region, ScalarField, SpaceTimeField, build_grid, sobolev_norm

__version__ = "0.1.0"

__all__ = ["CrossSection", "Grid", "Region", "ScalarField", "SpaceTimeField", "build_grid", "sobolev_norm"]
