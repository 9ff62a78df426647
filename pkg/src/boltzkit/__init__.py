"""Deterministic velocity-grid toolkit for the spatially homogeneous
collisional kinetic equation with Maxwellian upper-bound certification."""

__version__ = "0.1.0"
