"""Numerical laboratory for R-scaled vortex equations and their flat-connection families.

Modules
-------
surface         flat genus-2 octagon surface, cone-aware mesh, discrete operators
higgs           the two built-in Higgs families and the admissible parameter domain
vortex          Newton solver for the R-scaled vortex equation
connection      flat-connection family, holonomy, conformal limit
quasiconformal  Beltrami differential, sinh-Gordon identity, extension class
reality         real structure at |hbar|^2 R^2 = 1 and reality of holonomy
cli             batch front end
"""
__version__ = "0.1.0"
