"""Quantum graphs on Z^d with random edge lengths.

Modules
-------
lattice    cubes of the lattice graph and their indexing
kp_bands   Kronig-Penney bands, almost-sure spectrum, forbidden set
reduction  vertex reduction ``M(E)`` and its operator inequalities
spectra    eigenvalue solver, finite-element oracle, localization
ensemble   random lengths and Monte Carlo experiments
cli        command-line front end
"""
__version__ = "0.1.0"
