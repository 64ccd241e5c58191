"""Pseudospectral tools for the 2D Boussinesq system with fractional dissipation.

Modules: :mod:`spectral` (grids, multipliers, norms), :mod:`littlewood_paley`
(dyadic blocks, Besov norms, commutator scans), :mod:`solver` (time
integration), :mod:`diagnostics` (monitored bounds), :mod:`exponents`
(closure-exponent bookkeeping) and :mod:`cli`.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
