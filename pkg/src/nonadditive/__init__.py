"""Numerical toolkit for non-additive thermodynamic formalism: sub-additive
potential sequences, matrix cocycles, mistake dynamical balls, pressure and
entropy estimators, weak-Gibbs checks and large-deviation rate bounds."""
from __future__ import annotations

__version__ = "0.1.0"
