"""Uniform operator calculus on discretized flat tori.

Subpackages cover the grid geometry (lattice), symbol classes and their
calculus (symbols), dense operator realizations (operators), parametrix
construction and elliptic estimates (parametrix), functional calculus
(funcalc), quasilocality measurements (quasiloc), multigraded Fredholm
modules (khomology), serialization (serial) and the experiment CLI (cli).
"""

__version__ = "0.1.0"

from .lattice import GridSpec, Section, Region
from .symbols import Symbol, named_symbol
from .operators import DiscreteOperator, quantize, fourier_multiplier

__all__ = [
    "GridSpec",
    "Section",
    "Region",
    "Symbol",
    "named_symbol",
    "DiscreteOperator",
    "quantize",
    "fourier_multiplier",
    "__version__",
]
