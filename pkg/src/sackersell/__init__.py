"""Dichotomy (Sacker-Sell) spectra, Lyapunov exponents and endpoint realisation
for linear cocycles over symbolic and circle dynamics."""

__version__ = "0.1.0"

from .base_dynamics import (
    Bernoulli,
    CircleRotation,
    FinitePeriodic,
    FullShift,
    LebesgueCircle,
    MeasureFamily,
    PeriodicOrbit,
    periodic_measures,
    periodic_word,
)
from .cocycle import Cocycle, ConstantGenerator, SymbolGenerator, cocycle_product, shifted
from .dichotomy import test_uniform_hyperbolicity
from .jps import cao_maximize, verify_endpoints
from .lyapunov import exponent_ladder, oseledets_splitting
from .quasicompactness import quasicompact_report
from .spectrum import ScanConfig, classify_structure, scan_spectrum

__all__ = [
    "Bernoulli", "CircleRotation", "FinitePeriodic", "FullShift", "LebesgueCircle", "MeasureFamily",
    "PeriodicOrbit", "periodic_measures", "periodic_word", "Cocycle", "ConstantGenerator", "SymbolGenerator",
    "cocycle_product", "shifted", "test_uniform_hyperbolicity", "cao_maximize", "verify_endpoints",
    "exponent_ladder", "oseledets_splitting", "quasicompact_report", "ScanConfig", "classify_structure",
    "scan_spectrum",
]
