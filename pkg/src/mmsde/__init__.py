"""Multivalued SDEs driven by maximal monotone operators.

Resolvent-based simulation, Freidlin-Wentzell rate functions and functional
iterated-logarithm experiments at desk scale.
"""

__version__ = "0.1.0"

from mmsde.monotone_ops import (  # noqa: F401
    Ball,
    Box,
    ConvexSubdifferential,
    Graph1D,
    HalfSpace,
    IndicatorSubdifferential,
    Intersection,
    LinearPSD,
    OperatorFamily,
    Scaled,
    Sum,
    ZeroOp,
    minimal_section,
    moreau_envelope,
    resolvent,
    yosida,
)
from mmsde.paths import Control, Path, TimeGrid, cm_norm, sample_brownian, sup_distance  # noqa: F401
from mmsde.msde_solver import ModelSpec, ReflectedSolution, simulate, simulate_yosida, reflect_halfspace  # noqa: F401
