"""counting experiments and patterson-sullivan approximants"""

from .empirical import BinSpec, EmpiricalMeasure, CountReport
from .experiments import (
    count_ball,
    count_sector,
    sector_reach,
    count_boundary,
    count_joint,
    count_bisector,
    count_product_joint,
    asymmetry_probe,
)
from .patterson_sullivan import (
    PoincareEval,
    poincare_partial,
    critical_exponent,
    pole_order_check,
    ps_measure,
    ps_direction_histogram,
)

__all__ = [
    "BinSpec",
    "EmpiricalMeasure",
    "CountReport",
    "count_ball",
    "count_sector",
    "sector_reach",
    "count_boundary",
    "count_joint",
    "count_bisector",
    "count_product_joint",
    "asymmetry_probe",
    "PoincareEval",
    "poincare_partial",
    "critical_exponent",
    "pole_order_check",
    "ps_measure",
    "ps_direction_histogram",
]
