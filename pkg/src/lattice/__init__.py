"""lattices, orbit enumeration, orbit caches and the modular surface"""

from .lattice_spec import LatticeKind, LatticeSpec, covolume, lattice_index
from .enumeration import (
    OrbitPoint,
    OrbitSet,
    ProductOrbit,
    PairBatch,
    enumerate_lattice,
    naive_sweep,
    stabilizer_order,
    stream_count_product,
)
from .orbit_cache import save_cache, load_cache, load_or_enumerate
from .homspace import (
    ReducedPoint,
    FundamentalDomainBins,
    SweepResult,
    reduce,
    translate_equidistribution,
    solvable_sweep,
)

__all__ = [
    "LatticeKind",
    "LatticeSpec",
    "covolume",
    "lattice_index",
    "OrbitPoint",
    "OrbitSet",
    "ProductOrbit",
    "PairBatch",
    "enumerate_lattice",
    "naive_sweep",
    "stabilizer_order",
    "stream_count_product",
    "save_cache",
    "load_cache",
    "load_or_enumerate",
    "ReducedPoint",
    "FundamentalDomainBins",
    "SweepResult",
    "reduce",
    "translate_equidistribution",
    "solvable_sweep",
]
