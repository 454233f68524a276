"""
poincare series and patterson-sullivan approximants

every number reported here is a truncated sum over dist < T_max together
with a tail bound from the fitted growth N(T) ~ c e^(delta T); sums whose
tail exceeds MAX_TAIL_FRACTION of the partial sum are refused
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from src.analysis.empirical import BinSpec, EmpiricalMeasure
from src.analysis.experiments import arc_bins, assign_arcs, orbit_points, validate_partition
from src.errors import DomainError
from src.geometry.boundary import ORIGIN, Arc, visual_angles
from src.geometry.root_volume import root_system
from src.lattice.enumeration import VISUAL_ANGLE, OrbitSet, ProductOrbit

logger = logging.getLogger(__name__)

MAX_TAIL_FRACTION = 0.25
MIN_EXPONENT_RANGE = 10.0
GROWTH_FIT_POINTS = 64


@dataclass(frozen=True, eq=False)
class DistanceProfile:
    """
    sorted orbit distances up to T together with the growth exponent delta

    built from an OrbitSet, or directly from planted distances
    """

    dist: np.ndarray
    T: float
    delta: float
    rank: int = 1

    def __post_init__(self):
        dist = np.sort(np.asarray(self.dist, dtype=float))
        if dist.size and (dist[0] < 0 or dist[-1] >= self.T):
            raise DomainError("distances must lie in [0, T)")
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)

    @classmethod
    def from_orbit(cls, orbit: OrbitSet) -> "DistanceProfile":
        rs = root_system(orbit.lattice.group_spec)
        return cls(orbit.dist, orbit.T, rs.delta, rs.rank_r)

    def count_below(self, T: float) -> int:
        if T > self.T + 1e-12:
            raise DomainError(f"profile only reaches T={self.T}, asked for {T}")
        return int(np.searchsorted(self.dist, T, side="left"))


ProfileLike = Union[OrbitSet, DistanceProfile]


def as_profile(orbit: ProfileLike) -> DistanceProfile:
    return orbit if isinstance(orbit, DistanceProfile) else DistanceProfile.from_orbit(orbit)


@dataclass(frozen=True)
class PoincareEval:
    """truncated poincare series at s with its tail bound"""

    s: float
    T_max: float
    partial_sum: float
    tail_bound: float
    growth_constant: float
    divergent: bool = False

    @property
    def tail_fraction(self) -> float:
        if self.divergent:
            return math.inf
        return self.tail_bound / self.partial_sum

    @property
    def usable(self) -> bool:
        return not self.divergent and self.tail_fraction <= MAX_TAIL_FRACTION

    @property
    def corrected(self) -> float:
        """partial sum plus tail estimate"""
        return self.partial_sum + self.tail_bound


def growth_constant(profile: DistanceProfile, T_max: float) -> float:
    """
    least-squares c in N(T) ~ c e^(delta T) over [T_max/2, T_max]
    """
    grid = np.linspace(T_max / 2.0, T_max, GROWTH_FIT_POINTS)
    counts = np.searchsorted(profile.dist, grid, side="left").astype(float)
    model = np.exp(profile.delta * (grid - T_max))
    # scaled by e^(-delta T_max) to keep the normal equations in range
    return float(np.dot(counts, model) / np.dot(model, model)) * math.exp(-profile.delta * T_max)


def dirichlet_sum(dist: np.ndarray, s: float, threads: int = 1) -> float:
    """sum of e^(-s d), pairwise within fixed shards so the result does not depend on threads"""
    shards = np.array_split(np.asarray(dist, dtype=float), max(1, math.ceil(len(dist) / (1 << 18))))

    def work(shard: np.ndarray) -> float:
        return float(np.sum(np.exp(-s * shard)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, shards))
    else:
        parts = [work(shard) for shard in shards]
    return float(np.sum(parts))


def poincare_partial(orbit: ProfileLike, s: float, T_max: Optional[float] = None, threads: int = 1) -> PoincareEval:
    """
    sum of e^(-s d(x, y gamma)) over d < T_max

    args:
        orbit: OrbitSet (x = i) or DistanceProfile
        s: exponent
        T_max: truncation radius, at most the orbit's T

    returns:
        PoincareEval; s <= delta gives a divergent state without a sum
    """
    profile = as_profile(orbit)
    T_max = profile.T if T_max is None else float(T_max)
    n = profile.count_below(T_max)
    c = growth_constant(profile, T_max)
    delta = profile.delta
    if s <= delta:
        logger.warning("poincare series diverges for s=%s <= delta=%s", s, delta)
        return PoincareEval(float(s), T_max, math.nan, math.inf, c, divergent=True)
    partial = dirichlet_sum(profile.dist[:n], s, threads)
    tail = c * delta * math.exp((delta - s) * T_max) / (s - delta)
    return PoincareEval(float(s), T_max, partial, tail, c)


def critical_exponent(orbit: ProfileLike) -> float:
    """
    slope of log N(T) over the top half of the enumerated range

    args:
        orbit: OrbitSet or DistanceProfile reaching at least T = 10
    """
    profile = as_profile(orbit)
    if profile.T < MIN_EXPONENT_RANGE:
        raise DomainError(f"need an orbit to T >= {MIN_EXPONENT_RANGE}, got {profile.T}")
    grid = np.linspace(profile.T / 2.0, profile.T, GROWTH_FIT_POINTS, endpoint=False)
    counts = np.searchsorted(profile.dist, grid, side="left")
    if np.any(counts == 0):
        raise DomainError("orbit too sparse to fit a growth rate")
    slope, _ = np.polyfit(grid, np.log(counts), 1)
    return float(slope)


@dataclass(frozen=True)
class PoleEntry:
    s: float
    normalized: float
    normalized_partial: float
    tail_fraction: float
    usable: bool


def pole_order_check(orbit: ProfileLike, s_grid: Sequence[float], T_max: Optional[float] = None) -> List[PoleEntry]:
    """
    (s - delta)^((r+1)/2) times the tail-corrected series along a descending s grid

    stabilization of the usable entries is what callers test
    """
    profile = as_profile(orbit)
    grid = [float(s) for s in s_grid]
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise DomainError("s grid must be strictly descending")
    exponent = (profile.rank + 1) / 2.0
    entries = []
    for s in grid:
        ev = poincare_partial(profile, s, T_max)
        if ev.divergent:
            entries.append(PoleEntry(s, math.nan, math.nan, math.inf, False))
            continue
        factor = (s - profile.delta) ** exponent
        if not ev.usable:
            logger.info("s=%s flagged unusable, tail fraction %.3f", s, ev.tail_fraction)
        entries.append(PoleEntry(s, factor * ev.corrected, factor * ev.partial_sum, ev.tail_fraction, ev.usable))
    return entries


def minimal_usable_s(orbit: ProfileLike, T_max: Optional[float] = None) -> float:
    """smallest s whose tail bound stays within MAX_TAIL_FRACTION of the partial sum"""
    profile = as_profile(orbit)

    def excess(s: float) -> float:
        return poincare_partial(profile, s, T_max).tail_fraction - MAX_TAIL_FRACTION

    lo, hi = profile.delta + 1e-9, profile.delta + 1.0
    while excess(hi) > 0:
        hi = profile.delta + 2.0 * (hi - profile.delta)
    return float(brentq(excess, lo, hi, xtol=1e-10))


def ps_measure(
    orbit: OrbitSet,
    s: float,
    arcs: Sequence[Arc],
    base: complex = ORIGIN,
    interior_cutoff: Optional[float] = None,
    T_max: Optional[float] = None,
) -> EmpiricalMeasure:
    """
    binned, normalized mu_{x,y,s}

    each orbit point y gamma adds e^(-s d(x, y gamma)) to the arc holding its
    visual angle from x; with an interior cutoff, points closer than it go
    to a leading "interior" bin instead. truncation is by d(i, y gamma) < T_max.

    args:
        orbit: rank-one orbit
        s: exponent, above delta with a usable tail
        arcs: partition of the circle in x's chart
        base: the point x
        interior_cutoff: radius of the interior cell, none for no cell
        T_max: truncation radius

    returns:
        EmpiricalMeasure with total mass 1
    """
    if orbit.lattice.is_product:
        raise DomainError("ps_measure is rank-one; use ps_direction_histogram for the product group")
    ev = poincare_partial(orbit, s, T_max)
    if not ev.usable:
        floor = minimal_usable_s(orbit, ev.T_max)
        raise DomainError(
            f"tail bound at s={s} is {ev.tail_fraction:.1%} of the partial sum; minimal usable s is {floor:.6f}"
        )
    ordered = validate_partition(arcs)
    n = orbit.count_below(ev.T_max)
    if complex(base) == ORIGIN:
        dist = orbit.dist[:n]
        angles = orbit.angle(VISUAL_ANGLE)[:n]
    else:
        z = orbit_points(orbit, n)
        x = complex(base)
        dist = np.arccosh(1.0 + np.abs(z - x) ** 2 / (2.0 * z.imag * x.imag))
        angles = visual_angles(x, z)

    bins = arc_bins(ordered, "arc")
    index = assign_arcs(angles, ordered)
    if interior_cutoff is not None:
        bins = (BinSpec("interior", 0.0, float(interior_cutoff)),) + bins
        index = np.where(dist < interior_cutoff, 0, index + 1)
    weights = np.exp(-s * dist)
    measure = EmpiricalMeasure.from_indices(bins, index, weights)
    return EmpiricalMeasure(measure.bins, measure.normalized())


def ps_direction_histogram(orbit: ProductOrbit, s: float, n_bins: int, T_max: Optional[float] = None) -> EmpiricalMeasure:
    """
    product-group mu_{x,y,s} binned by chamber direction atan2(d2, d1) in [0, pi/2]

    mass drifts toward the barycenter direction pi/4 as s decreases to delta
    """
    if n_bins < 1:
        raise DomainError("need at least one direction bin")
    rs = root_system(orbit.lattice.group_spec)
    if s <= rs.delta:
        raise DomainError(f"s={s} does not exceed delta={rs.delta}")
    T_max = orbit.T if T_max is None else float(T_max)
    edges = np.linspace(0.0, math.pi / 2.0, n_bins + 1)
    bins = tuple(BinSpec(f"dir{k}", float(edges[k]), float(edges[k + 1])) for k in range(n_bins))
    total = np.zeros(n_bins)
    for batch in orbit.iter_batches(T_max):
        d1, d2 = batch.factor_dist(0), batch.factor_dist(1)
        phi = np.arctan2(d2, d1)
        index = np.clip(np.searchsorted(edges, phi, side="right") - 1, 0, n_bins - 1)
        total += np.bincount(index, weights=np.exp(-s * np.hypot(d1, d2)), minlength=n_bins)
    measure = EmpiricalMeasure(bins, total)
    return EmpiricalMeasure(bins, measure.normalized())


def direction_concentration(measure: EmpiricalMeasure, width: float = math.pi / 8) -> float:
    """mass of the direction bins whose centers lie within width of pi/4"""
    centers = np.array([(b.lo + b.hi) / 2.0 for b in measure.bins])
    return float(np.sum(measure.weights[np.abs(centers - math.pi / 4) <= width]))
