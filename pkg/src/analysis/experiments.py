"""
counting experiments

turns an enumerated orbit plus a partition into observed counts and
compares them with the predicted asymptotics:
    ball        #{d < T}                         ~ Vol(G_T) / covol
    sector      visual angle of y gamma from x   ~ m_x(arc) Vol / covol
    boundary    b gamma^-1 in arc                ~ m_y(arc) Vol / covol
    joint       both of the above                ~ m_x m_y Vol / covol
    bisector    k1 and k2 angles of g gamma      ~ nu(O1 M) nu(M O2) Vol / covol
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.analysis.empirical import BinSpec, CountReport, EmpiricalMeasure, merge_all
from src.errors import DomainError, MissingDecorationError
from src.geometry.boundary import ORIGIN, TWO_PI, Arc, BoundaryPoint, invariant_measure, point_distances, visual_angles
from src.geometry.root_volume import ball_volume, root_system
from src.lattice.enumeration import K1_ANGLE, K2_ANGLE, VISUAL_ANGLE, OrbitSet, PairBatch, ProductOrbit, stabilizer_order

logger = logging.getLogger(__name__)

AnyOrbit = Union[OrbitSet, ProductOrbit]
PARTITION_TOLERANCE = 1e-9


def validate_partition(arcs: Sequence[Arc]) -> List[Arc]:
    """
    check that arcs tile the circle without gaps or overlaps

    returns:
        the arcs sorted counterclockwise from the first one's start
    """
    if not arcs:
        raise DomainError("partition needs at least one arc")
    total = sum(arc.length for arc in arcs)
    if abs(total - TWO_PI) > PARTITION_TOLERANCE:
        raise DomainError(f"arcs cover {total:.12f} radians, not the full circle (overlap or gap)")
    origin = arcs[0].start
    ordered = sorted(arcs, key=lambda arc: np.mod(arc.start - origin, TWO_PI))
    for current, following in zip(ordered, ordered[1:] + ordered[:1]):
        gap = np.mod(following.start - current.end + math.pi, TWO_PI) - math.pi
        if abs(gap) > PARTITION_TOLERANCE and len(ordered) > 1:
            raise DomainError("arcs overlap or leave a gap")
    return ordered


def assign_arcs(angles: np.ndarray, ordered: Sequence[Arc]) -> np.ndarray:
    """index of the half-open arc containing each angle (arcs from validate_partition)"""
    offsets = np.cumsum([0.0] + [arc.length for arc in ordered[:-1]])
    shifted = np.mod(np.asarray(angles, dtype=float) - ordered[0].start, TWO_PI)
    index = np.searchsorted(offsets, shifted, side="right") - 1
    return np.clip(index, 0, len(ordered) - 1)


def arc_bins(arcs: Sequence[Arc], prefix: str) -> Tuple[BinSpec, ...]:
    return tuple(BinSpec(f"{prefix}{k}", arc.start, arc.start + arc.length) for k, arc in enumerate(arcs))


def binned_counts(labels: np.ndarray, bins: Sequence[BinSpec], threads: int = 1) -> EmpiricalMeasure:
    """
    count labels per bin, optionally sharded over threads

    shards are merged with exact integer weights, so the result does not
    depend on the shard layout
    """
    labels = np.asarray(labels, dtype=np.int64)
    shards = np.array_split(labels, max(1, threads)) if threads > 1 else [labels]

    def work(shard: np.ndarray) -> EmpiricalMeasure:
        return EmpiricalMeasure.from_indices(bins, shard)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, shards))
    else:
        parts = [work(shard) for shard in shards]
    return merge_all(parts)


def saturated_contains(arc: Arc, theta: np.ndarray) -> np.ndarray:
    """membership of SO(2) angles in the M-saturation arc u (arc + pi)"""
    theta = np.asarray(theta, dtype=float)
    return arc.contains(theta) | arc.contains(theta + math.pi)


def saturated_measure(arc: Arc) -> float:
    """haar probability of arc u (arc + pi) in SO(2)"""
    return min(2.0 * arc.length, TWO_PI) / TWO_PI


def predicted_total(orbit: AnyOrbit, T: float) -> float:
    """Vol(G_T) / covol"""
    rs = root_system(orbit.lattice.group_spec)
    return ball_volume(rs, T) / orbit.covolume


def _require_rank_one(orbit: AnyOrbit, what: str) -> OrbitSet:
    if not isinstance(orbit, OrbitSet) or orbit.lattice.is_product:
        raise DomainError(f"{what} is defined for rank-one orbits")
    return orbit


def _prefix(orbit: OrbitSet, T: float) -> int:
    return orbit.count_below(T)


def _finish(report: CountReport) -> CountReport:
    if not report.reliable:
        logger.warning("some bins predict fewer than one point at T=%s; ratios are not meaningful", report.T)
    return report


def count_ball(orbit: AnyOrbit, T: float, threads: int = 1) -> CountReport:
    """
    #{gamma : d(K, K g gamma) < T} against Vol(G_T)/covol

    product orbits are counted by streaming factor pairs
    """
    if isinstance(orbit, ProductOrbit):
        observed = orbit.count(T, threads=threads)
    else:
        observed = _prefix(orbit, T)
    predicted = predicted_total(orbit, T)
    return _finish(CountReport(
        T=float(T),
        bins=(BinSpec("ball", 0.0, float(T)),),
        observed=np.array([observed]),
        predicted=np.array([predicted]),
        parameters={"experiment": "count_ball", "lattice": orbit.lattice.descriptor()},
    ))


def orbit_points(orbit: OrbitSet, limit: Optional[int] = None) -> np.ndarray:
    """upper half-plane positions (g gamma)^-1 i of the orbit points y gamma"""
    n = len(orbit) if limit is None else limit
    mats = orbit.gammas[:n].astype(float).reshape(-1, 2, 2)
    h = orbit.lattice.conjugator.matrix[None, :, :] @ mats
    a, b, c, d = h[:, 0, 0], h[:, 0, 1], h[:, 1, 0], h[:, 1, 1]
    return (d * 1j - b) / (-c * 1j + a)


def sector_reach(base: complex, T: float) -> float:
    """enumeration radius around i that contains the ball B_T(base)"""
    return float(T) + float(point_distances(ORIGIN, base))


def _sector_angles_from(orbit: OrbitSet, base: complex, T: float) -> np.ndarray:
    """visual angles from base of the orbit points inside B_T(base)"""
    reach = sector_reach(base, T)
    if reach > orbit.T + 1e-12:
        raise DomainError(
            f"sectors of radius {T} around {base} need the orbit to T={reach:.6g}, it reaches {orbit.T}"
        )
    points = orbit_points(orbit, _prefix(orbit, min(reach, orbit.T)))
    inside = points[point_distances(base, points) < T]
    return visual_angles(base, inside)


def count_sector(
    orbit: OrbitSet,
    arcs: Sequence[Arc],
    T: float,
    base: complex = ORIGIN,
    mode: str = "gamma",
    threads: int = 1,
) -> CountReport:
    """
    counts of the orbit points in B_T(x) by visual angle from the basepoint x

    args:
        orbit: rank-one orbit, enumerated to at least sector_reach(x, T)
        arcs: partition of the circle in x's chart
        T: radius
        base: basepoint x
        mode: "gamma" counts lattice elements, "point" counts distinct points y gamma
        threads: binning shards

    returns:
        CountReport with predicted m_x(arc) Vol/covol (divided by #Stab in point mode)
    """
    orbit = _require_rank_one(orbit, "count_sector")
    if mode not in ("gamma", "point"):
        raise DomainError(f"unknown counting mode {mode!r}")
    ordered = validate_partition(arcs)
    if complex(base) == ORIGIN:
        angles = orbit.angle(VISUAL_ANGLE)[:_prefix(orbit, T)]
    else:
        angles = _sector_angles_from(orbit, complex(base), T)
    bins = arc_bins(ordered, "sector")
    measure = binned_counts(assign_arcs(angles, ordered), bins, threads)
    observed = measure.weights.astype(np.int64)
    predicted = np.array([arc.length / TWO_PI for arc in ordered]) * predicted_total(orbit, T)

    stab = stabilizer_order(orbit.lattice)
    if mode == "point":
        if np.any(observed % stab):
            logger.warning("sector counts not divisible by stabilizer order %d", stab)
        observed = observed // stab
        predicted = predicted / stab
    return _finish(CountReport(
        T=float(T),
        bins=bins,
        observed=observed,
        predicted=predicted,
        stabilizer_order=stab,
        mode=mode,
        parameters={"experiment": "count_sector", "base": [base.real, base.imag] if isinstance(base, complex) else base},
    ))


def _boundary_images(orbit: OrbitSet, b: BoundaryPoint) -> np.ndarray:
    decoration = orbit.boundary
    if decoration is None:
        raise MissingDecorationError("orbit has no boundary decoration; call orbit.with_boundary(b) first")
    if decoration.b[0].distance_to(b) > 1e-12:
        raise MissingDecorationError(
            f"orbit is decorated for b={decoration.b[0].angle}, not {b.angle}; re-decorate with orbit.with_boundary(b)"
        )
    return decoration.images[:, 0]


def count_boundary(orbit: OrbitSet, b: BoundaryPoint, arcs: Sequence[Arc], T: float, threads: int = 1) -> CountReport:
    """
    counts of b gamma^-1 per arc against m_y(arc) Vol/covol

    args:
        orbit: rank-one orbit decorated for b
        b: boundary point
        arcs: partition in the chart of x = i
        T: radius
        threads: binning shards
    """
    orbit = _require_rank_one(orbit, "count_boundary")
    images = _boundary_images(orbit, b)
    ordered = validate_partition(arcs)
    n = _prefix(orbit, T)
    bins = arc_bins(ordered, "boundary")
    measure = binned_counts(assign_arcs(images[:n], ordered), bins, threads)
    y = orbit.lattice.y_point
    weights = np.array([invariant_measure(ORIGIN, arc, observer=y) for arc in ordered])
    return _finish(CountReport(
        T=float(T),
        bins=bins,
        observed=measure.weights.astype(np.int64),
        predicted=weights * predicted_total(orbit, T),
        parameters={"experiment": "count_boundary", "b": b.angle, "y": [y.real, y.imag]},
    ))


def count_joint(
    orbit: OrbitSet,
    b: BoundaryPoint,
    sector_arcs: Sequence[Arc],
    boundary_arcs: Sequence[Arc],
    T: float,
    threads: int = 1,
) -> CountReport:
    """
    joint sector x boundary counts on a grid, rows = sector arcs

    predicted m_x(sector) m_y(boundary) Vol/covol
    """
    orbit = _require_rank_one(orbit, "count_joint")
    images = _boundary_images(orbit, b)
    sectors = validate_partition(sector_arcs)
    boundaries = validate_partition(boundary_arcs)
    n = _prefix(orbit, T)
    rows = assign_arcs(orbit.angle(VISUAL_ANGLE)[:n], sectors)
    cols = assign_arcs(images[:n], boundaries)
    bins = tuple(
        BinSpec(f"sector{i}:boundary{j}", s.start, s.start + s.length)
        for i, s in enumerate(sectors)
        for j, _ in enumerate(boundaries)
    )
    measure = binned_counts(rows * len(boundaries) + cols, bins, threads)
    y = orbit.lattice.y_point
    m_x = np.array([arc.length / TWO_PI for arc in sectors])
    m_y = np.array([invariant_measure(ORIGIN, arc, observer=y) for arc in boundaries])
    predicted = np.outer(m_x, m_y).ravel() * predicted_total(orbit, T)
    return _finish(CountReport(
        T=float(T),
        bins=bins,
        observed=measure.weights.astype(np.int64),
        predicted=predicted,
        shape=(len(sectors), len(boundaries)),
        parameters={"experiment": "count_joint", "b": b.angle, "y": [y.real, y.imag]},
    ))


ArcBox = Union[Arc, Sequence[Arc]]


def _box(omega: ArcBox, factors: int) -> Tuple[Arc, ...]:
    box = (omega,) if isinstance(omega, Arc) else tuple(omega)
    if len(box) != factors:
        raise DomainError(f"need one arc per factor ({factors}), got {len(box)}")
    return box


def count_bisector(orbit: AnyOrbit, omega1: ArcBox, omega2: ArcBox, T: float, threads: int = 1) -> CountReport:
    """
    counts of gamma with k1-angle in O1 M and k2-angle in M O2

    args:
        orbit: rank-one OrbitSet or ProductOrbit (boxes of arcs per factor)
        omega1: arc(s) on the k1 circle
        omega2: arc(s) on the k2 circle
        T: radius

    returns:
        single-bin CountReport with predicted nu(O1 M) nu(M O2) Vol/covol
    """
    factors = 2 if orbit.lattice.is_product else 1
    box1, box2 = _box(omega1, factors), _box(omega2, factors)
    nu = float(np.prod([saturated_measure(a) for a in box1 + box2]))

    if isinstance(orbit, ProductOrbit):
        def predicate(batch: PairBatch) -> np.ndarray:
            mask = np.ones(len(batch), dtype=bool)
            for f in range(2):
                mask &= saturated_contains(box1[f], batch.angle(f, K1_ANGLE))
                mask &= saturated_contains(box2[f], batch.angle(f, K2_ANGLE))
            return mask

        observed = orbit.count(T, predicate, threads=threads)
    else:
        n = _prefix(orbit, T)
        mask = np.ones(n, dtype=bool)
        for f in range(factors):
            mask &= saturated_contains(box1[f], orbit.angle(K1_ANGLE, f)[:n])
            mask &= saturated_contains(box2[f], orbit.angle(K2_ANGLE, f)[:n])
        observed = int(np.count_nonzero(mask))
    return _finish(CountReport(
        T=float(T),
        bins=(BinSpec("bisector", 0.0, float(T)),),
        observed=np.array([observed]),
        predicted=np.array([nu * predicted_total(orbit, T)]),
        parameters={
            "experiment": "count_bisector",
            "omega1": [[a.start, a.start + a.length] for a in box1],
            "omega2": [[a.start, a.start + a.length] for a in box2],
        },
    ))


def _product_box_predicate(orbit: ProductOrbit, omega1: Tuple[Arc, ...], omega2: Tuple[Arc, ...], column: int):
    for f, factor in enumerate((orbit.first, orbit.second)):
        if factor.boundary is None:
            raise MissingDecorationError(f"factor {f} orbit needs a boundary decoration")

    def predicate(batch: PairBatch) -> np.ndarray:
        mask = np.ones(len(batch), dtype=bool)
        for f in range(2):
            mask &= saturated_contains(omega1[f], batch.angle(f, column))
            mask &= omega2[f].contains(batch.boundary_image(f))
        return mask

    return predicate


def product_box_weight(orbit: ProductOrbit, omega1: Tuple[Arc, ...], omega2: Tuple[Arc, ...]) -> float:
    """nu(M O1) times the product boundary measure m_y(O2)"""
    weight = 1.0
    for f, factor in enumerate((orbit.first, orbit.second)):
        weight *= saturated_measure(omega1[f])
        weight *= invariant_measure(ORIGIN, omega2[f], observer=factor.lattice.y_point)
    return weight


def count_product_joint(orbit: ProductOrbit, omega1: ArcBox, omega2: ArcBox, T: float, threads: int = 1) -> CountReport:
    """
    rank-two joint law: k2 angles in M O1 (per factor) and b gamma^-1 in O2

    factor orbits must carry boundary decorations
    """
    if not isinstance(orbit, ProductOrbit):
        raise DomainError("count_product_joint needs a ProductOrbit")
    box1, box2 = _box(omega1, 2), _box(omega2, 2)
    observed = orbit.count(T, _product_box_predicate(orbit, box1, box2, K2_ANGLE), threads=threads)
    weight = product_box_weight(orbit, box1, box2)
    return _finish(CountReport(
        T=float(T),
        bins=(BinSpec("product_joint", 0.0, float(T)),),
        observed=np.array([observed]),
        predicted=np.array([weight * predicted_total(orbit, T)]),
        parameters={"experiment": "count_product_joint"},
    ))


@dataclass(frozen=True)
class AsymmetrySeries:
    """
    box counts over a T grid relative to the naive product prediction

    ratios divide the box count by weight * N(T), N(T) being the observed
    ball count, so full boxes give exactly 1
    """

    T_grid: Tuple[float, ...]
    weight: float
    ball_counts: Tuple[int, ...]
    swapped_counts: Tuple[int, ...]
    correct_counts: Tuple[int, ...]

    @property
    def swapped_ratio(self) -> np.ndarray:
        return np.array(self.swapped_counts) / (self.weight * np.array(self.ball_counts))

    @property
    def correct_ratio(self) -> np.ndarray:
        return np.array(self.correct_counts) / (self.weight * np.array(self.ball_counts))


def asymmetry_probe(orbit: AnyOrbit, omega1: ArcBox, omega2: ArcBox, T_grid: Sequence[float], threads: int = 1) -> AsymmetrySeries:
    """
    compare the swapped membership O1 A+ K with the K A+ O1 order

    args:
        orbit: decorated ProductOrbit; rank-one orbits are rejected
        omega1: per-factor arcs constraining k1 (swapped) or k2 (correct order)
        omega2: per-factor boundary arcs for b gamma^-1
        T_grid: radii

    returns:
        AsymmetrySeries, exploratory; no convergence is asserted for the swapped order
    """
    if not isinstance(orbit, ProductOrbit):
        raise DomainError("the swapped-order probe needs a product group; it is vacuous in rank one")
    box1, box2 = _box(omega1, 2), _box(omega2, 2)
    swapped = _product_box_predicate(orbit, box1, box2, K1_ANGLE)
    correct = _product_box_predicate(orbit, box1, box2, K2_ANGLE)
    balls, swapped_counts, correct_counts = [], [], []
    for T in T_grid:
        balls.append(orbit.count(T, threads=threads))
        swapped_counts.append(orbit.count(T, swapped, threads=threads))
        correct_counts.append(orbit.count(T, correct, threads=threads))
    return AsymmetrySeries(
        T_grid=tuple(float(t) for t in T_grid),
        weight=product_box_weight(orbit, box1, box2),
        ball_counts=tuple(balls),
        swapped_counts=tuple(swapped_counts),
        correct_counts=tuple(correct_counts),
    )
