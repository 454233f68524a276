"""
exhaustive lattice enumeration within distance T

rank-one lattices sit inside PSL(2, Z); every element with
d(K, K g gamma) < T satisfies |gamma|_F^2 < 2 cosh(T) / sigma_min(g)^2, so
we sweep coprime bottom rows (c, d) in that disk, solve ad - bc = 1 with
the extended euclidean algorithm and walk the one-parameter family of top
rows that stays inside the bound. product lattices are streamed as pairs
of factor orbits without materializing the pair list
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DomainError, MissingCacheError, ResourceLimitError
from src.geometry.boundary import BoundaryPoint, act_on_angles, inverse_orbit_visual_angles
from src.geometry.lie_core import distance_to_origin, sl2_cartan_angles
from src.lattice.lattice_spec import LatticeKind, LatticeSpec, covolume, membership_mask

logger = logging.getLogger(__name__)

RANK_ONE_CAP = 14.0
PRODUCT_CAP = 9.0
MAX_MATERIALIZED = 5_000_000
MAX_SWEEP_BOUND = 1e12
STRIPE_WIDTH = 64
STABILIZER_TOLERANCE = 1e-9

# angle columns per factor
K1_ANGLE = 0
K2_ANGLE = 1
VISUAL_ANGLE = 2
COLUMNS_PER_FACTOR = 3


@dataclass(frozen=True)
class OrbitPoint:
    """one enumerated lattice element with its decorations"""

    gamma: Tuple[int, ...]
    dist: float
    cartan_dir: Tuple[float, ...]
    visual: Tuple[float, ...]
    boundary_img: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True, eq=False)
class BoundaryDecoration:
    """images b gamma^-1 (mobius gamma(b)) of one boundary point, one column per factor"""

    b: Tuple[BoundaryPoint, ...]
    images: np.ndarray


@dataclass(frozen=True, eq=False)
class OrbitSet:
    """
    complete, distance-sorted enumeration of a lattice orbit

    gammas holds integer rows (a, b, c, d) per factor; angles holds
    (k1 angle, k2 angle, visual angle) per factor
    """

    lattice: LatticeSpec
    T: float
    gammas: np.ndarray
    dist: np.ndarray
    angles: np.ndarray
    covolume: float
    factor_dists: Optional[np.ndarray] = None
    boundary: Optional[BoundaryDecoration] = None

    def __post_init__(self):
        for name in ("gammas", "dist", "angles", "factor_dists"):
            value = getattr(self, name)
            if value is not None:
                value.setflags(write=False)
        if self.boundary is not None:
            self.boundary.images.setflags(write=False)

    def __len__(self) -> int:
        return int(self.dist.shape[0])

    @property
    def factor_count(self) -> int:
        return self.gammas.shape[1] // 4

    def angle(self, column: int, factor: int = 0) -> np.ndarray:
        return self.angles[:, factor * COLUMNS_PER_FACTOR + column]

    def count_below(self, T: float) -> int:
        """#{dist < T}"""
        if T > self.T + 1e-12:
            raise DomainError(f"orbit only enumerated to T={self.T}, asked for {T}")
        return int(np.searchsorted(self.dist, T, side="left"))

    def restrict(self, T: float) -> "OrbitSet":
        """prefix view with dist < T"""
        n = self.count_below(T)
        boundary = None
        if self.boundary is not None:
            boundary = BoundaryDecoration(self.boundary.b, self.boundary.images[:n])
        return OrbitSet(
            lattice=self.lattice,
            T=float(T),
            gammas=self.gammas[:n],
            dist=self.dist[:n],
            angles=self.angles[:n],
            covolume=self.covolume,
            factor_dists=None if self.factor_dists is None else self.factor_dists[:n],
            boundary=boundary,
        )

    def with_boundary(self, b) -> "OrbitSet":
        """
        decorate every element with the boundary image b gamma^-1

        args:
            b: BoundaryPoint (one per factor for products, as a tuple)

        returns:
            new OrbitSet carrying the decoration
        """
        points = tuple(b) if isinstance(b, (tuple, list)) else (b,)
        if len(points) != self.factor_count:
            raise DomainError(f"need {self.factor_count} boundary points, got {len(points)}")
        columns = []
        for k, point in enumerate(points):
            mats = self.gammas[:, 4 * k:4 * k + 4].astype(float).reshape(-1, 2, 2)
            columns.append(act_on_angles(mats, point.angle) if len(mats) else np.zeros(0))
        images = np.stack(columns, axis=1) if columns else np.zeros((0, 0))
        return OrbitSet(
            lattice=self.lattice,
            T=self.T,
            gammas=self.gammas,
            dist=self.dist,
            angles=self.angles,
            covolume=self.covolume,
            factor_dists=self.factor_dists,
            boundary=BoundaryDecoration(points, images),
        )

    def point(self, index: int) -> OrbitPoint:
        angles = self.angles[index]
        cartan = tuple(
            float(angles[f * COLUMNS_PER_FACTOR + K2_ANGLE]) for f in range(self.factor_count)
        )
        visual = tuple(
            float(angles[f * COLUMNS_PER_FACTOR + VISUAL_ANGLE]) for f in range(self.factor_count)
        )
        img = None
        if self.boundary is not None:
            img = tuple(float(v) for v in self.boundary.images[index])
        return OrbitPoint(
            gamma=tuple(int(v) for v in self.gammas[index]),
            dist=float(self.dist[index]),
            cartan_dir=cartan,
            visual=visual,
            boundary_img=img,
        )

    def points(self) -> Iterator[OrbitPoint]:
        for index in range(len(self)):
            yield self.point(index)


def extended_gcd(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    vectorized extended euclid

    returns:
        (g, s, t) with s*x + t*y = g = gcd(x, y) >= 0
    """
    old_r, r = x.astype(np.int64), y.astype(np.int64)
    old_s, s = np.ones_like(old_r), np.zeros_like(old_r)
    old_t, t = np.zeros_like(old_r), np.ones_like(old_r)
    while True:
        active = r != 0
        if not active.any():
            break
        q = np.zeros_like(r)
        q[active] = old_r[active] // r[active]
        old_r, r = np.where(active, r, old_r), np.where(active, old_r - q * r, r)
        old_s, s = np.where(active, s, old_s), np.where(active, old_s - q * s, s)
        old_t, t = np.where(active, t, old_t), np.where(active, old_t - q * t, t)
    flip = old_r < 0
    return np.where(flip, -old_r, old_r), np.where(flip, -old_s, old_s), np.where(flip, -old_t, old_t)


def _stripe(bound: float, c_values: np.ndarray) -> np.ndarray:
    """all PSL(2, Z) elements with |gamma|_F^2 < bound whose canonical bottom row has c in c_values"""
    radius = math.isqrt(int(math.floor(bound))) + 1
    d_values = np.arange(-radius, radius + 1, dtype=np.int64)
    cc, dd = (m.ravel() for m in np.meshgrid(c_values.astype(np.int64), d_values, indexing="ij"))
    n = cc * cc + dd * dd
    keep = (n < bound) & ((cc > 0) | (dd > 0)) & (np.gcd(cc, dd) == 1)
    cc, dd, n = cc[keep], dd[keep], n[keep]
    if cc.size == 0:
        return np.zeros((0, 4), dtype=np.int64)

    _, s, t = extended_gcd(dd, cc)
    a0, b0 = s, -t
    nf = n.astype(float)
    center = -(a0 * cc + b0 * dd) / nf
    slack = (bound - nf - 1.0 / nf) / nf
    ok = slack >= 0
    width = np.sqrt(np.where(ok, slack, 0.0))
    kmin = np.floor(center - width).astype(np.int64) - 1
    kmax = np.ceil(center + width).astype(np.int64) + 1
    counts = np.where(ok, kmax - kmin + 1, 0)
    total = int(counts.sum())
    if total == 0:
        return np.zeros((0, 4), dtype=np.int64)

    rows = np.repeat(np.arange(cc.size), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    k = kmin[rows] + (np.arange(total) - starts)
    c, d = cc[rows], dd[rows]
    a = a0[rows] + k * c
    b = b0[rows] + k * d
    out = np.stack([a, b, c, d], axis=1)
    norm2 = np.sum(out * out, axis=1)
    out = out[norm2 < bound]
    # reading-order sign convention: first nonzero entry positive
    flip = (out[:, 0] < 0) | ((out[:, 0] == 0) & (out[:, 1] < 0))
    out[flip] *= -1
    return out


def unimodular_sweep(bound: float, threads: int = 1) -> np.ndarray:
    """
    every element of PSL(2, Z) with |gamma|_F^2 < bound, one row (a, b, c, d) per class

    args:
        bound: frobenius-square bound
        threads: worker threads over c-stripes

    returns:
        int64 array (count, 4), unsorted
    """
    if bound > MAX_SWEEP_BOUND:
        raise ResourceLimitError(f"sweep bound {bound:.3g} exceeds {MAX_SWEEP_BOUND:.0e}")
    if bound <= 2.0:
        return np.zeros((0, 4), dtype=np.int64)
    c_max = math.isqrt(int(math.floor(bound))) + 1
    stripes = [
        np.arange(lo, min(lo + STRIPE_WIDTH, c_max + 1), dtype=np.int64)
        for lo in range(0, c_max + 1, STRIPE_WIDTH)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda cs: _stripe(bound, cs), stripes))
    else:
        parts = [_stripe(bound, cs) for cs in stripes]
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, 4), dtype=np.int64)


def _sort_orbit(gammas: np.ndarray, dist: np.ndarray) -> np.ndarray:
    keys = [gammas[:, i] for i in range(gammas.shape[1] - 1, -1, -1)] + [dist]
    return np.lexsort(keys)


def _rank_one_arrays(lat: LatticeSpec, T: float, threads: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    bound = 2.0 * math.cosh(T)
    conj = lat.conjugator.matrix
    sigma_min = float(np.linalg.svd(conj, compute_uv=False)[-1])
    candidates = unimodular_sweep(bound / sigma_min ** 2 * (1.0 + 1e-12), threads)
    candidates = candidates[membership_mask(lat, candidates)]
    if lat.is_identity_conjugator:
        h = candidates.astype(float)
        frob = np.sum(candidates * candidates, axis=1).astype(float)
    else:
        mats = candidates.astype(float).reshape(-1, 2, 2)
        h = (conj[None, :, :] @ mats).reshape(-1, 4)
        frob = np.sum(h * h, axis=1)
    keep = frob < bound
    gammas, h = candidates[keep], h[keep]
    theta1, theta2, log_sigma = sl2_cartan_angles(h)
    dist = np.maximum(2.0 * log_sigma, 0.0)
    inside = dist < T
    gammas, h, dist = gammas[inside], h[inside], dist[inside]
    theta1, theta2 = theta1[inside], theta2[inside]
    visual = inverse_orbit_visual_angles(h)
    angles = np.stack([theta1, theta2, visual], axis=1)
    order = _sort_orbit(gammas, dist)
    return gammas[order], dist[order], angles[order]


def _check_cap(T: float, cap: float) -> None:
    if T > cap:
        raise ResourceLimitError(f"T={T} exceeds the enumeration cap {cap}")


def enumerate_lattice(lat: LatticeSpec, T: float, hard_cap: Optional[float] = None, threads: int = 1) -> OrbitSet:
    """
    complete enumeration of {gamma : d(K, K g gamma) < T}

    args:
        lat: lattice with conjugator g
        T: radius
        hard_cap: overrides the default cap (14 rank one, 9 product)
        threads: worker threads over sweep stripes

    returns:
        OrbitSet sorted by distance
    """
    if T < 0 or not math.isfinite(T):
        raise DomainError(f"radius must be a finite nonnegative number, got {T}")
    if lat.is_product:
        _check_cap(T, PRODUCT_CAP if hard_cap is None else hard_cap)
        return _materialize_product(lat, T, threads)
    _check_cap(T, RANK_ONE_CAP if hard_cap is None else hard_cap)
    gammas, dist, angles = _rank_one_arrays(lat, T, threads)
    logger.debug("enumerated %d elements of %s below T=%s", len(dist), lat.kind.value, T)
    return OrbitSet(lat, float(T), gammas, dist, angles, covolume(lat))


def naive_sweep(T: float) -> np.ndarray:
    """
    brute-force oracle: PSL(2, Z) elements with |gamma|_F^2 < 2 cosh T

    four nested integer ranges |entry| <= ceil(sqrt(2 cosh T)), canonical sign,
    rows sorted lexicographically
    """
    bound = 2.0 * math.cosh(T)
    r = int(math.ceil(math.sqrt(bound)))
    values = np.arange(-r, r + 1, dtype=np.int64)
    a, b, c, d = np.meshgrid(values, values, values, values, indexing="ij")
    mask = (a * d - b * c == 1) & (a * a + b * b + c * c + d * d < bound)
    rows = np.stack([a[mask], b[mask], c[mask], d[mask]], axis=1)
    canonical = (rows[:, 0] > 0) | ((rows[:, 0] == 0) & (rows[:, 1] > 0))
    rows = rows[canonical]
    return rows[np.lexsort(rows.T[::-1])]


def stabilizer_order(lat: LatticeSpec) -> int:
    """
    #(Gamma intersect K_y) for y = K g, found by brute force

    for product lattices the factor orders multiply
    """
    if lat.is_product:
        return stabilizer_order(lat.factor(0)) * stabilizer_order(lat.factor(1))
    g = lat.conjugator
    radius = 2.0 * distance_to_origin(g) + 0.5
    plain = LatticeSpec(lat.kind, lat.level)
    candidates, _, _ = _rank_one_arrays(plain, radius, threads=1)
    conj = g.matrix
    mats = candidates.astype(float).reshape(-1, 2, 2)
    h = conj[None, :, :] @ mats @ np.linalg.inv(conj)[None, :, :]
    half_frob = 0.5 * np.sum(h * h, axis=(1, 2))
    return int(np.count_nonzero(np.abs(half_frob - 1.0) < STABILIZER_TOLERANCE))


@dataclass(frozen=True, eq=False)
class PairBatch:
    """a chunk of index pairs (i, j) into the two factor orbits"""

    first: OrbitSet
    second: OrbitSet
    i: np.ndarray
    j: np.ndarray

    def __len__(self) -> int:
        return int(self.i.size)

    @property
    def dist(self) -> np.ndarray:
        return np.hypot(self.first.dist[self.i], self.second.dist[self.j])

    def factor(self, index: int) -> Tuple[OrbitSet, np.ndarray]:
        return (self.first, self.i) if index == 0 else (self.second, self.j)

    def angle(self, factor: int, column: int) -> np.ndarray:
        orbit, idx = self.factor(factor)
        return orbit.angle(column)[idx]

    def boundary_image(self, factor: int) -> np.ndarray:
        orbit, idx = self.factor(factor)
        if orbit.boundary is None:
            raise DomainError(f"factor {factor} orbit carries no boundary decoration")
        return orbit.boundary.images[idx, 0]

    def factor_dist(self, factor: int) -> np.ndarray:
        orbit, idx = self.factor(factor)
        return orbit.dist[idx]


PairPredicate = Callable[[PairBatch], np.ndarray]


@dataclass(frozen=True, eq=False)
class ProductOrbit:
    """lazy orbit of the product lattice built from its two factor orbits"""

    lattice: LatticeSpec
    first: OrbitSet
    second: OrbitSet

    @property
    def T(self) -> float:
        return min(self.first.T, self.second.T)

    @property
    def covolume(self) -> float:
        return covolume(self.lattice)

    @classmethod
    def from_factors(cls, lat: LatticeSpec, factors: Sequence[OrbitSet]) -> "ProductOrbit":
        if not lat.is_product:
            raise DomainError("product orbit needs the product lattice")
        if factors is None or len(factors) != 2 or any(f is None for f in factors):
            raise MissingCacheError("both factor orbits are required for streaming")
        for k, orbit in enumerate(factors):
            if not orbit.lattice.same_as(lat.factor(k)):
                raise MissingCacheError(f"factor {k} orbit belongs to a different lattice")
        return cls(lat, factors[0], factors[1])

    @classmethod
    def build(cls, lat: LatticeSpec, T: float, threads: int = 1) -> "ProductOrbit":
        _check_cap(T, PRODUCT_CAP)
        return cls.from_factors(lat, [enumerate_lattice(lat.factor(k), T, threads=threads) for k in range(2)])

    def with_boundary(self, b: Sequence[BoundaryPoint]) -> "ProductOrbit":
        return ProductOrbit(self.lattice, self.first.with_boundary(b[0]), self.second.with_boundary(b[1]))

    def _chunks(self, T: float, max_pairs: int) -> List[Tuple[int, int]]:
        n1 = self.first.count_below(T)
        reach = np.sqrt(np.maximum(T * T - self.first.dist[:n1] ** 2, 0.0))
        counts = np.searchsorted(self.second.dist, reach, side="left")
        chunks, start, acc = [], 0, 0
        for i, c in enumerate(counts):
            if acc and acc + c > max_pairs:
                chunks.append((start, i))
                start, acc = i, 0
            acc += int(c)
        if n1:
            chunks.append((start, n1))
        return chunks

    def _batch(self, T: float, lo: int, hi: int) -> PairBatch:
        d1 = self.first.dist[lo:hi]
        reach = np.sqrt(np.maximum(T * T - d1 ** 2, 0.0))
        counts = np.searchsorted(self.second.dist, reach, side="left")
        total = int(counts.sum())
        i = np.repeat(np.arange(lo, hi), counts)
        j = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        inside = self.first.dist[i] ** 2 + self.second.dist[j] ** 2 < T * T
        return PairBatch(self.first, self.second, i[inside], j[inside])

    def iter_batches(self, T: float, max_pairs: int = 1 << 20) -> Iterator[PairBatch]:
        """pairs with sqrt(d1^2 + d2^2) < T, in factor-one order"""
        if T > self.T + 1e-12:
            raise MissingCacheError(f"factor orbits only reach T={self.T}, asked for {T}")
        for lo, hi in self._chunks(T, max_pairs):
            yield self._batch(T, lo, hi)

    def count(self, T: float, predicate: Optional[PairPredicate] = None, threads: int = 1, max_pairs: int = 1 << 20) -> int:
        """exact number of pairs inside the ball satisfying the predicate"""
        if T > self.T + 1e-12:
            raise MissingCacheError(f"factor orbits only reach T={self.T}, asked for {T}")

        def work(bounds: Tuple[int, int]) -> int:
            batch = self._batch(T, *bounds)
            if predicate is None:
                return len(batch)
            return int(np.count_nonzero(predicate(batch)))

        chunks = self._chunks(T, max_pairs)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return int(sum(pool.map(work, chunks)))
        return int(sum(work(c) for c in chunks))


def stream_count_product(
    lat: LatticeSpec,
    T: float,
    predicate: Optional[PairPredicate] = None,
    factors: Optional[Sequence[OrbitSet]] = None,
    threads: int = 1,
) -> int:
    """
    count pairs (gamma1, gamma2) with sqrt(d1^2 + d2^2) < T satisfying predicate

    args:
        lat: the product lattice
        T: radius
        predicate: maps a PairBatch to a boolean mask (all pairs when None)
        factors: factor orbits enumerated to at least T

    returns:
        exact count
    """
    if factors is None:
        raise MissingCacheError("stream_count_product needs both factor orbits")
    if isinstance(factors, ProductOrbit):
        orbit = factors
    else:
        orbit = ProductOrbit.from_factors(lat, factors)
    return orbit.count(T, predicate, threads=threads)


def _materialize_product(lat: LatticeSpec, T: float, threads: int) -> OrbitSet:
    orbit = ProductOrbit.build(lat, T, threads)
    total = orbit.count(T)
    if total > MAX_MATERIALIZED:
        raise ResourceLimitError(
            f"{total} product pairs exceed the materialization limit; use stream_count_product"
        )
    parts_i, parts_j = [], []
    for batch in orbit.iter_batches(T):
        parts_i.append(batch.i)
        parts_j.append(batch.j)
    i = np.concatenate(parts_i) if parts_i else np.zeros(0, dtype=np.int64)
    j = np.concatenate(parts_j) if parts_j else np.zeros(0, dtype=np.int64)
    gammas = np.concatenate([orbit.first.gammas[i], orbit.second.gammas[j]], axis=1)
    factor_dists = np.stack([orbit.first.dist[i], orbit.second.dist[j]], axis=1)
    dist = np.hypot(factor_dists[:, 0], factor_dists[:, 1])
    angles = np.concatenate([orbit.first.angles[i], orbit.second.angles[j]], axis=1)
    order = _sort_orbit(gammas, dist)
    return OrbitSet(
        lattice=lat,
        T=float(T),
        gammas=gammas[order],
        dist=dist[order],
        angles=angles[order],
        covolume=covolume(lat),
        factor_dists=factor_dists[order],
    )
