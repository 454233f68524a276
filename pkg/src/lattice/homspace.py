"""
the modular surface PSL(2, Z)\\PSL(2, R)

points of Gamma\\G are projected to Gamma\\H through Gamma g -> Gamma (g i) and
reduced into the standard domain |Re z| <= 1/2, |z| >= 1. the module also
samples two families of sets whose images should equidistribute there:
K-arc translates y k exp(a), and solvable sweeps y b^-1 over
B = {upper triangular} weighted by right haar measure
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from src.analysis.empirical import BinSpec, EmpiricalMeasure
from src.errors import DomainError, InvalidInputError, NumericError
from src.geometry.boundary import Arc, inverse_orbit_visual_angles
from src.geometry.lie_core import GroupElement, chamber_margin

logger = logging.getLogger(__name__)

MAX_REDUCTION_STEPS = 10_000
UNIT_TOLERANCE = 1e-12
DOMAIN_AREA = math.pi / 3.0
DOMAIN_FLOOR = math.sqrt(3.0) / 2.0
SAMPLE_CHUNK = 1 << 20

_S = np.array([[0, -1], [1, 0]], dtype=object)


def mobius(matrix: np.ndarray, z):
    """action of a 2x2 matrix on points of the upper half-plane"""
    a, b, c, d = (float(v) for v in np.asarray(matrix, dtype=float).ravel())
    z = np.asarray(z, dtype=complex)
    return (a * z + b) / (c * z + d)


@dataclass(frozen=True, eq=False)
class ReducedPoint:
    """
    word * g = rep with rep i in the standard fundamental domain

    sign is fixed so that the bottom row of rep has d > 0 (or d == 0, c > 0)
    """

    word: np.ndarray
    rep: GroupElement
    z: complex
    frame_angle: float

    @property
    def word_matrix(self) -> np.ndarray:
        return self.word.astype(float)


def in_domain(z, tolerance: float = 1e-12) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return (np.abs(z.real) <= 0.5 + tolerance) & (np.abs(z) >= 1.0 - tolerance)


def reduce(g: GroupElement) -> ReducedPoint:
    """
    gauss reduction of g i by the generators T and S

    args:
        g: SL(2) element

    returns:
        ReducedPoint; word is an integer matrix of PSL(2, Z)
    """
    if g.spec.factors != (2,):
        raise InvalidInputError("reduction is defined for SL(2) elements")
    word = np.array([[1, 0], [0, 1]], dtype=object)
    z = complex(mobius(g.matrix, 1j))
    for _ in range(MAX_REDUCTION_STEPS):
        n = int(round(z.real))
        if n:
            z -= n
            word = np.array([[1, -n], [0, 1]], dtype=object).dot(word)
        if abs(z) ** 2 >= 1.0 - UNIT_TOLERANCE:
            break
        z = -1.0 / z
        word = _S.dot(word)
    else:
        raise NumericError("reduction did not terminate", {"point": [z.real, z.imag], "steps": MAX_REDUCTION_STEPS})

    rep = word.astype(float) @ g.matrix
    if rep[1, 1] < 0 or (rep[1, 1] == 0 and rep[1, 0] < 0):
        rep, word = -rep, -word
    frame = math.atan2(rep[1, 0], rep[1, 1])
    return ReducedPoint(word=word.astype(np.int64), rep=GroupElement.from_matrix(rep), z=z, frame_angle=frame)


def reduce_points(z) -> np.ndarray:
    """vectorized reduction of upper half-plane points into the standard domain"""
    z = np.array(z, dtype=complex, copy=True, ndmin=1)
    if np.any(z.imag <= 0):
        raise DomainError("points must lie in the upper half-plane")
    active = np.ones(z.shape, dtype=bool)
    for _ in range(MAX_REDUCTION_STEPS):
        z[active] -= np.round(z[active].real)
        inside = active & (z.real ** 2 + z.imag ** 2 < 1.0 - UNIT_TOLERANCE)
        if not np.any(inside):
            return z
        z[inside] = -1.0 / z[inside]
        active = inside
    raise NumericError("vectorized reduction did not terminate", {"unreduced": int(np.count_nonzero(active))})


def area_below(h: float) -> float:
    """hyperbolic area of the part of the standard domain with Im z < h"""
    if h <= DOMAIN_FLOOR:
        return 0.0
    if h >= 1.0:
        return DOMAIN_AREA - 1.0 / h
    x0 = math.sqrt(1.0 - h * h)
    return 2.0 * ((math.pi / 6.0 - math.asin(x0)) - (0.5 - x0) / h)


@dataclass(frozen=True, eq=False)
class FundamentalDomainBins:
    """
    height bands of the standard domain, optionally split at Re z = 0,
    followed by one cusp bin pooling everything above cusp_height
    """

    edges: np.ndarray
    split_halves: bool = True

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise DomainError("band edges must be strictly increasing")
        if abs(edges[0] - DOMAIN_FLOOR) > 1e-12:
            raise DomainError("bins do not cover the truncated domain: first edge must be sqrt(3)/2")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def equal_area(cls, n_bands: int = 10, cusp_height: float = 4.0, split_halves: bool = True) -> "FundamentalDomainBins":
        """bands of equal invariant area below cusp_height"""
        if n_bands < 1 or cusp_height <= 1.0:
            raise DomainError("need at least one band and a cusp height above 1")
        target = area_below(cusp_height)
        edges = [DOMAIN_FLOOR]
        for k in range(1, n_bands):
            share = k * target / n_bands
            edges.append(brentq(lambda h: area_below(h) - share, DOMAIN_FLOOR, cusp_height, xtol=1e-14))
        edges.append(cusp_height)
        return cls(np.array(edges), split_halves)

    @property
    def cusp_height(self) -> float:
        return float(self.edges[-1])

    @property
    def band_count(self) -> int:
        return self.edges.size - 1

    @property
    def cusp_index(self) -> int:
        return len(self) - 1

    def __len__(self) -> int:
        return self.band_count * (2 if self.split_halves else 1) + 1

    @property
    def specs(self) -> Tuple[BinSpec, ...]:
        out = []
        for k in range(self.band_count):
            lo, hi = float(self.edges[k]), float(self.edges[k + 1])
            if self.split_halves:
                out.append(BinSpec(f"band{k}L", lo, hi))
                out.append(BinSpec(f"band{k}R", lo, hi))
            else:
                out.append(BinSpec(f"band{k}", lo, hi))
        out.append(BinSpec("cusp", self.cusp_height, math.inf))
        return tuple(out)

    @property
    def areas(self) -> np.ndarray:
        bands = np.diff([area_below(h) for h in self.edges])
        if self.split_halves:
            bands = np.repeat(bands / 2.0, 2)
        return np.append(bands, 1.0 / self.cusp_height)

    @property
    def expected(self) -> np.ndarray:
        """limit probability of each bin under the invariant measure"""
        return self.areas / DOMAIN_AREA

    def assign(self, z) -> np.ndarray:
        """bin index of reduced points"""
        z = np.asarray(z, dtype=complex)
        band = np.clip(np.searchsorted(self.edges, z.imag, side="right") - 1, 0, self.band_count - 1)
        index = band * 2 + (z.real >= 0) if self.split_halves else band
        return np.where(z.imag >= self.cusp_height, self.cusp_index, index).astype(np.int64)

    def measure(self, z, weights: Optional[np.ndarray] = None) -> EmpiricalMeasure:
        return EmpiricalMeasure.from_indices(self.specs, self.assign(z), weights)


def bulk_deviation(measure: EmpiricalMeasure, bins: FundamentalDomainBins) -> float:
    """max |observed/expected - 1| over the non-cusp bins of a normalized measure"""
    observed = measure.normalized()[:bins.cusp_index]
    return float(np.max(np.abs(observed / bins.expected[:bins.cusp_index] - 1.0)))


def _chunked(samples: int, seed: int, work: Callable[[int, np.random.Generator], object], threads: int = 1) -> List[object]:
    sizes = [SAMPLE_CHUNK] * (samples // SAMPLE_CHUNK)
    if samples % SAMPLE_CHUNK:
        sizes.append(samples % SAMPLE_CHUNK)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(sizes))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, sizes, rngs))
    return [work(size, rng) for size, rng in zip(sizes, rngs)]


def rotate_points(theta: np.ndarray, z) -> np.ndarray:
    """rot(theta) z for rot(t) = [[cos t, -sin t], [sin t, cos t]]"""
    c, s = np.cos(theta), np.sin(theta)
    return (c * z - s) / (s * z + c)


@dataclass(frozen=True, eq=False)
class TranslateStep:
    margin: float
    measure: EmpiricalMeasure
    expected: np.ndarray
    max_deviation: float
    claimed: bool


def translate_equidistribution(
    y: GroupElement,
    a_logs: Sequence[Sequence[float]],
    U: Arc,
    bins: FundamentalDomainBins,
    samples: int,
    seed: int = 0,
    threads: int = 1,
) -> List[TranslateStep]:
    """
    images of y k exp(a_i) for k uniform in U, reduced and binned

    args:
        y: SL(2) representative of the point of Gamma\\G
        a_logs: SL(2) chamber vectors with increasing margins
        U: arc of K, angles of rot(theta)
        bins: fundamental-domain partition
        samples: draws of k per step
        seed: master seed

    returns:
        one TranslateStep per a_log; steps on a wall carry no uniformity claim
    """
    if not isinstance(bins, FundamentalDomainBins):
        raise DomainError("bins do not cover the truncated domain")
    if samples < 1:
        raise DomainError("need at least one sample")
    margins = [chamber_margin(np.asarray(a, dtype=float)) for a in a_logs]
    if any(m < 0 for m in margins):
        raise DomainError("a_log outside the positive chamber")
    if any(b <= a for a, b in zip(margins, margins[1:])):
        raise DomainError("chamber margins must increase along the sequence")

    steps = []
    for index, margin in enumerate(margins):
        height = math.exp(margin)

        def work(size: int, rng: np.random.Generator) -> np.ndarray:
            theta = U.start + U.length * rng.random(size)
            z = mobius(y.matrix, rotate_points(theta, 1j * height))
            return np.bincount(bins.assign(reduce_points(z)), minlength=len(bins)).astype(float)

        counts = np.sum(_chunked(samples, seed + index, work, threads), axis=0)
        measure = EmpiricalMeasure(bins.specs, counts)
        steps.append(TranslateStep(
            margin=margin,
            measure=measure,
            expected=bins.expected,
            max_deviation=bulk_deviation(measure, bins),
            claimed=margin > 1e-8,
        ))
        logger.debug("translate margin %.3f: max deviation %.4f", margin, steps[-1].max_deviation)
    return steps


def b_element(t: float, u: float) -> GroupElement:
    """b(t, u) = diag(e^(t/2), e^(-t/2)) [[1, u], [0, 1]]"""
    return GroupElement.from_matrix([[math.exp(t / 2), u * math.exp(t / 2)], [0.0, math.exp(-t / 2)]])


def b_coordinates(b: GroupElement) -> Tuple[float, float]:
    m = b.matrix
    if abs(m[1, 0]) > 1e-12 or m[0, 0] <= 0:
        raise DomainError("element is not in the positive upper triangular group")
    return 2.0 * math.log(m[0, 0]), m[0, 1] / m[0, 0]


def right_translate(t, u, t0: float, u0: float):
    """coordinates of b(t, u) b(t0, u0)"""
    return t + t0, u0 + u * math.exp(-t0)


def right_haar_density(t):
    """density of rho in (t, u); rho(Q_T) equals the ball volume cosh T - 1"""
    return np.exp(t) / (2.0 * math.pi)


def rho_box_mass(t_lo: float, t_hi: float, u_lo: float, u_hi: float) -> float:
    return (u_hi - u_lo) * (math.exp(t_hi) - math.exp(t_lo)) / (2.0 * math.pi)


def haar_radial_cdf(r, T: float):
    """law of d(K, Kg) for haar-random g in the ball of radius T"""
    return (np.cosh(r) - 1.0) / (math.cosh(T) - 1.0)


@dataclass(frozen=True)
class SamplingBox:
    """|t| < t_bound, |u| < sqrt(frob_bound e^-t): contains every b with |b|_F^2 < frob_bound"""

    frob_bound: float

    @property
    def t_bound(self) -> float:
        return math.acosh(self.frob_bound / 2.0)

    @property
    def mass(self) -> float:
        return 2.0 * math.sqrt(self.frob_bound) / (2.0 * math.pi) * 4.0 * math.sinh(self.t_bound / 2.0)

    def sample(self, size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """(t, u) distributed as rho restricted to the box"""
        tb = self.t_bound
        # inverse cdf of the e^(t/2) marginal on [-tb, tb]
        lo, hi = math.exp(-tb / 2.0), math.exp(tb / 2.0)
        t = 2.0 * np.log(lo + (hi - lo) * rng.random(size))
        u = (2.0 * rng.random(size) - 1.0) * np.sqrt(self.frob_bound * np.exp(-t))
        return t, u


def b_entries(t: np.ndarray, u: np.ndarray) -> np.ndarray:
    half = np.exp(t / 2.0)
    return np.stack([half, u * half, np.zeros_like(t), 1.0 / half], axis=-1)


@dataclass(frozen=True, eq=False)
class SweepResult:
    """
    accepted samples of a solvable sweep

    every sample carries weight sample_weight of rho mass; in_omega marks
    membership in g^-1 K A+ Omega
    """

    T: float
    bins: FundamentalDomainBins
    dists: np.ndarray
    bin_index: np.ndarray
    in_omega: np.ndarray
    sample_weight: float
    omega_measure: float

    @property
    def measure(self) -> EmpiricalMeasure:
        counts = np.bincount(self.bin_index[self.in_omega], minlength=len(self.bins)).astype(float)
        return EmpiricalMeasure(self.bins.specs, counts)

    @property
    def expected(self) -> np.ndarray:
        return self.bins.expected

    @property
    def rho_mass_full(self) -> float:
        return self.sample_weight * self.dists.size

    @property
    def rho_mass_omega(self) -> float:
        return self.sample_weight * int(np.count_nonzero(self.in_omega))

    @property
    def ratio(self) -> float:
        """rho(Q_T(g, Omega)) / rho(Q_T(g)), tends to nu(M Omega)"""
        return self.rho_mass_omega / self.rho_mass_full

    @property
    def max_deviation(self) -> float:
        return bulk_deviation(self.measure, self.bins)

    def restricted(self, T: float) -> "SweepResult":
        """the same samples cut to d < T, distributed as a sweep at T"""
        if T > self.T:
            raise DomainError(f"sweep only reaches T={self.T}")
        keep = self.dists < T
        if not np.any(keep & self.in_omega):
            raise DomainError(f"Q_T(g, Omega) is empty at T={T}")
        return SweepResult(T, self.bins, self.dists[keep], self.bin_index[keep], self.in_omega[keep],
                           self.sample_weight, self.omega_measure)


def solvable_sweep(
    g: GroupElement,
    T: float,
    omega: Arc,
    bins: FundamentalDomainBins,
    samples: int,
    seed: int = 0,
    y: Optional[GroupElement] = None,
    threads: int = 1,
) -> SweepResult:
    """
    importance-sample Q_T(g, Omega) = {b : d(K, K g b) < T, g b in K A+ Omega}

    args:
        g: SL(2) element fixing the cartan frame
        T: radius
        omega: arc of the k2 component, in the angle pi + 2 theta2 which
            parametrizes PSO(2) uniformly
        bins: fundamental-domain partition
        samples: draws from rho on the enclosing box
        seed: master seed
        y: representative of the point of Gamma\\G (identity coset by default)

    returns:
        SweepResult with the reduced images of y b^-1
    """
    if g.spec.factors != (2,):
        raise InvalidInputError("solvable sweeps are implemented in rank one")
    if T <= 0 or samples < 1:
        raise DomainError("need T > 0 and at least one sample")
    y_matrix = np.eye(2) if y is None else y.matrix
    gm = g.matrix
    sigma_min = float(np.linalg.svd(gm, compute_uv=False)[-1])
    frob_limit = 2.0 * math.cosh(T)
    box = SamplingBox(frob_limit / sigma_min ** 2)

    def work(size: int, rng: np.random.Generator):
        t, u = box.sample(size, rng)
        gb = b_entries(t, u).reshape(-1, 2, 2)
        gb = (gm[None, :, :] @ gb).reshape(-1, 4)
        frob = np.sum(gb * gb, axis=1)
        keep = frob < frob_limit
        t, u, gb, frob = t[keep], u[keep], gb[keep], frob[keep]
        # y b^-1 i with b^-1 i = -u + e^-t i
        z = reduce_points(mobius(y_matrix, -u + 1j * np.exp(-t))) if t.size else np.zeros(0, dtype=complex)
        return (
            np.arccosh(np.maximum(frob / 2.0, 1.0)),
            bins.assign(z),
            omega.contains(inverse_orbit_visual_angles(gb)),
        )

    parts = _chunked(samples, seed, work, threads)
    dists = np.concatenate([p[0] for p in parts])
    if dists.size == 0:
        raise DomainError(f"Q_T(g) is empty at T={T}; no accepted samples")
    in_omega = np.concatenate([p[2] for p in parts])
    if not np.any(in_omega):
        raise DomainError(f"Q_T(g, Omega) is empty at T={T}")
    return SweepResult(
        T=float(T),
        bins=bins,
        dists=dists,
        bin_index=np.concatenate([p[1] for p in parts]),
        in_omega=in_omega,
        sample_weight=box.mass / samples,
        omega_measure=omega.length / (2.0 * math.pi),
    )


def haar_radial_sample(T: float, samples: int, seed: int = 0) -> np.ndarray:
    """
    distances d(K, K k b) for k uniform in K and b drawn from rho, kept inside the ball of radius T
    """
    box = SamplingBox(2.0 * math.cosh(T))
    rng = np.random.default_rng(seed)
    t, u = box.sample(samples, rng)
    theta = 2.0 * math.pi * rng.random(samples)
    c, s = np.cos(theta), np.sin(theta)
    k = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], axis=-2)
    kb = k @ b_entries(t, u).reshape(-1, 2, 2)
    frob = np.sum(kb * kb, axis=(1, 2))
    dist = np.arccosh(np.maximum(frob / 2.0, 1.0))
    return dist[dist < T]
