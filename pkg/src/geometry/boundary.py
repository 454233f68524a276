"""
boundary circle of the hyperbolic plane

points of X = K\\SL(2, R) are modeled in the upper half-plane, Kh <-> h^-1 i.
boundary points and arcs live in the cayley chart of a basepoint p,
C_p(z) = (z - p)/(z - conj(p)), which sends the basepoint to the disc center
and the cusp at infinity to angle 0. group elements act on the boundary by
the direct mobius map b -> g(b); composing gives act(act(b, g), h) = act(b, h g)
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from src.errors import DomainError, InvalidInputError
from src.geometry.lie_core import GroupElement, chamber_margin

TWO_PI = 2.0 * math.pi
ORIGIN = 1j
POINT_TOLERANCE = 1e-12

MatrixLike = Union[GroupElement, np.ndarray]


def wrap_angle(angle):
    """reduce angles to [0, 2pi)"""
    wrapped = np.mod(angle, TWO_PI)
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def _check_base(base: complex) -> complex:
    base = complex(base)
    if not base.imag > 0:
        raise DomainError(f"basepoint must lie in the upper half-plane, got {base}")
    return base


@dataclass(frozen=True)
class BoundaryPoint:
    """point of the boundary circle given by its angle in a basepoint chart"""

    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise InvalidInputError("boundary angle must be finite")
        object.__setattr__(self, "angle", wrap_angle(float(self.angle)))

    @classmethod
    def from_point(cls, z: complex, base: complex = ORIGIN) -> "BoundaryPoint":
        """chart angle of a real point or of infinity (z = math.inf)"""
        base = _check_base(base)
        if z == math.inf or (isinstance(z, complex) and math.isinf(abs(z))):
            return cls(0.0)
        z = complex(z)
        w = (z - base) / (z - base.conjugate())
        return cls(math.atan2(w.imag, w.real))

    @classmethod
    def cusp(cls) -> "BoundaryPoint":
        """the point at infinity, fixed by the unipotent upper triangular group"""
        return cls(0.0)

    @property
    def unit(self) -> complex:
        return complex(math.cos(self.angle), math.sin(self.angle))

    def distance_to(self, other: "BoundaryPoint") -> float:
        """angular distance on the circle"""
        d = abs(self.angle - other.angle)
        return min(d, TWO_PI - d)


@dataclass(frozen=True)
class Arc:
    """counterclockwise arc [start, end) on the boundary circle"""

    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise InvalidInputError("arc endpoints must be finite")
        if self.end == self.start:
            raise DomainError("arc must be nonempty; use Arc.full() for the whole circle")
        length = self.end - self.start
        if length <= 0:
            length += TWO_PI
        if not 0 < length <= TWO_PI + 1e-12:
            raise DomainError(f"arc length {length} outside (0, 2pi]")

    @classmethod
    def full(cls) -> "Arc":
        return cls(0.0, TWO_PI)

    @classmethod
    def from_length(cls, start: float, length: float) -> "Arc":
        return cls(start, start + length)

    @classmethod
    def equal_partition(cls, count: int, offset: float = 0.0) -> List["Arc"]:
        """count equal arcs covering the circle, the first starting at offset"""
        if count < 1:
            raise DomainError("partition needs at least one arc")
        if count == 1:
            return [cls(offset, offset + TWO_PI)]
        step = TWO_PI / count
        return [cls(offset + k * step, offset + (k + 1) * step) for k in range(count)]

    @property
    def length(self) -> float:
        length = self.end - self.start
        return length if length > 0 else length + TWO_PI

    @property
    def is_full(self) -> bool:
        return self.length >= TWO_PI - 1e-12

    def contains(self, angles) -> np.ndarray:
        """half-open membership test, vectorized"""
        if self.is_full:
            return np.ones(np.shape(angles), dtype=bool)
        return np.mod(np.asarray(angles, dtype=float) - self.start, TWO_PI) < self.length

    def rotated(self, phi: float) -> "Arc":
        return Arc(self.start + phi, self.start + phi + self.length)


def cayley_matrix(base: complex = ORIGIN) -> np.ndarray:
    """complex matrix of the chart z -> (z - p)/(z - conj(p))"""
    base = _check_base(base)
    return np.array([[1.0, -base], [1.0, -base.conjugate()]], dtype=complex)


def chart_change(x: complex, y: complex) -> np.ndarray:
    """disc automorphism taking x-chart coordinates to y-chart coordinates"""
    return cayley_matrix(y) @ np.linalg.inv(cayley_matrix(x))


def _as_array(g: MatrixLike) -> np.ndarray:
    if isinstance(g, GroupElement):
        if g.spec.factors != (2,):
            raise DomainError("boundary action needs a rank-one SL(2) element")
        return g.matrix
    g = np.asarray(g, dtype=float)
    if g.shape[-2:] != (2, 2):
        raise InvalidInputError(f"expected 2x2 matrices, got shape {g.shape}")
    return g


def disc_matrices(g: MatrixLike, base: complex = ORIGIN) -> np.ndarray:
    """mobius action of g (or a stack of matrices) transported to the base chart"""
    chart = cayley_matrix(base)
    return chart @ _as_array(g).astype(complex) @ np.linalg.inv(chart)


def _apply(d: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (d[..., 0, 0] * w + d[..., 0, 1]) / (d[..., 1, 0] * w + d[..., 1, 1])


def act_on_angles(g: MatrixLike, angles, base: complex = ORIGIN) -> np.ndarray:
    """
    vectorized boundary action

    args:
        g: one matrix or a stack (count, 2, 2)
        angles: chart angles, broadcast against the stack
        base: chart basepoint

    returns:
        image angles in [0, 2pi)
    """
    w = np.exp(1j * np.asarray(angles, dtype=float))
    image = _apply(disc_matrices(g, base), w)
    return wrap_angle(np.angle(image))


def boundary_action(b: BoundaryPoint, g: MatrixLike, base: complex = ORIGIN) -> BoundaryPoint:
    """
    image g(b) of a boundary point under the mobius action

    this is a left action: boundary_action(boundary_action(b, g), h)
    equals boundary_action(b, h @ g)
    """
    return BoundaryPoint(float(act_on_angles(g, b.angle, base)))


def point_distances(x: complex, z) -> np.ndarray:
    """hyperbolic distances d(x, z), arccosh(1 + |z - x|^2 / (2 Im z Im x))"""
    x = _check_base(x)
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise DomainError("points must lie in the upper half-plane")
    ratio = np.abs(z - x) ** 2 / (2.0 * z.imag * x.imag)
    return np.arccosh(1.0 + ratio)


def visual_angles(x: complex, z) -> np.ndarray:
    """endpoint angles of the rays from x through the points z (0 where z == x)"""
    x = _check_base(x)
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (z - x) / (z - np.conj(x))
    return wrap_angle(np.angle(np.where(np.abs(z - x) < POINT_TOLERANCE, 1.0, w)))


def visual_angle(x: complex, z: complex) -> BoundaryPoint:
    """
    endpoint of the geodesic ray from x through z, in x's chart

    args:
        x: basepoint in the upper half-plane
        z: another point of the upper half-plane

    returns:
        BoundaryPoint
    """
    if abs(complex(z) - complex(x)) < POINT_TOLERANCE:
        raise DomainError("visual angle undefined for z == x")
    if not complex(z).imag > 0:
        raise DomainError(f"point must lie in the upper half-plane, got {z}")
    return BoundaryPoint(float(visual_angles(x, z)))


def inverse_orbit_visual_angles(entries: np.ndarray) -> np.ndarray:
    """
    visual angle from i of the points h^-1 i for rows h = (a, b, c, d)

    for h = k1 a k2 this equals pi + 2 theta2 (mod 2pi); elements of K map to 0
    """
    entries = np.asarray(entries, dtype=float)
    a, b, c, d = (entries[..., i] for i in range(4))
    numerator = -(b + c) + 1j * (d - a)
    denominator = (c - b) + 1j * (a + d)
    degenerate = np.abs(numerator) < POINT_TOLERANCE * np.abs(denominator)
    return wrap_angle(np.where(degenerate, 0.0, np.angle(numerator / denominator)))


def poisson_density(x: complex, y: complex, theta) -> np.ndarray:
    """density of m_y with respect to d(theta) in x's chart (harmonic measure)"""
    w0 = (complex(y) - x) / (complex(y) - complex(x).conjugate())
    u = np.exp(1j * np.asarray(theta, dtype=float))
    return (1.0 - abs(w0) ** 2) / np.abs(u - w0) ** 2 / TWO_PI


def invariant_measure(x: complex, arc: Arc, observer: Optional[complex] = None) -> float:
    """
    K-invariant probability measure of an arc

    args:
        x: basepoint whose chart the arc is written in
        arc: the arc
        observer: point y whose invariant measure m_y is wanted (x when omitted)

    returns:
        m_y(arc) as a number in [0, 1]
    """
    x = _check_base(x)
    if arc.is_full:
        return 1.0
    if observer is None or abs(complex(observer) - x) < POINT_TOLERANCE:
        return arc.length / TWO_PI
    change = chart_change(x, _check_base(observer))
    start = np.angle(_apply(change, np.exp(1j * arc.start)))
    end = np.angle(_apply(change, np.exp(1j * arc.end)))
    return float(np.mod(end - start, TWO_PI)) / TWO_PI


@dataclass(frozen=True)
class ContractionTrajectory:
    """iterates of a boundary point under exp(a_log)^-1"""

    angles: np.ndarray
    distances: np.ndarray
    attractor: BoundaryPoint
    repeller: BoundaryPoint
    margin: float
    at_repeller: bool
    guaranteed: bool

    @property
    def step_ratios(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.distances[1:] / self.distances[:-1]


def contraction_probe(a_log: np.ndarray, b: BoundaryPoint, steps: int, base: complex = ORIGIN) -> ContractionTrajectory:
    """
    iterate b under the inverse of exp(a_log) and track the distance to the attractor

    args:
        a_log: SL(2) chamber vector (t, -t)
        b: starting boundary point
        steps: number of iterations
        base: chart basepoint

    returns:
        ContractionTrajectory; at_repeller marks a start on the repelling point,
        guaranteed is False on a wall
    """
    a_log = np.asarray(a_log, dtype=float)
    if a_log.shape != (2,):
        raise DomainError("contraction probe is defined for SL(2) chamber vectors")
    margin = chamber_margin(a_log)
    if margin < 0:
        raise DomainError(f"a_log outside the positive chamber (margin {margin})")
    if steps < 0:
        raise InvalidInputError("steps must be nonnegative")

    attractor = BoundaryPoint.from_point(0.0, base)
    repeller = BoundaryPoint.from_point(math.inf, base)
    inverse = np.diag(np.exp(-a_log))
    disc = disc_matrices(inverse, base)
    at_repeller = b.distance_to(repeller) < POINT_TOLERANCE

    angles = np.empty(steps + 1)
    angles[0] = b.angle
    w = b.unit
    for k in range(1, steps + 1):
        if not at_repeller:
            w = _apply(disc, w)
            w /= abs(w)
        angles[k] = wrap_angle(float(np.angle(w))) if not at_repeller else b.angle
    gap = np.abs(angles - attractor.angle)
    distances = np.minimum(gap, TWO_PI - gap)
    return ContractionTrajectory(
        angles=angles,
        distances=distances,
        attractor=attractor,
        repeller=repeller,
        margin=margin,
        at_repeller=at_repeller,
        guaranteed=margin > 0 and not at_repeller,
    )
