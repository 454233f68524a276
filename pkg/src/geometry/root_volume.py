"""
restricted root data and the volume side of the counting asymptotics

points of the cartan subalgebra are handled in orthonormal chamber
coordinates c (length = rank); embed() maps them to flat diagonal log
vectors. volumes are integrals of the density xi over balls and cones in
the positive chamber, computed in (lambda, simplex) coordinates where the
integrand is smooth

asymptotic_fit accepts grids of three or more radii (not four), the largest
at least 20
"""

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize

from src.errors import DomainError, NumericError
from src.geometry.lie_core import GroupSpec

logger = logging.getLogger(__name__)

REL_TOLERANCE = 1e-8
CONE_REL_TOLERANCE = 1e-6
MAX_EVALUATIONS = 4_000_000
CHAMBER_SLACK = 1e-12


@dataclass(frozen=True)
class Root:
    """positive root e_i - e_j (i < j) of one block, as a flat functional"""

    block: int
    i: int
    j: int
    functional: Tuple[float, ...]
    multiplicity: int = 1

    @property
    def simple(self) -> bool:
        return self.j == self.i + 1


@dataclass(frozen=True, eq=False)
class RootSystemData:
    """restricted roots, 2 rho, delta, barycenter and chamber coordinates of a group"""

    spec: GroupSpec
    positive_roots: Tuple[Root, ...]
    two_rho: np.ndarray
    rank_r: int
    delta: float
    barycenter: np.ndarray
    basis: np.ndarray
    root_matrix: np.ndarray = field(repr=False)
    simple_matrix: np.ndarray = field(repr=False)
    multiplicities: np.ndarray = field(repr=False)

    @property
    def barycenter_coords(self) -> np.ndarray:
        """barycenter in orthonormal chamber coordinates"""
        return chamber_coordinates(self, self.barycenter)

    @property
    def coweights(self) -> np.ndarray:
        """columns w_j with alpha_i(w_j) = delta_ij, in chamber coordinates"""
        return np.linalg.inv(self.simple_matrix)


@dataclass(frozen=True)
class ChamberCone:
    """
    sub-cone of the positive chamber

    a direction with simple-root values y (normalized to sum 1) belongs to
    the cone when y_j >= min_fractions[j] for every j; all zeros is the
    whole chamber
    """

    min_fractions: Tuple[float, ...] = ()

    def fractions(self, rank: int) -> np.ndarray:
        f = np.zeros(rank) if not self.min_fractions else np.asarray(self.min_fractions, dtype=float)
        if f.shape != (rank,):
            raise DomainError(f"cone needs {rank} fractions, got {len(f)}")
        if np.any(f < 0) or f.sum() >= 1.0:
            raise DomainError("cone fractions must be nonnegative with sum below 1")
        return f


@dataclass(frozen=True)
class AsymptoticFit:
    """fit of log Vol(G_T) - delta T - exponent log T to a constant"""

    T_grid: Tuple[float, ...]
    log_volumes: Tuple[float, ...]
    C_est: float
    residuals: Tuple[float, ...]
    exponent: float
    free_exponent: bool


def _block_basis(n: int, scale: float) -> np.ndarray:
    """orthonormal basis of the trace-zero diagonal, oriented into the chamber"""
    columns = []
    for k in range(1, n):
        v = np.zeros(n)
        v[:k] = 1.0
        v[k] = -float(k)
        columns.append(v / math.sqrt(k * (k + 1)) / scale)
    return np.stack(columns, axis=1)


@functools.lru_cache(maxsize=None)
def root_system(spec: GroupSpec) -> RootSystemData:
    """
    build restricted root data for a product of SL(n) factors

    args:
        spec: group specification

    returns:
        RootSystemData with delta = max of 2 rho on the unit ball
    """
    dim = spec.dimension
    roots: List[Root] = []
    basis_blocks = []
    for block, (offset, n, scale) in enumerate(zip(spec.offsets, spec.factors, spec.metric_scale)):
        for i in range(n):
            for j in range(i + 1, n):
                functional = np.zeros(dim)
                functional[offset + i] = 1.0
                functional[offset + j] = -1.0
                roots.append(Root(block, i, j, tuple(functional)))
        basis_blocks.append((offset, n, _block_basis(n, scale)))

    basis = np.zeros((dim, spec.rank))
    col = 0
    for offset, n, block_basis in basis_blocks:
        basis[offset:offset + n, col:col + n - 1] = block_basis
        col += n - 1

    functionals = np.array([r.functional for r in roots])
    multiplicities = np.array([r.multiplicity for r in roots], dtype=float)
    two_rho = multiplicities @ functionals
    rho_coords = basis.T @ two_rho
    delta = float(np.linalg.norm(rho_coords))
    barycenter = basis @ (rho_coords / delta)
    simple = np.array([r.functional for r in roots if r.simple])

    two_rho.setflags(write=False)
    barycenter.setflags(write=False)
    return RootSystemData(
        spec=spec,
        positive_roots=tuple(roots),
        two_rho=two_rho,
        rank_r=spec.rank,
        delta=delta,
        barycenter=barycenter,
        basis=basis,
        root_matrix=functionals @ basis,
        simple_matrix=simple @ basis,
        multiplicities=multiplicities,
    )


def embed(rs: RootSystemData, coords: np.ndarray) -> np.ndarray:
    """chamber coordinates -> flat diagonal log vector"""
    return np.asarray(coords, dtype=float) @ rs.basis.T


def chamber_coordinates(rs: RootSystemData, a_log: np.ndarray) -> np.ndarray:
    """flat diagonal log vector -> orthonormal chamber coordinates"""
    weights = rs.spec.metric_weights()
    return (np.asarray(a_log, dtype=float) * weights) @ rs.basis


def _log_sinh(x: np.ndarray) -> np.ndarray:
    """log(sinh(x)) for x >= 0, -inf at 0, stable for large x"""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        small = np.log(np.sinh(np.minimum(x, 20.0)))
        large = x - math.log(2.0) + np.log1p(-np.exp(-2.0 * np.maximum(x, 20.0)))
    return np.where(x < 20.0, small, large)


def _log_xi(rs: RootSystemData, coords: np.ndarray) -> np.ndarray:
    values = np.maximum(coords @ rs.root_matrix.T, 0.0)
    return np.sum(rs.multiplicities * _log_sinh(values), axis=-1)


def density_xi(rs: RootSystemData, t: np.ndarray) -> np.ndarray:
    """
    haar density prod sinh(alpha(t))^m_alpha in cartan coordinates

    args:
        rs: root data
        t: point (or stack of points) in orthonormal chamber coordinates

    returns:
        density value(s), exactly zero on walls
    """
    t = np.asarray(t, dtype=float)
    if t.shape[-1] != rs.rank_r:
        raise DomainError(f"expected {rs.rank_r} chamber coordinates, got {t.shape[-1]}")
    if np.any(t @ rs.simple_matrix.T < -CHAMBER_SLACK):
        raise DomainError("point lies outside the positive chamber")
    value = np.exp(_log_xi(rs, t))
    return float(value) if value.ndim == 0 else value


def _gauss_unit(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _simplex_rule(m: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """collapsed gauss-legendre product rule on the standard m-simplex"""
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = _gauss_unit(n)
    grids = np.meshgrid(*([x] * m), indexing="ij")
    wgrids = np.meshgrid(*([w] * m), indexing="ij")
    xs = [g.ravel() for g in grids]
    weights = np.prod([g.ravel() for g in wgrids], axis=0)
    points = np.zeros((xs[0].size, m))
    remaining = np.ones(xs[0].size)
    for i in range(m):
        points[:, i] = remaining * xs[i]
        remaining = remaining * (1.0 - xs[i])
    for i in range(m - 1):
        weights = weights * (1.0 - xs[i]) ** (m - 1 - i)
    return points, weights


def _support_interval(rs: RootSystemData, T: float, C: float, f: np.ndarray, scale: float) -> Tuple[float, float]:
    """
    rank-two z-interval where the margin cut leaves a nonempty radial segment

    the admissible set is convex, so it is an interval around the best direction
    """

    def slack(z: float) -> float:
        y = np.array([f[0] + scale * z, 0.0])
        y[1] = 1.0 - y[0]
        v = rs.coweights @ y
        return T * float(np.min(y)) - C * float(np.linalg.norm(v))

    grid = np.linspace(0.0, 1.0, 1001)
    values = np.array([slack(z) for z in grid])
    best = int(np.argmax(values))
    if values[best] <= 0:
        return 0.0, 0.0
    lo = 0.0 if values[0] >= 0 else optimize.brentq(slack, grid[np.nonzero(values[:best] < 0)[0][-1]], grid[best])
    hi_candidates = np.nonzero(values[best:] < 0)[0]
    hi = 1.0 if values[-1] >= 0 else optimize.brentq(slack, grid[best], grid[best + hi_candidates[0]])
    return lo, hi


def _chamber_integral(rs: RootSystemData, T: float, C: float, f: np.ndarray, n: int, log_shift: float) -> float:
    """integral of xi * exp(-log_shift) over {t in cone, |t| < T, margins >= C} at n nodes per axis"""
    r = rs.rank_r
    scale = 1.0 - float(f.sum())
    z, wz = _simplex_rule(r - 1, n)
    if r == 2 and C > 0:
        lo, hi = _support_interval(rs, T, C, f, scale)
        if hi <= lo:
            return 0.0
        z = lo + (hi - lo) * z
        wz = wz * (hi - lo)
    y = np.empty((z.shape[0], r))
    y[:, :r - 1] = f[:r - 1] + scale * z
    y[:, r - 1] = 1.0 - y[:, :r - 1].sum(axis=1)
    directions = y @ rs.coweights.T
    lam_hi = T / np.linalg.norm(directions, axis=1)
    lam_lo = np.zeros_like(lam_hi)
    if C > 0:
        with np.errstate(divide="ignore"):
            lam_lo = np.minimum(C / np.min(y, axis=1), lam_hi)
    width = np.maximum(lam_hi - lam_lo, 0.0)
    x, w = _gauss_unit(n)
    lam = lam_lo[:, None] + width[:, None] * x[None, :]
    coords = lam[:, :, None] * directions[:, None, :]
    log_integrand = _log_xi(rs, coords) + (r - 1) * np.log(np.maximum(lam, 1e-300)) - log_shift
    radial = np.sum(np.exp(log_integrand) * w[None, :], axis=1) * width
    jacobian = abs(np.linalg.det(rs.coweights)) * scale ** (r - 1)
    return float(np.sum(wz * radial) * jacobian)


def _log_volume(rs: RootSystemData, T: float, C: float = 0.0, cone: Optional[ChamberCone] = None) -> float:
    """log of the xi-volume of a (cone, margin) truncated ball by refined quadrature"""
    f = (cone or ChamberCone()).fractions(rs.rank_r)
    log_shift = rs.delta * T
    tolerance = CONE_REL_TOLERANCE if (C > 0 and rs.rank_r > 2) else REL_TOLERANCE
    n = 24
    previous = _chamber_integral(rs, T, C, f, n, log_shift)
    history = [(n, previous)]
    while True:
        n *= 2
        if n ** rs.rank_r > MAX_EVALUATIONS:
            raise NumericError(
                "chamber quadrature did not converge",
                {"T": T, "C": C, "rank": rs.rank_r, "history": history},
            )
        current = _chamber_integral(rs, T, C, f, n, log_shift)
        history.append((n, current))
        if current <= 0:
            if previous <= 0:
                return -math.inf
        elif abs(current - previous) <= tolerance * abs(current):
            return math.log(current) + log_shift
        logger.debug("refining chamber quadrature to %d nodes (T=%s, C=%s)", n, T, C)
        previous = current


def _rank_one_slope(rs: RootSystemData) -> float:
    return float(rs.root_matrix[0, 0])


def closed_form_volume(rs: RootSystemData, T: float) -> Optional[float]:
    """
    closed-form ball volume where one exists

    returns:
        rank one: (cosh(kT) - 1)/k; two SL(2) factors: a one-dimensional
        quad of sinh(s)(cosh(sqrt(T^2 - s^2)) - 1); otherwise None
    """
    if T <= 0:
        return 0.0
    if rs.rank_r == 1:
        k = _rank_one_slope(rs)
        x = k * T
        return (math.cosh(x) - 1.0 if x > 1.0 else 2.0 * math.sinh(0.5 * x) ** 2) / k
    if rs.spec.factors == (2, 2) and np.allclose(rs.spec.metric_scale, math.sqrt(2.0)):
        value, _ = integrate.quad(
            lambda s: math.sinh(s) * (math.cosh(math.sqrt(max(T * T - s * s, 0.0))) - 1.0),
            0.0, T, epsabs=0.0, epsrel=1e-12, limit=200,
        )
        return value
    return None


def ball_volume(rs: RootSystemData, T: float) -> float:
    """
    Vol(G_T) = integral of xi over {t in chamber, |t| < T}

    args:
        rs: root data
        T: radius

    returns:
        volume in the haar normalization of the KAK integration formula
    """
    if T <= 0:
        raise DomainError(f"radius must be positive, got {T}")
    if rs.rank_r == 1:
        return closed_form_volume(rs, T)
    return math.exp(_log_volume(rs, T))


def log_ball_volume(rs: RootSystemData, T: float) -> float:
    """log Vol(G_T), finite for radii where the volume itself overflows"""
    if T <= 0:
        raise DomainError(f"radius must be positive, got {T}")
    if rs.rank_r == 1:
        k = _rank_one_slope(rs)
        x = k * T
        if x < 30.0:
            return math.log(closed_form_volume(rs, T))
        return x - math.log(2.0 * k) + math.log1p(-2.0 * math.exp(-x) + math.exp(-2.0 * x))
    return _log_volume(rs, T)


def cone_volume(rs: RootSystemData, T: float, C: float, cone: Optional[ChamberCone] = None) -> float:
    """
    volume of {t in cone: |t| < T, every simple root >= C}

    args:
        rs: root data
        T: radius
        C: wall margin
        cone: sub-cone of the chamber, whole chamber when omitted

    returns:
        xi-volume of the truncated cone
    """
    if T <= 0 or C < 0:
        raise DomainError(f"need T > 0 and C >= 0, got T={T}, C={C}")
    cone = cone or ChamberCone()
    f = cone.fractions(rs.rank_r)
    bary_y = rs.simple_matrix @ rs.barycenter_coords
    bary_y = bary_y / bary_y.sum()
    if np.any(bary_y <= f):
        raise DomainError("cone does not contain the barycenter direction in its interior")
    if rs.rank_r == 1:
        k = _rank_one_slope(rs)
        if C >= k * T:
            return 0.0
        return (math.cosh(k * T) - math.cosh(C)) / k
    log_value = _log_volume(rs, T, C, cone)
    return 0.0 if log_value == -math.inf else math.exp(log_value)


def asymptotic_fit(rs: RootSystemData, T_grid: Sequence[float], free_exponent: bool = False) -> AsymptoticFit:
    """
    fit Vol(G_T) ~ C T^((r-1)/2) exp(delta T) on a grid of radii

    args:
        rs: root data
        T_grid: increasing radii, at least three, largest >= 20
        free_exponent: fit the power of T as well (diagnostic mode)

    returns:
        AsymptoticFit with residuals log-value minus log C_est per grid point
    """
    grid = np.asarray(T_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise DomainError("asymptotic fit needs at least three radii")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise DomainError("radii must be positive and increasing")
    if grid[-1] < 20:
        raise DomainError("largest radius must be at least 20")

    log_volumes = np.array([log_ball_volume(rs, T) for T in grid])
    reduced = log_volumes - rs.delta * grid
    if free_exponent:
        design = np.stack([np.ones_like(grid), np.log(grid)], axis=1)
        (log_c, exponent), *_ = np.linalg.lstsq(design, reduced, rcond=None)
        values = reduced - exponent * np.log(grid)
    else:
        exponent = 0.5 * (rs.rank_r - 1)
        values = reduced - exponent * np.log(grid)
        log_c = float(np.mean(values))
    return AsymptoticFit(
        T_grid=tuple(float(t) for t in grid),
        log_volumes=tuple(float(v) for v in log_volumes),
        C_est=float(math.exp(log_c)),
        residuals=tuple(float(v - log_c) for v in values),
        exponent=float(exponent),
        free_exponent=free_exponent,
    )


def volume_ratio(rs: RootSystemData, T: float, eps: float) -> float:
    """Vol(G_{T-eps}) / Vol(G_T)"""
    if not 0 <= eps < T:
        raise DomainError(f"need 0 <= eps < T, got eps={eps}, T={T}")
    if eps == 0:
        return 1.0
    return math.exp(log_ball_volume(rs, T - eps) - log_ball_volume(rs, T))
