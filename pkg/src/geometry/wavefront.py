"""
sampling probes for the stability of cartan components

wavefront_check perturbs g = k1 a k2 (a at least C away from the walls)
on both sides and measures how far each KAK component moves modulo M.
wall_failure_probe exhibits the breakdown on a wall, angular_rigidity
estimates how close to M a rotation k must be once d(Kak, Ka) is small
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from src.errors import DomainError
from src.geometry.lie_core import (
    GroupElement,
    GroupSpec,
    cartan_decompose,
    cartan_decompose_batch,
    chamber_margin,
    random_rotations,
    sign_matrices,
)

logger = logging.getLogger(__name__)

MAX_LOG_NORM = 20.0
DEFAULT_WALL_RADII = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def frame_distance_mod_m(k: np.ndarray, reference: np.ndarray, side: str = "right") -> np.ndarray:
    """
    min over m in M of |k - reference m|_F (side="right") or |k - m reference|_F (side="left")

    args:
        k, reference: stacks (count, n, n) of SO(n) matrices, or single matrices
    """
    k = np.asarray(k, dtype=float)
    reference = np.asarray(reference, dtype=float)
    single = k.ndim == 2
    if single:
        k, reference = k[None], reference[None]
    n = k.shape[-1]
    best = np.full(k.shape[0], np.inf)
    for m in sign_matrices(n):
        shifted = reference @ m if side == "right" else m @ reference
        best = np.minimum(best, np.sqrt(np.sum((k - shifted) ** 2, axis=(1, 2))))
    return best[0] if single else best


def _gap_matrix(n: int) -> np.ndarray:
    """maps the n-1 simple-root gaps to the centered descending log vector"""
    cumulative = np.zeros((n, n - 1))
    for i in range(n):
        cumulative[i, i:] = 1.0
    return cumulative - cumulative.mean(axis=0, keepdims=True)


def sample_chamber(spec: GroupSpec, C: float, count: int, rng: np.random.Generator, max_norm: float = MAX_LOG_NORM) -> np.ndarray:
    """
    log vectors with every simple-root value in [C, C + span] and norm at most max_norm

    gaps are C + u span with u uniform, span chosen so that all gaps at the
    top give exactly max_norm; larger C therefore moves every sample away from
    the walls on matched seeds
    """
    if C < 0:
        raise DomainError("margin must be nonnegative")
    mats = [_gap_matrix(n) for n in spec.factors]
    unit = np.concatenate([m @ np.ones(m.shape[1]) for m in mats])
    span = max_norm / float(spec.norm(unit)) - C
    if span < 0:
        raise DomainError(f"no chamber vector of norm <= {max_norm} has margin {C}")
    u = rng.random((count, spec.rank))
    gaps = C + u * span
    parts, col = [], 0
    for m in mats:
        width = m.shape[1]
        parts.append(gaps[:, col:col + width] @ m.T)
        col += width
    return np.concatenate(parts, axis=1)


def _random_algebra(spec: GroupSpec, count: int, radius: float, rng: np.random.Generator) -> List[np.ndarray]:
    """traceless blocks with joint frobenius norm uniform in the ball of given radius"""
    blocks = []
    for n in spec.factors:
        x = rng.standard_normal((count, n, n))
        x -= np.eye(n)[None] * (np.trace(x, axis1=1, axis2=2) / n)[:, None, None]
        blocks.append(x)
    norm = np.sqrt(sum(np.sum(x * x, axis=(1, 2)) for x in blocks))
    dim = sum(n * n - 1 for n in spec.factors)
    scale = radius * rng.random(count) ** (1.0 / dim) / np.maximum(norm, 1e-300)
    return [x * scale[:, None, None] for x in blocks]


def _expm_stack(x: np.ndarray) -> np.ndarray:
    return np.stack([expm(m) for m in x]) if len(x) else x.copy()


@dataclass(frozen=True)
class ComponentDeviation:
    """per-sample movement of (k1 mod M, a, k2 mod M)"""

    k1: np.ndarray
    a: np.ndarray
    k2: np.ndarray

    def passes(self, U_radius: float, V_radius: float) -> np.ndarray:
        return (self.k1 <= U_radius) & (self.a <= V_radius) & (self.k2 <= U_radius)


def component_deviations(
    spec: GroupSpec,
    k1: Sequence[np.ndarray],
    a_log: np.ndarray,
    k2: Sequence[np.ndarray],
    h: Sequence[np.ndarray],
) -> ComponentDeviation:
    """
    compare the cartan data of h with a known triple (k1, a_log, k2)

    args:
        spec: group layout
        k1, k2: per-block stacks of the reference orthogonal factors
        a_log: (count, dim) reference logs
        h: per-block stacks of perturbed elements
    """
    dk1 = np.zeros(len(a_log))
    dk2 = np.zeros(len(a_log))
    h_logs = []
    for ref1, ref2, hb in zip(k1, k2, h):
        u, logs, vt = cartan_decompose_batch(hb, canonical=False)
        dk1 += frame_distance_mod_m(u, ref1, side="right") ** 2
        dk2 += frame_distance_mod_m(vt, ref2, side="left") ** 2
        h_logs.append(logs)
    da = spec.norm(np.concatenate(h_logs, axis=1) - a_log)
    return ComponentDeviation(np.sqrt(dk1), np.asarray(da, dtype=float), np.sqrt(dk2))


def element_deviation(g_triple: Tuple[GroupElement, np.ndarray, GroupElement], h: GroupElement) -> Tuple[float, float, float]:
    """single-element version of component_deviations through cartan_decompose"""
    k1, a_log, k2 = g_triple
    triple = cartan_decompose(h)
    dk1 = math.sqrt(sum(
        float(frame_distance_mod_m(u, r, side="right")) ** 2 for u, r in zip(triple.k1.blocks, k1.blocks)
    ))
    dk2 = math.sqrt(sum(
        float(frame_distance_mod_m(v, r, side="left")) ** 2 for v, r in zip(triple.k2.blocks, k2.blocks)
    ))
    da = float(h.spec.norm(triple.a_log - np.asarray(a_log, dtype=float)))
    return dk1, da, dk2


@dataclass(frozen=True)
class WavefrontSample:
    """reference triples and perturbed elements of one probe run"""

    spec: GroupSpec
    k1: List[np.ndarray]
    a_log: np.ndarray
    k2: List[np.ndarray]
    left: List[np.ndarray]
    right: List[np.ndarray]

    def element(self, index: int) -> Tuple[GroupElement, np.ndarray, GroupElement]:
        return (
            GroupElement(self.spec, tuple(b[index] for b in self.k1)),
            self.a_log[index],
            GroupElement(self.spec, tuple(b[index] for b in self.k2)),
        )

    def perturbed(self, index: int, side: str) -> GroupElement:
        blocks = self.left if side == "left" else self.right
        return GroupElement(self.spec, tuple(b[index] for b in blocks))


def draw_wavefront_sample(spec: GroupSpec, C: float, O_radius: float, samples: int, seed: int) -> WavefrontSample:
    """random g = k1 a k2 with margin >= C and perturbations exp(X) g, g exp(X) with |X|_F <= O_radius"""
    rng = np.random.default_rng(seed)
    a_log = sample_chamber(spec, C, samples, rng)
    k1 = [random_rotations(n, samples, rng) for n in spec.factors]
    k2 = [random_rotations(n, samples, rng) for n in spec.factors]
    x_left = _random_algebra(spec, samples, O_radius, rng)
    x_right = _random_algebra(spec, samples, O_radius, rng)
    left, right = [], []
    for block, part in enumerate(spec.split(a_log)):
        g = k1[block] * np.exp(part)[:, None, :] @ k2[block]
        left.append(_expm_stack(x_left[block]) @ g)
        right.append(g @ _expm_stack(x_right[block]))
    return WavefrontSample(spec, k1, a_log, k2, left, right)


@dataclass(frozen=True)
class WavefrontReport:
    C: float
    U_radius: float
    V_radius: float
    O_radius: float
    samples: int
    passed_left: int
    passed_right: int
    worst_k1: float
    worst_a: float
    worst_k2: float

    @property
    def all_passed(self) -> bool:
        return self.passed_left == self.samples and self.passed_right == self.samples

    def summary(self) -> dict:
        out = dict(self.__dict__)
        out["all_passed"] = self.all_passed
        return out


def wavefront_check(
    spec: GroupSpec,
    C: float,
    U_radius: float,
    V_radius: float,
    O_radius: float,
    samples: int,
    seed: int = 0,
) -> WavefrontReport:
    """
    test O g u g O inside (k1 U)(a V M)(k2 U) on random g with margin >= C

    args:
        spec: group layout
        C: chamber margin of the sampled a
        U_radius: allowed frame movement of k1 and k2 modulo M
        V_radius: allowed movement of log a in the scaled norm
        O_radius: frobenius radius of the perturbation exp(X)
        samples: number of g

    returns:
        WavefrontReport with pass counts for both sides and the worst movements
    """
    if C <= 0:
        raise DomainError("wavefront check needs C > 0")
    drawn = draw_wavefront_sample(spec, C, O_radius, samples, seed)
    left = component_deviations(spec, drawn.k1, drawn.a_log, drawn.k2, drawn.left)
    right = component_deviations(spec, drawn.k1, drawn.a_log, drawn.k2, drawn.right)
    report = WavefrontReport(
        C=float(C),
        U_radius=float(U_radius),
        V_radius=float(V_radius),
        O_radius=float(O_radius),
        samples=int(samples),
        passed_left=int(np.count_nonzero(left.passes(U_radius, V_radius))),
        passed_right=int(np.count_nonzero(right.passes(U_radius, V_radius))),
        worst_k1=float(max(left.k1.max(initial=0.0), right.k1.max(initial=0.0))),
        worst_a=float(max(left.a.max(initial=0.0), right.a.max(initial=0.0))),
        worst_k2=float(max(left.k2.max(initial=0.0), right.k2.max(initial=0.0))),
    )
    logger.debug("wavefront O=%.3g: %d/%d left, %d/%d right", O_radius, report.passed_left, samples, report.passed_right, samples)
    return report


def search_largest_radius(
    spec: GroupSpec,
    C: float,
    U_radius: float,
    V_radius: float,
    samples: int,
    seed: int = 0,
    lo: float = 1e-6,
    hi: float = 1.0,
    iterations: int = 24,
) -> float:
    """
    log-bisection for the largest O_radius passing wavefront_check on a fixed seed

    returns:
        the radius; 0.0 when even lo fails
    """
    def passes(radius: float) -> bool:
        return wavefront_check(spec, C, U_radius, V_radius, radius, samples, seed).all_passed

    if passes(hi):
        return hi
    if not passes(lo):
        logger.warning("no passing radius above %g for C=%s", lo, C)
        return 0.0
    log_lo, log_hi = math.log(lo), math.log(hi)
    for _ in range(iterations):
        mid = 0.5 * (log_lo + log_hi)
        if passes(math.exp(mid)):
            log_lo = mid
        else:
            log_hi = mid
    return math.exp(log_lo)


@dataclass(frozen=True)
class WallWitness:
    """a perturbation h = exp(X) g, |X|_F = radius, whose k2 left U_radius M"""

    radius: float
    k2_deviation: float
    h: GroupElement


def _wall_log(spec: GroupSpec) -> np.ndarray:
    """a_log on a wall: the first block has its top two entries equal, the rest regular"""
    parts = []
    for block, n in enumerate(spec.factors):
        gaps = np.ones(n - 1)
        if block == 0:
            gaps[0] = 0.0
        parts.append(_gap_matrix(n) @ gaps)
    return np.concatenate(parts)


def wall_failure_probe(
    spec: GroupSpec,
    U_radius: float,
    samples: int,
    radii: Sequence[float] = DEFAULT_WALL_RADII,
    seed: int = 0,
    a_log: Optional[np.ndarray] = None,
) -> List[WallWitness]:
    """
    look for perturbations of g = k1 a k2 that move k2 by more than U_radius modulo M

    the perturbation is X = k1 Y k1^T with Y symmetric, supported on the pair of
    diagonal entries of a with the smallest gap; on a wall this rotates the
    degenerate eigenspace by an angle independent of |X|

    args:
        spec: group layout
        U_radius: allowed k2 movement
        samples: random (k1, k2, Y) tried per radius
        radii: perturbation sizes
        a_log: the diagonal part (a wall point by default)

    returns:
        at most one witness per radius
    """
    rng = np.random.default_rng(seed)
    a_log = _wall_log(spec) if a_log is None else np.asarray(a_log, dtype=float)
    parts = spec.split(a_log)
    block = int(np.argmin([np.min(p[:-1] - p[1:]) for p in parts]))
    pair = int(np.argmin(parts[block][:-1] - parts[block][1:]))
    n = spec.factors[block]

    k1 = [random_rotations(m, samples, rng) for m in spec.factors]
    k2 = [random_rotations(m, samples, rng) for m in spec.factors]
    phi = rng.uniform(math.pi / 8, 3 * math.pi / 8, samples)
    y = np.zeros((samples, n, n))
    c, s = np.cos(2 * phi), np.sin(2 * phi)
    y[:, pair, pair], y[:, pair + 1, pair + 1] = c, -c
    y[:, pair, pair + 1] = y[:, pair + 1, pair] = s
    y /= math.sqrt(2.0)
    x = k1[block] @ y @ np.transpose(k1[block], (0, 2, 1))

    g = [k1[b] * np.exp(part)[None, None, :] @ k2[b] for b, part in enumerate(parts)]
    witnesses = []
    for radius in radii:
        h = list(g)
        h[block] = _expm_stack(radius * x) @ g[block]
        deviation = component_deviations(spec, k1, np.tile(a_log, (samples, 1)), k2, h)
        hits = np.flatnonzero(deviation.k2 > U_radius)
        if hits.size:
            i = int(hits[np.argmax(deviation.k2[hits])])
            witnesses.append(WallWitness(float(radius), float(deviation.k2[i]), GroupElement(spec, tuple(b[i] for b in h))))
    logger.info("wall probe margin %.3g: %d witnesses over %d radii", chamber_margin(a_log, spec), len(witnesses), len(radii))
    return witnesses


@dataclass(frozen=True)
class RigidityReport:
    C: float
    U0_radius: float
    epsilon: float
    checked: int
    violations: int
    violator_count: int = field(default=0)


def angular_rigidity(spec: GroupSpec, C: float, U0_radius: float, samples: int, seed: int = 0, a_span: float = 1.0) -> RigidityReport:
    """
    estimate the largest eps with {k : d(Kak, Ka) < eps} inside U0 M for margin >= C

    k is drawn as m exp(Z) with |Z|_F up to 3 U0 so that both sides of the
    U0 boundary are sampled; a has gaps in [C, C + a_span C]. eps is the
    smallest d(Kak, Ka) among violators of the first half; violations are
    then counted on the held-out second half

    returns:
        RigidityReport
    """
    if C <= 0:
        raise DomainError("angular rigidity needs C > 0")
    rng = np.random.default_rng(seed)
    mats = [_gap_matrix(n) for n in spec.factors]
    gaps = C * (1.0 + a_span * rng.random((samples, spec.rank)))
    logs, col = [], 0
    for m in mats:
        logs.append(gaps[:, col:col + m.shape[1]] @ m.T)
        col += m.shape[1]
    a_log = np.concatenate(logs, axis=1)

    dev = np.zeros(samples)
    conj_logs = []
    for block, (n, part) in enumerate(zip(spec.factors, spec.split(a_log))):
        z = rng.standard_normal((samples, n, n))
        z = z - np.transpose(z, (0, 2, 1))
        z *= (3.0 * U0_radius * rng.random(samples) / np.sqrt(np.sum(z * z, axis=(1, 2))))[:, None, None]
        signs = sign_matrices(n)
        m = np.stack([signs[i] for i in rng.integers(len(signs), size=samples)])
        k = m @ _expm_stack(z)
        dev += frame_distance_mod_m(k, np.broadcast_to(np.eye(n), k.shape), side="right") ** 2
        a = np.exp(part)
        # a k a^-1 has the cartan projection of (a k, a)
        conj = a[:, :, None] * k / a[:, None, :]
        conj_logs.append(np.log(np.linalg.svd(conj, compute_uv=False)))
    dev = np.sqrt(dev)
    dist = spec.norm(np.concatenate(conj_logs, axis=1))

    half = samples // 2
    violators = dev[:half] > U0_radius
    epsilon = float(np.min(dist[:half][violators])) if np.any(violators) else math.inf
    held_out = (dist[half:] < epsilon) & (dev[half:] > U0_radius)
    return RigidityReport(
        C=float(C),
        U0_radius=float(U0_radius),
        epsilon=epsilon,
        checked=int(samples - half),
        violations=int(np.count_nonzero(held_out)),
        violator_count=int(np.count_nonzero(violators)),
    )
